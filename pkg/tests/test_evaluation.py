import json
import math

import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.stats import pearsonr
from sklearn.metrics import homogeneity_score as sk_homogeneity

from helpers import (
    complete_linkage_oracle,
    cos_dist_oracle,
    homogeneity_oracle,
    optimal_complete_linkage_partition,
    partition_of,
    pearson_oracle,
    tiny_model_config,
)
from pier.corpus import SentenceRecord
from pier.exceptions import DegenerateInputError, DegenerateProbeError, DegenerateVectorError, InvalidInputError
from pier.model import FusedModel
from pier.model.checkpoint import group_checksums
from pier.evaluation import (
    MetricsReport,
    ProbeSchedule,
    SenseProbe,
    SpanProbe,
    agglomerative_cluster,
    binary_scores,
    embedding_set_from,
    evaluate_model,
    evaluate_models,
    fit_sense_probes,
    fit_span_probes,
    homogeneity_score,
    mean_inter_group_cosine_distance,
    mean_inter_type_cosine_similarity,
    pearson_correlation,
    per_pie_report,
    reconstruction_accuracy,
    sequence_accuracy,
    skew_analysis,
    span_labels,
    token_accuracy,
    token_recall,
)
from pier.evaluation.probes import _Mlp, _rng
from pier.numerics import backward

QUICK = ProbeSchedule(sense_epochs=3, span_epochs=3)


def _blobs(rng, n_per=3, k=3, d=5, spread=0.05):
    centers = rng.normal(size=(k, d))
    x = np.concatenate([c + spread * rng.normal(size=(n_per, d)) for c in centers])
    return x, np.repeat(np.arange(k), n_per)


class TestClustering:
    def test_matches_exhaustive_rescans(self, rng):
        for _ in range(40):
            n = int(rng.integers(2, 8))
            x = rng.normal(size=(n, 3))
            k = int(rng.integers(1, n + 1))
            got = partition_of(agglomerative_cluster(x, k).labels)
            assert got == complete_linkage_oracle(x.tolist(), k)

    def test_matches_scipy_complete_linkage(self, rng):
        for _ in range(30):
            n = int(rng.integers(3, 12))
            x = rng.normal(size=(n, 4))
            k = int(rng.integers(1, n))
            tree = linkage(x, method="complete", metric="cosine")
            want = partition_of(fcluster(tree, k, criterion="maxclust"))
            assert partition_of(agglomerative_cluster(x, k).labels) == want

    def test_recovers_separated_groups(self, rng):
        for _ in range(10):
            x, truth = _blobs(rng, n_per=2, k=3)
            got = partition_of(agglomerative_cluster(x, 3).labels)
            assert got == partition_of(truth)
            assert got == optimal_complete_linkage_partition(x.tolist(), 3)

    def test_ties_merge_smallest_keys_first(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        # every neighbour pair is at distance 1; (0, 1) merges first, then (2, 3)
        assert partition_of(agglomerative_cluster(x, 2).labels) == [(0, 1), (2, 3)]

    def test_labels_and_ids(self, rng):
        x = rng.normal(size=(5, 3))
        a = agglomerative_cluster(x, 5, item_ids=list("abcde"))
        assert a.labels == (0, 1, 2, 3, 4) and a.item_ids == tuple("abcde")
        assert agglomerative_cluster(x, 1).labels == (0,) * 5
        assert agglomerative_cluster(x, 2) == agglomerative_cluster(x, 2)

    def test_errors(self, rng):
        with pytest.raises(InvalidInputError):
            agglomerative_cluster(rng.normal(size=(3, 2)), 4)
        with pytest.raises(InvalidInputError):
            agglomerative_cluster(np.zeros((0, 2)), 1)
        with pytest.raises(DegenerateVectorError):
            agglomerative_cluster(np.array([[1.0, 0.0], [0.0, 0.0]]), 1)


class TestHomogeneity:
    def test_examples(self):
        assert homogeneity_score([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
        assert homogeneity_score([0, 0, 0, 0], [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-12)
        assert homogeneity_score([0, 1, 2, 3], [0, 0, 1, 1]) == 1.0
        want = 1 - (0.75 * (math.log(3) - 2 / 3 * math.log(2))) / math.log(2)
        assert homogeneity_score([0, 1, 1, 1], [0, 0, 1, 1]) == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(0.3113, abs=1e-4)

    def test_oracle_and_sklearn(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 30))
            truth = rng.integers(0, 4, n).tolist()
            pred = rng.integers(0, 5, n).tolist()
            got = homogeneity_score(pred, truth)
            assert got == pytest.approx(homogeneity_oracle(truth, pred), abs=1e-12)
            assert got == pytest.approx(sk_homogeneity(truth, pred), abs=1e-9)

    def test_label_permutation_invariance(self, rng):
        truth = rng.integers(0, 3, 20)
        pred = rng.integers(0, 4, 20)
        perm = rng.permutation(4)
        assert homogeneity_score(perm[pred], truth) == pytest.approx(homogeneity_score(pred, truth), abs=1e-12)

    def test_single_class_is_homogeneous(self):
        assert homogeneity_score([0, 1, 2], [5, 5, 5]) == 1.0

    def test_errors(self):
        with pytest.raises(InvalidInputError):
            homogeneity_score([], [])
        with pytest.raises(InvalidInputError):
            homogeneity_score([0, 1], [0, 1, 1])


class TestGeometry:
    def test_inter_group_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 10))
            x = rng.normal(size=(n, 4))
            g = rng.integers(0, 3, n)
            g[:2] = [0, 1]
            pairs = [cos_dist_oracle(x[i], x[j]) for i in range(n) for j in range(i + 1, n) if g[i] != g[j]]
            assert mean_inter_group_cosine_distance(x, g) == pytest.approx(sum(pairs) / len(pairs), abs=1e-12)

    def test_inter_group_examples_and_errors(self):
        e = np.eye(2)
        assert mean_inter_group_cosine_distance(e, [0, 1]) == pytest.approx(1.0)
        assert mean_inter_group_cosine_distance(np.array([[1.0, 0], [-1.0, 0]]), [0, 1]) == pytest.approx(2.0)
        with pytest.raises(InvalidInputError):
            mean_inter_group_cosine_distance(e, [0, 0])

    def _records(self, rng, n=30):
        out = []
        for i in range(n):
            out.append(SentenceRecord(i, (5, 6, 7, 8), int(rng.integers(4)), (1, 3),
                                      ("idiomatic", "literal")[int(rng.integers(2))], "test"))
        return out

    def test_embedding_set_and_inter_type_oracle(self, rng):
        recs = self._records(rng)
        vecs = rng.normal(size=(len(recs), 4))
        emb = embedding_set_from(vecs, recs)
        sims = []
        for pid in sorted({r.pie_id for r in recs}):
            rows = {s: [v for v, r in zip(vecs, recs) if r.pie_id == pid and r.sense == s]
                    for s in ("idiomatic", "literal")}
            e = emb[pid]
            assert e.n_idiomatic == len(rows["idiomatic"]) and e.n_literal == len(rows["literal"])
            if rows["idiomatic"] and rows["literal"]:
                a, b = np.mean(rows["idiomatic"], 0), np.mean(rows["literal"], 0)
                sims.append(1 - cos_dist_oracle(a, b))
        assert mean_inter_type_cosine_similarity(emb) == pytest.approx(np.mean(sims), abs=1e-12)

    def test_inter_type_needs_both_senses(self, rng):
        recs = [SentenceRecord(0, (5, 6, 7), 0, (1, 2), "idiomatic", "test")]
        with pytest.raises(InvalidInputError):
            mean_inter_type_cosine_similarity(embedding_set_from(rng.normal(size=(1, 3)), recs))


class TestLabelMetrics:
    def test_sequence_accuracy_and_recall(self):
        pred = [[0, 1, 1, 0], [0, 0, 0], [1, 0]]
        gold = [[0, 1, 1, 0], [0, 1, 0], [0, 0]]
        assert sequence_accuracy(pred, gold) == pytest.approx(1 / 3)
        # recalls: 1, 0, and 0 for a flag raised where nothing was gold
        assert token_recall(pred, gold) == pytest.approx(1 / 3)
        assert token_recall([[0, 0]], [[0, 0]]) == 1.0
        assert token_accuracy(pred, gold) == pytest.approx(7 / 9)

    def test_alignment_errors(self):
        with pytest.raises(InvalidInputError):
            sequence_accuracy([[0, 1]], [[0, 1, 0]])
        with pytest.raises(InvalidInputError):
            token_recall([[0]], [[0], [1]])

    def test_binary_scores(self):
        s = binary_scores([1, 1, 0, 0], [1, 0, 1, 0])
        assert s == {"acc": 0.5, "f1": 0.5}
        majority = binary_scores(np.ones(10, bool), np.r_[np.ones(7), np.zeros(3)].astype(bool))
        assert majority["acc"] == pytest.approx(0.7) and majority["f1"] == pytest.approx(14 / 17)
        assert binary_scores([0, 0], [0, 0])["f1"] == 0.0
        with pytest.raises(InvalidInputError):
            binary_scores([], [])


class TestPearson:
    def test_oracle_and_scipy(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 40))
            x, y = rng.normal(size=n), rng.normal(size=n)
            r, p = pearson_correlation(x, y)
            assert r == pytest.approx(pearson_oracle(x.tolist(), y.tolist()), abs=1e-12)
            ref = pearsonr(x, y)
            assert r == pytest.approx(ref[0], abs=1e-12)
            assert p == pytest.approx(ref[1], rel=1e-6, abs=1e-12)

    def test_examples(self):
        assert pearson_correlation([1, 2, 3], [2, 4, 6]) == (1.0, 0.0)
        assert pearson_correlation([1, 2, 3], [3, 2, 1])[0] == -1.0

    def test_errors(self):
        with pytest.raises(DegenerateInputError):
            pearson_correlation([1, 1, 1], [1, 2, 3])
        with pytest.raises(InvalidInputError):
            pearson_correlation([1, 2], [1, 2])


class TestProbes:
    def test_sense_probe_separable(self, rng):
        X = rng.normal(size=(400, 6)).astype(np.float32)
        y = (X[:, 0] + X[:, 1] > 0).astype(int)
        probe = SenseProbe(epochs=55, seed=1).fit(X, y)
        assert (probe.predict(X) == y).mean() >= 0.97
        p = probe.predict_proba(X)
        np.testing.assert_allclose(p.sum(1), 1.0, atol=1e-6)

    def test_span_probe_separable(self, rng):
        X = [rng.normal(size=(int(rng.integers(3, 8)), 8)).astype(np.float32) for _ in range(120)]
        y = [(x[:, 2] > 0).astype(int) for x in X]
        probe = SpanProbe(epochs=100, seed=2).fit(X, y)
        assert token_accuracy(probe.predict(X), y) >= 0.97

    def test_fused_gradient_matches_autodiff(self, rng):
        for dims in [(6, 2), (8, 4, 2, 2)]:
            net = _Mlp(dims, _rng(3, 0), n_nets=1)
            x = rng.normal(size=(10, dims[0])).astype(np.float32)
            y = rng.integers(0, 2, 10)
            loss = net.loss_and_grad(x[None], y)[0]
            fused = net.grad.copy()
            net.flat.grad = None
            t = net.loss_tensor(x, y)
            backward(t)
            assert t.item() == pytest.approx(float(loss), rel=1e-5)
            np.testing.assert_allclose(net.flat.grad, fused, atol=1e-5)

    def test_stacked_probes_equal_single(self, rng):
        X1, X2 = rng.normal(size=(60, 5)), rng.normal(size=(60, 5))
        y = rng.integers(0, 2, 60)
        a, b = fit_sense_probes([X1, X2], y, epochs=5, seed=4)
        solo = fit_sense_probes([X2], y, epochs=5, seed=4)[0]
        np.testing.assert_array_equal(b.decision_function(X2), solo.decision_function(X2))
        assert not np.array_equal(a.decision_function(X2), b.decision_function(X2))
        T1 = [rng.normal(size=(4, 8)) for _ in range(20)]
        T2 = [rng.normal(size=(4, 8)) for _ in range(20)]
        ys = [rng.integers(0, 2, 4) for _ in range(20)]
        _, sb = fit_span_probes([T1, T2], ys, epochs=4, seed=5)
        solo = fit_span_probes([T2], ys, epochs=4, seed=5)[0]
        for p, q in zip(sb.predict(T2), solo.predict(T2)):
            np.testing.assert_array_equal(p, q)

    def test_degenerate_labels(self, rng):
        with pytest.raises(DegenerateProbeError):
            fit_sense_probes([rng.normal(size=(5, 3))], np.ones(5, int))
        with pytest.raises(DegenerateProbeError):
            fit_span_probes([[rng.normal(size=(3, 4))]], [np.zeros(3, int)])


@pytest.fixture(scope="module")
def model(small_corpus):
    return FusedModel(tiny_model_config(len(small_corpus.vocab), variant="base-only"), seed=0)


class TestPipeline:
    def test_reconstruction_oracle(self, small_corpus, model):
        sents = small_corpus.pie_free[:10]
        correct = total = 0
        for s in sents:
            _, logits, tgt, mask = model.forward([s.tokens], [s.tokens])
            pred = logits.data.argmax(-1)
            correct += int(((pred == tgt) & mask).sum())
            total += int(mask.sum())
        assert reconstruction_accuracy(model, sents, batch_size=3) == pytest.approx(correct / total, abs=1e-12)

    def test_span_labels(self, small_corpus):
        for r, y in zip(small_corpus.test[:30], span_labels(small_corpus.test[:30])):
            assert y.sum() == (r.span[1] - r.span[0] if r.is_idiomatic else 0)

    def test_report_is_deterministic_and_leaves_model_alone(self, small_corpus, model):
        before = group_checksums(model)
        a = evaluate_model(model, small_corpus, seed=1, schedule=QUICK, config={"x": 1})
        b = evaluate_model(model, small_corpus, seed=1, schedule=QUICK, config={"x": 1})
        assert group_checksums(model) == before
        assert a.to_json() == b.to_json()
        assert json.loads(a.to_json())["config_fingerprint"] == a.config_fingerprint
        assert MetricsReport.from_json(a.to_json()).to_json() == a.to_json()
        for key in ("acc", "f1"):
            assert 0 <= a.senseclf[key] <= 1
        assert a.per_pie_csv().splitlines()[0].startswith("pie_id,group_id,n_train")
        assert len(a.per_pie_csv().splitlines()) == 1 + len(a.per_pie)

    def test_batched_equals_single(self, small_corpus, model):
        other = FusedModel(model.config, seed=7)
        joint = evaluate_models([(model, None), (other, None)], small_corpus, seed=2, schedule=QUICK)
        alone = evaluate_model(other, small_corpus, seed=2, schedule=QUICK)
        assert joint[1].to_json() == alone.to_json()

    def test_per_pie_flags(self, rng):
        recs = [SentenceRecord(i, (5, 6, 7), i % 3, (1, 2), "idiomatic" if i % 3 == 0 or i % 6 == 1 else "literal",
                               "train") for i in range(60)]
        emb = embedding_set_from(rng.normal(size=(60, 4)), recs)
        rows = per_pie_report(emb, recs)
        by = {r["pie_id"]: r for r in rows}
        assert by[0]["skew_ratio"] == 1.0 and by[0]["skewed"]
        assert by[1]["skew_ratio"] == 0.5 and not by[1]["skewed"]
        assert by[2]["skew_ratio"] == 0.0 and by[2]["skewed"]
        assert by[0]["inter_type_sim"] is None and not by[0]["high_sim"]
        s = skew_analysis(rows)
        assert s["n_skewed"] == 0 and s["n_balanced"] == 1


class TestEstimators:
    def test_embedder_matches_pipeline(self, small_corpus, model):
        from sklearn.pipeline import make_pipeline

        from pier.evaluation import CosineAgglomerative, PieEmbedder, sentence_pie_embeddings

        recs = small_corpus.test[:12]
        emb = PieEmbedder(model).fit_transform(recs)
        np.testing.assert_array_equal(emb, sentence_pie_embeddings(model, recs))
        labels = make_pipeline(PieEmbedder(model), CosineAgglomerative(3)).fit(recs)[-1].labels_
        assert labels.tolist() == list(agglomerative_cluster(emb, 3).labels)

    def test_clusterer_fit_predict(self, rng):
        from pier.evaluation import CosineAgglomerative

        x, truth = _blobs(rng, n_per=3, k=2)
        assert partition_of(CosineAgglomerative(2).fit_predict(x)) == partition_of(truth)
