"""Shared test utilities: the finite-difference suites and brute-force oracles."""

from __future__ import annotations

import contextlib
import itertools
import math

import numpy as np

from pier.model import FusedModel, ModelConfig
from pier.model.fused import PARAM_GROUPS
from pier.numerics import backward, check_gradients, get_tape, no_grad
from pier.numerics import kernels as K

ACCEPTANCE_LINES: list[str] = []

TINY = {"n_layers": 2, "d_model": 16, "n_heads": 2, "d_ff": 32, "adapter_bottleneck": 4}

TOL64, TOL32 = 1e-5, 1e-3
N_INSTANCES = 20


def record_criterion(n: int, passed: bool, detail: str) -> str:
    line = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def tiny_model_config(vocab_size: int, **kw) -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size, **{**TINY, **kw})


# ---------------------------------------------------------------- kernel gradient suite

def _projected(fn, shape_of_out, rng):
    """Scalarize a tensor-valued kernel with a fixed random projection."""
    w = rng.normal(size=shape_of_out)

    def scalar(*ts):
        out = fn(*ts)
        return K.sum(K.mul(out, w))

    return scalar


def _away_from_zero(x, margin=0.05):
    return np.where(np.abs(x) < margin, x + np.sign(x + 1e-12) * margin, x)


def _case(name, rng):
    """Return (scalar fn, inputs) for one random instance of kernel ``name``."""
    r = rng
    if name == "add":
        a, b = r.normal(size=(3, 4)), r.normal(size=(4,))
        return _projected(K.add, (3, 4), r), [a, b]
    if name == "sub":
        a, b = r.normal(size=(2, 3)), r.normal(size=(2, 1))
        return _projected(K.sub, (2, 3), r), [a, b]
    if name == "mul":
        a, b = r.normal(size=(3, 2)), r.normal(size=(3, 2))
        return _projected(K.mul, (3, 2), r), [a, b]
    if name == "relu":
        x = _away_from_zero(r.normal(size=(4, 3)))
        return _projected(K.relu, (4, 3), r), [x]
    if name == "tanh":
        return _projected(K.tanh, (5,), r), [r.normal(size=(5,))]
    if name == "exp":
        return _projected(K.exp, (2, 3), r), [r.normal(size=(2, 3))]
    if name == "log":
        return _projected(K.log, (2, 3), r), [r.uniform(0.5, 2.0, size=(2, 3))]
    if name == "sum":
        return _projected(lambda x: K.sum(x, axis=1), (3,), r), [r.normal(size=(3, 4))]
    if name == "mean":
        return _projected(lambda x: K.mean(x, axis=0, keepdims=True), (1, 4), r), [r.normal(size=(3, 4))]
    if name == "reshape":
        return _projected(lambda x: K.reshape(x, (6, 2)), (6, 2), r), [r.normal(size=(3, 4))]
    if name == "transpose":
        return _projected(lambda x: K.transpose(x, (2, 0, 1)), (4, 2, 3), r), [r.normal(size=(2, 3, 4))]
    if name == "concat":
        return _projected(lambda a, b: K.concat([a, b], axis=1), (2, 5), r), [r.normal(size=(2, 3)),
                                                                              r.normal(size=(2, 2))]
    if name == "stack":
        return _projected(lambda a, b: K.stack([a, b], axis=0), (2, 3), r), [r.normal(size=(3,)),
                                                                             r.normal(size=(3,))]
    if name == "matmul":
        return _projected(K.matmul, (2, 3, 2), r), [r.normal(size=(2, 3, 4)), r.normal(size=(2, 4, 2))]
    if name == "linear":
        return _projected(K.linear, (2, 3, 5), r), [r.normal(size=(2, 3, 4)), r.normal(size=(4, 5)),
                                                    r.normal(size=(5,))]
    if name == "softmax":
        return _projected(K.softmax, (3, 4), r), [r.normal(size=(3, 4))]
    if name == "log_softmax":
        return _projected(K.log_softmax, (3, 4), r), [r.normal(size=(3, 4))]
    if name == "layer_norm":
        return _projected(K.layer_norm, (2, 3, 5), r), [r.normal(size=(2, 3, 5)), r.normal(size=(5,)),
                                                        r.normal(size=(5,))]
    if name == "embedding":
        ids = r.integers(0, 6, size=(2, 3))
        return _projected(lambda w: K.embedding(ids, w), (2, 3, 4), r), [r.normal(size=(6, 4))]
    if name == "cross_entropy":
        targets = r.integers(0, 5, size=(2, 3))
        mask = r.random((2, 3)) < 0.8
        mask[0, 0] = True
        return (lambda z: K.cross_entropy(z, targets, mask)), [r.normal(size=(2, 3, 5))]
    if name == "cosine_similarity":
        return _projected(K.cosine_similarity, (3,), r), [r.normal(size=(3, 4)), r.normal(size=(3, 4))]
    if name == "mean_pool":
        return _projected(lambda a, b, c: K.mean_pool([a, b, c]), (4,), r), [r.normal(size=(4,)) for _ in range(3)]
    if name == "multi_head_attention":
        B, Tq, Tk, D = 2, 3, 4, 4
        mask = np.ones((B, 1, Tq, Tk), dtype=bool)
        mask[1, :, :, -1] = False
        shapes = [(B, Tq, D), (B, Tk, D)] + [(D, D), (D,)] * 4
        return (_projected(lambda *a: K.multi_head_attention(*a, n_heads=2, mask=mask), (B, Tq, D), r),
                [r.normal(size=s) for s in shapes])
    if name == "fusion_attend":
        shapes = [(3, 4), (3, 4), (4, 4), (4, 4), (4, 4)]
        return _projected(K.fusion_attend, (3, 4), r), [r.normal(scale=0.7, size=s) for s in shapes]
    raise KeyError(name)


KERNELS = (
    "add", "sub", "mul", "relu", "tanh", "exp", "log", "sum", "mean", "reshape", "transpose", "concat",
    "stack", "matmul", "linear", "softmax", "log_softmax", "layer_norm", "embedding", "cross_entropy",
    "cosine_similarity", "mean_pool", "multi_head_attention", "fusion_attend",
)


def kernel_errors(name: str, n: int = N_INSTANCES, seed: int = 0) -> tuple[float, float]:
    """Worst relative error of kernel ``name`` over ``n`` instances, at 64-bit and 32-bit."""
    rng = np.random.default_rng([seed, KERNELS.index(name)])
    worst64 = worst32 = 0.0
    for _ in range(n):
        fn, inputs = _case(name, rng)
        worst64 = max(worst64, check_gradients(fn, inputs, dtype=np.float64))
        worst32 = max(worst32, check_gradients(fn, inputs, dtype=np.float32))
    return worst64, worst32


# ---------------------------------------------------------------- whole-model gradient check

def _model_instance(corpus, seed: int, dtype):
    from pier.training import ObjectiveWeights, TargetCache, assign_prompts

    cfg = ModelConfig(vocab_size=len(corpus.vocab), n_layers=2, d_model=8, n_heads=2, d_ff=16,
                      adapter_bottleneck=4, variant="fusion")
    model = FusedModel(cfg, seed=seed)
    rng = np.random.default_rng([seed, 77])
    # weights well away from init so adapters and fusion carry real signal
    for _, t in model.named_parameters():
        t.data = t.data + rng.normal(scale=0.3, size=t.shape)
    model.astype(dtype)
    idx = rng.choice(len(corpus.train), size=3, replace=False)
    records = [corpus.train[i] for i in idx]
    lexicon = {e.pie_id: e for e in corpus.lexicon}
    examples = assign_prompts(records, rng, lexicon, corpus.vocab, "multi")
    targets = TargetCache(FusedModel(cfg, seed=seed + 1000), corpus.lexicon).warm(records)
    weights = ObjectiveWeights(copy=True, sim=True)
    return model, examples, targets, weights


@contextlib.contextmanager
def _relu_signs():
    """Record the sign pattern of every ReLU input seen inside the block."""
    seen: list[np.ndarray] = []
    relu = K.relu

    def spy(x):
        seen.append(x.data > 0)
        return relu(x)

    K.relu = spy
    try:
        yield seen
    finally:
        K.relu = relu


def total_loss_error(corpus, seed: int, dtype=np.float64, coords_per_tensor: int = 3) -> float:
    """Relative error of the full-model objective gradient against central differences.

    Every parameter tensor of a d_model=8 fusion model contributes
    ``coords_per_tensor`` randomly chosen coordinates; the finite-difference
    side runs at 64-bit on the same parameter values. A coordinate whose
    +-h probe flips the sign of any ReLU input straddles a kink, where the
    central difference is not a derivative, so another one is drawn.
    """
    from pier.training import total_loss

    model, examples, targets, weights = _model_instance(corpus, seed, dtype)
    params = model.set_trainable(PARAM_GROUPS)
    get_tape().clear()
    loss, _ = total_loss(model, examples, weights, targets)
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    ref, _, _, _ = _model_instance(corpus, seed, np.float64)
    for p, q in zip(params, ref.parameters()):
        q.data = p.data.astype(np.float64)
    ref_params = list(ref.parameters())
    rng = np.random.default_rng([seed, 78])
    h = 1e-4

    def probe():
        with _relu_signs() as signs:
            value = total_loss(ref, examples, weights, targets)[1].total
        return value, signs

    got, want = [], []
    with no_grad():
        _, centre = probe()
        for p, a in zip(ref_params, analytic):
            flat = p.data.reshape(-1)
            taken = 0
            for i in rng.permutation(flat.size):
                if taken == min(coords_per_tensor, flat.size):
                    break
                orig = flat[i]
                flat[i] = orig + h
                up, s_up = probe()
                flat[i] = orig - h
                down, s_down = probe()
                flat[i] = orig
                if not all(np.array_equal(c, u) and np.array_equal(c, d)
                           for c, u, d in zip(centre, s_up, s_down)):
                    continue
                want.append((up - down) / (2 * h))
                got.append(float(a.reshape(-1)[i]))
                taken += 1
    got, want = np.array(got), np.array(want)
    scale = max(np.abs(want).max(), np.abs(got).max())
    return float(np.abs(got - want).max() / scale)


# ---------------------------------------------------------------- brute-force oracles

def cos_dist_oracle(u, v) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return 1.0 - max(-1.0, min(1.0, dot / (nu * nv)))


def set_partitions(items):
    """Every partition of ``items`` into non-empty blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def complete_linkage_oracle(x, k: int) -> list[tuple]:
    """Greedy complete linkage by exhaustive rescans of every cluster pair.

    Cluster distance is recomputed from scratch over all member pairs at
    every merge; ties go to the pair whose smallest members are
    lexicographically smallest.
    """
    n = len(x)
    d = [[cos_dist_oracle(x[i], x[j]) for j in range(n)] for i in range(n)]
    clusters = [[i] for i in range(n)]
    while len(clusters) > k:
        best = None
        for a, b in itertools.combinations(range(len(clusters)), 2):
            dist = max(d[i][j] for i in clusters[a] for j in clusters[b])
            key = (dist, min(clusters[a]), min(clusters[b]))
            if best is None or key < best[0]:
                best = (key, a, b)
        _, a, b = best
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    return sorted(tuple(sorted(c)) for c in clusters)


def optimal_complete_linkage_partition(x, k: int) -> list[tuple]:
    """Partition into ``k`` blocks minimising the largest within-block cosine distance."""
    n = len(x)
    d = [[cos_dist_oracle(x[i], x[j]) for j in range(n)] for i in range(n)]
    best = None
    for part in set_partitions(range(n)):
        if len(part) != k:
            continue
        diam = max((d[i][j] for blk in part for i in blk for j in blk), default=0.0)
        if best is None or diam < best[0]:
            best = (diam, part)
    return sorted(tuple(sorted(b)) for b in best[1])


def entropy_oracle(labels) -> float:
    n = len(labels)
    out = 0.0
    for c in set(labels):
        p = labels.count(c) / n
        out -= p * math.log(p)
    return out


def homogeneity_oracle(truth, pred) -> float:
    truth, pred = list(truth), list(pred)
    h_c = entropy_oracle(truth)
    if h_c == 0.0:
        return 1.0
    n = len(truth)
    h_ck = 0.0
    for k in set(pred):
        members = [t for t, p in zip(truth, pred) if p == k]
        h_ck += len(members) / n * entropy_oracle(members)
    return 1.0 - h_ck / h_c


def pearson_oracle(xs, ys) -> float:
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    vx = sum((a - mx) ** 2 for a in xs)
    vy = sum((b - my) ** 2 for b in ys)
    return cov / math.sqrt(vx * vy)


def partition_of(labels) -> list[tuple]:
    blocks: dict = {}
    for i, lab in enumerate(labels):
        blocks.setdefault(lab, set()).add(i)
    return sorted(tuple(sorted(b)) for b in blocks.values())
