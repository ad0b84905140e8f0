import pytest

from pier.ablation import (
    VARIANTS,
    AblationConfig,
    AblationResult,
    ablation_config_from_dict,
    format_checks,
    run_ablation,
)
from pier.evaluation import MetricsReport
from pier.exceptions import InvalidConfigError

from helpers import TINY


def _report(h=0.5, sim=0.9, acc=0.8, seq=0.5, recon=0.95, skewed=0.95, balanced=0.9):
    return MetricsReport(h_score=h, inter_group_cos_dist=0.3, inter_type_cos_sim=sim,
                         senseclf={"acc": acc, "f1": 0.8}, spandet={"seq_acc": seq, "token_recall": 0.7},
                         reconstruction_acc=recon,
                         skew={"skewed_mean_sim": skewed, "balanced_mean_sim": balanced})


def _result(**overrides):
    cfg = AblationConfig(seeds=(0, 1))
    res = AblationResult(cfg)
    base = {
        "base-only": _report(h=0.4, sim=0.95, acc=0.75, seq=0.40),
        "adapter-only": _report(h=0.4, sim=0.95, acc=0.76, seq=0.42),
        "fusion-attn": _report(seq=0.45),
        "pier-plus": _report(h=0.6, sim=0.70, acc=0.80, seq=0.50),
    }
    base.update(overrides)
    for name in cfg.variants:
        rep = base.get(name, _report())
        res.reports[name] = {0: rep, 1: rep}
    return res


class TestConfig:
    def test_variants_cover_the_matrix(self):
        assert len(VARIANTS) == 10
        assert VARIANTS["pier"].prompt_mode == "single" and VARIANTS["pier-plus"].prompt_mode == "multi"
        assert not VARIANTS["fusion-attn"].sim and not VARIANTS["fusion-attn"].prompts
        assert VARIANTS["bart-ft"].stage == "base" and VARIANTS["base-only"].stage is None

    def test_variant_configs(self):
        cfg = AblationConfig()
        t = cfg.variant_config("p-cls", 7)
        assert (t.stage, t.prompts, t.seed, t.epochs) == ("fusion", ("type_cls",), 7, 4)
        with pytest.raises(InvalidConfigError):
            cfg.variant_config("base-only", 0)
        assert cfg.adapter_config().prompts == ()

    @pytest.mark.parametrize("d", [{"seeds": []}, {"variants": ["bert"]}, {"epochs": 0}, {"schema_version": 9},
                                   {"flavour": 1}])
    def test_invalid(self, d):
        with pytest.raises(InvalidConfigError):
            ablation_config_from_dict(d)


class TestChecks:
    def test_all_pass(self):
        res = _result()
        assert all(c.passed for c in res.checks()) and res.ok
        assert format_checks(res.checks()).count("[PASS]") == 7

    def test_diffsim_margin(self):
        res = _result(**{"pier-plus": _report(h=0.6, sim=0.90, acc=0.80, seq=0.50)})
        failed = {c.name for c in res.checks() if not c.passed}
        assert failed == {"diffsim_pier_plus_below_adapter_only"}

    def test_span_margin_and_recon(self):
        res = _result(**{"pier-plus": _report(h=0.6, sim=0.70, acc=0.80, seq=0.44, recon=0.90)})
        failed = {c.name for c in res.checks() if not c.passed}
        assert failed == {"spandet_pier_plus_margin_over_base_only", "spandet_fusion_attn_below_pier_plus",
                          "reconstruction_pier_plus_near_base_only"}

    def test_missing_variant_fails(self):
        res = _result()
        del res.reports["pier-plus"]
        assert not res.ok
        assert all(c.detail == "missing results" for c in res.checks() if c.name.startswith("diffsim"))

    def test_failure_recorded_in_table(self):
        res = _result()
        res.failures["p-defn"] = {1: "DivergenceError: boom"}
        assert not res.ok
        assert "p-defn (FAILED)" in res.table_text()

    def test_spread_is_sample_std(self):
        res = _result()
        res.reports["pier"] = {0: _report(h=0.2), 1: _report(h=0.4)}
        assert res.mean("pier", "h_score") == pytest.approx(0.3)
        assert res.spread("pier", "h_score") == pytest.approx(0.1414213562, abs=1e-9)

    def test_table_formats(self):
        res = _result()
        lines = res.table_csv().splitlines()
        assert len(lines) == 11 and lines[0].startswith("variant,n_seeds,h_score_mean")
        text = res.table_text().splitlines()
        assert len(text) == 11 and "+/-" in text[1]


def test_mini_ablation_runs_end_to_end(small_corpus, tmp_path):
    cfg = AblationConfig(seeds=(0,), base_epochs=1, adapter_epochs=1, epochs=1, batch_size=32,
                         variants=("base-only", "adapter-only", "fusion-attn", "pier-plus"),
                         sense_epochs=2, span_epochs=2, model=TINY)
    res = run_ablation(cfg, small_corpus, tmp_path)
    assert set(res.reports) == {"base-only", "adapter-only", "fusion-attn", "pier-plus"}
    for name in ("table.csv", "table.txt", "summary.json", "shared/base.ckpt", "seed_0/pier-plus/report.json"):
        assert (tmp_path / name).exists(), name
    assert len(res.checks()) == 7
