"""The ten-model ablation: shared base and adapter stages, per-seed variants, one comparison table."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from .corpus.generate import GeneratedCorpus
from .evaluation import MetricsReport, ProbeSchedule, evaluate_models
from .exceptions import InvalidConfigError, PierError
from .model.checkpoint import save_checkpoint
from .model.fused import FusedModel
from .training import TargetCache, TrainConfig, train_stage
from .training.trainer import loss_log_csv

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class VariantSpec:
    """How one ablation row is produced.

    ``stage`` is None for the two rows that reuse a shared stage as is.
    """

    name: str
    stage: str | None
    route: str
    copy: bool = True
    sim: bool = True
    prompts: tuple[str, ...] = ()
    prompt_mode: str = "multi"


_BOTH = ("type_cls", "defn_gen")
VARIANTS: dict[str, VariantSpec] = {v.name: v for v in (
    VariantSpec("base-only", None, "base"),
    VariantSpec("adapter-only", None, "adapter"),
    VariantSpec("bart-ft", "base", "base", prompts=_BOTH),
    VariantSpec("fusion-attn", "fusion", "fusion", sim=False),
    VariantSpec("fusion-sim", "fusion", "fusion"),
    VariantSpec("fusion-prompt", "fusion", "fusion", sim=False, prompts=_BOTH),
    VariantSpec("p-cls", "fusion", "fusion", prompts=("type_cls",)),
    VariantSpec("p-defn", "fusion", "fusion", prompts=("defn_gen",)),
    VariantSpec("pier", "fusion", "fusion", prompts=_BOTH, prompt_mode="single"),
    VariantSpec("pier-plus", "fusion", "fusion", prompts=_BOTH),
)}
VARIANT_NAMES = tuple(VARIANTS)


@dataclass(frozen=True)
class AblationConfig:
    seeds: tuple[int, ...] = (0, 1, 2)
    # the stand-in pretrained model and adapter expert are trained once per ablation
    base_seed: int = 0
    base_epochs: int = 5
    base_batch_size: int = 32
    base_lr: float = 3e-3
    adapter_epochs: int = 3
    adapter_batch_size: int = 32
    adapter_lr: float = 3e-3
    epochs: int = 4
    batch_size: int = 8
    lr: float = 1e-3
    variants: tuple[str, ...] = VARIANT_NAMES
    sense_epochs: int = 55
    span_epochs: int = 100
    model: dict = field(default_factory=dict)
    corpus: str | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "variants", tuple(self.variants))
        if not self.seeds:
            raise InvalidConfigError("at least one seed is required")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise InvalidConfigError(f"unknown variants {sorted(unknown)}")
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidConfigError(f"ablation config schema {self.schema_version} != {SCHEMA_VERSION}")
        for name in ("base_epochs", "adapter_epochs", "epochs", "sense_epochs", "span_epochs",
                     "base_batch_size", "adapter_batch_size", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfigError(f"{name} must be positive")

    @property
    def probes(self) -> ProbeSchedule:
        return ProbeSchedule(sense_epochs=self.sense_epochs, span_epochs=self.span_epochs)

    def base_config(self) -> TrainConfig:
        return TrainConfig(stage="base", epochs=self.base_epochs, batch_size=self.base_batch_size,
                           lr=self.base_lr, seed=self.base_seed, model=self.model)

    def adapter_config(self) -> TrainConfig:
        # the expert sees copies and the similarity objective, no prompts
        return TrainConfig(stage="adapter", prompts=(), epochs=self.adapter_epochs,
                           batch_size=self.adapter_batch_size, lr=self.adapter_lr, seed=self.base_seed,
                           model=self.model)

    def variant_config(self, name: str, seed: int) -> TrainConfig:
        v = VARIANTS[name]
        if v.stage is None:
            raise InvalidConfigError(f"{name} reuses a shared stage and has no training config")
        return TrainConfig(stage=v.stage, copy=v.copy, sim=v.sim, prompts=v.prompts, prompt_mode=v.prompt_mode,
                           epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, seed=seed,
                           model=self.model)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["variants"] = list(self.variants)
        return d


def ablation_config_from_dict(d: dict | None) -> AblationConfig:
    d = d or {}
    if not isinstance(d, dict):
        raise InvalidConfigError("ablation configuration must be a mapping")
    unknown = set(d) - {f.name for f in fields(AblationConfig)}
    if unknown:
        raise InvalidConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return AblationConfig(**d)


def load_ablation_config(path) -> AblationConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"{path}: not valid YAML ({exc})") from exc
    return ablation_config_from_dict(data)


# ---------------------------------------------------------------- results

TABLE_METRICS = (
    ("h_score", lambda r: r.h_score),
    ("inter_group_cos_dist", lambda r: r.inter_group_cos_dist),
    ("inter_type_cos_sim", lambda r: r.inter_type_cos_sim),
    ("sense_acc", lambda r: r.senseclf["acc"]),
    ("sense_f1", lambda r: r.senseclf["f1"]),
    ("span_seq_acc", lambda r: r.spandet["seq_acc"]),
    ("span_token_recall", lambda r: r.spandet["token_recall"]),
    ("reconstruction_acc", lambda r: r.reconstruction_acc),
    ("skewed_mean_sim", lambda r: r.skew.get("skewed_mean_sim")),
    ("balanced_mean_sim", lambda r: r.skew.get("balanced_mean_sim")),
)
# ordering thresholds from the acceptance criteria
DIFFSIM_MARGIN = 0.10
SPAN_MARGIN = 0.05
RECON_TOLERANCE = 0.02


@dataclass
class OrderingCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class AblationResult:
    config: AblationConfig
    reports: dict[str, dict[int, MetricsReport]] = field(default_factory=dict)
    failures: dict[str, dict[int, str]] = field(default_factory=dict)
    seconds: float = 0.0

    def values(self, variant: str, metric: str) -> list[float]:
        get = dict(TABLE_METRICS)[metric]
        out = []
        for seed in self.config.seeds:
            rep = self.reports.get(variant, {}).get(seed)
            v = None if rep is None else get(rep)
            if v is not None:
                out.append(float(v))
        return out

    def mean(self, variant: str, metric: str) -> float | None:
        vals = self.values(variant, metric)
        return float(np.mean(vals)) if vals else None

    def spread(self, variant: str, metric: str) -> float | None:
        """Sample standard deviation over seeds (0 for a single seed)."""
        vals = self.values(variant, metric)
        if not vals:
            return None
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

    def table_rows(self) -> list[dict]:
        rows = []
        for name in self.config.variants:
            row = {"variant": name, "n_seeds": len(self.reports.get(name, {}))}
            for metric, _ in TABLE_METRICS:
                row[f"{metric}_mean"] = self.mean(name, metric)
                row[f"{metric}_spread"] = self.spread(name, metric)
            failed = self.failures.get(name, {})
            row["failure"] = "; ".join(f"seed {s}: {m}" for s, m in sorted(failed.items()))
            rows.append(row)
        return rows

    def checks(self) -> list[OrderingCheck]:
        m = self.mean
        out = []

        def check(name, needed, test, describe):
            vals = {k: m(*k) for k in needed}
            if any(v is None for v in vals.values()):
                out.append(OrderingCheck(name, False, "missing results"))
                return
            out.append(OrderingCheck(name, bool(test(vals)), describe(vals)))

        ps, ao, bo, fa = "pier-plus", "adapter-only", "base-only", "fusion-attn"
        check("diffsim_pier_plus_below_adapter_only",
              [(ps, "inter_type_cos_sim"), (ao, "inter_type_cos_sim")],
              lambda v: v[ps, "inter_type_cos_sim"] < v[ao, "inter_type_cos_sim"] - DIFFSIM_MARGIN,
              lambda v: f"{v[ps, 'inter_type_cos_sim']:.4f} < {v[ao, 'inter_type_cos_sim']:.4f} - {DIFFSIM_MARGIN}")
        check("hscore_pier_plus_above_base_only",
              [(ps, "h_score"), (bo, "h_score")],
              lambda v: v[ps, "h_score"] > v[bo, "h_score"],
              lambda v: f"{v[ps, 'h_score']:.4f} > {v[bo, 'h_score']:.4f}")
        check("senseclf_pier_plus_at_least_baselines",
              [(ps, "sense_acc"), (bo, "sense_acc"), (ao, "sense_acc")],
              lambda v: v[ps, "sense_acc"] >= max(v[bo, "sense_acc"], v[ao, "sense_acc"]),
              lambda v: f"{v[ps, 'sense_acc']:.4f} >= max({v[bo, 'sense_acc']:.4f}, {v[ao, 'sense_acc']:.4f})")
        check("spandet_pier_plus_margin_over_base_only",
              [(ps, "span_seq_acc"), (bo, "span_seq_acc")],
              lambda v: v[ps, "span_seq_acc"] >= v[bo, "span_seq_acc"] + SPAN_MARGIN,
              lambda v: f"{v[ps, 'span_seq_acc']:.4f} >= {v[bo, 'span_seq_acc']:.4f} + {SPAN_MARGIN}")
        check("spandet_fusion_attn_below_pier_plus",
              [(fa, "span_seq_acc"), (ps, "span_seq_acc")],
              lambda v: v[fa, "span_seq_acc"] < v[ps, "span_seq_acc"],
              lambda v: f"{v[fa, 'span_seq_acc']:.4f} < {v[ps, 'span_seq_acc']:.4f}")
        check("reconstruction_pier_plus_near_base_only",
              [(ps, "reconstruction_acc"), (bo, "reconstruction_acc")],
              lambda v: abs(v[ps, "reconstruction_acc"] - v[bo, "reconstruction_acc"]) <= RECON_TOLERANCE,
              lambda v: f"|{v[ps, 'reconstruction_acc']:.4f} - {v[bo, 'reconstruction_acc']:.4f}| <= {RECON_TOLERANCE}")
        check("skewed_pies_more_similar_under_pier_plus",
              [(ps, "skewed_mean_sim"), (ps, "balanced_mean_sim")],
              lambda v: v[ps, "skewed_mean_sim"] > v[ps, "balanced_mean_sim"],
              lambda v: f"{v[ps, 'skewed_mean_sim']:.4f} > {v[ps, 'balanced_mean_sim']:.4f}")
        return out

    @property
    def ok(self) -> bool:
        return not any(self.failures.values()) and all(c.passed for c in self.checks())

    def table_csv(self) -> str:
        rows = self.table_rows()
        cols = list(rows[0])
        lines = [",".join(cols)]
        for r in rows:
            lines.append(",".join(_cell(r[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def table_text(self) -> str:
        """Readable table: one row per variant, mean +/- spread per metric."""
        head = ["variant"] + [m for m, _ in TABLE_METRICS]
        body = []
        for r in self.table_rows():
            cells = [r["variant"]]
            for m, _ in TABLE_METRICS:
                mu, sd = r[f"{m}_mean"], r[f"{m}_spread"]
                cells.append("n/a" if mu is None else f"{mu:.4f}+/-{sd:.4f}")
            if r["failure"]:
                cells[0] += " (FAILED)"
            body.append(cells)
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths))  # noqa: E731
        return "\n".join([fmt(head)] + [fmt(b) for b in body]) + "\n"

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "table": self.table_rows(),
            "checks": [asdict(c) for c in self.checks()],
            "failures": {k: {str(s): m for s, m in v.items()} for k, v in self.failures.items() if v},
            "ok": self.ok,
        }


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v).replace(",", ";")


# ---------------------------------------------------------------- running


@dataclass
class SharedStages:
    base: FusedModel
    adapter: FusedModel
    targets: TargetCache


def train_shared(config: AblationConfig, corpus: GeneratedCorpus, out: Path | None = None,
                 log: Callable[[str], None] | None = None) -> SharedStages:
    say = log or (lambda _msg: None)
    t = time.perf_counter()
    base_cfg = config.base_config()
    base = train_stage("base", base_cfg, corpus)
    say(f"base stage: {base_cfg.epochs} epochs in {time.perf_counter() - t:.1f}s")
    t = time.perf_counter()
    adapter = train_stage("adapter", config.adapter_config(), corpus, init=base.model)
    say(f"adapter stage: {config.adapter_epochs} epochs in {time.perf_counter() - t:.1f}s")
    if out is not None:
        d = out / "shared"
        d.mkdir(parents=True, exist_ok=True)
        for name, res in (("base", base), ("adapter", adapter)):
            save_checkpoint(res.model, d / f"{name}.ckpt", meta={"stage": name, "seed": str(config.base_seed)})
            (d / f"{name}_log.csv").write_text(loss_log_csv(res.log))
    targets = TargetCache(base.model, corpus.lexicon).warm(corpus.train)
    return SharedStages(base.model, adapter.model, targets)


def run_seed(config: AblationConfig, corpus: GeneratedCorpus, shared: SharedStages, seed: int,
             out: Path | None = None, log: Callable[[str], None] | None = None
             ) -> tuple[dict[str, MetricsReport], dict[str, str]]:
    """Train every variant for one seed and evaluate them together."""
    say = log or (lambda _msg: None)
    models: dict[str, tuple[FusedModel, str]] = {}
    failures: dict[str, str] = {}
    for name in config.variants:
        spec = VARIANTS[name]
        if spec.stage is None:
            models[name] = (shared.base if spec.route == "base" else shared.adapter, spec.route)
            continue
        t = time.perf_counter()
        init = shared.adapter if spec.stage == "fusion" else shared.base
        try:
            res = train_stage(spec.stage, config.variant_config(name, seed), corpus, init=init,
                              reference=shared.targets)
        except PierError as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
            say(f"seed {seed} {name}: FAILED ({failures[name]})")
            continue
        models[name] = (res.model, spec.route)
        say(f"seed {seed} {name}: trained in {time.perf_counter() - t:.1f}s")
        if out is not None:
            d = out / f"seed_{seed}" / name
            d.mkdir(parents=True, exist_ok=True)
            save_checkpoint(res.model, d / "model.ckpt", meta={"variant": name, "seed": str(seed)})
            (d / "train_log.csv").write_text(loss_log_csv(res.log))

    t = time.perf_counter()
    names = list(models)
    reports = evaluate_models([models[n] for n in names], corpus, seed, config.probes,
                              [{"variant": n, **config.to_dict()} for n in names]) if names else []
    say(f"seed {seed}: evaluated {len(names)} models in {time.perf_counter() - t:.1f}s")
    by_name = dict(zip(names, reports))
    if out is not None:
        for n, rep in by_name.items():
            d = out / f"seed_{seed}" / n
            d.mkdir(parents=True, exist_ok=True)
            (d / "report.json").write_text(rep.to_json())
            (d / "per_pie.csv").write_text(rep.per_pie_csv())
    return by_name, failures


def _seed_job(args):
    config, corpus, shared, seed, out = args
    return seed, run_seed(config, corpus, shared, seed, out)


def run_ablation(config: AblationConfig, corpus: GeneratedCorpus, out: Path | str | None = None,
                 workers: int = 1, log: Callable[[str], None] | None = None) -> AblationResult:
    """Run the whole matrix. Seeds may run in ``workers`` processes; results do not depend on it."""
    out = Path(out) if out is not None else None
    start = time.perf_counter()
    shared = train_shared(config, corpus, out, log)
    result = AblationResult(config)
    jobs = [(config, corpus, shared, s, out) for s in config.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            done = list(pool.map(_seed_job, jobs))
    else:
        done = [(s, run_seed(config, corpus, shared, s, out, log)) for s in config.seeds]
    for seed, (reports, failures) in done:
        for name, rep in reports.items():
            result.reports.setdefault(name, {})[seed] = rep
        for name, msg in failures.items():
            result.failures.setdefault(name, {})[seed] = msg
    result.seconds = time.perf_counter() - start
    if out is not None:
        write_summary(result, out)
    return result


def write_summary(result: AblationResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(result.table_csv())
    (out / "table.txt").write_text(result.table_text())
    (out / "summary.json").write_text(json.dumps(result.summary(), sort_keys=True, indent=1) + "\n")


def format_checks(checks: Sequence[OrderingCheck]) -> str:
    return "\n".join(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}" for c in checks) + "\n"
