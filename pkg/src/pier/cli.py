"""Command-line front end: gen, train, eval, ablate.

Each command reads an optional YAML config, applies ``--seed``, and writes
into one run directory (``--out``) that also receives the effective config.
Exit status: 0 on success, 1 when a run fails or an ordering check fails,
2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import yaml

from .exceptions import CompatibilityError, DependencyError, InvalidConfigError, PierError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_pies: int = 60
    n_groups: int = 12
    n_train: int = 6000
    n_test: int = 1200
    idiomatic_fraction: float = 0.774
    n_pie_free: int = 300
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EvalConfig:
    checkpoint: str | None = None
    corpus: str | None = None
    route: str | None = None
    seed: int = 0
    sense_epochs: int = 55
    span_epochs: int = 100
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)


def _read_yaml(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise DependencyError(f"config file {p} does not exist")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"{p}: not valid YAML ({exc})") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise InvalidConfigError(f"{p}: configuration must be a mapping")
    return data


def _build(cls, data: dict):
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise InvalidConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise InvalidConfigError(f"config schema {data['schema_version']} != {SCHEMA_VERSION}")
    return cls(**data)


def _run_dir(out, default: str, force: bool) -> Path:
    d = Path(out) if out else Path("runs") / default
    if d.exists() and any(d.iterdir()) and not force:
        raise FileExistsError(f"{d} already exists and is not empty; pass --force to overwrite")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _echo(run_dir: Path, cfg: dict, command: str) -> None:
    text = yaml.safe_dump({"command": command, **cfg}, sort_keys=True, default_flow_style=False)
    (run_dir / "config.yaml").write_text(text)


def _say(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    from .corpus import generate, save_corpus

    data = _read_yaml(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = _build(GenConfig, data)
    run_dir = _run_dir(args.out, f"gen-seed{cfg.seed}", args.force)
    corpus = generate(cfg.seed, cfg.n_pies, cfg.n_groups, cfg.n_train, cfg.n_test,
                      cfg.idiomatic_fraction, cfg.n_pie_free)
    paths = save_corpus(corpus, run_dir)
    _echo(run_dir, cfg.to_dict(), "gen")
    _say(f"wrote {len(corpus.train)} train, {len(corpus.test)} test, {len(corpus.pie_free)} PIE-free "
         f"sentences and {len(corpus.lexicon)} lexicon entries to {run_dir}")
    for p in paths:
        _say(f"  {p}")
    return 0


# the stage whose checkpoint each stage starts from
_PRIOR_STAGE = {"adapter": "base", "fusion": "adapter", "base": "base"}


def _load_corpus(path, what: str):
    from .corpus import load_corpus

    if not path:
        raise DependencyError(f"{what} needs a corpus directory (set 'corpus' in the config)")
    return load_corpus(path)


def cmd_train(args) -> int:
    from .model.checkpoint import read_checkpoint
    from .training import config_from_dict, train_stage

    data = _read_yaml(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = config_from_dict(data)
    run_dir = _run_dir(args.out, f"train-{cfg.stage}-seed{cfg.seed}", args.force)
    corpus = _load_corpus(cfg.corpus, "training")
    if cfg.stage != "base" and not cfg.init_checkpoint:
        raise DependencyError(f"the {cfg.stage} stage needs init_checkpoint: a {_PRIOR_STAGE[cfg.stage]}-stage checkpoint")
    if cfg.init_checkpoint:
        path = Path(cfg.init_checkpoint)
        if not path.exists():
            raise DependencyError(f"prior-stage checkpoint {path} does not exist")
        prior_cfg, meta, _ = read_checkpoint(path)
        prior = meta.get("stage")
        if prior != _PRIOR_STAGE[cfg.stage]:
            raise DependencyError(f"the {cfg.stage} stage needs a {_PRIOR_STAGE[cfg.stage]}-stage checkpoint; "
                                  f"{path} holds stage {prior!r}")
        if prior_cfg.vocab_size != len(corpus.vocab):
            raise CompatibilityError(f"{path} has vocab_size {prior_cfg.vocab_size}, corpus has {len(corpus.vocab)}")
    cfg = cfg.replace(out=str(run_dir / "model.ckpt"))
    _echo(run_dir, cfg.to_dict(), "train")

    def progress(row):
        _say(f"epoch {row['epoch']:3d}  total {row['total']:.4f}  ce {row['reconstruction_ce']:.4f}  "
             f"sim {row['similarity']:.4f}")

    res = train_stage(cfg.stage, cfg, corpus, log_path=run_dir / "train_log.csv", progress=progress)
    _say(f"checkpoint {res.checkpoint_path} sha256 {res.digest}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import ProbeSchedule, evaluate_model
    from .model.checkpoint import load_checkpoint
    from .model.fused import ROUTES

    data = _read_yaml(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = _build(EvalConfig, data)
    if cfg.route is not None and cfg.route not in ROUTES:
        raise InvalidConfigError(f"route must be one of {ROUTES}")
    run_dir = _run_dir(args.out, f"eval-seed{cfg.seed}", args.force)
    corpus = _load_corpus(cfg.corpus, "evaluation")
    if not cfg.checkpoint or not Path(cfg.checkpoint).exists():
        raise DependencyError(f"checkpoint {cfg.checkpoint!r} does not exist")
    model, meta = load_checkpoint(cfg.checkpoint)
    if model.config.vocab_size != len(corpus.vocab):
        raise CompatibilityError(f"checkpoint vocab_size {model.config.vocab_size} does not match "
                                 f"the corpus vocabulary ({len(corpus.vocab)} tokens)")
    _echo(run_dir, cfg.to_dict(), "eval")
    schedule = ProbeSchedule(sense_epochs=cfg.sense_epochs, span_epochs=cfg.span_epochs)
    report = evaluate_model(model, corpus, cfg.seed, cfg.route, schedule, {**cfg.to_dict(), **meta})
    (run_dir / "report.json").write_text(report.to_json())
    (run_dir / "per_pie.csv").write_text(report.per_pie_csv())
    _say(f"H {report.h_score:.4f}  DiffSim {report.inter_type_cos_sim:.4f}  "
         f"SenseCLF {report.senseclf['acc']:.4f}  SpanDET {report.spandet['seq_acc']:.4f}  "
         f"recon {report.reconstruction_acc:.4f}")
    _say(f"report written to {run_dir}")
    return 0


def cmd_ablate(args) -> int:
    from .ablation import ablation_config_from_dict, format_checks, run_ablation
    from .corpus import generate, save_corpus

    data = _read_yaml(args.config)
    if args.seed is not None:
        data["seeds"] = [args.seed, args.seed + 1, args.seed + 2]
        data["base_seed"] = args.seed
    cfg = ablation_config_from_dict(data)
    run_dir = _run_dir(args.out, f"ablate-seed{cfg.seeds[0]}", args.force)
    if cfg.corpus:
        corpus = _load_corpus(cfg.corpus, "the ablation")
    else:
        corpus = generate(0)
        save_corpus(corpus, run_dir / "corpus")
    _echo(run_dir, cfg.to_dict(), "ablate")
    result = run_ablation(cfg, corpus, run_dir, workers=_workers(), log=_say)
    _say(result.table_text())
    _say(format_checks(result.checks()))
    _say(f"finished in {result.seconds:.0f}s; results in {run_dir}")
    return 0 if result.ok else 1


def _workers() -> int:
    raw = os.environ.get("PIER_NUM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidConfigError(f"PIER_NUM_THREADS must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pier", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("gen", cmd_gen, "generate the synthetic corpus"),
        ("train", cmd_train, "train one stage"),
        ("eval", cmd_eval, "evaluate a checkpoint"),
        ("ablate", cmd_ablate, "run the ten-model ablation"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", metavar="PATH", help="YAML configuration file")
        p.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
        p.add_argument("--out", metavar="DIR", help="run directory")
        p.add_argument("--force", action="store_true", help="write into a non-empty run directory")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfigError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PierError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
