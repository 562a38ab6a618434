"""Command-line entry point: generate, train, sweep, evaluate, learning-curve.

Settings come from an optional JSON ``--config`` file with the sections
``generator``, ``hyper``, ``split`` and ``optimizer``; flags override it.
On failure the command prints ``error: <category>: <message>`` on stderr and
exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import io, pipeline
from .cost import Hyperparams
from .errors import CalibrationError, ConfigError
from .optimizer import OptimizerSettings
from .pipeline import SplitSpec
from .synth import GenConfig, analytic_noise_floor, generate_world

EXIT_FAILURE = 1
EXIT_USAGE = 2

SECTIONS = ("generator", "hyper", "split", "optimizer")
METADATA_KEYS = ("format", "seed", "config_digest")  # written by generate, ignored on load
METRIC_COLUMNS = ["delta_theta", "delta_theta_stderr", "db_below_qpn", "mean_n", "sample_count"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    generator: dict = field(default_factory=dict)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    split: SplitSpec = field(default_factory=lambda: SplitSpec(500, 50))
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "hyper": asdict(self.hyper),
            "split": asdict(self.split),
            "optimizer": asdict(self.optimizer),
        }


def load_config(path: str | None) -> RunConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = set(data) - set(SECTIONS) - set(METADATA_KEYS)
        if unknown:
            raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    try:
        cfg = RunConfig(
            generator=dict(data.get("generator", {})),
            hyper=Hyperparams(**data.get("hyper", {})),
            split=SplitSpec(**data.get("split", {"train_count": 500, "validation_count": 50})),
            optimizer=OptimizerSettings(**data.get("optimizer", {})),
        )
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, CalibrationError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    hyper = cfg.hyper
    if getattr(args, "lam", None) is not None:
        hyper = Hyperparams(args.lam, hyper.jz_cutoff, hyper.normalize)
    if getattr(args, "cutoff", None) is not None:
        hyper = Hyperparams(hyper.lam, args.cutoff, hyper.normalize)
    split = cfg.split
    if getattr(args, "train_count", None) is not None:
        split = SplitSpec(args.train_count, split.validation_count, split.shuffle_seed)
    if getattr(args, "validation_count", None) is not None:
        split = SplitSpec(split.train_count, args.validation_count, split.shuffle_seed)
    if getattr(args, "seed", None) is not None and args.command != "generate":
        split = SplitSpec(split.train_count, split.validation_count, args.seed)
    return RunConfig(cfg.generator, hyper, split, cfg.optimizer)


def _parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise UsageError("--values is empty")
    return values


def _metric_row(metrics) -> list:
    if metrics is None:
        return [float("nan")] * 4 + [0]
    return [metrics.delta_theta, metrics.delta_theta_stderr, metrics.db_below_qpn, metrics.mean_n, metrics.sample_count]


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _split(args, cfg: RunConfig):
    dataset = io.read_dataset(args.data)
    return dataset, pipeline.split(dataset, cfg.split)


def _meta(cfg: RunConfig, **extra) -> dict:
    meta = {
        "seed": cfg.split.shuffle_seed,
        "config_digest": io.digest(cfg.to_dict()),
        "config": cfg.to_dict(),
    }
    meta.update(extra)
    return meta


def cmd_generate(args, cfg: RunConfig) -> list[Path]:
    settings = dict(cfg.generator)
    for key in ("shots", "seed", "mean_theta", "mean_atoms", "field_seed"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    try:
        config = GenConfig.from_dict(settings)
    except TypeError as exc:
        raise ConfigError(f"bad generator settings: {exc}") from None
    out = _out_dir(args)
    field_, dataset, truths = generate_world(config)
    gen = config.to_dict()
    meta = {"seed": config.seed, "config_digest": io.digest(gen), "generator": gen}
    floor = analytic_noise_floor(config)
    run = RunConfig(gen, cfg.hyper, cfg.split, cfg.optimizer).to_dict()
    run.update({"format": {"kind": "run-config", "version": io.FORMAT_VERSION}, "seed": config.seed,
                "config_digest": meta["config_digest"]})
    (out / "config.json").write_text(json.dumps(run, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return [
        io.write_dataset(out / "dataset.csv", dataset, {"config_digest": meta["config_digest"], "noise_floor": floor}),
        io.write_truth(out / "truth.csv", truths, meta),
        io.write_field(out / "field.csv", field_, {"seed": config.seed, "config_digest": meta["config_digest"]}),
        out / "config.json",
    ]


def cmd_train(args, cfg: RunConfig) -> list[Path]:
    dataset, (train_set, validation, _) = _split(args, cfg)
    result = pipeline.train(train_set, cfg.hyper, cfg.optimizer, args.solver)
    metrics = pipeline.evaluate(result.beta, validation) if len(validation) >= 2 else None
    out = _out_dir(args)
    meta = _meta(cfg, data_seed=dataset.meta.get("seed"))
    report = result.report
    header = [
        "solver", "termination", "iterations", "evaluations", "final_value", "gradient_norm", "m_c",
        "lambda", "cutoff", "normalize",
    ] + ["validation_" + c for c in METRIC_COLUMNS]
    row = [
        args.solver, report.termination.value, report.iterations, report.evaluations, report.final_value,
        report.gradient_norm, result.m_c, cfg.hyper.lam, cfg.hyper.jz_cutoff, cfg.hyper.normalize,
    ] + _metric_row(metrics)
    hyper = asdict(cfg.hyper)
    return [
        io.write_beta(
            out / "beta.csv",
            result.beta,
            {"seed": meta["seed"], "config_digest": meta["config_digest"], "hyper": hyper, "m_c": result.m_c},
        ),
        io.write_report(out / "train_report.csv", header, [row], meta),
    ]


def _sweep_rows(report) -> tuple[list[str], list[list]]:
    header = [report.axis.value, "m_c"] + METRIC_COLUMNS + ["training_error", "validation_error"]
    rows = [
        [p.value, p.m_c] + _metric_row(p.metrics) + [p.training_error, p.validation_error]
        for p in report.points
    ]
    return header, rows


def cmd_sweep(args, cfg: RunConfig) -> list[Path]:
    if args.values is None:
        values = pipeline.DEFAULT_LAMBDAS if args.axis == "lambda" else pipeline.DEFAULT_CUTOFFS
    else:
        values = _parse_values(args.values)
    dataset, (train_set, validation, _) = _split(args, cfg)
    h = cfg.hyper
    if args.axis == "lambda":
        report = pipeline.sweep_lambda(train_set, validation, h.jz_cutoff, values, cfg.optimizer, args.solver, h.normalize)
    else:
        report = pipeline.sweep_cutoff(train_set, validation, h.lam, values, cfg.optimizer, args.solver, h.normalize)
    header, rows = _sweep_rows(report)
    meta = _meta(cfg, axis=args.axis, fixed=report.fixed, interior_minimum=report.has_interior_minimum())
    return [io.write_report(_out_dir(args) / f"sweep_{args.axis}.csv", header, rows, meta)]


def cmd_learning_curve(args, cfg: RunConfig) -> list[Path]:
    sizes = pipeline.DEFAULT_SIZES if args.sizes is None else [int(v) for v in _parse_values(args.sizes)]
    if any(s != int(s) for s in sizes):
        raise UsageError("--sizes must be integers")
    dataset, (train_set, validation, _) = _split(args, cfg)
    shuffle = 0 if args.seed is None else args.seed
    report = pipeline.learning_curve(train_set, validation, cfg.hyper, sizes, shuffle, cfg.optimizer, args.solver)
    header, rows = _sweep_rows(report)
    meta = _meta(cfg, fixed=report.fixed)
    return [io.write_report(_out_dir(args) / "learning_curve.csv", header, rows, meta)]


def cmd_evaluate(args, cfg: RunConfig) -> list[Path]:
    beta = io.read_beta(args.beta)
    if args.train_data:
        # cross-dataset evaluation: every shot of --data is scored
        reference = io.read_dataset(args.train_data)
        train_set, _, _ = pipeline.split(reference, cfg.split)
        eval_set = io.read_dataset(args.data)
    else:
        _, (train_set, _, eval_set) = _split(args, cfg)
    # a shifted transfer set lies above the cutoff, so it is scored in full
    exclude = not (args.all_shots or args.train_data)
    if eval_set.grid != beta.grid:
        raise ConfigError("weight map and evaluation data use different grids")
    rows_by_method = pipeline.compare_methods(beta, train_set, eval_set, cfg.hyper, exclude)
    single = rows_by_method["single-ratio"]
    header = ["method"] + METRIC_COLUMNS + ["variance_reduction_vs_single_ratio"]
    rows = [
        [name] + _metric_row(m) + [pipeline.variance_reduction(m, single)]
        for name, m in rows_by_method.items()
    ]
    meta = _meta(cfg, below_cutoff_only=exclude, transfer=bool(args.train_data))
    return [io.write_report(_out_dir(args) / "evaluation.csv", header, rows, meta)]


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "learning-curve": cmd_learning_curve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fluorocal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        p.add_argument("--config", help="JSON settings file")
        p.add_argument("--seed", type=int, help="generator seed (generate) or split/shuffle seed")
        p.add_argument("--out", required=True, help="output directory")
        if data:
            p.add_argument("--data", required=True, help="dataset file")
            p.add_argument("--lambda", dest="lam", type=float, help="smoothness weight")
            p.add_argument("--cutoff", type=float, help="|cavity Jz| cutoff in atoms")
            p.add_argument("--train-count", type=int)
            p.add_argument("--validation-count", type=int)
            p.add_argument("--solver", choices=["bfgs", "normal"], default="bfgs")

    p = sub.add_parser("generate", help="draw a synthetic dataset")
    common(p, data=False)
    p.add_argument("--shots", type=int)
    p.add_argument("--mean-theta", type=float)
    p.add_argument("--mean-atoms", type=float)
    p.add_argument("--field-seed", type=int)

    p = sub.add_parser("train", help="fit a weight map")
    common(p)

    p = sub.add_parser("sweep", help="validation sweep over one hyperparameter")
    common(p)
    p.add_argument("--axis", required=True, choices=["lambda", "cutoff"])
    p.add_argument("--values", help="comma-separated grid (default: built-in grid)")

    p = sub.add_parser("evaluate", help="compare the weight map with the baselines")
    common(p)
    p.add_argument("--beta", required=True, help="weight-map file from train")
    p.add_argument("--train-data", help="dataset the baseline is fitted on; --data is then scored in full")
    p.add_argument("--all-shots", action="store_true", help="do not drop shots above the cutoff")

    p = sub.add_parser("learning-curve", help="error against number of weighted samples")
    common(p)
    p.add_argument("--sizes", help="comma-separated sample counts")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _apply_overrides(load_config(args.config), args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            written = COMMANDS[args.command](args, cfg)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
