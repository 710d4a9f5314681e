"""Command-line entry point: ``tinyhr {gen,train,eval,infer}``.

Everything the experiments parameterize lives in a JSON config file
(``--config``); flags cover paths, seeds and pipeline selection only.
Example config (every section and key is optional)::

    {
      "data": {"n": 5687, "abnormal_fraction": 0.2, "seed": 0, "hr_range": [40, 100]},
      "filters": {"median_window": 3, "ma_window": 31},
      "train": {"upsampler": {"epochs": 2000}, "classifier": {}, "regressor": {},
                "regressor_variant": "cnn"},
      "pipeline": {"gate_threshold": 0.5},
      "bench": {"repeats": 10, "power_mw": 240.0}
    }

Training seeds come from ``--seed`` (or ``data.seed``), so the train
sections do not take a ``seed`` key.

Exit codes: 0 success, 1 invalid config or arguments, 2 bad data or model
files (including CRC failures and wrong-length frames), 3 training failure.
A rejected frame is a successful run (exit 0, ``"rejected": true``).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bench, data, models, pipelines
from .dsp import FilterSpec
from .errors import ConfigError, DataError, ModelFormatError, ShapeError, TinyHRError, TrainingDiverged
from .nn import TrainConfig
from .pipelines import Pipeline
from .signal import HIGH_LEN, LOW_LEN, minmax

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_TRAINING = 3

_SECTIONS = {
    "data": {"n", "abnormal_fraction", "seed", "hr_range"},
    "filters": set(FilterSpec().to_dict()),
    "train": {"upsampler", "classifier", "regressor", "regressor_variant"},
    "pipeline": {"gate_threshold"},
    "bench": {"repeats", "power_mw"},
}


@dataclass(frozen=True)
class Config:
    n: int = data.DEFAULT_N
    abnormal_fraction: float = data.DEFAULT_ABNORMAL_FRACTION
    seed: int = 0
    hr_range: tuple = data.DEFAULT_HR_RANGE
    filters: FilterSpec = field(default_factory=FilterSpec)
    filters_given: bool = False
    train: dict = field(default_factory=lambda: dict(models.DEFAULT_CONFIGS))
    regressor_variant: str = "cnn"
    gate_threshold: float = models.GATE_THRESHOLD
    repeats: int = 10
    power_mw: float = bench.DEFAULT_ACTIVE_POWER_MW


def _check_keys(where: str, got: dict, allowed) -> None:
    if not isinstance(got, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(got) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def parse_config(doc: dict) -> Config:
    """Validate a config document and fill in defaults.  Raises ConfigError."""
    _check_keys("config", doc, _SECTIONS)
    for name, allowed in _SECTIONS.items():
        _check_keys(name, doc.get(name, {}), allowed)
    d, tr = doc.get("data", {}), doc.get("train", {})
    for name in models.DEFAULT_CONFIGS:
        _check_keys(f"train.{name}", tr.get(name, {}), set(models.DEFAULT_CONFIGS[name].to_dict()) - {"seed"})
    try:
        cfg = Config(
            n=int(d.get("n", data.DEFAULT_N)),
            abnormal_fraction=float(d.get("abnormal_fraction", data.DEFAULT_ABNORMAL_FRACTION)),
            seed=int(d.get("seed", 0)),
            hr_range=tuple(float(v) for v in d.get("hr_range", data.DEFAULT_HR_RANGE)),
            filters=FilterSpec(**doc.get("filters", {})),
            filters_given="filters" in doc,
            train={
                name: TrainConfig.from_dict({**default.to_dict(), **tr.get(name, {})})
                for name, default in models.DEFAULT_CONFIGS.items()
            },
            regressor_variant=str(tr.get("regressor_variant", "cnn")).lower(),
            gate_threshold=float(doc.get("pipeline", {}).get("gate_threshold", models.GATE_THRESHOLD)),
            repeats=int(doc.get("bench", {}).get("repeats", 10)),
            power_mw=float(doc.get("bench", {}).get("power_mw", bench.DEFAULT_ACTIVE_POWER_MW)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    if cfg.n < 10:
        raise ConfigError(f"data.n must be at least 10, got {cfg.n}")
    if not 0.0 <= cfg.abnormal_fraction <= 1.0:
        raise ConfigError(f"data.abnormal_fraction must lie in [0, 1], got {cfg.abnormal_fraction}")
    if cfg.seed < 0:
        raise ConfigError("data.seed must be unsigned")
    if len(cfg.hr_range) != 2 or not 40.0 <= cfg.hr_range[0] <= cfg.hr_range[1] <= 180.0:
        raise ConfigError(f"data.hr_range must be [lo, hi] within [40, 180], got {list(cfg.hr_range)}")
    if cfg.regressor_variant not in ("cnn", "fcn"):
        raise ConfigError(f"train.regressor_variant must be cnn or fcn, got {cfg.regressor_variant!r}")
    if not 0.0 <= cfg.gate_threshold <= 1.0:
        raise ConfigError(f"pipeline.gate_threshold must lie in [0, 1], got {cfg.gate_threshold}")
    if cfg.repeats < 10:
        raise ConfigError(f"bench.repeats must be at least 10, got {cfg.repeats}")
    if not cfg.power_mw > 0:
        raise ConfigError("bench.power_mw must be positive")
    return cfg


def load_config(path) -> Config:
    if path is None:
        return Config()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(doc)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- commands --------------------------------------------------------------

def cmd_gen(cfg: Config, out_path) -> dict:
    """Write the synthetic dataset CSV and its manifest."""
    ds = data.make_dataset(cfg.n, cfg.abnormal_fraction, cfg.seed, cfg.hr_range)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save_csv(ds, out)
    manifest = data.save_manifest(ds, out)
    return {"csv": str(out), "manifest": str(manifest), "n": len(ds),
            "split_sizes": list(data.split_sizes(len(ds)))}


def _seeded(cfg: Config, seed: int) -> dict:
    return {k: replace(c, seed=seed) for k, c in cfg.train.items()}


def cmd_train(cfg: Config, dataset_path, out_dir, seeds: int = 1) -> dict:
    """Train a bundle; with ``seeds > 1`` also report the per-metric spread."""
    ds = data.load_csv(dataset_path)
    runs = []
    for k in range(seeds):
        seed = cfg.seed + k
        _log(f"seed {seed}")
        runs.append(models.train_bundle(ds, _seeded(cfg, seed), cfg.filters, None, cfg.regressor_variant, _log))
    extra = {"seed": cfg.seed, "regressor_variant": cfg.regressor_variant}
    if seeds > 1:
        extra["seeds"] = [cfg.seed + k for k in range(seeds)]
        extra["seed_metrics"] = [r.metrics for r in runs]
        extra["seed_std"] = _metric_std([r.metrics for r in runs])
    out = models.save_bundle(runs[0], out_dir, extra)
    summary = {"bundle": str(out), "metrics": runs[0].metrics, "model_bytes": runs[0].model_bytes()}
    if seeds > 1:
        summary["seed_std"] = extra["seed_std"]
    return summary


def _metric_std(all_metrics: list[dict]) -> dict:
    out = {}
    for model_name, first in all_metrics[0].items():
        out[model_name] = {
            k: float(np.std([m[model_name][k] for m in all_metrics]))
            for k, v in first.items()
            if isinstance(v, float) and k != "params"
        }
    return out


def cmd_eval(cfg: Config, bundle_dir, dataset_path, pipeline: str = "all", split: str = "test",
             batch_csv=None) -> dict:
    """Benchmark one or all pipelines; returns the JSON-ready result."""
    ds = data.load_csv(dataset_path)
    names = [p.value for p in Pipeline] if pipeline == "all" else [Pipeline(pipeline).value]
    needs_models = any(n != "sp" for n in names)
    bundle = models.load_bundle(bundle_dir) if (needs_models or bundle_dir) else None
    spec = cfg.filters if cfg.filters_given or bundle is None else bundle.spec
    frames = list(ds.frames) if split == "all" else ds.subset(data.Split[split.upper()])
    power = bench.PowerModel(cfg.power_mw)

    reports, entire = {}, {}
    for name in names:
        reports[name] = bench.bench_pipeline(name, frames, bundle, spec, cfg.repeats, cfg.gate_threshold)
        if split != "all":
            entire[name] = bench.evaluate(name, ds.frames, bundle, spec, cfg.gate_threshold, repeats=1)
    if batch_csv:
        rows = []
        for name in names:
            rows.extend((f, pipelines.run(name, f, bundle, spec, cfg.gate_threshold)) for f in frames)
        ids = [i for _ in names for i in range(len(frames))]
        pipelines.write_batch_csv(batch_csv, [r for _, r in rows], [f for f, _ in rows], ids)

    out = {
        "split": split,
        "gate_threshold": cfg.gate_threshold,
        "reports": {n: r.to_dict() for n, r in reports.items()},
        "entire": {n: {"mae_bpm": _nan(r.mae_bpm), "mae_all_bpm": _nan(r.mae_all_bpm),
                       "acceptance_rate": r.acceptance_rate} for n, r in entire.items()},
        "timing": {
            "power_mw_placeholder": cfg.power_mw,
            "energy_mj_estimate": {n: bench.energy_estimate(r, power) for n, r in reports.items()},
            "comparison_table": bench.comparison_table(reports, entire or None, power),
        },
    }
    return out


def _nan(v):
    return None if not np.isfinite(v) else v


def parse_frame_row(text: str) -> np.ndarray:
    """Samples from one CSV line: bare numbers, or a dataset row (label,hr_truth,rate_hz,s0,...)."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if lines and lines[0].startswith("label,"):
        header, lines = lines[0].split(","), lines[1:]
        if not lines:
            raise DataError("frame file has a header but no data row")
        return data.parse_row(lines[0].split(","), len(header) - 3, 2).samples
    if len(lines) != 1:
        raise DataError(f"expected exactly one frame row, got {len(lines)}")
    try:
        return np.array([float(v) for v in lines[0].split(",")])
    except ValueError as exc:
        raise DataError(f"frame row is not numeric: {exc}") from exc


def cmd_infer(cfg: Config, bundle_dir, row: str, pipeline: str) -> dict:
    """Run one frame.  ``sp`` takes 69 samples at 12 Hz; ``ml``/``hybrid`` take 35 at 6 Hz.

    ML/Hybrid input is min-max normalized first, as every stored frame is.
    """
    pipeline = Pipeline(pipeline)
    x = parse_frame_row(row)
    want = HIGH_LEN if pipeline is Pipeline.SP else LOW_LEN
    if x.shape != (want,):
        raise ShapeError(f"{pipeline.value} pipeline expects {want} samples, got {x.size}")
    if pipeline is Pipeline.SP:
        spec = cfg.filters
        if bundle_dir and not cfg.filters_given:
            spec = models.load_bundle(bundle_dir).spec
        return pipelines.run_sp(x, spec).to_dict()
    if not bundle_dir:
        raise ConfigError(f"the {pipeline.value} pipeline needs --bundle")
    bundle = models.load_bundle(bundle_dir)
    x = minmax(x)
    if pipeline is Pipeline.ML:
        return pipelines.run_ml(x, bundle, cfg.gate_threshold).to_dict()
    spec = cfg.filters if cfg.filters_given else bundle.spec
    return pipelines.run_hybrid(x, bundle, spec, cfg.gate_threshold).to_dict()


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tinyhr", description="Heart-rate pipelines: data, training, evaluation.")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="overrides data.seed (gen) or the training seed (train)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset CSV and manifest")
    g.add_argument("--out", required=True, help="output CSV path")

    t = sub.add_parser("train", help="train upsampler, classifier and regressor")
    t.add_argument("--data", required=True, help="dataset CSV from `gen`")
    t.add_argument("--out", required=True, help="bundle directory to write")
    t.add_argument("--seeds", type=int, default=1, help="train this many seeds and report the spread")

    e = sub.add_parser("eval", help="benchmark pipelines; JSON report on stdout")
    e.add_argument("--bundle", help="bundle directory (needed for ml/hybrid)")
    e.add_argument("--data", required=True, help="dataset CSV")
    e.add_argument("--pipeline", default="all", choices=["sp", "ml", "hybrid", "all"])
    e.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    e.add_argument("--table", help="also write the Markdown comparison table here")
    e.add_argument("--batch-csv", help="also write per-frame results here")

    i = sub.add_parser("infer", help="estimate heart rate for one frame")
    i.add_argument("--bundle", help="bundle directory (needed for ml/hybrid)")
    i.add_argument("--pipeline", required=True, choices=["sp", "ml", "hybrid"])
    src = i.add_mutually_exclusive_group(required=True)
    src.add_argument("--frame", help="comma-separated samples")
    src.add_argument("--frame-file", help="file holding one CSV row ('-' for stdin)")
    return p


def _dispatch(args) -> None:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be unsigned")
        cfg = replace(cfg, seed=args.seed)

    if args.command == "gen":
        _emit(cmd_gen(cfg, args.out))
    elif args.command == "train":
        if args.seeds < 1:
            raise ConfigError("--seeds must be at least 1")
        _emit(cmd_train(cfg, args.data, args.out, args.seeds))
    elif args.command == "eval":
        out = cmd_eval(cfg, args.bundle, args.data, args.pipeline, args.split, args.batch_csv)
        if args.table:
            Path(args.table).write_text(out["timing"]["comparison_table"], encoding="utf-8")
        _emit(out)
    else:
        if args.frame is not None:
            row = args.frame
        elif args.frame_file == "-":
            row = sys.stdin.read()
        else:
            row = Path(args.frame_file).read_text(encoding="utf-8")
        _emit(cmd_infer(cfg, args.bundle, row, args.pipeline))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        _dispatch(args)
    except TrainingDiverged as exc:
        _log(f"error: training failed: {exc}")
        return EXIT_TRAINING
    except (ModelFormatError, DataError, ShapeError, OSError) as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_DATA
    except (ConfigError, TinyHRError, ValueError) as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
