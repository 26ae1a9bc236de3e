"""``liftfuse`` command line.

Exit codes: 0 success, 2 configuration or usage error, 3 numeric failure.
``--config`` takes a YAML config file or a ``manifest.json`` written by an
earlier run, which replays that run's configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from ..checkpoint import save_checkpoint
from ..dataset_io import write_dataset
from ..errors import ConfigError, LiftFuseError, NumericError, UsageError
from .config import ExperimentConfig, config_from_dict, loads_config
from .experiments import (
    code_version,
    iou_columns,
    jsonable,
    read_csv,
    run_fusion_grid,
    run_gradstop_ablation,
    run_loss_ablation,
    run_seed_sweep,
    sha256_file,
    to_csv,
)
from .plot import emit_plotdata
from .train import evaluate, load_data, train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def read_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p} is not valid JSON: {exc}") from exc
        if isinstance(data, dict) and "manifest_version" in data:
            data = data["config"]
        return config_from_dict(data)
    return loads_config(text)


def u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _with_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    return cfg if seed is None else cfg.with_(seeds=(seed,))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _record(command: str, cfg: ExperimentConfig | None, **extra) -> dict:
    rec = {"manifest_version": 1, "command": command, "code_version": code_version(),
           "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    if cfg is not None:
        rec.update(config=cfg.to_dict(), config_sha256=cfg.digest())
    rec.update(extra)
    return rec


# ---- subcommands ---------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = read_config(args.config)
    digest = write_dataset(args.out, cfg.dataset)
    out = Path(args.out)
    _write_json(out / "manifest.json", _record("gen-data", cfg, dataset_sha256=digest,
                                               outputs={"index.ini": sha256_file(out / "index.ini")}))
    print(f"dataset written to {args.out} (sha256 {digest})")
    return EXIT_OK


def epoch_columns(n_stages: int) -> list[str]:
    return ["epoch", "l3d", "lcons", "total", "lr"] + [f"act_stage{t}" for t in range(1, n_stages + 1)]


def cmd_train(args) -> int:
    cfg = _with_seed(read_config(args.config), args.seed)
    seed = cfg.seeds[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_data(cfg)
    record = _record("train", cfg, dataset_sha256=data.digest, seeds=[seed])
    try:
        state, report = train(cfg, seed, data)
    except NumericError as exc:
        record.update(status="diverged", error=str(exc), outputs={})
        _write_json(out / "manifest.json", record)
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(out / "checkpoint.pfc", state)
    rows = []
    for e in report.epochs:
        row = {"epoch": e.epoch, "l3d": e.l3d, "lcons": e.lcons, "total": e.total, "lr": e.lr}
        row.update({f"act_stage{t}": v for t, v in e.activation.items()})
        rows.append(row)
    iou_row = dict(zip(iou_columns(cfg.dataset.n_classes), report.per_class_iou), seed=seed,
                   mean_iou=report.mean_iou)
    files = {"metrics.csv": to_csv(rows, epoch_columns(cfg.backbone.n_stages)),
             "iou.csv": to_csv([iou_row], ["seed", "mean_iou"] + iou_columns(cfg.dataset.n_classes))}
    for name, text in files.items():
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    record.update(status="ok", wall_clock_s=report.wall_clock, metrics=report.to_dict(),
                  outputs={n: sha256_file(out / n) for n in sorted(list(files) + ["checkpoint.pfc"])})
    _write_json(out / "manifest.json", record)
    print(f"seed {seed}: mean IoU {report.mean_iou:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = read_config(args.config)
    if args.checkpoint is None:
        raise UsageError("eval needs --checkpoint")
    report = evaluate(cfg, args.checkpoint)
    row = dict(zip(iou_columns(cfg.dataset.n_classes), report.per_class_iou), mean_iou=report.mean_iou)
    text = to_csv([row], ["mean_iou"] + iou_columns(cfg.dataset.n_classes))
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        _write_json(out / "manifest.json", _record(
            "eval", cfg, checkpoint=str(args.checkpoint), checkpoint_sha256=sha256_file(args.checkpoint),
            dataset_sha256=load_data(cfg).digest, outputs={"metrics.csv": sha256_file(out / "metrics.csv")}))
    print(f"mean IoU {report.mean_iou:.4f}")
    return EXIT_OK


def cmd_grid_fusion(args) -> int:
    rows = run_fusion_grid(_with_seed(read_config(args.config), args.seed), args.out, args.parallel)
    print(f"{len(rows)} rows written to {Path(args.out) / 'metrics.csv'}")
    return EXIT_OK


def cmd_grid_loss(args) -> int:
    rows = run_loss_ablation(_with_seed(read_config(args.config), args.seed), args.out, args.parallel)
    print(f"{len(rows)} rows written to {Path(args.out) / 'metrics.csv'}")
    return EXIT_OK


def cmd_sweep_seeds(args) -> int:
    cfg = read_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_(seeds=(args.seed,))
    n = args.n_seeds if args.n_seeds is not None else (None if args.config_seeds else 10)
    _, summary = run_seed_sweep(cfg, n, args.out, args.parallel)
    print("mean IoU over {n} seeds: {mean:.4f} +- {std:.4f} (min {min:.4f}, max {max:.4f})".format(**summary)
          if summary["n"] else "no successful runs")
    return EXIT_OK


def cmd_ablate_gradstop(args) -> int:
    rows = run_gradstop_ablation(_with_seed(read_config(args.config), args.seed), args.out, args.parallel)
    print(f"{len(rows)} rows written to {Path(args.out) / 'metrics.csv'}")
    return EXIT_OK


def cmd_plot(args) -> int:
    path = Path(args.input)
    if not path.is_file():
        raise UsageError(f"no such CSV: {path}")
    svg, csv_path = emit_plotdata(read_csv(path), args.out)
    _write_json(Path(args.out) / "manifest.json", _record(
        "plot", None, input=str(path), input_sha256=sha256_file(path),
        outputs={p.name: sha256_file(p) for p in (svg, csv_path)}))
    print(f"wrote {svg} and {csv_path}")
    return EXIT_OK


# ---- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liftfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, out_required=True, parallel=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML config file or manifest.json of an earlier run")
        p.add_argument("--seed", type=u64, help="run this seed only (sweeps: first seed)")
        p.add_argument("--out", required=out_required, help="output directory")
        if parallel:
            p.add_argument("--parallel", type=positive, default=1, help="worker processes, one cell each")
        p.set_defaults(func=func)
        return p

    add("gen-data", cmd_gen_data, "generate and store the synthetic dataset")
    add("train", cmd_train, "train one model and evaluate it on the val split")
    p = add("eval", cmd_eval, "evaluate a checkpoint on the val split", out_required=False)
    p.add_argument("--checkpoint", help="checkpoint file written by train")
    add("grid-fusion", cmd_grid_fusion, "fusion-stage grid with and without consistency", parallel=True)
    add("grid-loss", cmd_grid_loss, "loss type x alpha grid", parallel=True)
    p = add("sweep-seeds", cmd_sweep_seeds, "repeat one config over many seeds", parallel=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--n-seeds", type=positive, help="number of consecutive seeds (default 10)")
    group.add_argument("--config-seeds", action="store_true", help="use the seed list from the config")
    add("ablate-gradstop", cmd_ablate_gradstop, "paired runs with and without the 3-D gradient stop",
        parallel=True)
    p = sub.add_parser("plot", help="bar chart of a grid-fusion metrics.csv")
    p.add_argument("--input", required=True, help="metrics.csv from grid-fusion")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, UsageError, LiftFuseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
