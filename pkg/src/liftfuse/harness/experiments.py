"""Experiment grids: fusion stages, loss design, seed robustness, gradient stopping.

Each grid trains one model per cell and seed on one shared dataset, so every
comparison is paired. A failing cell is recorded with ``status=error`` and the
grid moves on. Wall-clock times only go to the manifest, which keeps the CSVs
byte-identical across re-runs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import multiprocessing
import time
import traceback
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..consistency import ConsistencyConfig
from ..errors import ConfigError
from ..kernels import BACKEND
from .config import ExperimentConfig
from .train import load_data, train

FUSION_CONFIGS = {
    "none": (),
    "stage1": (1,),
    "stage2": (2,),
    "stage3": (3,),
    "stage4": (4,),
    "1&2": (1, 2),
    "1&3": (1, 3),
    "1&4": (1, 4),
    "all": (1, 2, 3, 4),
}
# consistency only means something once a stage deeper than 1 is fused
PC_UNDEFINED = ("none", "stage1")
LOSS_TYPES = ("cosine", "l1")
ALPHAS = (0.1, 0.01, 0.001)


@dataclass(frozen=True)
class Cell:
    labels: dict  # identifying CSV columns, e.g. {"config": "stage1", "regime": "pc"}
    config: ExperimentConfig
    seed: int


def code_version() -> str:
    return f"liftfuse {__version__} ({BACKEND} kernels)"


def fmt(value) -> str:
    """Shortest round-tripping text for floats; NaN as ``nan``."""
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def iou_columns(n_classes: int) -> list[str]:
    return [f"iou_class{k}" for k in range(n_classes + 1)]


def pc_config(base: ExperimentConfig) -> ConsistencyConfig:
    """The consistency settings a grid uses when a cell turns the regularizer on."""
    return base.consistency if base.consistency is not None else ConsistencyConfig()


# ---- running cells -------------------------------------------------------------

def run_cell(cell: Cell) -> dict:
    """Train and evaluate one cell; never raises."""
    row = dict(cell.labels, seed=cell.seed)
    started = time.time()
    try:
        _, report = train(cell.config, cell.seed)
    except Exception as exc:  # recorded per row, the grid carries on
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
        return {"row": row, "labels": cell.labels, "report": None, "started": started,
                "finished": time.time(), "traceback": traceback.format_exc(), "config": cell.config}
    row.update(status="ok", mean_iou=report.mean_iou, l3d_final=report.l3d_final,
               lcons_final=report.lcons_final, error="")
    row.update(zip(iou_columns(cell.config.dataset.n_classes), report.per_class_iou))
    return {"row": row, "labels": cell.labels, "report": report, "started": started,
            "finished": time.time(), "traceback": None, "config": cell.config}


def run_cells(cells: list[Cell], parallel: int = 1) -> list[dict]:
    """Results in cell order; with ``parallel > 1`` cells are spread over worker processes."""
    if parallel <= 1 or len(cells) <= 1:
        return [run_cell(c) for c in cells]
    for cfg in {(c.config.dataset, c.config.data_dir): c.config for c in cells}.values():
        load_data(cfg)  # forked workers inherit the cache
    ctx = multiprocessing.get_context("fork" if "fork" in multiprocessing.get_all_start_methods() else "spawn")
    with ctx.Pool(min(parallel, len(cells))) as pool:
        return pool.map(run_cell, cells, chunksize=1)


def _check_base(base: ExperimentConfig) -> None:
    if base.modality != "fusion":
        raise ConfigError("experiment grids need a fusion-modality base config")


# ---- grids ---------------------------------------------------------------------

def fusion_grid_cells(base: ExperimentConfig) -> list[Cell]:
    _check_base(base)
    n = base.backbone.n_stages
    cells = []
    for name, stages in FUSION_CONFIGS.items():
        if any(t > n for t in stages):
            raise ConfigError(f"fusion config {name} needs {max(stages)} stages")
        for regime in ("baseline", "pc"):
            if regime == "pc" and name in PC_UNDEFINED:
                continue
            cfg = base.with_(fusion_stages=stages, consistency=pc_config(base) if regime == "pc" else None)
            cells.extend(Cell({"config": name, "regime": regime}, cfg, s) for s in base.seeds)
    return cells


def fusion_columns(n_classes: int) -> list[str]:
    return (["config", "regime", "seed", "status", "mean_iou"] + iou_columns(n_classes)
            + ["l3d_final", "lcons_final", "error"])


def fusion_table(rows: list[dict]) -> tuple[list[dict], list[str]]:
    """Seed-averaged mean IoU per configuration and regime; undefined cells stay blank."""
    out = []
    for name in FUSION_CONFIGS:
        entry = {"config": name}
        for regime in ("baseline", "pc"):
            vals = [float(r["mean_iou"]) for r in rows
                    if r["config"] == name and r["regime"] == regime and r["status"] == "ok"]
            entry[regime] = float(np.mean(vals)) if vals else None
        out.append(entry)
    return out, ["config", "baseline", "pc"]


def loss_grid_cells(base: ExperimentConfig) -> list[Cell]:
    _check_base(base)
    if not any(t > 1 for t in base.fusion_stages):
        raise ConfigError("the loss grid needs a base config that fuses a stage deeper than 1")
    cons = pc_config(base)
    cells = []
    for loss_type in LOSS_TYPES:
        for alpha in ALPHAS:
            cfg = base.with_(consistency=replace(cons, loss_type=loss_type, alpha=alpha))
            cells.extend(Cell({"loss_type": loss_type, "alpha": alpha}, cfg, s) for s in base.seeds)
    return cells


def loss_columns(n_classes: int) -> list[str]:
    return (["loss_type", "alpha", "seed", "status", "mean_iou"] + iou_columns(n_classes)
            + ["l3d_final", "lcons_final", "error"])


def sweep_cells(cfg: ExperimentConfig, seeds) -> list[Cell]:
    return [Cell({"config": cfg.name}, cfg, s) for s in seeds]


def sweep_columns(n_classes: int) -> list[str]:
    return ["config", "seed", "status", "mean_iou"] + iou_columns(n_classes) + ["l3d_final", "lcons_final", "error"]


def summarize(values) -> dict:
    """Mean, population std, min and max; NaN entries are dropped."""
    vals = np.array([float(v) for v in values], dtype=np.float64)
    vals = vals[~np.isnan(vals)]
    if len(vals) == 0:
        return {"n": 0, "mean": None, "std": None, "min": None, "max": None}
    return {"n": int(len(vals)), "mean": float(vals.mean()), "std": float(vals.std(ddof=0)),
            "min": float(vals.min()), "max": float(vals.max())}


def gradstop_cells(cfg: ExperimentConfig) -> list[Cell]:
    _check_base(cfg)
    if not cfg.uses_consistency:
        raise ConfigError("the gradient-stop ablation needs a config with consistency enabled")
    cells = []
    for stop in (True, False):
        c = cfg.with_(consistency=replace(cfg.consistency, stop_3d_gradients=stop), log_cons_grad=True)
        cells.extend(Cell({"stop_3d": stop}, c, s) for s in cfg.seeds)
    return cells


def gradstop_columns(n_stages: int) -> list[str]:
    return (["stop_3d", "seed", "epoch", "status", "l3d", "lcons", "total"]
            + [f"act_stage{t}" for t in range(1, n_stages + 1)]
            + ["cons_grad_3d_max", "mean_iou", "error"])


def gradstop_rows(results: list[dict]) -> list[dict]:
    """One row per epoch of every run: the activation trajectories expose collapse."""
    rows = []
    for res in results:
        head = {"stop_3d": res["row"]["stop_3d"], "seed": res["row"]["seed"], "status": res["row"]["status"]}
        report = res["report"]
        if report is None:
            rows.append(dict(head, epoch="", error=res["row"]["error"]))
            continue
        for e in report.epochs:
            row = dict(head, epoch=e.epoch, l3d=e.l3d, lcons=e.lcons, total=e.total,
                       cons_grad_3d_max=e.cons_grad_3d, mean_iou=report.mean_iou, error="")
            row.update({f"act_stage{t}": v for t, v in e.activation.items()})
            rows.append(row)
    return rows


# ---- manifests -----------------------------------------------------------------

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_outputs(out_dir, command: str, base: ExperimentConfig, results: list[dict], files: dict,
                  extra: dict | None = None) -> dict:
    """Write ``files`` (name -> text) plus ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    data = load_data(base)
    runs = []
    for res in results:
        cfg = res["config"]
        run = {"labels": res["labels"], "seed": res["row"]["seed"], "status": res["row"]["status"],
               "config_sha256": cfg.digest(), "config": cfg.to_dict(),
               "started": _stamp(res["started"]), "finished": _stamp(res["finished"]),
               "wall_clock_s": res["finished"] - res["started"]}
        if res["report"] is not None:
            run["metrics"] = res["report"].to_dict()
        if res["traceback"]:
            run["traceback"] = res["traceback"]
        runs.append(run)
    manifest = {
        "manifest_version": 1,
        "command": command,
        "code_version": code_version(),
        "config": base.to_dict(),
        "config_sha256": base.digest(),
        "dataset_sha256": data.digest,
        "seeds": list(base.seeds),
        "created": _stamp(time.time()),
        "outputs": {name: sha256_file(out / name) for name in sorted(files)},
        "runs": runs,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(jsonable(manifest), indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


def _stamp(t: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---- public entry points -------------------------------------------------------

def run_fusion_grid(base: ExperimentConfig, out_dir=None, parallel: int = 1) -> list[dict]:
    results = run_cells(fusion_grid_cells(base), parallel)
    rows = [r["row"] for r in results]
    if out_dir is not None:
        table, cols = fusion_table(rows)
        write_outputs(out_dir, "grid-fusion", base, results, {
            "metrics.csv": to_csv(rows, fusion_columns(base.dataset.n_classes)),
            "fusion_table.csv": to_csv(table, cols),
        })
    return rows


def run_loss_ablation(base: ExperimentConfig, out_dir=None, parallel: int = 1) -> list[dict]:
    results = run_cells(loss_grid_cells(base), parallel)
    rows = [r["row"] for r in results]
    if out_dir is not None:
        write_outputs(out_dir, "grid-loss", base, results,
                      {"metrics.csv": to_csv(rows, loss_columns(base.dataset.n_classes))})
    return rows


def run_seed_sweep(cfg: ExperimentConfig, n_seeds: int | None = 10, out_dir=None,
                   parallel: int = 1) -> tuple[list[dict], dict]:
    """``n_seeds`` consecutive seeds from ``cfg.seeds[0]``; ``None`` uses ``cfg.seeds`` as given."""
    seeds = cfg.seeds if n_seeds is None else tuple(range(cfg.seeds[0], cfg.seeds[0] + n_seeds))
    if not seeds:
        raise ConfigError("a seed sweep needs at least one seed")
    cfg = cfg.with_(seeds=seeds)
    results = run_cells(sweep_cells(cfg, seeds), parallel)
    rows = [r["row"] for r in results]
    summary = summarize(r["mean_iou"] for r in rows if r["status"] == "ok")
    if out_dir is not None:
        write_outputs(out_dir, "sweep-seeds", cfg, results, {
            "metrics.csv": to_csv(rows, sweep_columns(cfg.dataset.n_classes)),
            "summary.csv": to_csv([summary], ["n", "mean", "std", "min", "max"]),
        })
    return rows, summary


def run_gradstop_ablation(cfg: ExperimentConfig, out_dir=None, parallel: int = 1) -> list[dict]:
    results = run_cells(gradstop_cells(cfg), parallel)
    rows = gradstop_rows(results)
    if out_dir is not None:
        write_outputs(out_dir, "ablate-gradstop", cfg, results,
                      {"metrics.csv": to_csv(rows, gradstop_columns(cfg.backbone.n_stages))})
    return rows
