"""Training loop, head, metrics, config files, grids, plots and the CLI on a tiny setup."""

import json
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from liftfuse.autodiff import SparseVoxelTensor, Tensor, VoxelLayout, backward
from liftfuse.autodiff import functional as F
from liftfuse.autodiff.gradcheck import finite_diff_gradient, relative_error
from liftfuse.backbones import BackboneSpec
from liftfuse.checkpoint import save_checkpoint
from liftfuse.consistency import ConsistencyConfig
from liftfuse.errors import ConfigError, NumericError, UsageError
from liftfuse.harness import cli, experiments
from liftfuse.harness.config import (
    ExperimentConfig,
    OptimizerConfig,
    config_from_dict,
    dumps_config,
    load_config,
    loads_config,
    save_config,
)
from liftfuse.harness.experiments import (
    ALPHAS,
    FUSION_CONFIGS,
    Cell,
    fusion_grid_cells,
    fusion_table,
    loss_grid_cells,
    read_csv,
    run_cells,
    run_fusion_grid,
    run_loss_ablation,
    run_seed_sweep,
    summarize,
    to_csv,
)
from liftfuse.harness.metrics import confusion_matrix, iou_from_confusion, mean_foreground_iou
from liftfuse.harness.model import FusionNet, coarse_parent, detection_head, make_batch
from liftfuse.harness.plot import PLOT_HEIGHT, bar_data, emit_plotdata, render_svg
from liftfuse.harness.train import evaluate, evaluate_state, load_data, train
from liftfuse.scene import DatasetSpec

TINY = ExperimentConfig(
    name="tiny",
    dataset=DatasetSpec(n_train=4, n_val=2, n_points=600, grid_dims=(16, 16, 16), voxel_size=0.5,
                        image_size=(32, 32), focal=20.0),
    backbone=BackboneSpec(channels_2d=(4, 4, 4, 4), channels_3d=(4, 4, 4, 4)),
    optimizer=OptimizerConfig(epochs=2, batch_size=2),
    seeds=(0,),
)
TINY_PC = TINY.with_(fusion_stages=(1, 4), consistency=ConsistencyConfig())


def same_state(a, b):
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


# ---- head ----------------------------------------------------------------------

def small_volume(rng, n=6, channels=5):
    coords = np.unique(rng.integers(0, 4, size=(n, 3)), axis=0)
    layout = VoxelLayout(coords, (4, 4, 4))
    return SparseVoxelTensor(layout, Tensor(rng.normal(size=(len(layout), channels))))


def test_head_zero_input_and_weights_give_uniform_logits(rng):
    y = small_volume(rng)
    y = y.with_features(Tensor(np.zeros(y.features.shape)))
    logits = detection_head(y, Tensor(np.zeros((4, 5))), Tensor(np.zeros(4)))
    assert logits.shape == (len(y), 4)
    assert np.all(logits.data == 0.0)


def test_head_logit_shape_follows_occupancy(rng):
    y = small_volume(rng, n=9)
    assert detection_head(y, Tensor(rng.normal(size=(3, 5))), Tensor(np.zeros(3))).shape == (len(y), 3)


def test_head_rejects_channel_mismatch(rng):
    with pytest.raises(ConfigError):
        detection_head(small_volume(rng), Tensor(np.zeros((4, 7))), Tensor(np.zeros(4)))


@pytest.mark.parametrize("trial", range(5))
def test_head_gradients_match_finite_differences(trial):
    rng = np.random.default_rng(100 + trial)
    y = small_volume(rng)
    labels = rng.integers(0, 4, size=len(y))
    W0, b0, X0 = rng.normal(size=(4, 5)), rng.normal(size=4), y.features.data

    def loss(W, b, X):
        return F.cross_entropy(detection_head(y.with_features(X), W, b), labels)

    W, b, X = Tensor.parameter(W0, "w"), Tensor.parameter(b0, "b"), Tensor.parameter(X0, "x")
    g = backward(loss(W, b, X), [W, b, X])
    for name, x0, wrap in (("w", W0, lambda v: loss(Tensor(v), Tensor(b0), Tensor(X0))),
                           ("b", b0, lambda v: loss(Tensor(W0), Tensor(v), Tensor(X0))),
                           ("x", X0, lambda v: loss(Tensor(W0), Tensor(b0), Tensor(v)))):
        fd = finite_diff_gradient(lambda v: wrap(v).item(), x0)
        assert relative_error(g[name], fd) <= 1e-5


def test_coarse_parent_matches_floor_division(rng):
    coords = np.unique(rng.integers(0, 16, size=(60, 3)), axis=0)
    layouts = [VoxelLayout(coords, (16, 16, 16))]
    for _ in range(4):
        layouts.append(layouts[-1].pooled(2)[0])
    parent = coarse_parent(layouts)
    expected = layouts[0].coords // 16
    assert np.array_equal(layouts[-1].coords[parent], expected)


# ---- metrics -------------------------------------------------------------------

def test_perfect_predictions_give_unit_iou(rng):
    target = rng.integers(0, 4, size=200)
    iou = iou_from_confusion(confusion_matrix(target, target, 4))
    assert np.all(iou == 1.0)
    assert mean_foreground_iou(iou) == 1.0


def test_constant_background_prediction_gives_zero_foreground_iou(rng):
    target = rng.integers(0, 4, size=200)
    iou = iou_from_confusion(confusion_matrix(np.zeros_like(target), target, 4))
    assert np.all(iou[1:] == 0.0)
    assert mean_foreground_iou(iou) == 0.0


def test_iou_matches_brute_force_confusion_oracle(rng):
    k = 4
    target, pred = rng.integers(0, k, size=300), rng.integers(0, k, size=300)
    cm = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(target, pred):
        cm[t, p] += 1
    assert np.array_equal(confusion_matrix(pred, target, k), cm)
    iou = iou_from_confusion(cm)
    for c in range(k):
        tp = sum(1 for t, p in zip(target, pred) if t == c and p == c)
        union = sum(1 for t, p in zip(target, pred) if t == c or p == c)
        assert iou[c] == tp / union


def test_absent_class_is_nan_and_skipped_in_mean():
    target = np.array([0, 1, 1, 2])
    iou = iou_from_confusion(confusion_matrix(target, target, 4))
    assert np.isnan(iou[3])
    assert mean_foreground_iou(iou) == 1.0
    assert np.isnan(mean_foreground_iou(np.array([1.0, np.nan])))


def test_confusion_rejects_out_of_range_labels():
    with pytest.raises(ConfigError):
        confusion_matrix([0, 5], [0, 1], 4)


# ---- config files --------------------------------------------------------------

def test_config_yaml_round_trip_is_identity(tmp_path):
    for cfg in (ExperimentConfig(), TINY_PC, TINY.with_(modality="lidar", fusion_stages=())):
        assert loads_config(dumps_config(cfg)) == cfg
        save_config(tmp_path / "c.yaml", cfg)
        assert load_config(tmp_path / "c.yaml") == cfg
        assert load_config(tmp_path / "c.yaml").digest() == cfg.digest()


def test_config_requires_schema_version():
    with pytest.raises(ConfigError):
        config_from_dict({"name": "x"})
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 99})


def test_config_rejects_unknown_and_invalid_values():
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1, "fusoin_stages": [1]})
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1, "fusion_stages": [5]})
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1, "optimizer": {"epochs": 0}})
    with pytest.raises(ConfigError):
        loads_config("schema_version: [1,\n")


def test_partial_config_falls_back_to_defaults():
    cfg = loads_config("schema_version: 1\nfusion_stages: [1, 4]\nconsistency: {alpha: 0.1}\n")
    assert cfg.fusion_stages == (1, 4)
    assert cfg.consistency.alpha == 0.1 and cfg.consistency.loss_type == "cosine"
    assert cfg.optimizer == OptimizerConfig()


def test_cosine_schedule_endpoints():
    opt = OptimizerConfig(lr=1e-3, lr_min=1e-5)
    assert opt.lr_at(0, 100) == 1e-3
    assert abs(opt.lr_at(99, 100) - 1e-5) < 1e-18
    assert opt.lr_at(30, 100) > opt.lr_at(60, 100)


# ---- training ------------------------------------------------------------------

def test_training_logs_finite_losses_for_every_epoch():
    _, report = train(TINY_PC, 0)
    assert len(report.epochs) == TINY_PC.optimizer.epochs
    for e in report.epochs:
        assert np.isfinite([e.l3d, e.lcons, e.total]).all()
        assert abs(e.total - (e.l3d + 0.01 * e.lcons)) < 1e-12
        assert sorted(e.activation) == [1, 2, 3, 4]
    assert all(0.0 <= v <= 1.0 for v in report.per_class_iou if not np.isnan(v))


def test_training_is_bit_deterministic_per_seed():
    s1, r1 = train(TINY_PC, 3)
    s2, r2 = train(TINY_PC, 3)
    assert same_state(s1, s2)
    assert [e.l3d for e in r1.epochs] == [e.l3d for e in r2.epochs]
    assert np.array_equal(r1.per_class_iou, r2.per_class_iou, equal_nan=True)
    s3, _ = train(TINY_PC, 4)
    assert not same_state(s1, s3)


def test_empty_fusion_without_consistency_reduces_to_lidar_only():
    lidar = TINY.with_(modality="lidar", fusion_stages=())
    s_lidar, r_lidar = train(lidar, 0)
    for cfg in (TINY.with_(fusion_stages=()),
                TINY.with_(fusion_stages=(), consistency=ConsistencyConfig(alpha=0.0))):
        s, r = train(cfg, 0)
        assert same_state({k: v for k, v in s.items() if k in s_lidar}, s_lidar)
        assert [e.l3d for e in r.epochs] == [e.l3d for e in r_lidar.epochs]
        assert np.array_equal(r.per_class_iou, r_lidar.per_class_iou, equal_nan=True)


def test_training_reduces_l3d_on_a_longer_run():
    cfg = TINY.with_(optimizer=OptimizerConfig(epochs=8, batch_size=2, lr=5e-3))
    _, report = train(cfg, 0)
    assert report.epochs[-1].l3d < report.epochs[0].l3d


def test_non_finite_loss_aborts(monkeypatch):
    def bad_ce(logits, labels):
        return F.mul(F.sum(logits), Tensor(np.nan))

    monkeypatch.setattr(F, "cross_entropy", bad_ce)
    with pytest.raises(NumericError, match="non-finite"):
        train(TINY, 0)


def test_stop_gradient_gives_zero_consistency_gradient_on_3d_parameters():
    cfg = TINY_PC.with_(log_cons_grad=True, optimizer=OptimizerConfig(epochs=1, batch_size=2))
    _, stopped = train(cfg, 0)
    assert all(e.cons_grad_3d == 0.0 for e in stopped.epochs)
    free = cfg.with_(consistency=replace(cfg.consistency, stop_3d_gradients=False))
    _, r = train(free, 0)
    assert all(e.cons_grad_3d > 0.0 for e in r.epochs)


def test_evaluate_checkpoint_matches_training_report(tmp_path):
    state, report = train(TINY.with_(fusion_stages=(1,)), 0)
    cfg = TINY.with_(fusion_stages=(1,))
    save_checkpoint(tmp_path / "m.pfc", state)
    again = evaluate(cfg, tmp_path / "m.pfc")
    assert np.array_equal(again.per_class_iou, report.per_class_iou, equal_nan=True)
    assert np.array_equal(evaluate_state(cfg, state), report.per_class_iou, equal_nan=True)


def test_evaluate_missing_checkpoint_is_usage_error(tmp_path):
    with pytest.raises(UsageError):
        evaluate(TINY, tmp_path / "nope.pfc")


def test_batch_assembly_keeps_per_sample_labels():
    data = load_data(TINY)
    batch = make_batch(data.train[:2], TINY.dataset.grid_dims)
    assert batch.size == 2
    assert len(batch.labels) == len(batch.voxels) == len(data.train[0].labels) + len(data.train[1].labels)
    net = FusionNet(TINY_PC, data.camera, data.grid, 0)
    res = net.forward(batch)
    assert res.voxel_logits().shape == (len(batch.labels), TINY.dataset.n_classes + 1)
    assert [t.t for t in res.terms] == [1, 2, 3]


# ---- grids ---------------------------------------------------------------------

def test_fusion_grid_cells_mirror_blank_cells():
    base = TINY.with_(seeds=(0, 1, 2))
    cells = fusion_grid_cells(base)
    assert len(cells) == (len(FUSION_CONFIGS) * 2 - 2) * 3
    pc = {c.labels["config"] for c in cells if c.labels["regime"] == "pc"}
    assert pc == set(FUSION_CONFIGS) - {"none", "stage1"}
    assert all(c.config.consistency is None for c in cells if c.labels["regime"] == "baseline")
    assert all(c.config.uses_consistency for c in cells if c.labels["regime"] == "pc")


def test_loss_grid_cells_cover_loss_types_and_alphas():
    base = TINY.with_(fusion_stages=(1, 4), seeds=(0, 1))
    cells = loss_grid_cells(base)
    assert len(cells) == 6 * 2
    assert {c.config.consistency.alpha for c in cells} == {0.1, 0.01, 0.001} == set(ALPHAS)
    assert {c.config.consistency.loss_type for c in cells} == {"cosine", "l1"}
    for key in {(c.labels["loss_type"], c.labels["alpha"]) for c in cells}:
        assert [c.seed for c in cells if (c.labels["loss_type"], c.labels["alpha"]) == key] == [0, 1]
    with pytest.raises(ConfigError):
        loss_grid_cells(TINY.with_(fusion_stages=(1,)))


def test_fusion_grid_run_writes_rows_table_and_manifest(tmp_path):
    base = TINY.with_(optimizer=OptimizerConfig(epochs=1, batch_size=2))
    rows = run_fusion_grid(base, tmp_path)
    assert len(rows) == 16
    assert all(r["status"] == "ok" for r in rows)
    got = read_csv(tmp_path / "metrics.csv")
    assert list(got[0]) == ["config", "regime", "seed", "status", "mean_iou", "iou_class0", "iou_class1",
                            "iou_class2", "iou_class3", "l3d_final", "lcons_final", "error"]
    table = {r["config"]: r for r in read_csv(tmp_path / "fusion_table.csv")}
    assert table["none"]["pc"] == "" and table["stage1"]["pc"] == ""
    assert table["1&4"]["pc"] != ""
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "grid-fusion"
    assert len(manifest["runs"]) == 16
    assert set(manifest["outputs"]) == {"metrics.csv", "fusion_table.csv"}


def test_fusion_table_averages_over_seeds():
    rows = [{"config": "stage2", "regime": "pc", "status": "ok", "mean_iou": v} for v in (0.2, 0.4)]
    table, _ = fusion_table(rows)
    entry = next(e for e in table if e["config"] == "stage2")
    assert abs(entry["pc"] - 0.3) < 1e-15 and entry["baseline"] is None


def test_failing_cell_is_recorded_and_grid_continues(monkeypatch):
    real = experiments.train

    def flaky(cfg, seed, *a, **kw):
        if seed == 1:
            raise NumericError("boom")
        return real(cfg, seed, *a, **kw)

    monkeypatch.setattr(experiments, "train", flaky)
    cfg = TINY.with_(optimizer=OptimizerConfig(epochs=1, batch_size=2))
    results = run_cells([Cell({"config": "x"}, cfg, s) for s in (0, 1, 2)])
    assert [r["row"]["status"] for r in results] == ["ok", "error", "ok"]
    assert "boom" in results[1]["row"]["error"]


def test_parallel_cells_match_serial():
    cfg = TINY.with_(optimizer=OptimizerConfig(epochs=1, batch_size=2))
    cells = [Cell({"config": "x"}, cfg, s) for s in (0, 1)]
    cols = experiments.sweep_columns(TINY.dataset.n_classes)
    serial = to_csv([r["row"] for r in run_cells(cells, 1)], cols)
    parallel = to_csv([r["row"] for r in run_cells(cells, 2)], cols)
    assert serial == parallel


def test_loss_grid_rerun_is_byte_identical(tmp_path):
    base = TINY.with_(fusion_stages=(1, 4), optimizer=OptimizerConfig(epochs=1, batch_size=2))
    run_loss_ablation(base, tmp_path / "a")
    run_loss_ablation(base, tmp_path / "b")
    a, b = (tmp_path / "a" / "metrics.csv").read_bytes(), (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a == b
    assert len(read_csv(tmp_path / "a" / "metrics.csv")) == 6


def test_seed_sweep_summary():
    cfg = TINY.with_(fusion_stages=(1,), optimizer=OptimizerConfig(epochs=1, batch_size=2))
    rows, summary = run_seed_sweep(cfg, 1)
    assert summary["n"] == 1 and summary["std"] == 0.0
    rows, summary = run_seed_sweep(cfg, 3)
    vals = [r["mean_iou"] for r in rows]
    assert summary["mean"] == pytest.approx(sum(vals) / 3, abs=1e-15)
    assert summary["min"] == min(vals) and summary["max"] == max(vals)
    assert run_seed_sweep(cfg, 3)[1] == summary


def test_summarize_uses_population_std():
    s = summarize([1.0, 2.0, 3.0, 4.0])
    assert s["std"] == np.std([1.0, 2.0, 3.0, 4.0])
    assert summarize([])["n"] == 0


def test_csv_quoting_follows_rfc4180():
    text = to_csv([{"a": 'x,"y"', "b": 0.1}], ["a", "b"])
    assert text == 'a,b\r\n"x,""y""",0.1\r\n'


# ---- plots ---------------------------------------------------------------------

PLOT_ROWS = [
    {"config": "none", "regime": "baseline", "status": "ok", "mean_iou": "0.25"},
    {"config": "none", "regime": "baseline", "status": "ok", "mean_iou": "0.35"},
    {"config": "1&4", "regime": "pc", "status": "ok", "mean_iou": "0.5"},
    {"config": "stage1", "regime": "baseline", "status": "ok", "mean_iou": "0.4"},
    {"config": "stage2", "regime": "baseline", "status": "error", "mean_iou": ""},
]


def test_plot_bars_agree_with_csv(tmp_path):
    svg_path, csv_path = emit_plotdata(PLOT_ROWS, tmp_path)
    values = {r["label"]: float(r["mean_iou"]) for r in read_csv(csv_path)}
    assert list(values) == ["none", "stage1", "1&4+PC"]
    root = ET.parse(svg_path).getroot()
    rects = [e for e in root.iter() if e.tag.endswith("rect")]
    assert len(rects) == 3
    for rect in rects:
        assert float(rect.get("height")) / PLOT_HEIGHT == pytest.approx(values[rect.get("data-label")], abs=1e-15)
        assert float(rect.get("data-value")) == values[rect.get("data-label")]


def test_plot_is_byte_deterministic(tmp_path):
    a = emit_plotdata(PLOT_ROWS, tmp_path / "a")
    b = emit_plotdata(PLOT_ROWS, tmp_path / "b")
    assert a[0].read_bytes() == b[0].read_bytes() and a[1].read_bytes() == b[1].read_bytes()


def test_plot_empty_input_is_usage_error(tmp_path):
    with pytest.raises(UsageError):
        emit_plotdata([], tmp_path)
    with pytest.raises(UsageError):
        render_svg([])
    assert bar_data(PLOT_ROWS[-1:]) == []


# ---- CLI -----------------------------------------------------------------------

@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    save_config(path, TINY.with_(fusion_stages=(1,), optimizer=OptimizerConfig(epochs=1, batch_size=2)))
    return path


def test_cli_train_then_eval(tmp_path, tiny_config):
    assert cli.main(["train", "--config", str(tiny_config), "--seed", "2", "--out", str(tmp_path / "run")]) == 0
    run = tmp_path / "run"
    for name in ("checkpoint.pfc", "metrics.csv", "iou.csv", "manifest.json"):
        assert (run / name).is_file()
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["seeds"] == [2] and manifest["status"] == "ok"
    iou = read_csv(run / "iou.csv")[0]
    assert cli.main(["eval", "--config", str(tiny_config), "--checkpoint", str(run / "checkpoint.pfc"),
                     "--out", str(tmp_path / "ev")]) == 0
    assert read_csv(tmp_path / "ev" / "metrics.csv")[0]["mean_iou"] == iou["mean_iou"]


def test_cli_exit_codes(tmp_path, tiny_config, monkeypatch):
    assert cli.main(["train", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2
    (tmp_path / "bad.yaml").write_text("name: no-version\n")
    assert cli.main(["train", "--config", str(tmp_path / "bad.yaml"), "--out", str(tmp_path)]) == 2
    assert cli.main(["eval", "--config", str(tiny_config), "--checkpoint", str(tmp_path / "none.pfc")]) == 2
    assert cli.main(["plot", "--input", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--seed", "-1", "--out", str(tmp_path)])
    assert exc.value.code == 2

    monkeypatch.setattr(F, "cross_entropy", lambda logits, labels: F.mul(F.sum(logits), Tensor(np.inf)))
    out = tmp_path / "diverged"
    assert cli.main(["train", "--config", str(tiny_config), "--out", str(out)]) == 3
    assert json.loads((out / "manifest.json").read_text())["status"] == "diverged"


def test_cli_gen_data_and_train_from_disk(tmp_path):
    cfg = TINY.with_(fusion_stages=(1,), optimizer=OptimizerConfig(epochs=1, batch_size=2))
    save_config(tmp_path / "c.yaml", cfg)
    assert cli.main(["gen-data", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path / "data")]) == 0
    assert (tmp_path / "data" / "index.ini").is_file()
    save_config(tmp_path / "d.yaml", cfg.with_(data_dir=str(tmp_path / "data")))
    assert cli.main(["train", "--config", str(tmp_path / "d.yaml"), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["train", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert a["dataset_sha256"] == b["dataset_sha256"]
    assert (tmp_path / "a" / "iou.csv").read_bytes() == (tmp_path / "b" / "iou.csv").read_bytes()


def test_cli_sweep_and_plot(tmp_path, tiny_config):
    assert cli.main(["sweep-seeds", "--config", str(tiny_config), "--n-seeds", "2",
                     "--out", str(tmp_path / "sw")]) == 0
    assert len(read_csv(tmp_path / "sw" / "metrics.csv")) == 2
    summary = read_csv(tmp_path / "sw" / "summary.csv")[0]
    assert summary["n"] == "2"
    assert cli.main(["plot", "--input", str(tmp_path / "sw" / "metrics.csv"), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "fusion_iou.svg").is_file()


def test_cli_manifest_replay_reproduces_csv(tmp_path):
    cfg = TINY.with_(fusion_stages=(1, 4), consistency=ConsistencyConfig(),
                     optimizer=OptimizerConfig(epochs=1, batch_size=2))
    save_config(tmp_path / "c.yaml", cfg)
    assert cli.main(["ablate-gradstop", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path / "a")]) == 0
    rows = read_csv(tmp_path / "a" / "metrics.csv")
    assert {r["stop_3d"] for r in rows} == {"True", "False"}
    assert "act_stage4" in rows[0]
    assert all(float(r["cons_grad_3d_max"]) == 0.0 for r in rows if r["stop_3d"] == "True")
    assert cli.main(["ablate-gradstop", "--config", str(tmp_path / "a" / "manifest.json"),
                     "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
