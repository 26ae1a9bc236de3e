"""Minibatch Adam training and voxel-IoU evaluation."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import Tensor, backward
from ..autodiff import functional as F
from ..autodiff import AdamState, adam_step
from ..checkpoint import load_checkpoint
from ..consistency import combined_loss
from ..dataset_io import dataset_digest, read_dataset
from ..errors import ConfigError, NumericError, UsageError
from ..scene import generate_dataset
from .config import ExperimentConfig
from .metrics import confusion_matrix, iou_from_confusion, mean_foreground_iou
from .model import FusionNet, make_batch, prepare

STREAM_ORDER = 21


@dataclass
class DataBundle:
    train: list  # PreparedSample
    val: list
    digest: str
    camera: object
    grid: object


_DATA_CACHE: dict = {}


def load_data(cfg: ExperimentConfig) -> DataBundle:
    """Dataset for ``cfg``, generated in memory or read from ``cfg.data_dir``; cached per process."""
    key = (cfg.dataset, cfg.data_dir)
    if key in _DATA_CACHE:
        return _DATA_CACHE[key]
    spec = cfg.dataset
    if cfg.data_dir is not None:
        disk_spec, train, val, digest = read_dataset(cfg.data_dir)
        if disk_spec != spec:
            raise ConfigError(f"dataset in {cfg.data_dir} was generated with different dataset settings")
    else:
        train, val = generate_dataset(spec)
        digest = dataset_digest(train + val)
    bundle = DataBundle([prepare(s) for s in train], [prepare(s) for s in val], digest,
                        spec.camera(), spec.grid())
    _DATA_CACHE[key] = bundle
    return bundle


@dataclass
class EpochLog:
    epoch: int
    l3d: float
    lcons: float
    total: float
    lr: float
    activation: dict  # stage -> mean |activation| over the epoch
    cons_grad_3d: float | None = None  # max |dL_cons/dtheta_3D| seen during the epoch


@dataclass
class MetricsReport:
    seed: int
    epochs: list = field(default_factory=list)
    per_class_iou: list = field(default_factory=list)  # index 0 is background
    mean_iou: float = float("nan")
    wall_clock: float = 0.0

    @property
    def l3d_final(self) -> float:
        return self.epochs[-1].l3d

    @property
    def lcons_final(self) -> float:
        return self.epochs[-1].lcons

    def to_dict(self) -> dict:
        return asdict(self)


def _check_finite(name: str, value: float, epoch: int, step: int) -> None:
    if not np.isfinite(value):
        raise NumericError(f"non-finite {name} ({value}) at epoch {epoch}, step {step}")


def train(cfg: ExperimentConfig, seed: int, data: DataBundle | None = None,
          log=None) -> tuple[dict, MetricsReport]:
    """Train one model; returns ``(parameter state, report)`` with the report's IoU on the val split.

    The data order comes from ``default_rng([seed, STREAM_ORDER])``; the
    dataset itself is shared by all seeds.
    """
    data = data or load_data(cfg)
    start = time.perf_counter()
    net = FusionNet(cfg, data.camera, data.grid, seed)
    params = net.parameters()
    names_3d = [k for k in params if k.startswith("3d.")]
    opt = cfg.optimizer
    alpha = cfg.consistency.alpha if cfg.uses_consistency else 0.0
    rng = np.random.default_rng([seed, STREAM_ORDER])
    n = len(data.train)
    if n == 0:
        raise ConfigError("training split is empty")
    steps_per_epoch = -(-n // opt.batch_size)
    total_steps = opt.epochs * steps_per_epoch
    state = AdamState()
    report = MetricsReport(seed)
    step = 0
    for epoch in range(1, opt.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(3)
        act: dict = {}
        cons_grad = 0.0 if cfg.log_cons_grad else None
        for b in range(steps_per_epoch):
            idx = order[b * opt.batch_size:(b + 1) * opt.batch_size]
            batch = make_batch([data.train[i] for i in idx], data.grid.dims)
            res = net.forward(batch)
            loss = combined_loss(res.l3d, res.lcons, alpha) if res.terms else res.l3d
            values = (res.l3d.item(), res.lcons.item(), loss.item())
            for name, v in zip(("L_3D", "L_cons", "L"), values):
                _check_finite(name, v, epoch, step)
            grads = backward(loss, params)
            if cons_grad is not None and res.terms:
                g_cons = backward(F.mul(res.lcons, Tensor(alpha)), params)
                cons_grad = max([cons_grad] + [float(np.abs(g_cons[k]).max()) for k in names_3d])
            lr = opt.lr_at(step, total_steps)
            new, state = adam_step({k: p.data for k, p in params.items()}, grads.full(), state, lr)
            for k, p in params.items():
                p.data = new[k]
            sums += values
            for t, v in res.activation_norms.items():
                act[t] = act.get(t, 0.0) + v
            step += 1
        mean = sums / steps_per_epoch
        entry = EpochLog(epoch, float(mean[0]), float(mean[1]), float(mean[2]), lr,
                         {t: v / steps_per_epoch for t, v in sorted(act.items())}, cons_grad)
        report.epochs.append(entry)
        if log is not None:
            log(entry)
    iou = evaluate_state(cfg, net.state(), data, net=net)
    report.per_class_iou = [float(v) for v in iou]
    report.mean_iou = mean_foreground_iou(iou)
    report.wall_clock = time.perf_counter() - start
    return net.state(), report


def predict(net: FusionNet, samples, batch_size: int) -> list[np.ndarray]:
    """Per-sample stage-0 voxel class predictions."""
    out = []
    for b in range(0, len(samples), batch_size):
        chunk = samples[b:b + batch_size]
        res = net.forward(make_batch(chunk, net.grid.dims), with_consistency=False)
        pred = res.voxel_logits().argmax(axis=1)
        bounds = np.cumsum([0] + [len(s.labels) for s in chunk])
        out.extend(pred[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))
    return out


def evaluate_state(cfg: ExperimentConfig, state: dict, data: DataBundle | None = None,
                   net: FusionNet | None = None) -> np.ndarray:
    """Per-class IoU (background first) over all occupied val voxels."""
    data = data or load_data(cfg)
    if net is None:
        net = FusionNet(cfg, data.camera, data.grid, cfg.seeds[0])
        net.load_state(state)
    k = cfg.dataset.n_classes + 1
    cm = np.zeros((k, k), dtype=np.int64)
    for s, pred in zip(data.val, predict(net, data.val, cfg.optimizer.batch_size)):
        cm += confusion_matrix(pred, s.labels, k)
    return iou_from_confusion(cm)


def evaluate(cfg: ExperimentConfig, checkpoint_path, data: DataBundle | None = None) -> MetricsReport:
    path = Path(checkpoint_path)
    if not path.is_file():
        raise UsageError(f"checkpoint {path} does not exist")
    start = time.perf_counter()
    iou = evaluate_state(cfg, load_checkpoint(path), data)
    return MetricsReport(cfg.seeds[0], [], [float(v) for v in iou], mean_foreground_iou(iou),
                         time.perf_counter() - start)
