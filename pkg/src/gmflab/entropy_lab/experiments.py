"""Dimension experiments on synthetic classification tasks.

``up_down_experiment`` maps frozen features from l to round(n*l) dimensions
and back before a linear probe; ``width_sweep`` trains one-hidden-layer
classifiers over a grid of widths and reports test accuracy and the
test/train accuracy ratio.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from ..report import ExperimentReport, summarize
from ..rng import SeedStreams
from ..tensor_core import Linear, Parameter, linear, tanh
from ..training import accuracy, fit_classifier


def _split(n: int, train_fraction: float = 0.7) -> int:
    return int(round(train_fraction * n))


@dataclass(frozen=True)
class MappingExperimentConfig:
    base_dim: int = 8
    raw_dim: int = 16
    classes: int = 8
    samples: int = 3000
    magnifications: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    seeds: tuple[int, ...] = (1, 2, 3)
    epochs: int = 400
    batch: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    readout_scale: float = 3.0
    anneal_epochs: int = 100
    identity_init: bool = False

    def __post_init__(self):
        if any(not n > 0 for n in self.magnifications):
            raise ConfigError(f"magnifications must be positive: {self.magnifications}", key="magnifications")
        if any(round(n * self.base_dim) < 1 for n in self.magnifications):
            raise ConfigError("every n * base_dim must round to at least 1", key="magnifications")
        if len(self.seeds) < 3:
            raise ConfigError(f"need at least 3 seeds, got {len(self.seeds)}", key="seeds")


def mapping_task(config: MappingExperimentConfig, seed: int):
    """Frozen random feature map plus multinomial-logistic labels.

    Labels are drawn from softmax(readout @ f) via the Gumbel-max trick, so a
    linear probe on f is the Bayes-optimal model family.
    """
    s = SeedStreams(seed)
    w = s("updown/feature_map").normal((config.base_dim, config.raw_dim)) / np.sqrt(config.raw_dim)
    x = s("updown/inputs").normal((config.samples, config.raw_dim))
    f = np.tanh(x @ w.T)
    f = (f - f.mean(axis=0)) / f.std(axis=0)
    readout = config.readout_scale * s("updown/readout").normal((config.classes, config.base_dim))
    u = s("updown/gumbel").random((config.samples, config.classes))
    gumbel = -np.log(-np.log(np.maximum(u, 1e-300)))
    y = np.argmax(f @ readout.T + gumbel, axis=1)
    return f, y


def build_probe(config: MappingExperimentConfig, magnification: float | None, seed: int):
    """Direct linear probe (magnification None) or probe on U1 (U2 f)."""
    s = SeedStreams(seed)
    probe = Linear(config.base_dim, config.classes, s("updown/probe"), "probe")
    if magnification is None:
        return probe, probe.parameters()
    l, m = config.base_dim, int(round(magnification * config.base_dim))
    if config.identity_init and m == l:
        up, down = np.eye(l), np.eye(l)
    else:
        up = s("updown/U2").uniform(-1, 1, (m, l)) / np.sqrt(l)
        down = s("updown/U1").uniform(-1, 1, (l, m)) / np.sqrt(m)
    u2, u1 = Parameter(up, "U2"), Parameter(down, "U1")
    return (lambda x: probe(linear(linear(x, u2), u1))), probe.parameters() + [u1, u2]


def up_down_experiment(config: MappingExperimentConfig) -> ExperimentReport:
    report = ExperimentReport("updown", asdict(config), seeds=list(config.seeds))
    cells: list[float | None] = [None] + list(config.magnifications)
    for seed in config.seeds:
        f, y = mapping_task(config, seed)
        ntr = _split(config.samples)
        for n in cells:
            forward, params = build_probe(config, n, seed)
            fit = fit_classifier(forward, params, f[:ntr], y[:ntr], epochs=config.epochs,
                                 batch=config.batch, lr=config.lr, momentum=config.momentum,
                                 weight_decay=config.weight_decay,
                                 stream=SeedStreams(seed)("updown/batches"),
                                 anneal_epochs=config.anneal_epochs)
            row = {"cell": "direct" if n is None else f"n={n:g}",
                   "magnification": 0.0 if n is None else float(n),
                   "mapped_dim": config.base_dim if n is None else int(round(n * config.base_dim)),
                   "seed": seed, "diverged": fit.diverged,
                   "train_acc": float("nan"), "test_acc": float("nan")}
            if not fit.diverged:
                row["train_acc"] = accuracy(forward(f[:ntr]).value, y[:ntr])
                row["test_acc"] = accuracy(forward(f[ntr:]).value, y[ntr:])
            report.rows.append(row)
    _aggregate(report, "cell", ["test_acc", "train_acc"])
    means = {a["cell"]: a["test_acc_mean"] for a in report.aggregate}
    report.metrics = {"direct_test_acc": means["direct"],
                      "gap_to_direct": {k: v - means["direct"] for k, v in means.items() if k != "direct"}}
    return report


@dataclass(frozen=True)
class WidthSweepConfig:
    intrinsic_dim: int = 2
    ambient_dim: int = 10
    classes: int = 3
    samples: int = 600
    label_noise: float = 0.1
    nuisance_scale: float = 0.5
    widths: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128)
    seeds: tuple[int, ...] = (1, 2, 3)
    epochs: int = 200
    batch: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    anneal_epochs: int = 0

    def __post_init__(self):
        if self.intrinsic_dim < 2 or self.ambient_dim < self.intrinsic_dim:
            raise ConfigError("need 2 <= intrinsic_dim <= ambient_dim", key="intrinsic_dim")
        if not 0 <= self.label_noise < 1:
            raise ConfigError(f"label noise must lie in [0, 1), got {self.label_noise}", key="label_noise")
        if min(self.widths) < 1:
            raise ConfigError(f"widths must be >= 1: {self.widths}", key="widths")
        if self.classes < 2:
            raise ConfigError("need at least 2 classes", key="classes")


def width_task(config: WidthSweepConfig, seed: int):
    """Latent z in R^k, classes by angular sector in a 2-plane, rotated into ambient space."""
    s = SeedStreams(seed)
    n, k, m, c = config.samples, config.intrinsic_dim, config.ambient_dim, config.classes
    z = s("width/latent").normal((n, k))
    angle = np.arctan2(z[:, 1], z[:, 0])
    y = ((angle + np.pi) / (2 * np.pi) * c).astype(np.int64) % c
    flip = s("width/flip").random((n,)) < config.label_noise
    other = (y + 1 + s("width/other").integers(c - 1, (n,))) % c
    y = np.where(flip, other, y)
    rotation, _ = np.linalg.qr(s("width/rotation").normal((m, m)))
    nuisance = config.nuisance_scale * s("width/nuisance").normal((n, m - k))
    x = np.hstack([z, nuisance]) @ rotation.T
    return x, y


def width_sweep(config: WidthSweepConfig) -> ExperimentReport:
    report = ExperimentReport("dim_sweep", asdict(config), seeds=list(config.seeds))
    for seed in config.seeds:
        x, y = width_task(config, seed)
        ntr = _split(config.samples)
        for width in config.widths:
            s = SeedStreams(seed)
            hidden = Linear(config.ambient_dim, width, s("width/hidden"), "hidden")
            out = Linear(width, config.classes, s("width/out"), "out")
            forward = lambda a, hidden=hidden, out=out: out(tanh(hidden(a)))
            fit = fit_classifier(forward, hidden.parameters() + out.parameters(), x[:ntr], y[:ntr],
                                 epochs=config.epochs, batch=config.batch, lr=config.lr,
                                 momentum=config.momentum, weight_decay=config.weight_decay,
                                 stream=s("width/batches"), anneal_epochs=config.anneal_epochs)
            row = {"cell": f"width={width}", "width": width, "seed": seed, "diverged": fit.diverged,
                   "train_acc": float("nan"), "test_acc": float("nan"), "ratio": float("nan")}
            if not fit.diverged:
                tr = accuracy(forward(x[:ntr]).value, y[:ntr])
                te = accuracy(forward(x[ntr:]).value, y[ntr:])
                row.update(train_acc=tr, test_acc=te, ratio=te / tr if tr > 0 else float("nan"))
            report.rows.append(row)
    _aggregate(report, "cell", ["test_acc", "train_acc", "ratio"])
    best = max(report.aggregate, key=lambda a: a["test_acc_mean"])
    report.metrics = {"best_width_cell": best["cell"], "best_test_acc": best["test_acc_mean"]}
    return report


def _aggregate(report: ExperimentReport, key: str, fields: list[str]) -> None:
    order: list = []
    groups: dict = {}
    for r in report.rows:
        if r[key] not in groups:
            order.append(r[key])
            groups[r[key]] = []
        groups[r[key]].append(r)
    for cell in order:
        rows = [r for r in groups[cell] if not r.get("diverged")]
        agg = {key: cell, "seeds": len(groups[cell]), "failed": len(groups[cell]) - len(rows)}
        for name in fields:
            vals = [r[name] for r in rows]
            stats = summarize(vals) if vals else {"mean": float("nan"), "min": float("nan"),
                                                  "max": float("nan")}
            agg.update({f"{name}_{k}": v for k, v in stats.items()})
        report.aggregate.append(agg)
