"""Training harness: concat baseline versus a GMF front-end on synthetic data."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from ..errors import ConfigError, ContractError, NonFiniteError
from ..gmf import FusionOutput, GmfConfig, GmfParams, gmf_forward, reconstruction_loss
from ..report import ExperimentReport
from ..rng import SeedStreams
from ..tensor_core import SGD, Linear, Node, Tape, add, concat, cross_entropy_loss, scale, tanh
from ..training import accuracy, minibatches
from .data import Dataset
from .metrics import auc

METHODS = ("concat-baseline", "gmf", "gmf-no-barrier")
EXTRACTORS = ("frozen-identity", "trainable")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "gmf"
    extractor: str = "frozen-identity"
    epochs: int = 20
    batch: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lambda_dis: float = 1.0
    magnification: int = 4
    boundary_fraction: float = 0.5
    detach_reconstruction: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}", key="method")
        if self.extractor not in EXTRACTORS:
            raise ConfigError(f"unknown extractor {self.extractor!r}; choose from {EXTRACTORS}",
                              key="extractor")
        if self.epochs < 1 or self.batch < 1:
            raise ConfigError("epochs and batch must be >= 1", key="epochs")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}", key="lr")
        if self.lambda_dis < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_dis}", key="lambda_dis")

    @property
    def uses_gmf(self) -> bool:
        return self.method != "concat-baseline"

    def gmf_config(self, dims) -> GmfConfig | None:
        if not self.uses_gmf:
            return None
        return GmfConfig(tuple(dims), self.magnification, Fraction(str(self.boundary_fraction)),
                         self.lambda_dis, barrier_enabled=self.method == "gmf")


class FusionModel:
    """Per-modality extractors, optional GMF front-end, linear classifier."""

    def __init__(self, dims, classes: int, config: TrainConfig):
        self.config = config
        self.dims = tuple(dims)
        streams = SeedStreams(config.seed)
        self.extractors = None
        if config.extractor == "trainable":
            self.extractors = [Linear(l, l, streams(f"model/extractor.{j}"), f"extractor.{j}")
                               for j, l in enumerate(self.dims)]
        self.gmf_config = config.gmf_config(self.dims)
        self.gmf = None
        width = sum(self.dims)
        if self.gmf_config is not None:
            self.gmf = GmfParams.init(self.gmf_config, streams("model/gmf"))
            width = sum(self.gmf_config.output_dim(j) for j in range(len(self.dims)))
        self.classifier = Linear(width, classes, streams("model/classifier"), "classifier")

    def extract(self, xs) -> list:
        if self.extractors is None:
            return list(xs)
        return [tanh(e(x)) for e, x in zip(self.extractors, xs)]

    def forward(self, xs) -> tuple[Node, list, FusionOutput | None]:
        feats = self.extract(xs)
        if self.gmf is None:
            return self.classifier(concat(feats) if len(feats) > 1 else feats[0]), feats, None
        out = gmf_forward(feats, self.gmf_config, self.gmf)
        return self.classifier(concat(out.z)), feats, out

    def parameters(self) -> list:
        params = []
        if self.extractors is not None:
            params += [p for e in self.extractors for p in e.parameters()]
        if self.gmf is not None:
            params += self.gmf.parameters()
        return params + self.classifier.parameters()

    def counts(self) -> dict:
        ext = sum(p.value.size for e in (self.extractors or []) for p in e.parameters())
        fus = self.gmf.count() if self.gmf is not None else 0
        cls = sum(p.value.size for p in self.classifier.parameters())
        return {"extractor": ext, "fusion": fus, "classifier": cls, "total": ext + fus + cls}

    def state_dict(self) -> dict:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, state) -> None:
        for p in self.parameters():
            p.value[...] = state[p.name]

    def dis_loss(self, xs) -> float:
        if self.gmf is None:
            return float("nan")
        _, feats, out = self.forward(xs)
        return float(reconstruction_loss(out, feats).value[0, 0])


@dataclass
class FusionRun:
    report: ExperimentReport
    model: FusionModel


def _batch_loss(model: FusionModel, xs, y, config: TrainConfig):
    logits, feats, out = model.forward(xs)
    task = cross_entropy_loss(logits, y)
    dis = None
    if out is not None:
        dis = reconstruction_loss(out, feats)
    total = task
    if dis is not None and not config.detach_reconstruction:
        total = add(task, scale(dis, config.lambda_dis))
    return total, task, dis


def train_fusion(dataset: Dataset, config: TrainConfig) -> FusionRun:
    """Minimize L_task + lambda * L_dis; one report row per epoch.

    A non-finite loss stops the run and marks it failed; the report keeps the
    epochs completed so far plus the diagnostic message.
    """
    model = FusionModel(dataset.spec.m, dataset.spec.classes, config)
    xtr, ytr = dataset.split("train")
    xte, yte = dataset.split("test")
    opt = SGD(model.parameters(), config.lr, config.momentum, config.weight_decay)
    batches = SeedStreams(config.seed)("train/batches")
    report = ExperimentReport(f"train_{config.method}", {"train": asdict(config),
                                                         "spec": asdict(dataset.spec),
                                                         "data_seed": dataset.seed},
                              seeds=[config.seed])
    dis_initial = model.dis_loss(xtr)
    failed, message = False, ""
    for epoch in range(config.epochs):
        task_sum = dis_sum = 0.0
        try:
            for idx in minibatches(ytr.size, config.batch, batches):
                with Tape() as tape:
                    total, task, dis = _batch_loss(model, [x[idx] for x in xtr], ytr[idx], config)
                    tape.backward(total)
                opt.step()
                task_sum += task.value[0, 0] * idx.size
                if dis is not None:
                    dis_sum += dis.value[0, 0] * idx.size
        except NonFiniteError as exc:
            failed, message = True, f"epoch {epoch}: {exc}"
            break
        if not math.isfinite(task_sum):
            failed, message = True, f"epoch {epoch}: non-finite task loss"
            break
        report.rows.append({
            "epoch": epoch + 1,
            "task_loss": task_sum / ytr.size,
            "dis_loss_batch_mean": dis_sum / ytr.size if model.gmf is not None else float("nan"),
            "dis_loss": model.dis_loss(xtr),
            "train_acc": accuracy(model.forward(xtr)[0].value, ytr),
            "test_acc": accuracy(model.forward(xte)[0].value, yte),
        })
    last = report.rows[-1] if report.rows else {}
    report.metrics = {
        "failed": failed, "message": message, "params": model.counts(),
        "dis_initial": dis_initial, "dis_final": last.get("dis_loss", float("nan")),
        "train_acc": last.get("train_acc", float("nan")),
        "test_acc": last.get("test_acc", float("nan")),
    }
    return FusionRun(report, model)


def missing_modality_eval(model: FusionModel, dataset: Dataset, drop: int | None = None) -> dict:
    """Test metrics with modality ``drop`` zeroed at the input.

    For GMF models the specific parts of the surviving modalities must be
    bitwise unchanged; a violation raises ContractError.
    """
    xte, yte = dataset.split("test")
    d = len(xte)
    if drop is not None and not 0 <= drop < d:
        raise ContractError(f"dropped modality {drop} out of range for d={d}")
    xs = [np.zeros_like(x) if j == drop else x for j, x in enumerate(xte)]
    logits, _, out = model.forward(xs)
    result = {"dropped": -1 if drop is None else drop, "accuracy": accuracy(logits.value, yte),
              "locality_checked": False}
    if dataset.spec.classes == 2:
        z = logits.value
        result["auc"] = auc(z[:, 1] - z[:, 0], yte)
    if out is not None and drop is not None:
        _, _, full = model.forward(xte)
        for j in range(d):
            if j != drop and not np.array_equal(out.z_spec[j].value, full.z_spec[j].value):
                raise ContractError(f"specific part of modality {j} changed when modality {drop} dropped")
        result["locality_checked"] = True
    return result
