"""Synthetic multimodal datasets with known shared/specific latent structure.

Modality j observes x_j = M_j [s; u_j] + sigma * eps, where s is shared by all
modalities and u_j is private to modality j. Labels are the argmax of a fixed
random linear readout of [s; u_1; ...; u_d].
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ShapeError
from ..report import atomic_write
from ..rng import SeedStreams
from ..tensor_core import checkpoint


@dataclass(frozen=True)
class SyntheticSpec:
    d: int = 2
    k_shared: int = 8
    k_specific: tuple[int, ...] = (8, 8)
    m: tuple[int, ...] = (32, 32)
    sigma: float = 0.1
    classes: int = 4
    samples: int = 4000
    positive_fraction: float | None = None   # binary only: label imbalance

    def __post_init__(self):
        object.__setattr__(self, "k_specific", tuple(int(k) for k in self.k_specific))
        object.__setattr__(self, "m", tuple(int(k) for k in self.m))
        if self.d < 1:
            raise ConfigError(f"need at least one modality, got d={self.d}", key="d")
        if len(self.k_specific) != self.d or len(self.m) != self.d:
            raise ConfigError(f"k_specific and m need one entry per modality (d={self.d})", key="m")
        if self.k_shared < 0 or min(self.k_specific) < 0 or min(self.m) < 1:
            raise ConfigError("latent dims must be >= 0 and observed dims >= 1", key="k_shared")
        if self.latent_dim < 1:
            raise ConfigError("at least one latent factor is required", key="k_shared")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}", key="sigma")
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}", key="classes")
        if self.latent_dim == 1 and self.classes > 2:
            raise ConfigError(f"a 1-D latent can realize at most 2 argmax labels, asked for "
                              f"{self.classes}", key="classes")
        if self.positive_fraction is not None:
            if self.classes != 2:
                raise ConfigError("positive_fraction only applies to binary specs", key="positive_fraction")
            if not 0 < self.positive_fraction < 1:
                raise ConfigError(f"positive_fraction must lie in (0, 1), got {self.positive_fraction}",
                                  key="positive_fraction")

    @property
    def latent_dim(self) -> int:
        return self.k_shared + sum(self.k_specific)


@dataclass
class Dataset:
    spec: SyntheticSpec
    seed: int
    x: list[np.ndarray]
    labels: np.ndarray
    train: np.ndarray
    test: np.ndarray
    shared: np.ndarray
    specific: list[np.ndarray] = field(default_factory=list)

    def split(self, part: str) -> tuple[list[np.ndarray], np.ndarray]:
        idx = {"train": self.train, "test": self.test}[part]
        return [x[idx] for x in self.x], self.labels[idx]


def stratified_split(labels: np.ndarray, train_fraction: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
    """First 70% (in index order) of every class goes to train."""
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        cut = int(round(train_fraction * idx.size))
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def generate_dataset(spec: SyntheticSpec, seed: int) -> Dataset:
    s = SeedStreams(seed)
    n = spec.samples
    shared = s("data/shared").normal((n, spec.k_shared))
    specific = [s(f"data/specific.{j}").normal((n, k)) for j, k in enumerate(spec.k_specific)]
    xs = []
    for j in range(spec.d):
        latent = np.hstack([shared, specific[j]])
        width = max(latent.shape[1], 1)
        mix = s(f"data/mix.{j}").normal((spec.m[j], latent.shape[1])) / np.sqrt(width)
        noise = s(f"data/noise.{j}").normal((n, spec.m[j]))
        xs.append(latent @ mix.T + spec.sigma * noise)

    readout = s("data/readout").normal((spec.classes, spec.latent_dim))
    blocks = np.cumsum([0, spec.k_shared, *spec.k_specific])
    for lo, hi in zip(blocks[:-1], blocks[1:]):
        if hi > lo and not np.any(readout[:, lo:hi]):
            raise ConfigError("label readout ignores a latent block", key="classes")
    scores = np.hstack([shared, *specific]) @ readout.T
    if spec.positive_fraction is None:
        labels = np.argmax(scores, axis=1)
    else:
        margin = scores[:, 1] - scores[:, 0]
        labels = (margin > np.quantile(margin, 1 - spec.positive_fraction)).astype(np.int64)
    present = np.unique(labels)
    if present.size < spec.classes:
        missing = sorted(set(range(spec.classes)) - set(present.tolist()))
        raise ConfigError(f"classes {missing} never occur; this SyntheticSpec cannot realize {spec.classes} labels",
                          key="classes")
    train, test = stratified_split(labels)
    return Dataset(spec, seed, xs, labels.astype(np.int64), train, test, shared, specific)


def save_dataset(dataset: Dataset, path) -> None:
    """Checkpoint container with the matrices plus a JSON sidecar for spec and seed."""
    path = Path(path)
    mats = {f"x.{j}": x for j, x in enumerate(dataset.x)}
    mats.update({"labels": dataset.labels[:, None].astype(np.float64),
                 "train": dataset.train[:, None].astype(np.float64),
                 "test": dataset.test[:, None].astype(np.float64),
                 "shared": dataset.shared})
    mats.update({f"specific.{j}": u for j, u in enumerate(dataset.specific)})
    checkpoint.save(path, mats)
    sidecar = {"spec": asdict(dataset.spec), "seed": dataset.seed}
    atomic_write(path.with_name(path.name + ".json"), json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text(encoding="utf-8"))
    spec = SyntheticSpec(**{**meta["spec"], "k_specific": tuple(meta["spec"]["k_specific"]),
                            "m": tuple(meta["spec"]["m"])})
    mats = checkpoint.load(path)
    try:
        return Dataset(spec, int(meta["seed"]), [mats[f"x.{j}"] for j in range(spec.d)],
                       mats["labels"][:, 0].astype(np.int64), mats["train"][:, 0].astype(np.int64),
                       mats["test"][:, 0].astype(np.int64), mats["shared"],
                       [mats[f"specific.{j}"] for j in range(spec.d)])
    except KeyError as exc:
        raise ShapeError(f"dataset file {path} lacks entry {exc}") from None
