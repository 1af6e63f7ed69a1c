"""Generalized multimodal fusion front-end.

Each modality's feature (length l) is dissolved into n*l dimensions, split at
the dissociation boundary b, and the two bands are concentrated into an
invariant part (length l*, the smallest modality length) and a specific part
(length l). Modality j's fused output takes the invariant part of modality
(j + 1) mod d followed by its own specific part. A linear reconstruction of
each original feature from its fused output drives the dissociation loss.

Modalities are indexed from 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import Stream
from .tensor_core import Linear, Node, Parameter, add, barrier, concat, mse_loss, slice_cols
from .tensor_core.autodiff import _node


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


@dataclass(frozen=True)
class GmfConfig:
    dims: tuple[int, ...]
    magnification: int = 4
    boundary_fraction: Fraction = Fraction(1, 2)
    lambda_dis: float = 1.0
    barrier_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(l) for l in self.dims))
        object.__setattr__(self, "boundary_fraction", _as_fraction(self.boundary_fraction))
        if len(self.dims) < 2:
            raise ConfigError(f"GMF needs at least 2 modalities, got dims={list(self.dims)}", key="dims")
        if any(l < 1 for l in self.dims):
            raise ConfigError(f"every modality length must be >= 1, got {list(self.dims)}", key="dims")
        if int(self.magnification) != self.magnification or self.magnification < 2:
            raise ConfigError(f"magnification must be an integer >= 2, got {self.magnification}", key="n")
        if not 0 < self.boundary_fraction < 1:
            raise ConfigError(f"boundary fraction must lie in (0, 1), got {self.boundary_fraction}",
                              key="boundary")
        for j in range(len(self.dims)):
            b, nl = self.boundary(j), self.dissolved(j)
            if not 0 < b < nl:
                raise ConfigError(f"boundary {b} of modality {j} must satisfy 0 < b < {nl}",
                                  key="boundary")

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def l_star(self) -> int:
        return min(self.dims)

    def dissolved(self, j: int) -> int:
        return self.magnification * self.dims[j]

    def boundary(self, j: int) -> int:
        return math.floor(self.boundary_fraction * self.dissolved(j))

    def output_dim(self, j: int) -> int:
        return self.dims[j] + self.l_star


@dataclass
class ModalityMaps:
    dis: Linear     # l -> n*l
    cinv: Linear    # b -> l*
    cspec: Linear   # n*l - b -> l
    recon: Linear   # l + l* -> l

    def items(self):
        return (("P_dis", self.dis), ("P_cinv", self.cinv), ("P_cspec", self.cspec),
                ("P_recon", self.recon))


class GmfParams:
    """The four learnable affine maps of every modality."""

    def __init__(self, config: GmfConfig, maps: list[ModalityMaps]):
        self.config = config
        self.maps = maps

    @classmethod
    def init(cls, config: GmfConfig, stream: Stream) -> "GmfParams":
        maps = []
        for j, l in enumerate(config.dims):
            nl, b, ls = config.dissolved(j), config.boundary(j), config.l_star
            maps.append(ModalityMaps(
                dis=Linear(l, nl, stream, f"P_dis.{j}"),
                cinv=Linear(b, ls, stream, f"P_cinv.{j}"),
                cspec=Linear(nl - b, l, stream, f"P_cspec.{j}"),
                recon=Linear(l + ls, l, stream, f"P_recon.{j}"),
            ))
        return cls(config, maps)

    def parameters(self) -> list[Parameter]:
        return [p for m in self.maps for _, lin in m.items() for p in lin.parameters()]

    def named(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named().items()}

    def load_state_dict(self, state) -> None:
        named = self.named()
        missing = set(named) - set(state)
        if missing:
            raise ShapeError(f"missing GMF entries: {sorted(missing)}")
        for name, p in named.items():
            v = np.asarray(state[name], dtype=np.float64)
            if v.shape != p.shape:
                raise ShapeError(f"{name}: stored shape {v.shape} != expected {p.shape}")
            p.value[...] = v

    def count(self) -> int:
        return sum(p.value.size for p in self.parameters())


@dataclass
class FusionOutput:
    z: list[Node]
    z_inv: list[Node]
    z_spec: list[Node]
    recon: list[Node]
    barrier_enabled: bool = True


def _check_feature(x: Node, config: GmfConfig, j: int) -> None:
    if x.shape[1] != config.dims[j]:
        raise ShapeError(f"modality {j} feature has length {x.shape[1]}, expected {config.dims[j]}")


def element_split(x, config: GmfConfig, j: int, params: GmfParams) -> tuple[Node, Node]:
    """Dissolve, cut at the boundary, and concentrate one modality's feature."""
    x = _node(x)
    _check_feature(x, config, j)
    maps = params.maps[j]
    b, nl = config.boundary(j), config.dissolved(j)
    dissolved = maps.dis(x)
    x_inv = maps.cinv(slice_cols(dissolved, 0, b))
    x_spec = maps.cspec(slice_cols(dissolved, b, nl))
    return x_inv, x_spec


def _fuse(features: list[Node], config: GmfConfig, params: GmfParams):
    d = config.d
    splits = [element_split(f, config, j, params) for j, f in enumerate(features)]
    z_inv = [s[0] for s in splits]
    z_spec = [s[1] for s in splits]
    z = [concat([z_inv[(j + 1) % d], z_spec[j]]) for j in range(d)]
    return z, z_inv, z_spec


def gmf_forward(features: Sequence, config: GmfConfig, params: GmfParams) -> FusionOutput:
    """Fuse d feature batches (each rows x l_j).

    With the barrier enabled the reconstruction branch re-reads the inputs
    through a gradient barrier: the fused outputs stay differentiable with
    respect to the features, while the reconstructions only carry gradient
    into the GMF maps.
    """
    if len(features) < 2 or len(features) != config.d:
        raise ConfigError(f"expected {config.d} modalities (>= 2), got {len(features)}", key="dims")
    feats = [_node(f) for f in features]
    for j, f in enumerate(feats):
        _check_feature(f, config, j)
    if len({f.shape[0] for f in feats}) != 1:
        raise ShapeError(f"modalities disagree on batch size: {[f.shape for f in feats]}")

    z, z_inv, z_spec = _fuse(feats, config, params)
    if config.barrier_enabled:
        z_rec, _, _ = _fuse([barrier(f) for f in feats], config, params)
    else:
        z_rec = z
    recon = [params.maps[j].recon(z_rec[j]) for j in range(config.d)]
    return FusionOutput(z, z_inv, z_spec, recon, config.barrier_enabled)


def reconstruction_loss(output: FusionOutput, originals: Sequence) -> Node:
    """Sum over modalities of the mean squared reconstruction error."""
    if len(originals) != len(output.recon):
        raise ShapeError(f"{len(originals)} originals for {len(output.recon)} modalities")
    loss = None
    for rec, orig in zip(output.recon, originals):
        target = barrier(orig) if output.barrier_enabled else _node(orig)
        if target.shape != rec.shape:
            raise ShapeError(f"original shape {target.shape} != reconstruction shape {rec.shape}")
        term = mse_loss(rec, target)
        loss = term if loss is None else add(loss, term)
    return loss


def param_count(config: GmfConfig) -> int:
    """Weights plus biases of all four maps over all modalities."""
    total = 0
    ls = config.l_star
    for j, l in enumerate(config.dims):
        nl, b = config.dissolved(j), config.boundary(j)
        total += nl * l + nl
        total += ls * b + ls
        total += l * (nl - b) + l
        total += l * (l + ls) + l
    return total


def weight_count(config: GmfConfig) -> int:
    ls = config.l_star
    return sum(config.dissolved(j) * l + ls * config.boundary(j)
               + l * (config.dissolved(j) - config.boundary(j)) + l * (l + ls)
               for j, l in enumerate(config.dims))


def flops_estimate(config: GmfConfig) -> float:
    """Two flops per weight (one multiply-accumulate) for one forward sample."""
    return 2.0 * weight_count(config)
