"""1-D Poisson-Nernst-Planck solver between blocking electrodes.

Nondimensional units: e = k_B T = 1 (so k_B T / (z e) = 1 / z), advection and
magnetic potential are zero. Concentrations and the potential live on the
same N + 1 grid nodes x_k = k h; node k owns the control volume
[x_k - h/2, x_k + h/2] clipped to the domain, so the end nodes carry half
volumes. Ion fluxes between neighbouring nodes use the Scharfetter-Gummel
exponential fit, which is exact for a constant field between nodes and
vanishes at the Boltzmann ratio. Electrodes block ions (zero flux) and fix
the potential at +U0 (x = 0) and -U0 (x = L).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, ConvergenceError, DomainError

#: k_B T / e at 298.15 K in volts; multiply nondimensional potentials by this.
THERMAL_VOLTAGE_SI = 1.380649e-23 * 298.15 / 1.602176634e-19


@dataclass(frozen=True)
class Species:
    valence: float
    diffusivity: float = 1.0
    c0: float = 1.0


@dataclass(frozen=True)
class PnpSystem:
    length: float = 1.0
    cells: int = 64
    species: tuple[Species, ...] = (Species(1.0), Species(-1.0))
    permittivity: float = 0.005
    u0: float = 1.0
    thermal: float = 1.0

    def __post_init__(self):
        if self.cells < 16:
            raise ConfigError(f"need at least 16 cells, got {self.cells}", key="cells")
        if not self.length > 0 or not self.permittivity > 0 or not self.thermal > 0:
            raise ConfigError("length, permittivity and thermal scale must be positive")
        if not self.species:
            raise ConfigError("at least one ion species is required", key="species")
        for s in self.species:
            if s.valence == 0 or s.diffusivity <= 0 or s.c0 < 0:
                raise ConfigError(f"invalid species {s}", key="species")
        net = sum(s.valence * s.c0 for s in self.species)
        if abs(net) > 1e-12 * max(abs(s.valence * s.c0) for s in self.species):
            raise ConfigError(f"initial state is not electroneutral (net charge {net})",
                              key="species")

    @classmethod
    def symmetric_binary(cls, debye_length: float, u0: float = 1.0, cells: int = 64,
                         length: float = 1.0, c0: float = 1.0, diffusivity: float = 1.0):
        """z = +1/-1 electrolyte with permittivity chosen for the given Debye length."""
        species = (Species(1.0, diffusivity, c0), Species(-1.0, diffusivity, c0))
        return cls(length, cells, species, debye_length**2 * 2.0 * c0, u0)

    @property
    def h(self) -> float:
        return self.length / self.cells

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.cells + 1)

    @property
    def weights(self) -> np.ndarray:
        """Control-volume lengths of the nodes."""
        w = np.full(self.cells + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    @property
    def debye_length(self) -> float:
        strength = sum(s.valence**2 * s.c0 for s in self.species)
        return math.sqrt(self.permittivity * self.thermal / strength)

    @property
    def valences(self) -> np.ndarray:
        return np.array([s.valence for s in self.species])


@dataclass
class PnpState:
    c: np.ndarray      # (species, N + 1), nonnegative
    phi: np.ndarray    # (N + 1,)
    t: float = 0.0
    sweeps: int = field(default=0, compare=False)

    def totals(self, system: PnpSystem) -> np.ndarray:
        return self.c @ system.weights

    def charge(self, system: PnpSystem) -> np.ndarray:
        return system.valences @ self.c


def bernoulli(x) -> np.ndarray:
    """B(x) = x / (exp(x) - 1), with the removable singularity at 0 handled."""
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < 1e-3
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        big = x / np.expm1(np.where(small, 1.0, x))
    series = 1.0 - x / 2.0 + x * x / 12.0 - x**4 / 720.0
    return np.where(small, series, big)


def sg_flux(c_left, c_right, dphi, diffusivity: float, valence: float, h: float = 1.0,
            thermal: float = 1.0):
    """Scharfetter-Gummel flux from the left node to the right node."""
    u = valence * np.asarray(dphi, dtype=np.float64) / thermal
    return diffusivity / h * (bernoulli(u) * c_left - bernoulli(-u) * c_right)


def face_fluxes(state: PnpState, system: PnpSystem) -> np.ndarray:
    dphi = np.diff(state.phi)
    return np.stack([sg_flux(c[:-1], c[1:], dphi, s.diffusivity, s.valence, system.h, system.thermal)
                     for s, c in zip(system.species, state.c)])


def _laplacian_bands(n_interior: int, coef: float) -> np.ndarray:
    ab = np.empty((3, n_interior))
    ab[0] = coef
    ab[1] = -2.0 * coef
    ab[2] = coef
    return ab


def solve_poisson(rho, system: PnpSystem) -> np.ndarray:
    """Potential at the nodes for charge density ``rho`` (one value per node).

    Second-order central differences, Dirichlet phi(0) = U0, phi(L) = -U0.
    """
    rho = np.asarray(rho, dtype=np.float64)
    n = rho.shape[0] - 1
    if n < 2:
        raise ConfigError(f"Poisson problem needs at least 2 cells, got {n}", key="cells")
    if n != system.cells:
        raise ConfigError(f"charge density has {n + 1} nodes, system has {system.cells + 1}")
    h2 = system.h**2
    rhs = -rho[1:-1] * h2 / system.permittivity
    rhs[0] -= system.u0
    rhs[-1] -= -system.u0
    phi = np.empty(n + 1)
    phi[0], phi[-1] = system.u0, -system.u0
    phi[1:-1] = solve_banded((1, 1), _laplacian_bands(n - 1, 1.0), rhs)
    return phi


def poisson_residual(phi, rho, system: PnpSystem) -> float:
    """Max-norm residual of the h^2/eps-scaled discrete Poisson equations."""
    phi, rho = np.asarray(phi), np.asarray(rho)
    interior = phi[:-2] - 2 * phi[1:-1] + phi[2:] + rho[1:-1] * system.h**2 / system.permittivity
    bc = [phi[0] - system.u0, phi[-1] + system.u0]
    return float(max(np.max(np.abs(interior)), *np.abs(bc)))


def initial_state(system: PnpSystem) -> PnpState:
    c = np.array([np.full(system.cells + 1, s.c0) for s in system.species])
    return PnpState(c, solve_poisson(system.valences @ c, system))


def _continuity_solve(c_old: np.ndarray, phi: np.ndarray, dt: float, species: Species,
                      system: PnpSystem) -> np.ndarray:
    """Implicit-Euler update of one species with SG fluxes at fixed potential."""
    h, w = system.h, system.weights
    u = species.valence * np.diff(phi) / system.thermal
    k = species.diffusivity / h
    fwd, bwd = k * bernoulli(u), k * bernoulli(-u)  # J_face = fwd*c_left - bwd*c_right
    n = phi.shape[0]
    ab = np.zeros((3, n))
    ab[1] = w / dt
    ab[1, :-1] += fwd
    ab[1, 1:] += bwd
    ab[0, 1:] = -bwd
    ab[2, :-1] = -fwd
    return solve_banded((1, 1), ab, w * c_old / dt)


def _predictor_poisson(c: np.ndarray, phi_ref: np.ndarray, theta: float, system: PnpSystem,
                       tol: float = 1e-14, max_newton: int = 50) -> np.ndarray:
    """Solve eps*phi'' + sum_p z_p c_p exp(-theta z_p (phi - phi_ref)) = 0 by Newton.

    The exponential factor anticipates how the concentrations will respond to
    the potential update; it is 1 at the fixed point, so fixed points are
    unaffected by ``theta``.
    """
    z = system.valences[:, None]
    eps_h2 = system.permittivity / system.h**2
    phi = phi_ref.copy()
    for _ in range(max_newton):
        boltz = c * np.exp(-theta * z * (phi - phi_ref) / system.thermal)
        rho = (z * boltz).sum(axis=0)
        resid = eps_h2 * (phi[:-2] - 2 * phi[1:-1] + phi[2:]) + rho[1:-1]
        drho = -(theta / system.thermal) * (z * z * boltz).sum(axis=0)[1:-1]
        ab = _laplacian_bands(phi.shape[0] - 2, eps_h2)
        ab[1] += drho
        delta = solve_banded((1, 1), ab, -resid)
        step = np.clip(delta, -system.thermal, system.thermal)
        phi[1:-1] += step
        if np.max(np.abs(delta)) < tol * max(1.0, np.max(np.abs(phi))):
            break
    return phi


def predictor_weight(system: PnpSystem, dt: float, mean_c: np.ndarray | None = None) -> float:
    """Gummel predictor strength minimising the worst linear-mode amplification.

    Linearising about uniform concentrations, a potential error in grid mode m
    (discrete Laplacian eigenvalue lam_m) is fed back with amplification
    (theta*S - R_m) / (eps*lam_m + theta*S), where R_m = sum_p s_p D_p lam_m dt /
    (1 + D_p lam_m dt) is the true one-step concentration response and
    S = sum_p s_p the full Boltzmann response.
    """
    if mean_c is None:
        mean_c = np.array([s.c0 for s in system.species])
    m = np.arange(1, system.cells)
    lam = 4.0 / system.h**2 * np.sin(m * np.pi / (2 * system.cells)) ** 2
    s = system.valences**2 * mean_c / system.thermal
    dcoef = np.array([sp.diffusivity for sp in system.species])
    resp = (s[:, None] * (dcoef[:, None] * lam * dt) / (1.0 + dcoef[:, None] * lam * dt)).sum(axis=0)
    total = s.sum()
    thetas = np.linspace(0.0, 1.0, 201)
    amp = np.abs(thetas[:, None] * total - resp) / (system.permittivity * lam + thetas[:, None] * total)
    return float(thetas[np.argmin(amp.max(axis=1))])


def transient_step(state: PnpState, dt: float, system: PnpSystem, tol: float = 1e-10,
                   max_sweeps: int = 500) -> PnpState:
    """One implicit-Euler step, Gummel-split between continuity and Poisson."""
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt}", key="dt")
    theta = predictor_weight(system, dt, state.c.mean(axis=1))
    phi = state.phi.copy()
    change = math.inf
    for sweep in range(1, max_sweeps + 1):
        c = np.array([_continuity_solve(c0, phi, dt, s, system)
                      for c0, s in zip(state.c, system.species)])
        phi_new = _predictor_poisson(c, phi, theta, system)
        change = np.max(np.abs(phi_new - phi)) / max(1.0, np.max(np.abs(phi_new)))
        phi = phi_new
        if change < tol:
            c = np.array([_continuity_solve(c0, phi, dt, s, system)
                          for c0, s in zip(state.c, system.species)])
            return PnpState(c, phi, state.t + dt, sweep)
    raise ConvergenceError(f"Gummel iteration did not converge in {max_sweeps} sweeps", change)


def _boltzmann(phi: np.ndarray, system: PnpSystem) -> np.ndarray:
    """Equilibrium concentrations for ``phi`` holding each species' total fixed."""
    w = system.weights
    out = []
    for s in system.species:
        e = -s.valence * phi / system.thermal
        prof = np.exp(e - e.max())
        out.append(s.c0 * system.length * prof / (prof @ w))
    return np.array(out)


def solve_steady(system: PnpSystem, tol: float = 1e-12, max_sweeps: int = 500) -> PnpState:
    """Equilibrium state by a Gummel fixed point.

    Zero flux on every face means each species is Boltzmann distributed in the
    potential; concentrations are set from the current potential (conserving
    totals) and the potential is updated with a full Boltzmann predictor.
    """
    phi = initial_state(system).phi
    change = math.inf
    for sweep in range(1, max_sweeps + 1):
        c = _boltzmann(phi, system)
        phi_new = _predictor_poisson(c, phi, 1.0, system)
        change = np.max(np.abs(phi_new - phi)) / max(1.0, np.max(np.abs(phi_new)))
        phi = phi_new
        if change < tol:
            return PnpState(_boltzmann(phi, system), phi, math.inf, sweep)
    raise ConvergenceError(f"steady-state iteration did not converge in {max_sweeps} sweeps", change)


def march_to_steady(system: PnpSystem, dt0: float = 1e-4, growth: float = 1.5,
                    dt_max: float = 1e4, tol: float = 1e-10, max_steps: int = 2000) -> PnpState:
    """Time-march with a growing step until max relative change per unit time < tol."""
    state = initial_state(system)
    dt = dt0
    scale = max(s.c0 for s in system.species)
    rate = math.inf
    for _ in range(max_steps):
        new = transient_step(state, dt, system)
        rate = np.max(np.abs(new.c - state.c)) / (scale * dt)
        state = new
        if rate < tol:
            return state
        dt = min(dt * growth, dt_max)
    raise ConvergenceError(f"no steady state within {max_steps} steps", rate)


def nernst_check(state: PnpState, system: PnpSystem, species: int, i: int, j: int) -> float:
    """|(phi_i - phi_j) - (kT / z e) ln(c_j / c_i)| between nodes i and j."""
    c = state.c[species]
    if c[i] <= 0 or c[j] <= 0:
        raise DomainError(f"species {species} has zero concentration at node {i if c[i] <= 0 else j}")
    z = system.species[species].valence
    return float(abs((state.phi[i] - state.phi[j]) - system.thermal / z * math.log(c[j] / c[i])))


def max_nernst_deviation(state: PnpState, system: PnpSystem) -> np.ndarray:
    """Worst Nernst deviation over all node pairs, per species.

    deviation(i, j) = |a_i - a_j| with a = phi + (kT/z) ln c, so the maximum
    over pairs is max(a) - min(a).
    """
    out = []
    for s, c in zip(system.species, state.c):
        if np.any(c <= 0):
            raise DomainError("zero concentration in Nernst check")
        a = state.phi + system.thermal / s.valence * np.log(c)
        out.append(a.max() - a.min())
    return np.array(out)


def zero_crossing(state: PnpState, system: PnpSystem) -> float | None:
    """Position where the potential first changes sign (linear interpolation)."""
    phi, x = state.phi, system.x
    exact = np.flatnonzero(phi == 0.0)
    sign = np.flatnonzero(np.sign(phi[:-1]) * np.sign(phi[1:]) < 0)
    candidates = []
    if exact.size:
        candidates.append(float(x[exact[0]]))
    if sign.size:
        k = sign[0]
        candidates.append(float(x[k] + phi[k] / (phi[k] - phi[k + 1]) * (x[k + 1] - x[k])))
    return min(candidates) if candidates else None


def with_u0(system: PnpSystem, u0: float) -> PnpSystem:
    return replace(system, u0=u0)
