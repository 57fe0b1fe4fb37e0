"""Bound engine: the four terms controlling the finite-time equilibration
error, their total, the closed form for the uniform-cells example and the
finite-dimensional effective-dimension baseline.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .kernels import KernelParams, sup_on_gap_intervals, toy_envelope_height
from .spectral import DensityMatrix, Partition, Transform, operator_norm, purity

DEFAULT_TAU_SAMPLES = 256
REFINE_CANDIDATES = 5


@dataclass(frozen=True)
class BoundBreakdown:
    """The four bound terms and ``total = 3 * (k + f + beta^2 + r)``."""

    k_term: float
    f_term: float
    beta_sq_sum: float
    r_cross_term: float
    empirical_sigma_sq: float | None = None
    total: float = field(init=False)

    def __post_init__(self):
        for name in ("k_term", "f_term", "beta_sq_sum", "r_cross_term"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if self.f_term > 4.0 + 1e-12:
            raise ValueError("f_term exceeds 4")
        object.__setattr__(self, "total", 3.0 * self.per_term_sum)

    @property
    def per_term_sum(self) -> float:
        return self.k_term + self.f_term + self.beta_sq_sum + self.r_cross_term

    def equilibration_rhs(self, half_outcomes: float) -> float:
        """``Q * sqrt(3 * total)``, the distinguishability bound as stated."""
        return half_outcomes * math.sqrt(3.0 * self.total)

    def equilibration_chain_rhs(self, half_outcomes: float) -> float:
        """``Q * sqrt(total)``, the value the proof chain actually delivers."""
        return half_outcomes * math.sqrt(self.total)


# --------------------------------------------------------------------------
# Index sets
# --------------------------------------------------------------------------


def pair_index_set(cells: Sequence[int]) -> list[tuple[int, int]]:
    return [(i, j) for i in cells for j in cells if i != j]


def cross_index_set(cells: Sequence[int]) -> list[tuple[int, int, int, int]]:
    """Tuples ``(i, j, l, k)`` with ``i != j``, ``l != k`` and ``(i, j) != (l, k)``."""
    return [
        (i, j, l, k)
        for i, j, l, k in itertools.product(cells, repeat=4)
        if i != j and l != k and (i != l or j != k)
    ]


def cross_index_count(m: int) -> int:
    return m * m * (m - 1) ** 2 - m * (m - 1)


def _occupied(measure, partition: Partition) -> np.ndarray:
    w = measure.cell_weights(partition)
    cells = np.flatnonzero(w > 0)
    if cells.size == 0:
        raise ValueError("state has no weight in any cell")
    return cells


def _cells_or_all(partition: Partition, cells) -> np.ndarray:
    return np.arange(partition.count) if cells is None else np.asarray(cells, dtype=int)


def _images(partition: Partition, cells: np.ndarray, transform: Transform | None):
    lo = np.empty(cells.size)
    hi = np.empty(cells.size)
    for n, c in enumerate(cells):
        lo[n], hi[n] = partition.image(int(c), transform)
    return lo, hi


def _sum_sups(params: KernelParams, lo: np.ndarray, hi: np.ndarray, width: float | None) -> float:
    """Sum of interval suprema with outward-rounded interval deduplication."""
    if lo.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(lo))), float(np.max(np.abs(hi))), 1e-300)
    quantum = 2.0 ** (math.ceil(math.log2(scale)) - 40)
    key_lo = np.floor(lo / quantum)
    key_hi = np.ceil(hi / quantum)
    # intervals straddling zero all share the same supremum
    straddle = (key_lo <= 0) & (key_hi >= 0)
    key_lo = np.where(straddle, 0.0, key_lo)
    key_hi = np.where(straddle, 0.0, key_hi)
    keys, counts = np.unique(np.stack([key_lo, key_hi], axis=1), axis=0, return_counts=True)
    sups = sup_on_gap_intervals(params, keys[:, 0] * quantum, keys[:, 1] * quantum, width)
    return math.fsum(counts * sups)


def k_term(
    partition: Partition,
    params: KernelParams,
    transform: Transform | None = None,
    cells=None,
    width: float | None = None,
) -> float:
    """Square of the sum over ordered pairs ``i != j`` of the cell-pair suprema."""
    c = _cells_or_all(partition, cells)
    if partition.count < 2:
        raise ValueError("k_term needs at least two cells")
    lo, hi = _images(partition, c, transform)
    i, j = np.meshgrid(np.arange(c.size), np.arange(c.size), indexing="ij")
    mask = i != j
    i, j = i[mask], j[mask]
    s = _sum_sups(params, lo[i] - hi[j], hi[i] - lo[j], width)
    return s * s


def r_cross_term(
    partition: Partition,
    params: KernelParams,
    transform: Transform | None = None,
    cells=None,
    width: float | None = None,
) -> float:
    """Sum over the cross index set of suprema over the combined gap ``(x + w) - (y + v)``."""
    c = _cells_or_all(partition, cells)
    if partition.count < 2:
        raise ValueError("r_cross_term needs at least two cells")
    lo, hi = _images(partition, c, transform)
    m = c.size
    i, j, l, k = (a.ravel() for a in np.meshgrid(*(np.arange(m),) * 4, indexing="ij"))
    mask = (i != j) & (l != k) & ((i != l) | (j != k))
    i, j, l, k = i[mask], j[mask], l[mask], k[mask]
    g_lo = lo[i] + lo[l] - hi[j] - hi[k]
    g_hi = hi[i] + hi[l] - lo[j] - lo[k]
    return _sum_sups(params, g_lo, g_hi, width)


# --------------------------------------------------------------------------
# Dephasing-fluctuation term
# --------------------------------------------------------------------------


def _cell_fluctuation_sup(measure, partition, i, beta_i, T, tau_samples, transform) -> float:
    spread = measure.cell_energy_spread(partition, i, transform)
    n = max(int(tau_samples), math.ceil(16.0 * T * spread / math.pi) + 1)
    taus = np.linspace(0.0, T, n)

    def bracket(tau):
        chi = measure.characteristic(partition, i, tau, transform)
        return 1.0 - np.abs(chi) ** 2 / beta_i**2

    vals = np.asarray(bracket(taus), dtype=float)
    best = float(vals.max())
    step = taus[1] - taus[0]
    for k in np.argsort(vals)[::-1][:REFINE_CANDIDATES]:
        a = max(0.0, taus[k] - step)
        b = min(T, taus[k] + step)
        if b <= a:
            continue
        res = minimize_scalar(lambda t: -float(bracket(t)), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, T)})
        best = max(best, -float(res.fun))
    return min(max(best, 0.0), 1.0)


def f_term(
    measure,
    partition: Partition,
    params: KernelParams,
    tau_samples: int = DEFAULT_TAU_SAMPLES,
    transform: Transform | None = None,
) -> float:
    """``4 max_i sup_{|tau| <= T} (1 - |chi_i(tau)|^2 / beta_i^2)`` over occupied cells.

    ``measure`` is a :class:`SpectralState` or any object with the same
    ``cell_weights``/``characteristic``/``cell_energy_spread`` interface.
    The bracket is even in ``tau``, so only ``[0, T]`` is scanned.
    """
    w = measure.cell_weights(partition)
    cells = _occupied(measure, partition)
    sups = [_cell_fluctuation_sup(measure, partition, int(i), float(w[i]), params.T, tau_samples, transform)
            for i in cells]
    return 4.0 * max(sups)


def assemble_bound(
    measure,
    partition: Partition,
    params: KernelParams,
    transform: Transform | None = None,
    tau_samples: int = DEFAULT_TAU_SAMPLES,
    empirical_sigma_sq: float | None = None,
) -> BoundBreakdown:
    """Observable-independent bound for a pure initial state.

    Coherence sums run over cells with non-zero weight only; blocks touching
    an empty cell vanish identically.
    """
    w = measure.cell_weights(partition)
    cells = _occupied(measure, partition)
    if cells.size >= 2:
        k = k_term(partition, params, transform, cells)
        r = r_cross_term(partition, params, transform, cells)
    else:
        k = r = 0.0
    f = f_term(measure, partition, params, tau_samples, transform)
    return BoundBreakdown(k, f, float(np.sum(w**2)), r, empirical_sigma_sq)


# --------------------------------------------------------------------------
# Uniform-cells example
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ToyParams:
    """``N`` equally weighted cells of width ``delta`` with left ends ``a_points``,
    energies ``p**2``, minimal image separation ``big_d`` and time ``T``."""

    n_cells_occupied: int
    delta: float
    big_d: float
    T: float
    a_points: tuple[float, ...]

    def __post_init__(self):
        if self.n_cells_occupied < 1:
            raise ValueError("need at least one occupied cell")
        if not (self.delta > 0 and self.big_d > 0 and self.T > 0):
            raise ValueError("delta, big_d and T must be positive")
        object.__setattr__(self, "a_points", tuple(float(a) for a in self.a_points))
        if len(self.a_points) != self.n_cells_occupied:
            raise ValueError("need one left endpoint per occupied cell")

    @classmethod
    def from_cells(cls, partition: Partition, cells: Sequence[int], T: float, exponent: float = 2.0) -> "ToyParams":
        a = [partition.cell_bounds(int(c))[0] for c in cells]
        images = sorted((x**exponent, (x + partition.width) ** exponent) for x in a)
        d = min(images[n + 1][0] - images[n][1] for n in range(len(images) - 1)) if len(a) > 1 else 1.0
        return cls(len(a), partition.width, d, T, tuple(a))


def phase_average(tau: float, delta: float, a: float) -> complex:
    """``g = int_0^1 exp(-i tau (delta x + a)^2) dx`` by adaptive quadrature."""
    # subtract the constant phase tau*a^2 so the integrand varies slowly
    def phase(x):
        return tau * (delta * x * (delta * x + 2.0 * a))

    limit = max(50, int(abs(phase(1.0)) / math.pi) + 50)
    re = quad(lambda x: math.cos(phase(x)), 0.0, 1.0, limit=limit, epsabs=1e-14, epsrel=1e-12)[0]
    im = quad(lambda x: -math.sin(phase(x)), 0.0, 1.0, limit=limit, epsabs=1e-14, epsrel=1e-12)[0]
    return complex(re, im) * complex(math.cos(tau * a * a), -math.sin(tau * a * a))


@dataclass(frozen=True)
class ToyClosedForm:
    height: float
    envelope_term: float
    coherence_term: float
    beta_term: float
    tau_star: float
    a_star: float
    g_modulus: float

    @property
    def total(self) -> float:
        return self.envelope_term + self.coherence_term + self.beta_term


def maximize_phase_loss(toy: ToyParams, tau_samples: int = DEFAULT_TAU_SAMPLES) -> tuple[float, float, float]:
    """Grid search plus bounded golden-section refinement of ``1 - |g(tau, a)|^2``."""
    best = (-1.0, 0.0, toy.a_points[0])
    for a in toy.a_points:
        spread = (a + toy.delta) ** 2 - a * a
        n = max(tau_samples, math.ceil(16.0 * toy.T * spread / math.pi) + 1)
        taus = np.linspace(0.0, toy.T, n)
        loss = lambda t: 1.0 - abs(phase_average(float(t), toy.delta, a)) ** 2
        vals = np.array([loss(t) for t in taus])
        step = taus[1] - taus[0]
        for k in np.argsort(vals)[::-1][:REFINE_CANDIDATES]:
            cand = (float(vals[k]), float(taus[k]), a)
            lo, hi = max(0.0, taus[k] - step), min(toy.T, taus[k] + step)
            res = minimize_scalar(lambda t: -loss(t), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12 * max(1.0, toy.T)})
            if -res.fun > cand[0]:
                cand = (float(-res.fun), float(res.x), a)
            if cand[0] > best[0]:
                best = cand
    return best


def toy_closed_form(toy: ToyParams, tau_samples: int = DEFAULT_TAU_SAMPLES) -> ToyClosedForm:
    """``3 N^4 H (1 + H) + 12 (1 - |g|^2) + 3 / N`` for the normalized uniform state."""
    h = toy_envelope_height(toy.delta, toy.big_d, toy.T)
    n = toy.n_cells_occupied
    loss, tau_star, a_star = maximize_phase_loss(toy, tau_samples)
    loss = min(max(loss, 0.0), 1.0)
    return ToyClosedForm(
        height=h,
        envelope_term=3.0 * n**4 * h * (1.0 + h),
        coherence_term=12.0 * loss,
        beta_term=3.0 / n,
        tau_star=tau_star,
        a_star=a_star,
        g_modulus=math.sqrt(1.0 - loss),
    )


def envelope_substituted_bound(measure, partition: Partition, toy: ToyParams, tau_samples: int = DEFAULT_TAU_SAMPLES,
                               transform: Transform | None = None) -> BoundBreakdown:
    """Generic bound with every coherence supremum replaced by the envelope at ``D``.

    Pair and tuple counts are relaxed to ``N^2`` and ``N^4``.
    """
    h = toy_envelope_height(toy.delta, toy.big_d, toy.T)
    n = toy.n_cells_occupied
    params = KernelParams(toy.T, toy.delta)
    w = measure.cell_weights(partition)
    f = f_term(measure, partition, params, tau_samples, transform)
    return BoundBreakdown((n * n * h) ** 2, f, float(np.sum(w**2)), n**4 * h)


# --------------------------------------------------------------------------
# Finite-dimensional baseline
# --------------------------------------------------------------------------


class DegenerateGapsError(ValueError):
    """Raised when two distinct level pairs share an energy gap."""


GAP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FiniteDimSystem:
    """Hamiltonian ``sum_n lambda_n P_n`` in its eigenbasis with initial state ``rho0``."""

    eigenvalues: np.ndarray
    ranks: tuple[int, ...]
    rho0: DensityMatrix

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float)
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if lam.ndim != 1 or lam.size != len(self.ranks):
            raise ValueError("need one rank per eigenvalue")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("eigenvalues must be distinct and sorted ascending")
        if any(r < 1 for r in self.ranks):
            raise ValueError("ranks must be positive")
        if sum(self.ranks) != self.rho0.dim:
            raise ValueError("projector ranks do not sum to the state dimension")

    @property
    def dim(self) -> int:
        return sum(self.ranks)

    def level_slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.ranks)])
        return [slice(int(edges[n]), int(edges[n + 1])) for n in range(len(self.ranks))]

    def level_energies(self) -> np.ndarray:
        return np.repeat(self.eigenvalues, self.ranks)

    def populations(self) -> np.ndarray:
        m = self.rho0.matrix
        return np.array([np.trace(m[s, s]).real for s in self.level_slices()])

    def dephased(self) -> np.ndarray:
        out = np.zeros_like(self.rho0.matrix)
        for s in self.level_slices():
            out[s, s] = self.rho0.matrix[s, s]
        return out


def has_degenerate_gaps(eigenvalues, tol: float = GAP_TOL) -> bool:
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.size
    gaps = np.array([lam[a] - lam[b] for a in range(n) for b in range(n) if a != b])
    if gaps.size < 2:
        return False
    g = np.sort(gaps)
    return bool(np.any(np.diff(g) <= tol))


@dataclass(frozen=True)
class ShortBound:
    sigma_sq_infinity_bound: float
    d_eff: float
    d_eff_from_purity: float


def effective_dimension(system: FiniteDimSystem) -> float:
    return 1.0 / float(np.sum(system.populations() ** 2))


def short_bound_finite_dim(system: FiniteDimSystem, observable) -> ShortBound:
    """``||A||^2 / d_eff`` with ``d_eff = 1 / sum_n Tr(P_n rho0)^2``."""
    if has_degenerate_gaps(system.eigenvalues):
        raise DegenerateGapsError("energy gaps are degenerate; the bound does not apply as stated")
    a = np.asarray(getattr(observable, "kernel", observable))
    if a.shape != (system.dim, system.dim):
        raise ValueError("observable dimension does not match the system")
    d_eff = effective_dimension(system)
    return ShortBound(operator_norm(a) ** 2 / d_eff, d_eff, 1.0 / purity(system.dephased()))


def infinite_time_sigma_sq(system: FiniteDimSystem, observable) -> float:
    """Infinite-time fluctuation ``sum_{n != m} |Tr(A P_n rho0 P_m)|^2`` (non-degenerate gaps)."""
    a = np.asarray(getattr(observable, "kernel", observable))
    rho = system.rho0.matrix
    sl = system.level_slices()
    total = 0.0
    for n, sn in enumerate(sl):
        for m, sm in enumerate(sl):
            if n != m:
                total += abs(np.sum(a[sm, sn] * rho[sn, sm].T)) ** 2
    return float(total)
