"""Brute-force oracle: exact discretized dynamics, time-quadrature averages,
trace norms and direct numerical checks of each intermediate inequality.

The fluctuation estimates here use explicit time quadrature and dense
matrices.  Bound-side quantities come only from closed-form kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import quadrature
from .bounds import cross_index_set, f_term
from .kernels import (
    KernelParams,
    cesaro_kernel,
    cesaro_kernel_derivative,
    pair_gap_interval,
    sup_on_gap_interval,
)
from .spectral import (
    DensityMatrix,
    Observable,
    Partition,
    SpectralState,
    Transform,
    dephase,
    energies,
)

TIME_CHUNK = 2048
DOUBLED_DIM_CAP = 4096


class UndersamplingError(ValueError):
    """Time grid too coarse for the spectral bandwidth."""

    def __init__(self, requested: int, required: int):
        super().__init__(f"n_time_samples={requested} under-resolves the spectrum; need at least {required}")
        self.requested = requested
        self.required = required


class DimensionCapError(ValueError):
    """Doubled-space matrix would exceed the configured dimension cap."""


# --------------------------------------------------------------------------
# Dynamics
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EvolvedState:
    base: SpectralState
    t: float
    transform: Transform | None = None

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("evolution time must be non-negative")

    @property
    def coeffs(self) -> np.ndarray:
        e = energies(self.base.grid, self.transform)
        return self.base.coeffs * np.exp(-1j * e * self.t)

    @property
    def amplitudes(self) -> np.ndarray:
        return self.coeffs / np.sqrt(self.base.grid.weights)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def evolve(state: SpectralState, t: float, transform: Transform | None = None) -> EvolvedState:
    return EvolvedState(state, float(t), transform)


@dataclass(frozen=True, eq=False)
class CesaroState:
    matrix: DensityMatrix
    T: float


def cesaro_average_state(state: SpectralState, T: float, transform: Transform | None = None) -> CesaroState:
    """Closed-form time average ``c_k conj(c_l) K(E_k - E_l, T)``."""
    c = state.coeffs
    e = energies(state.grid, transform)
    rho = np.outer(c, c.conj()) * cesaro_kernel(e[:, None] - e[None, :], T)
    return CesaroState(DensityMatrix(rho, state.grid), float(T))


def time_averaged_density(state: SpectralState, T: float, n_gauss: int = 200, transform: Transform | None = None) -> np.ndarray:
    """Direct Gauss-Legendre time average of ``rho_t`` (``n_gauss`` nodes per panel-free rule)."""
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    t = 0.5 * T * (x + 1.0)
    w = 0.5 * w
    e = energies(state.grid, transform)
    ct = state.coeffs[None, :] * np.exp(-1j * t[:, None] * e[None, :])
    return np.einsum("t,tk,tl->kl", w, ct, ct.conj())


# --------------------------------------------------------------------------
# Fluctuations
# --------------------------------------------------------------------------


def _support_restricted(state: SpectralState, matrices: Sequence[np.ndarray]):
    s = state.support
    return s, [np.asarray(m)[np.ix_(s, s)] for m in matrices]


def _bandwidth(e: np.ndarray) -> float:
    return float(e.max() - e.min()) if e.size else 0.0


def expectation_series(coeffs: np.ndarray, energies_: np.ndarray, matrices: Sequence[np.ndarray], t: np.ndarray) -> np.ndarray:
    """``conj(c(t)) . M c(t)`` for each matrix and time; shape ``(len(matrices), len(t))``."""
    out = np.empty((len(matrices), t.size), dtype=complex)
    for start in range(0, t.size, TIME_CHUNK):
        tt = t[start:start + TIME_CHUNK]
        ct = coeffs[None, :] * np.exp(-1j * tt[:, None] * energies_[None, :])
        for n, m in enumerate(matrices):
            out[n, start:start + TIME_CHUNK] = np.einsum("tk,tk->t", ct.conj(), ct @ m.T)
    return out


def _time_rule(state: SpectralState, T: float, n_time_samples, transform):
    e_all = energies(state.grid, transform)
    span = _bandwidth(e_all)
    required = quadrature.minimum_time_samples(T, span)
    if n_time_samples is not None and n_time_samples < required:
        raise UndersamplingError(int(n_time_samples), required)
    return quadrature.time_average_rule(T, span, n_time_samples)


def empirical_fluctuations(
    state: SpectralState,
    matrices: Sequence[np.ndarray],
    T: float,
    n_time_samples: int | None = None,
    transform: Transform | None = None,
) -> np.ndarray:
    """Time-averaged squared deviation of ``Tr(M rho_t)`` from its time mean, per matrix."""
    t, w = _time_rule(state, T, n_time_samples, transform)
    s, mats = _support_restricted(state, matrices)
    e = energies(state.grid, transform)[s]
    v = expectation_series(state.coeffs[s], e, mats, t)
    mean = v @ w
    return np.abs(v - mean[:, None]) ** 2 @ w


def empirical_sigma_sq(
    state: SpectralState,
    observable: Observable,
    T: float,
    n_time_samples: int | None = None,
    transform: Transform | None = None,
) -> float:
    """``<< |Tr(A rho_t) - Tr(A <<rho>>_T)|^2 >>_T`` by composite Gauss-Legendre quadrature."""
    kernel = observable.kernel if isinstance(observable, Observable) else np.asarray(observable)
    return float(empirical_fluctuations(state, [kernel], T, n_time_samples, transform)[0])


# --------------------------------------------------------------------------
# Norms
# --------------------------------------------------------------------------


def trace_norm(matrix) -> float:
    """Sum of singular values."""
    m = np.asarray(matrix)
    if m.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def trace_norm_via_eigh(matrix) -> float:
    """Trace norm from the eigenvalues of ``M^dagger M`` (independent route)."""
    m = np.asarray(matrix)
    if m.size == 0:
        return 0.0
    gram = m @ m.conj().T if m.shape[0] <= m.shape[1] else m.conj().T @ m
    ev = np.linalg.eigvalsh(gram)
    # eigenvalues at rounding level are zero singular values squared
    ev[ev < ev.max() * gram.shape[0] * np.finfo(float).eps] = 0.0
    return float(np.sum(np.sqrt(ev)))


def psd_sqrt(matrix) -> np.ndarray:
    m = np.asarray(matrix)
    ev, vec = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (vec * np.sqrt(np.clip(ev, 0.0, None))) @ vec.conj().T


# --------------------------------------------------------------------------
# Coherence-block estimates
# --------------------------------------------------------------------------


def _slope_on_cell(partition: Partition, j: int, transform: Transform | None) -> float:
    if transform is None:
        return 1.0
    lo, hi = partition.cell_bounds(j)
    return transform.max_slope(lo, hi)


def verify_lemma1(
    state: SpectralState,
    partition: Partition,
    time: float,
    i: int,
    j: int,
    kernel: str = "cesaro",
    transform: Transform | None = None,
) -> tuple[float, float]:
    """Trace norm of the ``(i, j)`` coherence block against its kernel bound.

    ``kernel="cesaro"`` uses the time-averaged state at ``T = time``;
    ``kernel="instant"`` uses ``rho_t`` at ``t = time``.  The derivative term
    uses ``d/dp`` of the kernel, so a transform contributes its slope on cell ``j``.
    Returns ``(0.0, 0.0)`` when either cell carries no weight.
    """
    if i == j:
        raise ValueError("verify_lemma1 needs distinct cells")
    si, sj = partition.cell_slice(i), partition.cell_slice(j)
    ci, cj = state.coeffs[si], state.coeffs[sj]
    if not (np.any(ci != 0) and np.any(cj != 0)):
        return 0.0, 0.0
    e = energies(state.grid, transform)
    width = partition.width * _slope_on_cell(partition, j, transform)
    if kernel == "cesaro":
        block = np.outer(ci, cj.conj()) * cesaro_kernel(e[si][:, None] - e[sj][None, :], time)
        lhs = trace_norm(block)
        lo, hi = pair_gap_interval(partition, i, j, transform)
        rhs = sup_on_gap_interval(KernelParams(time, partition.width), lo, hi, width)
    elif kernel == "instant":
        phase_i = ci * np.exp(-1j * e[si] * time)
        phase_j = cj * np.exp(-1j * e[sj] * time)
        lhs = trace_norm(np.outer(phase_i, phase_j.conj()))
        rhs = 2.0 + width * time
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return lhs, float(rhs)


def _kernel_and_slope(kind: str, t: float):
    if kind == "constant":
        return (lambda x, y: np.ones(np.broadcast(x, y).shape, dtype=complex),
                lambda x, y: np.zeros(np.broadcast(x, y).shape, dtype=complex))
    if kind == "phase":
        return (lambda x, y: np.exp(-1j * t * (x - y)),
                lambda x, y: 1j * t * np.exp(-1j * t * (x - y)))
    if kind == "cesaro":
        return (lambda x, y: cesaro_kernel(x - y, t),
                lambda x, y: -cesaro_kernel_derivative(x - y, t))
    raise ValueError(f"unknown kernel {kind!r}")


def verify_appendix_a_identity(
    state: SpectralState,
    partition: Partition,
    i: int,
    j: int,
    t: float,
    kernel: str = "phase",
    n_sub: int = 1,
) -> float:
    """Max entrywise residual of the integration-by-parts representation of a coherence block.

    Left side: ``sum_{y_m in cell j} T(y_m) rho0 E({y_m})`` with the diagonal
    operator ``T(y) = sum_{x in cell i} Gamma(x, y) E({x})``.  Right side:
    boundary terms minus ``int J'(y) P((-inf, y]) dy``, integrated piecewise
    between spectral atoms with an ``n_sub``-panel trapezoid rule.
    """
    gamma, d_gamma = _kernel_and_slope(kernel, t)
    x_all = state.grid.nodes
    si, sj = partition.cell_slice(i), partition.cell_slice(j)
    a_j, b_j = partition.cell_bounds(j)
    rho = state.density_matrix().matrix
    x_i = x_all[si]
    n_cols = sj.stop
    rho_rows = rho[si, :n_cols]

    lhs = np.zeros((x_i.size, n_cols), dtype=complex)
    cols = np.arange(sj.start, sj.stop)
    lhs[:, cols] = gamma(x_i[:, None], x_all[cols][None, :]) * rho_rows[:, cols]

    def cumulative_projector_mask(y):
        return (x_all[:n_cols] <= y).astype(float)

    def j_of(y):
        return gamma(x_i, y)[:, None] * rho_rows

    def j_prime(y):
        return d_gamma(x_i, y)[:, None] * rho_rows

    rhs = j_of(b_j) * cumulative_projector_mask(b_j) - j_of(a_j) * cumulative_projector_mask(a_j)
    breaks = np.concatenate([[a_j], x_all[sj], [b_j]])
    for y0, y1 in zip(breaks[:-1], breaks[1:]):
        mask = cumulative_projector_mask(y0)
        ys = np.linspace(y0, y1, n_sub + 1)
        h = (y1 - y0) / n_sub
        integral = sum((0.5 if k in (0, n_sub) else 1.0) * j_prime(y) for k, y in enumerate(ys)) * h
        rhs = rhs - integral * mask
    return float(np.max(np.abs(lhs - rhs)))


def integration_by_parts_orders(state, partition, i, j, t, kernel="phase", levels=(1, 2, 4)) -> tuple[list[float], list[float]]:
    """Residuals at successive ``n_sub`` levels and the observed convergence orders."""
    res = [verify_appendix_a_identity(state, partition, i, j, t, kernel, n) for n in levels]
    orders = [
        math.log(res[k] / res[k + 1]) / math.log(levels[k + 1] / levels[k]) if res[k + 1] > 0 else math.nan
        for k in range(len(res) - 1)
    ]
    return res, orders


def verify_operator_norm_estimate(partition: Partition, i: int, y: float, t: float, kernel: str = "cesaro",
                                  n_dense: int = 4097) -> tuple[float, float]:
    """``(||T(y)||, sup_{x in cell i} |Gamma(x, y)|)``; the first never exceeds the second."""
    gamma, _ = _kernel_and_slope(kernel, t)
    x_nodes = partition.grid.nodes[partition.cell_slice(i)]
    op = np.diag(gamma(x_nodes, y))
    op_norm = float(np.linalg.norm(op, 2))
    lo, hi = partition.cell_bounds(i)
    xs = np.linspace(lo, hi, n_dense)
    mag = np.abs(gamma(xs, y))
    k = int(np.argmax(mag))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
    res = minimize_scalar(lambda x: -abs(complex(gamma(np.float64(x), y))), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-14})
    return op_norm, float(max(mag.max(), -res.fun))


def verify_lemma2(
    state: SpectralState,
    partition: Partition,
    T: float,
    observables: Sequence,
    transform: Transform | None = None,
    n_time_samples: int | None = None,
    tau_samples: int = 256,
) -> tuple[float, float]:
    """Fluctuation of the block-diagonal part against the characteristic-function bound."""
    if len(observables) == 0:
        raise ValueError("observable family is empty")
    mats = [dephase(np.asarray(getattr(a, "kernel", a)), partition) for a in observables]
    lhs = float(np.max(empirical_fluctuations(state, mats, T, n_time_samples, transform)))
    rhs = f_term(state, partition, KernelParams(T, partition.width), tau_samples, transform)
    return lhs, rhs


def verify_fidelity_inequality(a, b) -> tuple[float, float]:
    """``(||a - b||_1, sqrt(Tr(a + b)^2 - 4 F^2))`` with ``F = ||sqrt(a) sqrt(b)||_1``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("need square matrices of equal shape")
    for m in (a, b):
        if np.max(np.abs(m - m.conj().T)) > 1e-10 or np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] < -1e-10:
            raise ValueError("inputs must be positive semidefinite")
    fid = trace_norm(psd_sqrt(a) @ psd_sqrt(b))
    tr = np.trace(a + b).real
    return trace_norm(a - b), math.sqrt(max(tr * tr - 4.0 * fid * fid, 0.0))


def verify_lemma3(
    state: SpectralState,
    partition: Partition,
    T: float,
    observable,
    transform: Transform | None = None,
    n_time_samples: int | None = None,
    dim_cap: int = DOUBLED_DIM_CAP,
) -> tuple[float, float]:
    """Off-block-diagonal fluctuation against trace norms of doubled-space blocks.

    The doubled state ``rho0 (x) rho0`` is rank one, so restricting the
    doubled grid to the support of the state is exact.
    """
    s = state.support
    if s.size * s.size > dim_cap:
        raise DimensionCapError(f"doubled dimension {s.size ** 2} exceeds cap {dim_cap}")
    a = np.asarray(getattr(observable, "kernel", observable))
    off = a - dephase(a, partition)
    t, w = _time_rule(state, T, n_time_samples, transform)
    e_full = energies(state.grid, transform)
    v = expectation_series(state.coeffs[s], e_full[s], [off[np.ix_(s, s)]], t)[0]
    lhs = float(np.abs(v) ** 2 @ w)

    cell_of = partition.cell_of_nodes()[s]
    c = state.coeffs[s]
    e = e_full[s]
    betas = np.array([np.sum(np.abs(c[cell_of == m]) ** 2) for m in range(partition.count)])
    cells = [m for m in range(partition.count) if betas[m] > 0]
    idx = {m: np.flatnonzero(cell_of == m) for m in cells}
    total = 0.0
    for i, j, l, k in cross_index_set(cells):
        rows_a = np.kron(c[idx[i]], c[idx[l]])
        rows_e = np.add.outer(e[idx[i]], e[idx[l]]).ravel()
        cols_a = np.kron(c[idx[j]], c[idx[k]])
        cols_e = np.add.outer(e[idx[j]], e[idx[k]]).ravel()
        block = np.outer(rows_a, cols_a.conj()) * cesaro_kernel(rows_e[:, None] - cols_e[None, :], T)
        total += trace_norm(block)
    return lhs, float(total + np.sum(betas**2))


# --------------------------------------------------------------------------
# Finite-dimensional dephasing
# --------------------------------------------------------------------------


def finite_dim_dephasing(system, T: float) -> float:
    """Hilbert-Schmidt distance between the ``T``-averaged state and the dephased state.

    ``T = 0`` means no averaging.
    """
    rho = system.rho0.matrix
    e = system.level_energies()
    gaps = e[:, None] - e[None, :]
    damp = np.ones_like(gaps, dtype=complex) if T == 0 else cesaro_kernel(gaps, T)
    diff = rho * damp - system.dephased()
    return float(np.linalg.norm(diff))


def finite_dim_time_average(system, T: float, n_gauss: int = 400) -> np.ndarray:
    """Gauss-Legendre time average of ``U_t rho0 U_t^dagger`` (brute-force route)."""
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    t = 0.5 * T * (x + 1.0)
    e = system.level_energies()
    ph = np.exp(-1j * t[:, None] * e[None, :])
    return np.einsum("t,tk,kl,tl->kl", 0.5 * w, ph, system.rho0.matrix, ph.conj())


def dephasing_rate_slope(system, T_start: float, decades: float = 1.0, n_points: int = 64) -> float:
    """Least-squares slope of ``log distance`` against ``log T`` over the given span."""
    ts = np.geomspace(T_start, T_start * 10.0**decades, n_points)
    d = np.array([finite_dim_dephasing(system, float(t)) for t in ts])
    if np.any(d <= 0):
        raise ValueError("distance vanished; state is already dephased")
    slope, _ = np.polyfit(np.log(ts), np.log(d), 1)
    return float(slope)
