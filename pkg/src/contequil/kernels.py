"""Decoherence kernels: sinc, the finite-time phase average and the
coherence bound ``2|sinc| + width * |d kernel / d gap|`` with its envelope.

Every function is vectorized over the gap argument.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import Partition, Transform

TAYLOR_CUTOFF = 1e-4
# max_u |sinc'(u)|, attained near u = 2.0816
SINC_SLOPE_MAX = 0.43619


def sinc(u):
    """Unnormalized ``sin(u)/u`` with ``sinc(0) = 1``."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < TAYLOR_CUTOFF
    safe = np.where(small, 1.0, u)
    u2 = u * u
    taylor = 1.0 - u2 / 6.0 + u2 * u2 / 120.0 - u2 * u2 * u2 / 5040.0
    out = np.where(small, taylor, np.sin(safe) / safe)
    return out[()] if out.ndim == 0 else out


def sinc_prime(u):
    """Derivative ``(cos u - sinc u)/u`` with value 0 at the origin."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < TAYLOR_CUTOFF
    safe = np.where(small, 1.0, u)
    u2 = u * u
    taylor = -u / 3.0 + u * u2 / 30.0 - u * u2 * u2 / 840.0
    out = np.where(small, taylor, (np.cos(safe) - np.sin(safe) / safe) / safe)
    return out[()] if out.ndim == 0 else out


def _check_time(T):
    if np.any(np.asarray(T) <= 0):
        raise ValueError("averaging time T must be positive")


def cesaro_kernel(omega, T):
    """Finite-time average ``(1/T) int_0^T exp(-i t omega) dt``."""
    _check_time(T)
    u = 0.5 * np.asarray(T, dtype=float) * np.asarray(omega, dtype=float)
    return np.exp(-1j * u) * sinc(u)


def cesaro_kernel_derivative(omega, T):
    """``d/d omega`` of :func:`cesaro_kernel`."""
    _check_time(T)
    T = np.asarray(T, dtype=float)
    u = 0.5 * T * np.asarray(omega, dtype=float)
    return np.exp(-1j * u) * (0.5 * T) * (-1j * sinc(u) + sinc_prime(u))


def kernel_y_derivative_magnitude(omega, T):
    """``|d/d omega|`` of the kernel; equals ``T/2`` at ``omega = 0``."""
    _check_time(T)
    T = np.asarray(T, dtype=float)
    u = 0.5 * T * np.asarray(omega, dtype=float)
    return 0.5 * T * np.hypot(sinc(u), sinc_prime(u))


@dataclass(frozen=True)
class KernelParams:
    """Averaging time ``T`` and cell width ``delta``."""

    T: float
    delta: float

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive and finite, got {self.T!r}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta!r}")


def coherence_bound_of_gap(params: KernelParams, gap, width: float | None = None):
    """Coherence bound as a function of the energy gap ``x - y``."""
    w = params.delta if width is None else width
    g = np.asarray(gap, dtype=float)
    return 2.0 * np.abs(sinc(0.5 * params.T * g)) + w * kernel_y_derivative_magnitude(g, params.T)


def coherence_bound(params: KernelParams, x, y):
    """``2|sinc((x-y)T/2)| + delta * |d_y kernel(x-y)|``."""
    return coherence_bound_of_gap(params, np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


def coherence_bound_envelope(params: KernelParams, gap):
    """Decaying majorant ``(4+2 delta T)/(|g|T) + 2 delta T/(g T)^2`` for ``g != 0``."""
    g = np.abs(np.asarray(gap, dtype=float))
    if np.any(g == 0):
        raise ValueError("envelope diverges at zero gap")
    T, d = params.T, params.delta
    gt = g * T
    return (4.0 + 2.0 * d * T) / gt + 2.0 * d * T / (gt * gt)


def toy_envelope_height(delta: float, min_gap: float, T: float) -> float:
    """Envelope evaluated at the minimal inter-cell gap ``D``."""
    return float(coherence_bound_envelope(KernelParams(T, delta), min_gap))


# --------------------------------------------------------------------------
# Suprema over gap intervals
# --------------------------------------------------------------------------

MIN_SAMPLES = 16
SAMPLES_PER_PERIOD = 32
MAX_SAMPLES = 200_000


def _slope_bound(params: KernelParams, width: float, g_left):
    """Upper bound on ``|d/dg|`` of the coherence bound for ``|g| >= g_left``."""
    T = params.T
    g = np.abs(g_left)
    u = 0.5 * T * g
    with np.errstate(divide="ignore"):
        sinc_part = T * np.minimum(SINC_SLOPE_MAX, 1.0 / u + 1.0 / (u * u))
        second = np.minimum(T * T / 3.0, T / g + 2.0 / g**2 + 4.0 / (T * g**3))
    return sinc_part + width * second


def sup_on_gap_interval(params: KernelParams, gap_lo: float, gap_hi: float, width: float | None = None) -> float:
    """Certified upper estimate of ``sup`` of the coherence bound for gaps in ``[gap_lo, gap_hi]``.

    Samples at ``max(16, 32 per sinc period)`` points, then bounds each
    sub-interval by its endpoint values plus a local Lipschitz slack and
    subdivides the sub-intervals that could still beat the sampled maximum.
    The result never undershoots the true supremum and typically exceeds it
    by about 1e-10 relative.  Far tails beyond the sampling budget are covered
    by the envelope, which is decreasing and dominates the bound.
    """
    if gap_hi < gap_lo:
        raise ValueError("empty gap interval")
    w = params.delta if width is None else float(width)
    if gap_lo <= 0.0 <= gap_hi:
        return float(coherence_bound_of_gap(params, 0.0, w))
    a, b = sorted((abs(gap_lo), abs(gap_hi)))
    return _sup_positive(params.T, params.delta, w, a, b)


def sup_on_gap_intervals(params: KernelParams, gap_lo, gap_hi, width: float | None = None) -> np.ndarray:
    """Vectorized :func:`sup_on_gap_interval` over arrays of intervals."""
    lo = np.asarray(gap_lo, dtype=float).ravel()
    hi = np.asarray(gap_hi, dtype=float).ravel()
    if np.any(hi < lo):
        raise ValueError("empty gap interval")
    w = params.delta if width is None else float(width)
    out = np.empty(lo.size)
    straddle = (lo <= 0.0) & (hi >= 0.0)
    out[straddle] = float(coherence_bound_of_gap(params, 0.0, w))
    rest = np.flatnonzero(~straddle)
    a = np.minimum(np.abs(lo[rest]), np.abs(hi[rest]))
    b = np.maximum(np.abs(lo[rest]), np.abs(hi[rest]))
    out[rest] = _sup_positive_batch(params, w, a, b)
    return out


@lru_cache(maxsize=200_000)
def _sup_positive(T: float, delta: float, width: float, a: float, b: float) -> float:
    return float(_sup_positive_batch(KernelParams(T, delta), width, np.array([a]), np.array([b]))[0])


BATCH_SAMPLES = 2_000_000


def _sup_positive_batch(params: KernelParams, width: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Suprema over ``[a_k, b_k]`` with ``0 < a_k <= b_k``, processed in memory-bounded chunks."""
    T = params.T
    period = 2.0 * math.pi / T
    n = np.maximum(MIN_SAMPLES, np.ceil(SAMPLES_PER_PERIOD * (b - a) / period) + 1).astype(np.int64)
    n = np.where(b == a, 1, n)
    # beyond the sampling budget the decreasing envelope covers the tail
    truncated = n > MAX_SAMPLES
    stop = np.where(truncated, a + (MAX_SAMPLES - 1) * period / SAMPLES_PER_PERIOD, b)
    n = np.minimum(n, MAX_SAMPLES)
    tail = np.zeros(a.size)
    if truncated.any():
        tail[truncated] = coherence_bound_envelope(KernelParams(T, width), stop[truncated])
    out = np.empty(a.size)
    start = 0
    while start < a.size:
        end = start + 1
        total = int(n[start])
        while end < a.size and total + n[end] <= BATCH_SAMPLES:
            total += int(n[end])
            end += 1
        sl = slice(start, end)
        out[sl] = np.maximum(_sample_and_refine(params, width, a[sl], stop[sl], n[sl]), tail[sl])
        start = end
    return out


def _sample_and_refine(params, width, a, b, n) -> np.ndarray:
    owner = np.repeat(np.arange(a.size), n)
    first = np.concatenate([[0], np.cumsum(n)[:-1]])
    pos = np.arange(owner.size) - first[owner]
    frac = pos / np.maximum(n - 1, 1)[owner]
    pts = a[owner] + (b - a)[owner] * frac
    vals = coherence_bound_of_gap(params, pts, width)
    vals = np.atleast_1d(vals)
    best = np.maximum.reduceat(vals, first)
    inner = pos < (n - 1)[owner]
    left, right = pts[inner], pts[np.flatnonzero(inner) + 1]
    f_left, f_right = vals[inner], vals[np.flatnonzero(inner) + 1]
    return _branch_and_bound(params, width, owner[inner], left, right, f_left, f_right, best)


REFINE_ROUNDS = 12
REFINE_SPLIT = 8
REFINE_RTOL = 1e-10


def _branch_and_bound(params, width, owner, left, right, f_left, f_right, best) -> np.ndarray:
    """Tighten the Lipschitz upper bound by subdividing only promising sub-intervals."""
    frac = np.linspace(0.0, 1.0, REFINE_SPLIT + 1)
    for _ in range(REFINE_ROUNDS + 1):
        upper = 0.5 * (f_left + f_right + _slope_bound(params, width, left) * (right - left))
        keep = upper > best[owner] * (1 + REFINE_RTOL)
        if not keep.any():
            return best * (1 + REFINE_RTOL)
        if _ == REFINE_ROUNDS or keep.sum() * REFINE_SPLIT > MAX_SAMPLES * min(best.size, 16):
            residual = np.zeros_like(best)
            np.maximum.at(residual, owner[keep], upper[keep])
            return np.maximum(best * (1 + REFINE_RTOL), residual)
        owner, lo, hi = owner[keep], left[keep], right[keep]
        pts = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
        vals = coherence_bound_of_gap(params, pts, width)
        np.maximum.at(best, owner, vals.max(axis=1))
        left, right = pts[:, :-1].ravel(), pts[:, 1:].ravel()
        f_left, f_right = vals[:, :-1].ravel(), vals[:, 1:].ravel()
        owner = np.repeat(owner, REFINE_SPLIT)
    raise AssertionError("unreachable")


def sampled_sup_on_gap_interval(params: KernelParams, gap_lo: float, gap_hi: float, n: int = 4001):
    """Plain dense-sample maximum and its argmax (no slack); for diagnostics."""
    g = np.linspace(gap_lo, gap_hi, n)
    v = coherence_bound_of_gap(params, g)
    k = int(np.argmax(v))
    return float(v[k]), float(g[k])


def pair_gap_interval(partition: Partition, i: int, j: int, transform: Transform | None = None) -> tuple[float, float]:
    lo_i, hi_i = partition.image(i, transform)
    lo_j, hi_j = partition.image(j, transform)
    return lo_i - hi_j, hi_i - lo_j


def sup_F_over_cells(
    params: KernelParams,
    partition: Partition,
    i: int,
    j: int,
    transform: Transform | None = None,
    width: float | None = None,
) -> float:
    """Supremum of the coherence bound over ``(x, y)`` in cells ``i`` x ``j``.

    Energies are ``f(x)``, ``f(y)`` for the optional monotone transform.
    ``width`` overrides the cell width multiplying the derivative term.
    """
    if i == j:
        raise ValueError("sup_F_over_cells needs distinct cells")
    lo, hi = pair_gap_interval(partition, i, j, transform)
    return sup_on_gap_interval(params, lo, hi, width)
