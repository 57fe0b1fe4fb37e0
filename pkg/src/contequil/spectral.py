"""Discretized spectra, spectral states, energy-window partitions and the
projector machinery used by every other module.

All amplitudes live in the spectral representation of the Hamiltonian, so
time evolution is a phase multiply.  Density matrices and observables use the
*weighted* basis ``c_k = psi(x_k) * sqrt(w_k)`` so that traces and trace norms
need no quadrature weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

NORM_TOL = 1e-10
TILING_RTOL = 1e-12


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpectrumGrid:
    """Quadrature discretization of a bounded spectrum ``[support_lo, support_hi]``."""

    support_lo: float
    support_hi: float
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float))
        object.__setattr__(self, "weights", _frozen(self.weights, float))
        lo, hi = float(self.support_lo), float(self.support_hi)
        if not (hi > lo >= 0.0):
            raise ValueError(f"invalid support [{lo}, {hi}]")
        x, w = self.nodes, self.weights
        if x.ndim != 1 or x.shape != w.shape or x.size < 2:
            raise ValueError("nodes and weights must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if x[0] < lo or x[-1] > hi:
            raise ValueError("nodes must lie inside the support")
        if abs(w.sum() - (hi - lo)) > TILING_RTOL * (hi - lo):
            raise ValueError("weights must integrate the constant 1 over the support")

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def width(self) -> float:
        return self.support_hi - self.support_lo


def build_uniform_grid(support_lo: float, support_hi: float, n_points: int) -> SpectrumGrid:
    """Midpoint-rule grid with ``n_points`` equal cells on the support."""
    if int(n_points) != n_points or n_points < 2:
        raise ValueError(f"n_points must be an integer >= 2, got {n_points!r}")
    if not support_hi > support_lo >= 0:
        raise ValueError(f"invalid support [{support_lo}, {support_hi}]")
    n = int(n_points)
    h = (support_hi - support_lo) / n
    nodes = support_lo + h * (np.arange(n) + 0.5)
    return SpectrumGrid(float(support_lo), float(support_hi), nodes, np.full(n, h))


# --------------------------------------------------------------------------
# Dynamics: H = f(P) for a monotone f, with the identity as the plain case.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Transform:
    """Smooth monotone map from the spectral variable to energy.

    ``func`` and ``derivative`` must be vectorized.  The identity transform
    reproduces the plain continuous-spectrum setting.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]

    def __call__(self, p):
        return self.func(np.asarray(p, dtype=float))

    def image(self, lo: float, hi: float) -> tuple[float, float]:
        a, b = float(self(lo)), float(self(hi))
        return (a, b) if a <= b else (b, a)

    def max_slope(self, lo: float, hi: float, n: int = 257) -> float:
        return float(np.max(np.abs(self.derivative(np.linspace(lo, hi, n)))))


def identity_transform() -> Transform:
    return Transform("identity", lambda p: np.asarray(p, dtype=float), lambda p: np.ones_like(p, dtype=float))


def power_law_transform(exponent: float) -> Transform:
    """``f(p) = p**exponent`` on ``p >= 0``."""
    k = float(exponent)
    if k <= 0:
        raise ValueError("power-law exponent must be positive")
    return Transform(
        f"power-law(k={k:g})",
        lambda p: np.power(p, k),
        lambda p: k * np.power(p, k - 1.0),
    )


def table_transform(p_points: Sequence[float], energies: Sequence[float]) -> Transform:
    """Piecewise-linear monotone transform through tabulated points."""
    p = np.asarray(p_points, dtype=float)
    e = np.asarray(energies, dtype=float)
    if p.ndim != 1 or p.shape != e.shape or p.size < 2:
        raise ValueError("table needs matching 1-d arrays with at least two points")
    if np.any(np.diff(p) <= 0):
        raise ValueError("table abscissae must be strictly increasing")
    de = np.diff(e)
    if not (np.all(de > 0) or np.all(de < 0)):
        raise ValueError("table energies must be strictly monotone")
    slopes = de / np.diff(p)

    def deriv(x):
        idx = np.clip(np.searchsorted(p, x, side="right") - 1, 0, slopes.size - 1)
        return slopes[idx]

    return Transform("table", lambda x: np.interp(x, p, e), deriv)


def energies(grid: SpectrumGrid, transform: Transform | None = None) -> np.ndarray:
    return grid.nodes if transform is None else transform(grid.nodes)


# --------------------------------------------------------------------------
# States and partitions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Unit-norm amplitude profile ``psi(x_k)`` on a grid."""

    grid: SpectrumGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = _frozen(self.amplitudes, complex)
        if amp.shape != self.grid.nodes.shape:
            raise ValueError("amplitude vector does not match the grid")
        norm2 = float(np.sum(np.abs(amp) ** 2 * self.grid.weights))
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm2!r}); use normalize()")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def coeffs(self) -> np.ndarray:
        """Amplitudes in the weighted basis, ``psi(x_k) sqrt(w_k)``."""
        return self.amplitudes * np.sqrt(self.grid.weights)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2 * self.grid.weights

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.amplitudes != 0)

    def density_matrix(self) -> "DensityMatrix":
        c = self.coeffs
        return DensityMatrix(np.outer(c, c.conj()), self.grid)

    # duck-typed measure interface shared with UniformCellDensity
    def cell_weights(self, partition: "Partition") -> np.ndarray:
        return betas(self, partition)

    def characteristic(self, partition: "Partition", i: int, tau, transform: Transform | None = None):
        return characteristic_integral(self, partition, i, tau, transform)

    def cell_energy_spread(self, partition: "Partition", i: int, transform: Transform | None = None) -> float:
        e = energies(self.grid, transform)[partition.cell_slice(i)]
        return float(e.max() - e.min()) if e.size else 0.0


def normalize(state_or_grid, amplitudes=None) -> SpectralState:
    """Return the unit-norm state along the given amplitude profile.

    Accepts either an existing :class:`SpectralState` or ``(grid, amplitudes)``.
    """
    if isinstance(state_or_grid, SpectralState):
        grid, amp = state_or_grid.grid, state_or_grid.amplitudes
    else:
        grid, amp = state_or_grid, np.asarray(amplitudes, dtype=complex)
    norm2 = float(np.sum(np.abs(amp) ** 2 * grid.weights))
    if not np.isfinite(norm2) or norm2 <= 0.0:
        raise ValueError("cannot normalize the zero state")
    return SpectralState(grid, amp / np.sqrt(norm2))


@dataclass(frozen=True, eq=False)
class Partition:
    """Uniform cells of width ``width`` exactly tiling the grid support."""

    grid: SpectrumGrid
    cell_lo: np.ndarray
    width: float
    count: int
    _slices: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "cell_lo", _frozen(self.cell_lo, float))
        g = self.grid
        if self.width <= 0 or self.count < 1:
            raise ValueError("partition needs a positive width and at least one cell")
        if abs(self.count * self.width - g.width) > TILING_RTOL * g.width:
            raise ValueError(
                f"cells do not tile the support: {self.count} x {self.width!r} != {g.width!r}"
            )
        if g.size % self.count:
            raise ValueError(
                f"grid resolution {g.size} is not a multiple of the cell count {self.count}"
            )
        # midpoint nodes never sit on a cell boundary, so floor() is exact here
        idx = np.floor((g.nodes - g.support_lo) / self.width).astype(int)
        idx = np.clip(idx, 0, self.count - 1)
        bounds = np.searchsorted(idx, np.arange(self.count + 1))
        slices = tuple(slice(int(bounds[k]), int(bounds[k + 1])) for k in range(self.count))
        if any(s.stop <= s.start for s in slices):
            raise ValueError("empty cell: every cell must contain grid nodes")
        object.__setattr__(self, "_slices", slices)

    @classmethod
    def uniform(cls, grid: SpectrumGrid, *, count: int | None = None, width: float | None = None) -> "Partition":
        if (count is None) == (width is None):
            raise ValueError("give exactly one of count or width")
        if count is None:
            ratio = grid.width / width
            count = int(round(ratio))
            if count < 1 or abs(ratio - count) > 1e-9 * max(1.0, ratio):
                raise ValueError(f"cell width {width!r} does not divide the support width {grid.width!r}")
        width = grid.width / count
        return cls(grid, grid.support_lo + width * np.arange(count), width, int(count))

    def cell_slice(self, i: int) -> slice:
        if not 0 <= i < self.count:
            raise IndexError(f"cell index {i} out of range [0, {self.count})")
        return self._slices[i]

    def cell_bounds(self, i: int) -> tuple[float, float]:
        self.cell_slice(i)
        lo = float(self.cell_lo[i])
        return lo, lo + self.width

    def cell_of_nodes(self) -> np.ndarray:
        out = np.empty(self.grid.size, dtype=int)
        for k, s in enumerate(self._slices):
            out[s] = k
        return out

    def image(self, i: int, transform: Transform | None = None) -> tuple[float, float]:
        lo, hi = self.cell_bounds(i)
        return (lo, hi) if transform is None else transform.image(lo, hi)


def beta(state: SpectralState, partition: Partition, i: int) -> float:
    """Occupation probability of cell ``i``."""
    return float(np.sum(state.probabilities[partition.cell_slice(i)]))


def betas(state: SpectralState, partition: Partition) -> np.ndarray:
    p = state.probabilities
    return np.array([p[partition.cell_slice(i)].sum() for i in range(partition.count)])


def occupied_cells(measure, partition: Partition) -> list[int]:
    return [i for i, b in enumerate(measure.cell_weights(partition)) if b > 0]


def project_cell(obj, partition: Partition, i: int):
    """Apply ``P(Delta_i)``.

    A :class:`SpectralState` gives the projected (sub-normalized) amplitude
    vector; a :class:`DensityMatrix` or 2-d array gives ``P rho P``; a 1-d
    array is treated as a weighted-basis vector.
    """
    s = partition.cell_slice(i)
    if isinstance(obj, SpectralState):
        arr = obj.amplitudes
    elif isinstance(obj, DensityMatrix):
        arr = obj.matrix
    else:
        arr = np.asarray(obj)
    out = np.zeros_like(arr)
    if arr.ndim == 1:
        out[s] = arr[s]
    elif arr.ndim == 2:
        out[s, s] = arr[s, s]
    else:
        raise ValueError("expected a vector or a square matrix")
    return out


def dephase(matrix, partition: Partition) -> np.ndarray:
    """Block-diagonal part ``sum_i P_i rho P_i``."""
    m = matrix.matrix if isinstance(matrix, DensityMatrix) else np.asarray(matrix)
    out = np.zeros_like(m)
    for i in range(partition.count):
        s = partition.cell_slice(i)
        out[s, s] = m[s, s]
    return out


def characteristic_integral(state: SpectralState, partition: Partition, i: int, tau, transform: Transform | None = None):
    """``sum_{x_k in Delta_i} exp(-i tau E_k) |psi_k|^2 w_k``; vectorized over ``tau``."""
    s = partition.cell_slice(i)
    p = state.probabilities[s]
    e = energies(state.grid, transform)[s]
    tau_arr = np.asarray(tau, dtype=float)
    out = np.exp(-1j * np.multiply.outer(tau_arr, e)) @ p
    return complex(out) if tau_arr.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class UniformCellDensity:
    """Continuum measure with constant density on a set of cells.

    Each listed cell carries probability ``1/len(cells)``.  Characteristic
    integrals are evaluated by adaptive quadrature, not on the grid, so this
    is the exact measure behind the uniform-cells example.
    """

    partition: Partition
    cells: tuple[int, ...]

    def __post_init__(self):
        cells = tuple(sorted(set(int(c) for c in self.cells)))
        if not cells:
            raise ValueError("need at least one occupied cell")
        for c in cells:
            self.partition.cell_slice(c)
        object.__setattr__(self, "cells", cells)

    def cell_weights(self, partition: Partition) -> np.ndarray:
        w = np.zeros(partition.count)
        w[list(self.cells)] = 1.0 / len(self.cells)
        return w

    def characteristic(self, partition: Partition, i: int, tau, transform: Transform | None = None):
        if i not in self.cells:
            return np.zeros_like(np.asarray(tau, dtype=float), dtype=complex) if np.ndim(tau) else 0j
        lo, hi = partition.cell_bounds(i)
        f = transform or identity_transform()
        e0 = float(f(lo))
        density = 1.0 / (len(self.cells) * partition.width)

        def one(t):
            # factor out the reference phase so the integrand stays slowly varying
            ph = lambda p: t * (float(f(p)) - e0)
            nosc = max(50, int(abs(t) * abs(float(f(hi)) - e0) / np.pi) + 50)
            re = quad(lambda p: np.cos(ph(p)), lo, hi, limit=nosc, epsabs=1e-14, epsrel=1e-12)[0]
            im = quad(lambda p: -np.sin(ph(p)), lo, hi, limit=nosc, epsabs=1e-14, epsrel=1e-12)[0]
            return density * np.exp(-1j * t * e0) * complex(re, im)

        if np.ndim(tau) == 0:
            return one(float(tau))
        return np.array([one(float(t)) for t in np.asarray(tau, dtype=float)])

    def cell_energy_spread(self, partition: Partition, i: int, transform: Transform | None = None) -> float:
        a, b = partition.image(i, transform)
        return b - a


# --------------------------------------------------------------------------
# Operators
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Observable:
    """Bounded Hermitian kernel on the weighted grid basis, ``||A|| <= 1``."""

    grid: SpectrumGrid | None
    kernel: np.ndarray

    def __post_init__(self):
        k = _frozen(self.kernel, complex)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("observable kernel must be square")
        if self.grid is not None and k.shape[0] != self.grid.size:
            raise ValueError("observable kernel does not match the grid")
        if np.max(np.abs(k - k.conj().T), initial=0.0) > 1e-12:
            raise ValueError("observable kernel is not Hermitian")
        if operator_norm(k) > 1 + 1e-9:
            raise ValueError("observable operator norm exceeds 1")
        object.__setattr__(self, "kernel", k)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian PSD unit-trace matrix (weighted grid basis or finite-dim)."""

    matrix: np.ndarray
    grid: SpectrumGrid | None = None

    def __post_init__(self):
        m = _frozen(self.matrix, complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-10:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace is {np.trace(m).real!r}, not 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] < -1e-10:
            raise ValueError("density matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def operator_norm(m) -> float:
    return float(np.linalg.norm(np.asarray(m), 2)) if np.size(m) else 0.0


def purity(rho: DensityMatrix) -> float:
    """``Tr(rho^2)``; for Hermitian rho this is the squared Frobenius norm."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return float(np.sum(np.abs(m) ** 2))
