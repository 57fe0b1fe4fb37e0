"""Seeded generators for states, observables, POVMs and finite systems."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .bounds import FiniteDimSystem, has_degenerate_gaps
from .povm import Povm, PovmFamily
from .spectral import DensityMatrix, Observable, Partition, SpectralState, SpectrumGrid, normalize, operator_norm


def uniform_cells_state(partition: Partition, cells: Sequence[int]) -> SpectralState:
    """Normalized constant amplitude on the listed cells."""
    amp = np.zeros(partition.grid.size, dtype=complex)
    for c in cells:
        amp[partition.cell_slice(int(c))] = 1.0
    return normalize(partition.grid, amp)


def gaussian_profile_state(grid: SpectrumGrid, center: float, width: float, momentum: float = 0.0) -> SpectralState:
    x = grid.nodes
    amp = np.exp(-0.25 * ((x - center) / width) ** 2 + 1j * momentum * x)
    return normalize(grid, amp)


def random_state(grid: SpectrumGrid, rng: np.random.Generator, cells: Sequence[int] | None = None,
                 partition: Partition | None = None) -> SpectralState:
    """Complex Gaussian amplitudes, optionally restricted to some cells."""
    amp = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    if cells is not None:
        if partition is None:
            raise ValueError("restricting to cells needs the partition")
        mask = np.zeros(grid.size, dtype=bool)
        for c in cells:
            mask[partition.cell_slice(int(c))] = True
        amp = np.where(mask, amp, 0.0)
    return normalize(grid, amp)


def random_hermitian(dim: int, rng: np.random.Generator, norm: float = 1.0) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = 0.5 * (g + g.conj().T)
    return h * (norm / operator_norm(h))


def random_observable(grid: SpectrumGrid, rng: np.random.Generator, norm: float = 1.0) -> Observable:
    """Random Hermitian kernel rescaled to the requested operator norm (at most 1)."""
    h = random_hermitian(grid.size, rng, min(norm, 1.0) * (1 - 1e-12))
    return Observable(grid, 0.5 * (h + h.conj().T))


def smooth_random_observable(grid: SpectrumGrid, rng: np.random.Generator, rank: int = 4,
                             modes: int = 6) -> Observable:
    """Low-rank observable whose kernel ``A(x, y)`` is a smooth function of energy.

    Built from the first ``modes`` cosine modes on the support, so it has a
    genuine continuum limit as the grid is refined.
    """
    x = (grid.nodes - grid.support_lo) / grid.width
    basis = np.cos(np.pi * np.outer(x, np.arange(modes))) * np.sqrt(grid.weights)[:, None]
    coef = rng.standard_normal((modes, rank)) + 1j * rng.standard_normal((modes, rank))
    vecs = basis @ coef
    h = vecs @ np.diag(rng.uniform(-1.0, 1.0, rank)) @ vecs.conj().T
    h = 0.5 * (h + h.conj().T)
    return Observable(grid, h * ((1 - 1e-12) / operator_norm(h)))


def diagonal_observable(grid: SpectrumGrid, values) -> Observable:
    v = np.broadcast_to(np.asarray(values, dtype=float), (grid.size,))
    return Observable(grid, np.diag(v))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    r = dim if rank is None else rank
    g = rng.standard_normal((dim, r)) + 1j * rng.standard_normal((dim, r))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_psd(dim: int, rng: np.random.Generator, rank: int | None = None, trace: float | None = None) -> np.ndarray:
    m = random_density_matrix(dim, rng, rank)
    return m * (rng.uniform(0.1, 2.0) if trace is None else trace)


def random_povm(dim: int, outcomes: int, rng: np.random.Generator) -> Povm:
    """``M_r = S^{-1/2} G_r S^{-1/2}`` with random PSD ``G_r`` and ``S = sum G_r``."""
    gs = [random_psd(dim, rng, trace=1.0) for _ in range(outcomes)]
    s = sum(gs)
    ev, vec = np.linalg.eigh(s)
    inv_sqrt = (vec / np.sqrt(ev)) @ vec.conj().T
    effects = [inv_sqrt @ g @ inv_sqrt for g in gs]
    effects = [0.5 * (e + e.conj().T) for e in effects]
    # absorb rounding drift into the last effect
    effects[-1] = effects[-1] + (np.eye(dim) - sum(effects))
    return Povm(tuple(effects))


def random_povm_family(dim: int, rng: np.random.Generator, n_povms: int = 2,
                       outcome_range: tuple[int, int] = (2, 4)) -> PovmFamily:
    lo, hi = outcome_range
    return PovmFamily(tuple(random_povm(dim, int(rng.integers(lo, hi + 1)), rng) for _ in range(n_povms)))


def random_finite_system(dim: int, rng: np.random.Generator, max_tries: int = 100) -> FiniteDimSystem:
    """Non-degenerate spectrum with non-degenerate gaps and a random pure initial state."""
    for _ in range(max_tries):
        lam = np.sort(rng.uniform(0.0, 1.0, dim))
        if np.all(np.diff(lam) > 1e-6) and not has_degenerate_gaps(lam, 1e-9):
            break
    else:
        raise RuntimeError("could not draw a spectrum with non-degenerate gaps")
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    psi /= np.linalg.norm(psi)
    return FiniteDimSystem(lam, (1,) * dim, DensityMatrix(np.outer(psi, psi.conj())))
