"""Finite POVM families, their distinguishability and the finite-time
effective-equilibration check."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bounds import BoundBreakdown
from .oracle import _support_restricted, _time_rule, empirical_fluctuations, expectation_series
from .spectral import DensityMatrix, SpectralState, Transform, energies

COMPLETENESS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Povm:
    """Finite set of PSD effects summing to the identity."""

    effects: tuple[np.ndarray, ...]

    def __post_init__(self):
        effs = []
        for e in self.effects:
            m = np.array(e, dtype=complex)
            m.setflags(write=False)
            effs.append(m)
        if not effs:
            raise ValueError("a POVM needs at least one effect")
        dim = effs[0].shape[0]
        for m in effs:
            if m.shape != (dim, dim):
                raise ValueError("effects must be square and of equal size")
            if np.max(np.abs(m - m.conj().T)) > COMPLETENESS_TOL:
                raise ValueError("effect is not Hermitian")
            if np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] < -COMPLETENESS_TOL:
                raise ValueError("effect is not positive semidefinite")
        if np.max(np.abs(sum(effs) - np.eye(dim))) > COMPLETENESS_TOL:
            raise ValueError("effects do not sum to the identity")
        object.__setattr__(self, "effects", tuple(effs))

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    @property
    def outcomes(self) -> int:
        return len(self.effects)


@dataclass(frozen=True, eq=False)
class PovmFamily:
    povms: tuple[Povm, ...]

    def __post_init__(self):
        povms = tuple(self.povms)
        if not povms:
            raise ValueError("family needs at least one POVM")
        if len({p.dim for p in povms}) != 1:
            raise ValueError("all POVMs must act on the same space")
        object.__setattr__(self, "povms", povms)

    @property
    def q(self) -> float:
        """Half the total number of outcomes."""
        return sum(p.outcomes for p in self.povms) / 2.0

    @property
    def dim(self) -> int:
        return self.povms[0].dim

    def extended(self, povm: Povm) -> "PovmFamily":
        return PovmFamily(self.povms + (povm,))


def _matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)


def distinguishability(family: PovmFamily, rho1, rho2) -> float:
    """``max_l 1/2 sum_r |Tr(M_lr (rho1 - rho2))|``."""
    diff = _matrix(rho1) - _matrix(rho2)
    if diff.shape != (family.dim, family.dim):
        raise ValueError("state dimension does not match the POVM family")
    best = 0.0
    for p in family.povms:
        val = 0.5 * sum(abs(np.sum(m * diff.T)) for m in p.effects)
        best = max(best, float(val))
    return best


class EquilibrationCheck(NamedTuple):
    lhs: float
    rhs: float
    chain_rhs: float
    sigma_chain_rhs: float
    helstrom_ok: bool


def effective_equilibration_check(
    family: PovmFamily,
    state: SpectralState,
    bound: BoundBreakdown,
    T: float,
    n_time_samples: int | None = None,
    transform: Transform | None = None,
    helstrom_samples: int | None = 64,
) -> EquilibrationCheck:
    """Time-averaged distinguishability from the averaged state against ``Q sqrt(3 B)``.

    Also reports ``Q sqrt(B)`` (the chain value), ``Q max sqrt(sigma_M^2)``
    and whether the sampled distinguishabilities respect the trace-distance
    bound (``helstrom_samples=None`` checks every quadrature node).
    """
    t, w = _time_rule(state, T, n_time_samples, transform)
    effects = [m for p in family.povms for m in p.effects]
    s, restricted = _support_restricted(state, effects)
    e = energies(state.grid, transform)[s]
    c = state.coeffs[s]
    series = expectation_series(c, e, restricted, t).real
    means = series @ w
    dev = np.abs(series - means[:, None])

    per_time = np.zeros(t.size)
    start = 0
    for p in family.povms:
        block = 0.5 * dev[start:start + p.outcomes].sum(axis=0)
        per_time = np.maximum(per_time, block)
        start += p.outcomes
    lhs = float(per_time @ w)

    phases = np.exp(-1j * t[:, None] * e[None, :])
    rho_bar = np.outer(c, c.conj()) * ((phases * w[:, None]).T @ phases.conj())
    helstrom_ok = True
    n_check = t.size if helstrom_samples is None else min(t.size, helstrom_samples)
    for k in np.unique(np.linspace(0, t.size - 1, n_check).astype(int)):
        ct = c * np.exp(-1j * t[k] * e)
        ev = np.linalg.eigvalsh(np.outer(ct, ct.conj()) - rho_bar)
        if per_time[k] > 0.5 * np.sum(np.abs(ev)) + 1e-10:
            helstrom_ok = False

    sig = np.sqrt(empirical_fluctuations(state, effects, T, n_time_samples, transform))
    q = family.q
    return EquilibrationCheck(
        lhs,
        bound.equilibration_rhs(q),
        bound.equilibration_chain_rhs(q),
        float(q * sig.max()),
        helstrom_ok,
    )
