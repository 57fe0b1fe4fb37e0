"""Composite Gauss-Legendre rules for time averages over ``[0, T]``."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

DEFAULT_ORDER = 8


@lru_cache(maxsize=32)
def _reference_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_gauss_legendre(T: float, panels: int, order: int = DEFAULT_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and *averaging* weights (summing to 1) on ``[0, T]``."""
    if T <= 0:
        raise ValueError("T must be positive")
    if panels < 1 or order < 1:
        raise ValueError("need at least one panel and one node per panel")
    x, w = _reference_rule(order)
    edges = np.linspace(0.0, T, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel() / T
    return t, weights


def panels_for_bandwidth(T: float, bandwidth: float) -> int:
    """Panel count keeping each panel no longer than ``pi / (4 bandwidth)``."""
    if bandwidth <= 0:
        return 1
    return max(1, math.ceil(T * 4.0 * bandwidth / math.pi))


def minimum_time_samples(T: float, bandwidth: float) -> int:
    """Smallest sample count resolving the spectral bandwidth: ``8 T bw / 2 pi``."""
    return math.ceil(8.0 * T * bandwidth / (2.0 * math.pi))


def time_average_rule(T: float, bandwidth: float, n_time_samples: int | None = None, order: int = DEFAULT_ORDER):
    """Composite rule fine enough for signals with frequencies up to ``2 * bandwidth``.

    ``n_time_samples`` raises the panel count when larger than the default.
    """
    panels = panels_for_bandwidth(T, bandwidth)
    if n_time_samples is not None:
        panels = max(panels, math.ceil(n_time_samples / order))
    return composite_gauss_legendre(T, panels, order)
