"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import itertools
import math
import sys

import numpy as np
import pytest

from contequil.bounds import (
    FiniteDimSystem,
    ToyParams,
    assemble_bound,
    cross_index_count,
    cross_index_set,
    infinite_time_sigma_sq,
    short_bound_finite_dim,
    toy_closed_form,
)
from contequil.kernels import KernelParams, cesaro_kernel
from contequil.models import (
    random_finite_system,
    random_hermitian,
    random_observable,
    random_povm_family,
    random_psd,
    random_state,
    smooth_random_observable,
)
from contequil.oracle import (
    integration_by_parts_orders,
    cesaro_average_state,
    dephasing_rate_slope,
    empirical_sigma_sq,
    time_averaged_density,
    verify_fidelity_inequality,
    verify_lemma1,
    verify_lemma2,
    verify_lemma3,
    verify_operator_norm_estimate,
)
from contequil.povm import effective_equilibration_check
from contequil.report import to_csv
from contequil.scenario import load_config, run_scenario
from contequil.spectral import DensityMatrix, Partition, build_uniform_grid, power_law_transform

SLACK = 1e-6
FIDELITY_SLACK = 1e-9
KERNEL_TOL = 1e-8
TOY_MATCH_TOL = 1e-8
MIN_ORDER = 1.8
RATE_TOL = 0.2
SMALLNESS_TARGET = 0.1


@pytest.fixture
def announce(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {title}: {'PASS' if ok else 'FAIL'} ({detail})")
    return emit


def random_spectral_scenario(rng: np.random.Generator, max_nodes: int):
    m = int(rng.integers(2, 17))
    per_cell = int(rng.integers(1, max_nodes // m + 1))
    hi = float(rng.uniform(0.5, 2.0))
    grid = build_uniform_grid(0.0, hi, m * per_cell)
    partition = Partition.uniform(grid, count=m)
    transform = power_law_transform(2) if rng.random() < 0.3 else None
    return grid, partition, transform


def test_bound_on_random_scenarios(announce):
    rng = np.random.default_rng(101)
    n, violations, worst = 120, 0, -np.inf
    for _ in range(n):
        grid, partition, transform = random_spectral_scenario(rng, 512)
        T = float(10 ** rng.uniform(0, 3))
        state = random_state(grid, rng)
        obs = random_observable(grid, rng) if rng.random() < 0.5 else smooth_random_observable(grid, rng)
        b = assemble_bound(state, partition, KernelParams(T, partition.width), transform)
        sig = empirical_sigma_sq(state, obs, T, transform=transform)
        worst = max(worst, sig / b.total)
        violations += sig > b.total + SLACK
    announce(1, "main bound over random scenarios", violations == 0,
             f"{n} scenarios, {violations} violations, max sigma^2/bound {worst:.3g}")
    assert violations == 0


def test_coherence_block_sweep(announce):
    rng = np.random.default_rng(202)
    times = np.geomspace(1.0, 1e3, 10)
    widths = (0.01, 0.05, 0.1, 0.5, 1.0)
    violations = points = 0
    for delta, sep in itertools.product(widths, range(1, 11)):
        grid = build_uniform_grid(0.0, delta * (sep + 1), 8 * (sep + 1))
        partition = Partition.uniform(grid, count=sep + 1)
        state = random_state(grid, rng, [0, sep], partition)
        for T in times:
            lhs, rhs = verify_lemma1(state, partition, float(T), 0, sep)
            violations += lhs > rhs + SLACK
            points += 1
    grid = build_uniform_grid(0.0, 1.0, 32)
    partition = Partition.uniform(grid, count=4)
    lone = random_state(grid, rng, [0], partition)
    disjoint_zero = all(verify_lemma1(lone, partition, T, 0, j) == (0.0, 0.0) for T in (1.0, 100.0) for j in (1, 3))
    ok = violations == 0 and points >= 500 and disjoint_zero
    announce(2, "coherence block bound sweep", ok,
             f"{points} points, {violations} violations, disjoint branch exact zero: {disjoint_zero}")
    assert ok


def small_scenario(rng: np.random.Generator):
    m = int(rng.integers(2, 9))
    per_cell = int(rng.integers(1, min(8, 64 // m) + 1))
    grid = build_uniform_grid(0.0, float(rng.uniform(0.5, 2.0)), m * per_cell)
    partition = Partition.uniform(grid, count=m)
    return grid, partition, random_state(grid, rng)


def test_fluctuation_split(announce):
    rng = np.random.default_rng(303)
    n = 200
    v2 = v3 = 0
    for _ in range(n):
        grid, partition, state = small_scenario(rng)
        T = float(10 ** rng.uniform(0, 3))
        obs = [random_observable(grid, rng), smooth_random_observable(grid, rng)]
        lhs, rhs = verify_lemma2(state, partition, T, obs)
        v2 += lhs > rhs + SLACK
        lhs, rhs = verify_lemma3(state, partition, T, obs[int(rng.integers(2))])
        v3 += lhs > rhs + SLACK
    counts = {}
    for m in range(2, 6):
        brute = sum(
            1 for i, j, l, k in itertools.product(range(m), repeat=4)
            if i != j and l != k and (i, j) != (l, k)
        )
        counts[m] = brute == len(cross_index_set(range(m))) == m * m * (m - 1) ** 2 - m * (m - 1) == cross_index_count(m)
    ok = v2 == 0 and v3 == 0 and all(counts.values())
    announce(3, "block-diagonal and cross-term fluctuation bounds", ok,
             f"{n} scenarios each, violations {v2}/{v3}, index-set cardinality ok for M=2..5: {all(counts.values())}")
    assert ok


def test_integration_by_parts_order(announce):
    rng = np.random.default_rng(404)
    orders = []
    for kernel in ("phase", "cesaro"):
        for _ in range(5):
            grid = build_uniform_grid(0.0, 1.0, 24)
            partition = Partition.uniform(grid, count=4)
            state = random_state(grid, rng)
            i, j = rng.choice(4, size=2, replace=False)
            t = 0.25 / grid.weights[0]
            _, o = integration_by_parts_orders(state, partition, int(i), int(j), t, kernel, levels=(1, 2, 4))
            orders += o
    norm_violations = 0
    for _ in range(200):
        grid = build_uniform_grid(0.0, 1.0, 32)
        partition = Partition.uniform(grid, count=4)
        op, sup = verify_operator_norm_estimate(partition, int(rng.integers(4)), float(rng.uniform(0, 1)),
                                                float(10 ** rng.uniform(-2, 3)), ("cesaro", "phase")[int(rng.integers(2))])
        norm_violations += op > sup + 1e-12
    ok = min(orders) >= MIN_ORDER and norm_violations == 0
    announce(4, "integration-by-parts identity", ok,
             f"min observed order {min(orders):.3f} over {len(orders)} refinements, "
             f"operator-norm violations {norm_violations}/200")
    assert ok


def test_fidelity_inequality(announce):
    rng = np.random.default_rng(505)
    violations = 0
    for _ in range(500):
        d = int(rng.integers(2, 9))
        rank_a, rank_b = int(rng.integers(1, d + 1)), int(rng.integers(1, d + 1))
        lhs, rhs = verify_fidelity_inequality(random_psd(d, rng, rank_a), random_psd(d, rng, rank_b))
        violations += lhs > rhs + FIDELITY_SLACK
    announce(5, "fidelity inequality", violations == 0, f"500 PSD pairs, {violations} violations")
    assert violations == 0


def gauss_legendre_average(omega: float, T: float) -> complex:
    panels = max(4, math.ceil(abs(omega) * T / math.pi) * 2)
    x, w = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0.0, T, panels + 1)
    half = 0.5 * np.diff(edges)
    t = ((edges[:-1] + half)[:, None] + half[:, None] * x).ravel()
    wt = (half[:, None] * w).ravel()
    return complex(np.sum(wt * np.exp(-1j * omega * t)) / T)


def test_cesaro_kernel_and_state(announce):
    rng = np.random.default_rng(606)
    kernel_err = 0.0
    for _ in range(1000):
        omega = float(rng.uniform(-20, 20))
        T = float(10 ** rng.uniform(-2, 2))
        kernel_err = max(kernel_err, abs(complex(cesaro_kernel(omega, T)) - gauss_legendre_average(omega, T)))
    state_err = 0.0
    for _ in range(20):
        grid = build_uniform_grid(0.0, float(rng.uniform(0.5, 2.0)), int(rng.integers(4, 24)))
        state = random_state(grid, rng)
        T = float(rng.uniform(0.1, 40.0))
        diff = cesaro_average_state(state, T).matrix.matrix - time_averaged_density(state, T, n_gauss=200)
        state_err = max(state_err, float(np.max(np.abs(diff))))
    ok = kernel_err <= KERNEL_TOL and state_err <= KERNEL_TOL
    announce(6, "averaging kernel closed form", ok,
             f"max kernel error {kernel_err:.2e} on 1000 draws, max state error {state_err:.2e} on 20 scenarios")
    assert ok


def test_finite_dim_baseline(announce):
    rng = np.random.default_rng(707)
    violations = 0
    for _ in range(500):
        d = int(rng.integers(2, 11))
        system = random_finite_system(d, rng)
        a = random_hermitian(d, rng, float(rng.uniform(0.1, 1.0)))
        violations += infinite_time_sigma_sq(system, a) > short_bound_finite_dim(system, a).sigma_sq_infinity_bound + 1e-12
    d_eff_err = 0.0
    for d in range(2, 11):
        system = random_finite_system(d, rng)
        mixed = FiniteDimSystem(system.eigenvalues, system.ranks, DensityMatrix(np.eye(d) / d))
        d_eff_err = max(d_eff_err, abs(short_bound_finite_dim(mixed, np.eye(d)).d_eff - d) / d)
    slopes = []
    for _ in range(20):
        system = random_finite_system(int(rng.integers(2, 11)), rng)
        gap = float(np.min(np.abs(np.subtract.outer(system.level_energies(), system.level_energies()))[
            ~np.eye(system.dim, dtype=bool)]))
        slopes.append(dephasing_rate_slope(system, 100.0 / gap))
    worst_rate = max(abs(s + 1) for s in slopes)
    ok = violations == 0 and d_eff_err <= 1e-12 and worst_rate <= RATE_TOL
    announce(7, "finite-dimensional baseline", ok,
             f"500 systems, {violations} violations, maximally mixed d_eff rel error {d_eff_err:.1e}, "
             f"worst |slope + 1| {worst_rate:.3f}")
    assert ok


def test_toy_example(announce):
    rows = run_scenario(load_config("toy_s6")).rows
    worst_match = max(r.extras["toy_match"] for r in rows)
    below = all(r.empirical_sigma_sq <= r.checks["toy"][1] for r in rows)
    n = 40
    a = tuple(math.sqrt(2.0 * i) for i in range(n))
    delta = 1e-13
    big_d = min(a[i + 1] ** 2 - (a[i] + delta) ** 2 for i in range(n - 1))
    small = toy_closed_form(ToyParams(n, delta, big_d, 1e10, a)).total
    ok = worst_match <= TOY_MATCH_TOL and below and small < SMALLNESS_TARGET
    announce(8, "two-cell-family analytic example", ok,
             f"closed form vs envelope path max diff {worst_match:.1e} at T={[r.T for r in rows]}, "
             f"sigma^2 below closed form: {below}, smallness-regime bound {small:.4f}")
    assert ok


def test_effective_equilibration(announce):
    rng = np.random.default_rng(909)
    n = 100
    violations = helstrom_fail = 0
    for _ in range(n):
        grid, partition, state = small_scenario(rng)
        T = float(10 ** rng.uniform(0, 3))
        family = random_povm_family(grid.size, rng, int(rng.integers(1, 4)), (2, 4))
        b = assemble_bound(state, partition, KernelParams(T, partition.width))
        chk = effective_equilibration_check(family, state, b, T, helstrom_samples=None)
        violations += chk.lhs > chk.rhs + SLACK
        helstrom_fail += not chk.helstrom_ok
    ok = violations == 0 and helstrom_fail == 0
    announce(9, "effective equilibration for POVM families", ok,
             f"{n} scenarios, {violations} violations, {helstrom_fail} trace-distance failures")
    assert ok


def test_determinism(announce):
    cfg = load_config("lemma_suite")
    first = to_csv(run_scenario(cfg))
    second = to_csv(run_scenario(cfg))
    parallel = to_csv(run_scenario(cfg, jobs=2))
    ok = first == second == parallel
    announce(10, "byte-identical reports", ok, f"two serial runs and one two-worker run, {len(first)} bytes")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
