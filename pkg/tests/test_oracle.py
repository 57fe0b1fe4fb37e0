from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contequil.bounds import FiniteDimSystem, cross_index_count
from contequil.models import (
    random_density_matrix,
    random_finite_system,
    random_observable,
    random_psd,
    random_state,
    smooth_random_observable,
)
from contequil.oracle import (
    DimensionCapError,
    UndersamplingError,
    integration_by_parts_orders,
    cesaro_average_state,
    dephasing_rate_slope,
    empirical_sigma_sq,
    evolve,
    finite_dim_dephasing,
    finite_dim_time_average,
    psd_sqrt,
    time_averaged_density,
    trace_norm,
    trace_norm_via_eigh,
    verify_appendix_a_identity,
    verify_fidelity_inequality,
    verify_lemma1,
    verify_lemma2,
    verify_lemma3,
    verify_operator_norm_estimate,
)
from contequil.quadrature import minimum_time_samples
from contequil.spectral import (
    DensityMatrix,
    Observable,
    Partition,
    build_uniform_grid,
    energies,
    normalize,
    power_law_transform,
)


def small_setup(seed, n_points=24, count=4, cells=None):
    g = build_uniform_grid(0.0, 1.0, n_points)
    p = Partition.uniform(g, count=count)
    rng = np.random.default_rng(seed)
    return g, p, random_state(g, rng, cells, p if cells is not None else None), rng


class TestDynamics:
    @given(seed=st.integers(0, 2**31 - 1), t=st.floats(0, 1e4))
    def test_unitary_and_energy_conserving(self, seed, t):
        g, p, s, _ = small_setup(seed)
        f = power_law_transform(2)
        ev = evolve(s, t, f)
        assert ev.norm() == pytest.approx(1.0, abs=1e-12)
        e = energies(g, f)
        assert np.sum(np.abs(ev.coeffs) ** 2 * e) == pytest.approx(np.sum(s.probabilities * e), abs=1e-12)

    def test_negative_time_rejected(self, rng):
        g = build_uniform_grid(0, 1, 8)
        with pytest.raises(ValueError):
            evolve(random_state(g, rng), -1.0)

    @pytest.mark.parametrize("T", [0.5, 3.0, 20.0])
    def test_cesaro_state_matches_direct_time_average(self, rng, T):
        g = build_uniform_grid(0, 4, 16)
        s = random_state(g, rng)
        closed = cesaro_average_state(s, T).matrix.matrix
        direct = time_averaged_density(s, T, n_gauss=200)
        assert np.max(np.abs(closed - direct)) < 1e-8

    def test_cesaro_state_is_a_density_matrix(self, rng):
        g = build_uniform_grid(0, 4, 16)
        rho = cesaro_average_state(random_state(g, rng), 7.0).matrix.matrix
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(rho)[0] > -1e-12


class TestFluctuations:
    def test_diagonal_observable_does_not_fluctuate(self, rng):
        g, p, s, _ = small_setup(3)
        diag = Observable(g, np.diag(rng.uniform(-1, 1, g.size)))
        assert empirical_sigma_sq(s, diag, 50.0) < 1e-14
        assert empirical_sigma_sq(s, Observable(g, np.eye(g.size)), 50.0) < 1e-14

    def test_undersampling_rejected(self):
        g, p, s, _ = small_setup(4)
        e = energies(g)
        need = minimum_time_samples(100.0, e.max() - e.min())
        with pytest.raises(UndersamplingError) as exc:
            empirical_sigma_sq(s, np.eye(g.size), 100.0, n_time_samples=need - 1)
        assert exc.value.required == need

    def test_two_level_closed_form(self):
        # |psi> = (|0> + |1>)/sqrt2, A = sigma_x: <A>_t = cos(w t), time average over [0, T] known exactly
        g = build_uniform_grid(0, 2, 2)
        s = normalize(g, np.ones(2) / np.sqrt(g.weights))
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        T, w = 13.0, 1.0
        mean = math.sin(w * T) / (w * T)
        mean_sq = 0.5 + math.sin(2 * w * T) / (4 * w * T)
        assert empirical_sigma_sq(s, a, T) == pytest.approx(mean_sq - mean**2, abs=1e-12)

    def test_resolution_converged(self, rng):
        g, p, s, _ = small_setup(5, n_points=32)
        a = smooth_random_observable(g, rng)
        base = empirical_sigma_sq(s, a, 200.0)
        assert empirical_sigma_sq(s, a, 200.0, n_time_samples=40_000) == pytest.approx(base, rel=1e-9)


class TestTraceNorm:
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 8), m=st.integers(1, 8))
    def test_dual_routes_agree(self, seed, n, m):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        assert trace_norm(x) == pytest.approx(trace_norm_via_eigh(x), rel=1e-10)

    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 8))
    def test_holder_and_trace_inequalities(self, seed, n):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        y = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        assert abs(np.trace(x)) <= trace_norm(x) * (1 + 1e-12)
        assert trace_norm(x @ y) <= trace_norm(x) * np.linalg.norm(y, 2) * (1 + 1e-12)

    def test_rank_one(self, rng):
        u = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        assert trace_norm(np.outer(u, v.conj())) == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), rel=1e-12)

    def test_psd_sqrt_squares_back(self, rng):
        m = random_psd(6, rng)
        r = psd_sqrt(m)
        assert np.max(np.abs(r @ r - m)) < 1e-12


class TestCoherenceBlockBound:
    @given(seed=st.integers(0, 2**31 - 1), T=st.floats(0.1, 1e4))
    def test_cesaro_block_bound(self, seed, T):
        g, p, s, _ = small_setup(seed, n_points=40, count=5)
        for i, j in [(0, 1), (0, 4), (3, 1)]:
            lhs, rhs = verify_lemma1(s, p, T, i, j)
            assert lhs <= rhs + 1e-12

    @given(seed=st.integers(0, 2**31 - 1), t=st.floats(0, 1e3))
    def test_instant_block_bound(self, seed, t):
        g, p, s, _ = small_setup(seed, n_points=40, count=5)
        lhs, rhs = verify_lemma1(s, p, t, 1, 3, kernel="instant")
        assert lhs <= rhs + 1e-12

    def test_transform_slope_enters_width(self, rng):
        g = build_uniform_grid(0, 1, 60)
        p = Partition.uniform(g, count=6)
        s = random_state(g, rng)
        f = power_law_transform(2)
        for T in (1.0, 30.0, 500.0):
            lhs, rhs = verify_lemma1(s, p, T, 5, 4, transform=f)
            assert lhs <= rhs + 1e-12

    def test_empty_cell_gives_zero_pair(self, rng):
        g = build_uniform_grid(0, 1, 40)
        p = Partition.uniform(g, count=4)
        s = random_state(g, rng, [0, 1], p)
        assert verify_lemma1(s, p, 10.0, 0, 3) == (0.0, 0.0)

    def test_same_cell_rejected(self, rng):
        g, p, s, _ = small_setup(1)
        with pytest.raises(ValueError):
            verify_lemma1(s, p, 1.0, 2, 2)

    def test_decay_rate_for_separated_cells(self):
        g = build_uniform_grid(0, 1, 40)
        p = Partition.uniform(g, count=4)
        s = random_state(g, np.random.default_rng(9), [0, 3], p)
        ts = np.geomspace(1e3, 1e4, 12)
        rhs = [verify_lemma1(s, p, float(T), 0, 3)[1] for T in ts]
        slope = np.polyfit(np.log(ts), np.log(rhs), 1)[0]
        assert abs(slope) < 0.05  # the derivative term saturates at 2 delta / D

    def test_lhs_decays_like_inverse_time(self):
        g = build_uniform_grid(0, 1, 40)
        p = Partition.uniform(g, count=4)
        s = random_state(g, np.random.default_rng(9), [0, 3], p)
        ts = np.geomspace(1e3, 1e4, 12)
        lhs = [verify_lemma1(s, p, float(T), 0, 3)[0] for T in ts]
        slope = np.polyfit(np.log(ts), np.log(lhs), 1)[0]
        assert abs(slope + 1) < 0.2


class TestIntegrationByParts:
    def test_constant_kernel_is_exact(self, rng):
        g, p, s, _ = small_setup(2)
        assert verify_appendix_a_identity(s, p, 0, 2, 1.0, "constant") < 1e-14

    @pytest.mark.parametrize("kernel", ["phase", "cesaro"])
    def test_second_order_convergence(self, kernel):
        g, p, s, _ = small_setup(6)
        t = 0.25 / g.weights[0]
        res, orders = integration_by_parts_orders(s, p, 1, 3, t, kernel, levels=(1, 2, 4, 8))
        assert res[-1] < res[0]
        assert min(orders) >= 1.8

    @given(seed=st.integers(0, 2**31 - 1), y=st.floats(0, 1), t=st.floats(0.01, 500))
    def test_operator_norm_estimate(self, seed, y, t):
        g = build_uniform_grid(0, 1, 32)
        p = Partition.uniform(g, count=4)
        i = seed % 4
        for kernel in ("cesaro", "phase"):
            op, sup = verify_operator_norm_estimate(p, i, y, t, kernel)
            assert op <= sup + 1e-12


class TestFluctuationSplit:
    @given(seed=st.integers(0, 2**31 - 1), T=st.floats(0.5, 200))
    def test_diagonal_part(self, seed, T):
        g, p, s, rng = small_setup(seed, n_points=16, count=4)
        obs = [random_observable(g, rng), smooth_random_observable(g, rng)]
        lhs, rhs = verify_lemma2(s, p, T, obs)
        assert lhs <= rhs + 1e-12

    def test_diagonal_part_empty_family(self, rng):
        g, p, s, _ = small_setup(1)
        with pytest.raises(ValueError):
            verify_lemma2(s, p, 1.0, [])

    @given(seed=st.integers(0, 2**31 - 1), T=st.floats(0.5, 200))
    def test_cross_part(self, seed, T):
        g, p, s, rng = small_setup(seed, n_points=16, count=4)
        lhs, rhs = verify_lemma3(s, p, T, random_observable(g, rng))
        assert lhs <= rhs + 1e-12

    def test_cross_part_two_uniform_cells(self):
        # equal weights: beta-square sum 1/2, and the reversed tuples (i, j, j, i) carry zero combined gap,
        # so each of their blocks keeps trace norm beta_i beta_j = 1/4 at every time
        g = build_uniform_grid(0, 1, 16)
        p = Partition.uniform(g, count=4)
        amp = np.zeros(16)
        amp[p.cell_slice(0)] = 1
        amp[p.cell_slice(3)] = 1
        s = normalize(g, amp)
        lhs, rhs = verify_lemma3(s, p, 1e4, random_observable(g, np.random.default_rng(0)))
        assert rhs == pytest.approx(1.0, abs=1e-9)
        assert lhs <= rhs

    def test_cardinality(self):
        assert [cross_index_count(m) for m in (2, 3, 4)] == [2, 30, 132]

    def test_dimension_cap(self, rng):
        g, p, s, _ = small_setup(0, n_points=80, count=4)
        with pytest.raises(DimensionCapError):
            verify_lemma3(s, p, 1.0, np.eye(80), dim_cap=4096)


class TestFidelity:
    @given(seed=st.integers(0, 2**31 - 1), d=st.integers(2, 8))
    def test_inequality(self, seed, d):
        rng = np.random.default_rng(seed)
        lhs, rhs = verify_fidelity_inequality(random_psd(d, rng), random_psd(d, rng))
        assert lhs <= rhs + 1e-10

    def test_equal_states(self, rng):
        a = random_density_matrix(4, rng)
        lhs, rhs = verify_fidelity_inequality(a, a)
        assert lhs < 1e-12 and rhs < 1e-5

    def test_orthogonal_pure_states(self):
        a = np.diag([1.0, 0.0])
        b = np.diag([0.0, 1.0])
        assert verify_fidelity_inequality(a, b) == pytest.approx((2.0, 2.0), abs=1e-12)

    def test_rejects_non_psd(self):
        with pytest.raises(ValueError):
            verify_fidelity_inequality(np.diag([1.0, -0.5]), np.eye(2))


class TestFiniteDimDephasing:
    def test_diagonal_state_is_stationary(self):
        sys_ = FiniteDimSystem(np.array([0.0, 0.3, 1.1]), (1, 1, 1), DensityMatrix(np.diag([0.2, 0.3, 0.5])))
        for T in (0.0, 1.0, 100.0):
            assert finite_dim_dephasing(sys_, T) < 1e-15

    def test_zero_time_is_off_diagonal_norm(self, rng):
        s = random_finite_system(5, rng)
        rho = s.rho0.matrix
        assert finite_dim_dephasing(s, 0.0) == pytest.approx(np.linalg.norm(rho - np.diag(np.diag(rho))), rel=1e-12)

    def test_matches_brute_force_average(self, rng):
        s = random_finite_system(5, rng)
        T = 17.0
        brute = np.linalg.norm(finite_dim_time_average(s, T) - s.dephased())
        assert finite_dim_dephasing(s, T) == pytest.approx(brute, rel=1e-9)

    def test_inverse_time_rate(self, rng):
        s = random_finite_system(6, rng)
        gap = np.min(np.diff(np.sort(s.level_energies())))
        assert abs(dephasing_rate_slope(s, 100.0 / gap) + 1) <= 0.2
