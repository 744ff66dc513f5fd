import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from cesaro import chains
from cesaro.metric import clamped_distance_function, Euclidean

F = clamped_distance_function(0.0, Euclidean(1))
ABS = chains.AbsorbingChain()

# Oracles: scipy expm of the generator, integrated with scipy quad, frozen here.
CESARO_AT_N = {2: 0.5803013970713942, 10: 0.32745317353997117, 50: 0.2768835288336865}
CLOSED_SET = [0, 1, 3, 5, 7]
P25_FROM_5 = [0.4589575006880506, 0.24831551325022855, 0.210641987437822,
              0.08208499862389883, 0.0]
Q10_FROM_5 = [0.450002269996488, 0.23750000002576427, 0.21250226997072383,
              0.09999546000702378, 0.0]


def absorbing_generator(n):
    Q = np.zeros((3, 3))  # states 1/n, n, 0
    Q[0, 0], Q[0, 1], Q[1, 1], Q[1, 2] = -1 / n, 1 / n, -1 / n, 1 / n
    return Q


class TestAbsorbingChain:
    @given(st.integers(2, 60), st.floats(0, 500))
    def test_transition_matches_matrix_exponential(self, n, t):
        P = expm(absorbing_generator(n) * t)
        for a, i in enumerate((1 / n, n, 0.0)):
            if i == 0.0:
                continue
            for b, j in enumerate((1 / n, n, 0.0)):
                assert ABS.transition(i, j, t) == pytest.approx(P[a, b], abs=1e-12)

    @given(st.integers(2, 60), st.floats(0, 500))
    def test_rows_are_probabilities(self, n, t):
        for x in (1 / n, float(n), 0.0):
            assert ABS.row(x, t).total_weight == pytest.approx(1.0, abs=1e-12)

    def test_one_is_not_a_state(self):
        with pytest.raises(chains.ChainError):
            ABS.transition(1.0, 0.0, 1.0)

    @pytest.mark.parametrize("n", sorted(CESARO_AT_N))
    def test_cesaro_frozen_oracle(self, n):
        closed = ABS.cesaro_closed_form(F, 1 / n, n)
        quad = chains.cesaro_exact(ABS, F, 1 / n, n)
        assert closed == pytest.approx(CESARO_AT_N[n], abs=1e-12)
        assert quad == pytest.approx(CESARO_AT_N[n], abs=1e-9)

    def test_gap_lower_bound_all_n(self):
        for n in range(2, 200):
            gap = ABS.cesaro_closed_form(F, 1 / n, n) - ABS.cesaro_closed_form(F, 0.0, n)
            assert gap >= 1 - 2 / math.e

    def test_pointwise_continuity_for_large_times(self):
        for n in (2, 10, 50):
            for t in (50 * n, 400 * n):
                assert abs(ABS.Pf(F, 1 / n, t) - ABS.Pf(F, 0.0, t)) <= 1e-6


class TestQuadrature:
    def test_tolerance_checked(self):
        with pytest.raises(ValueError):
            chains.cesaro_exact(ABS, F, 0.5, 2.0, quad_tol=0.0)

    def test_uniformized_chain_through_quadrature(self):
        chain = chains.integer_chain(30)
        q = chains.cesaro_exact(chain, F, 5, 10.0)
        exact = chains.cesaro_uniformized(chain, 5, 10.0, 1e-13).measure.integrate(F)
        assert q == pytest.approx(exact, abs=1e-8)


def _poisson_upper_tail(mean, n):
    """P(X > n) summed term by term from n + 1 upward, no cancellation."""
    total, k = 0.0, n + 1
    while True:
        term = math.exp(k * math.log(mean) - mean - math.lgamma(k + 1))
        total += term
        if k > mean and term < total * 1e-18:
            return total
        k += 1


class TestIntegerChain:
    chain = chains.integer_chain(60)

    def test_rule_rows_sum_to_one(self):
        for s in range(-30, 31):
            assert sum(chains.integer_chain_rule(s).values()) == pytest.approx(1.0)

    def test_transition_matches_expm_on_closed_set(self):
        d = chains.uniformized_transition(self.chain, 5, 2.5, 1e-14)
        got = [d.mass(s) for s in CLOSED_SET]
        assert got == pytest.approx(P25_FROM_5, abs=1e-12)

    def test_cesaro_matches_integrated_expm(self):
        d = chains.cesaro_uniformized(self.chain, 5, 10.0, 1e-13)
        got = [d.mass(s) for s in CLOSED_SET]
        assert got == pytest.approx(Q10_FROM_5, abs=1e-10)

    @given(st.integers(-20, 20), st.floats(0.01, 30))
    def test_mass_accounting(self, i, t):
        d = chains.uniformized_transition(self.chain, i, t, 1e-12)
        assert d.vector.sum() + d.tail + d.leak == pytest.approx(1.0, abs=1e-10)
        assert np.all(d.vector >= 0)
        q = chains.cesaro_uniformized(self.chain, i, t, 1e-10)
        assert q.vector.sum() + q.tail + q.leak == pytest.approx(1.0, abs=1e-9)

    @given(st.floats(0.01, 50), st.floats(1e-14, 1e-2))
    def test_poisson_tail(self, mean, tol):
        p = chains.poisson_terms(mean, tol)
        n = len(p) - 1
        assert n >= mean
        assert _poisson_upper_tail(mean, n) <= tol * (1 + 1e-9)
        if n - 1 >= mean:
            assert _poisson_upper_tail(mean, n - 1) > tol * (1 - 1e-9)

    def test_chapman_kolmogorov(self):
        direct = chains.uniformized_transition(self.chain, 7, 3.0, 1e-14).vector
        first = chains.uniformized_transition(self.chain, 7, 1.2, 1e-14)
        comp = sum(m * chains.uniformized_transition(self.chain, int(s), 1.8, 1e-14).vector
                   for s, m in zip(self.chain.states, first.vector) if m > 0)
        assert np.max(np.abs(comp - direct)) < 1e-10

    def test_negative_start_leaks(self):
        d = chains.uniformized_transition(chains.integer_chain(20), -5, 40.0, 1e-12)
        assert d.leak > 0
        with pytest.raises(chains.TruncationError):
            chains.uniformized_transition(chains.integer_chain(20), -5, 40.0, 1e-12,
                                          leak_budget=1e-6)

    def test_window(self):
        with pytest.raises(chains.ChainError):
            self.chain.index_of(61)

    @pytest.mark.parametrize("x, masses", [(0, {0: 1.0}), (1, {1: 0.5, 3: 0.5}),
                                           (5, {0: 0.5, 1: 0.25, 3: 0.25}),
                                           (7, {0: 1 / 3, 1: 1 / 3, 3: 1 / 3})])
    def test_ergodic_limits(self, x, masses):
        lim = chains.integer_chain_limit(x, 400.0)
        assert lim.stable
        for s, m in masses.items():
            assert lim.distribution.mass(s) == pytest.approx(m, abs=0.01)
