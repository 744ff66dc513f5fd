import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.linalg import expm

from cesaro import chains, ifs

SEEDS = st.integers(0, 2**63)


def inversion_generator(n, lam):
    """States (1/n, n, 0): each of 1/n and n leaves at rate lam/(2n) to 0 and to its partner."""
    r = lam / (2 * n)
    return np.array([[-2 * r, r, r], [r, -2 * r, r], [0, 0, 0]])


class TestSimulation:
    @given(SEEDS, st.integers(1, 6), st.integers(0, 6))
    def test_ensemble_rows_do_not_depend_on_size(self, seed, n1, extra):
        m = ifs.ex6_place_dependent(1.3)
        a = ifs.simulate_ensemble(m, 2.0, 5.0, n1, seed)
        b = ifs.simulate_ensemble(m, 2.0, 5.0, n1 + extra, seed)
        k = a.jump_times.shape[1]
        assert np.array_equal(a.jump_times, b.jump_times[:n1, :k])
        assert np.array_equal(a.states, b.states[:n1, :k])
        assert np.all(np.isinf(b.jump_times[:n1, k:]))

    @given(SEEDS)
    def test_common_random_numbers_across_starts(self, seed):
        m = ifs.ex3_jump_ifs()
        a = ifs.simulate_ensemble(m, 0.5, 4.0, 5, seed)
        b = ifs.simulate_ensemble(m, 0.25, 4.0, 5, seed)
        k = min(a.jump_times.shape[1], b.jump_times.shape[1])
        assert np.array_equal(a.jump_times[:, :k], b.jump_times[:, :k])

    def test_simulate_is_row_zero(self):
        m = ifs.ex5_ifs_times_rotation()
        tr = ifs.simulate(m, [0.5, 1.0], 30.0, 99)
        row = ifs.simulate_ensemble(m, [0.5, 1.0], 30.0, 7, 99).trajectory(0)
        assert np.array_equal(tr.jump_times, row.jump_times)
        assert np.array_equal(tr.states, row.states)

    def test_clock_gaps_are_exponential(self):
        m = ifs.bks_contractive(lam=2.0)
        ens = ifs.simulate_ensemble(m, 0.0, 50.0, 400, 5)
        with np.errstate(invalid="ignore"):  # inf - inf past the horizon
            gaps = np.diff(ens.jump_times, axis=1)
        gaps = gaps[np.isfinite(gaps)]
        assert stats.kstest(gaps, "expon", args=(0, 0.5)).pvalue > 1e-3

    def test_state_at_agrees_with_states_at(self):
        m = ifs.ex7_ex6_times_rotation()
        ens = ifs.simulate_ensemble(m, [1.0, 0.0], 10.0, 50, 3)
        times = [0.0, 0.7, 3.3, 10.0]
        batch = ens.states_at(times)
        for c, t in enumerate(times):
            assert np.array_equal(batch[:, c], ens.state_at(t))

    def test_jump_times_are_piecewise_constant_for_identity_flow(self):
        tr = ifs.simulate(ifs.ex6_place_dependent(), 3.0, 50.0, 8)
        for k, t in enumerate(tr.jump_times):
            assert np.array_equal(tr.state_at(float(t)), tr.states[k])

    def test_outside_horizon(self):
        ens = ifs.simulate_ensemble(ifs.ex6_place_dependent(), 1.0, 2.0, 3, 0)
        with pytest.raises(ifs.IfsError):
            ens.state_at(2.5)

    def test_bad_probabilities_rejected(self):
        bad = ifs.IfsModel((lambda x: x,), lambda x: np.full(x.shape[:-1] + (1,), 0.9), 1.0,
                           ifs.R1)
        with pytest.raises(ifs.IfsError):
            ifs.simulate_ensemble(bad, 0.0, 10.0, 4, 1)

    def test_csv(self, tmp_path):
        tr = ifs.simulate(ifs.ex5_ifs_times_rotation(), [0.5, 0.0], 5.0, 2)
        tr.to_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "t,tau_index,x0,x1"
        assert len(lines) == len(tr.jump_times) + 1

    def test_occupation_exact_vs_grid(self):
        m = ifs.ex6_place_dependent()
        ens = ifs.simulate_ensemble(m, 1.0, 8.0, 200, 4)
        exact = ens.occupation_average(lambda x: x[..., 0], 8.0)
        grid = np.mean(ens.states_at((np.arange(20000) + 0.5) * 8.0 / 20000)[..., 0], axis=1)
        assert np.max(np.abs(exact - grid)) < 1e-3


class TestClosedForms:
    @pytest.mark.parametrize("n", [2, 3, 7])
    @pytest.mark.parametrize("s", [0.5, 2.0, 9.0])
    def test_two_state_occupation_matches_expm(self, n, s):
        P = expm(inversion_generator(n, 1.7) * s)
        assert ifs.two_state_occupation(n, 1.7, s) == pytest.approx(P[0, 1], abs=1e-13)
        assert ifs.inversion_jump_prob(n, 1.7, s) <= P[0, 1] + 1e-15

    def test_jump_law_monte_carlo(self):
        ens = ifs.simulate_ensemble(ifs.ex3_jump_ifs(), 0.5, 3.0, 40_000, 12)
        hit = ens.state_at(3.0)[:, 0] == 2.0
        se = hit.std() / math.sqrt(len(hit))
        assert abs(hit.mean() - ifs.two_state_occupation(2, 1.0, 3.0)) < 4 * se

    @pytest.mark.parametrize("x, t", [(math.log(2), 2.0), (0.3, 1.0)])
    def test_halving_stay(self, x, t):
        ens = ifs.simulate_ensemble(ifs.ex6_place_dependent(), x, t, 40_000, 21)
        stay = ens.state_at(t)[:, 0] == x
        se = stay.std() / math.sqrt(len(stay))
        assert abs(stay.mean() - ifs.halving_stay_prob(x, 1.0, t)) < 4 * se

    def test_cesaro_bound_value(self):
        assert ifs.inversion_cesaro_bound(1.0) == pytest.approx(0.5 * (1 - 2 / math.e))

    def test_absorbing_chain_as_jump_system(self):
        ens = ifs.simulate_ensemble(ifs.absorbing_chain_ifs(), 0.2, 6.0, 40_000, 31)
        x = ens.state_at(6.0)[:, 0]
        for j in (0.2, 5.0, 0.0):
            p = chains.AbsorbingChain.transition(0.2, j, 6.0)
            se = math.sqrt(p * (1 - p) / len(x))
            assert abs(np.mean(x == j) - p) < 4 * se + 1e-12

    def test_integer_chain_as_jump_system(self):
        chain = chains.integer_chain(40)
        d = chains.uniformized_transition(chain, 7, 2.0, 1e-13)
        ens = ifs.simulate_ensemble(ifs.integer_chain_ifs(), 7.0, 2.0, 40_000, 41)
        x = ens.state_at(2.0)[:, 0]
        for s in (0, 1, 3, 7):
            p = d.mass(s)
            se = math.sqrt(p * (1 - p) / len(x))
            assert abs(np.mean(x == s) - p) < 4 * se + 1e-12


class TestContraction:
    @pytest.mark.parametrize("x", [0.1, 1.0, 4.0])
    def test_jn_enumeration_matches_closed_form(self, x):
        m = ifs.ex6_place_dependent()
        for n in range(1, 7):
            assert ifs.jn_bound(m, x, n, use_closed_form=False) == pytest.approx(
                ifs.jn_bound(m, x, n), rel=1e-12)

    def test_j3_at_anchor(self):
        assert ifs.jn_bound(ifs.ex6_place_dependent(), 0.0, 3) == pytest.approx(0.125)

    def test_series_closed_form(self):
        # sum_n 2 x r(x)^n = 4 x e^x
        for x in (0.125, 0.5):
            rep = ifs.b5_series_check(ifs.ex6_place_dependent(), x)
            assert rep.total == pytest.approx(4 * x * math.exp(x), rel=1e-9)
        assert ifs.b5_series_check(ifs.ex6_place_dependent(), 0.125).verdict == "holds"
        assert ifs.b5_series_check(ifs.ex6_place_dependent(), 0.5).verdict == "fails"

    def test_series_needs_lambda_above_alpha(self):
        m = ifs.bks_contractive(lam=1.0, growth_bound=1.0)
        with pytest.raises(ifs.IfsError):
            ifs.b5_series_check(m, 0.5)

    def test_assumptions_on_halving(self):
        m = ifs.ex6_place_dependent()
        g = np.random.default_rng(0)
        pairs = g.uniform(0, 6, (300, 2, 1))
        for which in ("A3", "B2", "B3", "A4"):
            assert ifs.check_assumptions(m, pairs, which).satisfied, which

    def test_a2_uniform_contraction(self):
        pairs = np.random.default_rng(1).uniform(-5, 5, (300, 2, 1))
        assert ifs.check_assumptions(ifs.bks_contractive(), pairs, "A2").satisfied
        rep = ifs.check_assumptions(ifs.ex3_jump_ifs(), pairs[:, :, :] ** 2 + 0.05, "A2")
        assert not rep.satisfied
        assert rep.extra["smallest_uniform_r"] > 1

    def test_a2_ratio_near_one_third(self):
        rep = ifs.check_assumptions(ifs.ex3_jump_ifs(), np.array([[[1 / 3], [1 / 3 + 1e-7]]]),
                                    "A2")
        assert rep.extra["ratio"][0] == pytest.approx(1 - 1 / 3 + 1.5, rel=1e-5)
