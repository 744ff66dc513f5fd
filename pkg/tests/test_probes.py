import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cesaro import probes
from cesaro.metric import (Euclidean, Torus, clamped_distance_function, constant_function,
                           make_bump_function, TestFunction)
from cesaro.models import absorbing_chain_model, build_model, integer_chain_model

R1 = Euclidean(1)
F = clamped_distance_function(0.0, R1)


def trio(space):
    return [make_bump_function(0.0, 0.5, 1.0, space), clamped_distance_function(0.0, space),
            TestFunction(lambda x: 0.5 * np.cos(np.asarray(x)[..., 0]), 0.5, 0.5, "cos/2")]


class TestEstimators:
    def test_constant_function_has_zero_error(self):
        est = probes.estimate_Qt(build_model("ex6_place_dependent"), constant_function(0.3),
                                 1.0, 5.0, 50, 1)
        assert est.value == pytest.approx(0.3)
        assert est.std_error == 0.0

    def test_absorbing_chain_estimate_within_error(self):
        model = absorbing_chain_model()
        est = probes.estimate_Qt(model, F, 0.5, 2.0, 20_000, 3)
        exact = model.exact_qf(F, 0.5, 2.0)
        assert abs(est.value - exact) < 4 * est.std_error

    def test_identity_and_absorbing_flows(self):
        f = clamped_distance_function(0.0, R1)
        assert probes.estimate_Qt(build_model("identity"), f, 0.4, 3.0, 4, 0).value == \
            pytest.approx(0.4)
        # absorbed instantly: time average is 0 for any start
        assert probes.estimate_Qt(build_model("absorbing"), f, 0.4, 3.0, 4, 0).value == \
            pytest.approx(0.0, abs=1e-2)

    def test_rotation_occupation_matches_integral(self):
        g = TestFunction(lambda x: np.cos(np.asarray(x)[..., 0]), 1.0, 1.0)
        est = probes.estimate_Qt(build_model("torus_rotation"), g, 0.0, 10.0, 2, 0)
        assert est.value == pytest.approx(math.sin(10.0) / 10.0, abs=1e-3)

    def test_qt_measure_is_probability(self):
        mu = probes.estimate_Qt_measure(build_model("torus_rotation"), 0.0, 4.0, 2, 16, 0)
        assert mu.is_probability()

    @given(st.floats(0.1, 100), st.floats(1.01, 3), st.integers(4, 20))
    def test_geometric_grid(self, t0, ratio, n):
        g = probes.geometric_grid(t0, ratio, n)
        assert len(g) == n and g[0] == t0
        assert np.all(np.diff(g) > 0)
        assert len(probes.trailing_half(g)) == n - n // 2


class TestLowerBounds:
    grid = probes.geometric_grid(50.0)

    def test_rotation_c3_is_half(self):
        rep = probes.probe_lower_bound(build_model("torus_rotation"), "C3", 0.0, math.pi / 2,
                                       [0.0, 1.0, 2.5], self.grid, 2, 0)
        assert rep.verdict == probes.SUPPORTED
        assert rep.proxy == pytest.approx(0.5, abs=0.01)

    def test_drift_escapes(self):
        rep = probes.probe_lower_bound(build_model("drift"), "C2", 0.0, 1.0, [0.0, 1.0],
                                       self.grid, 2, 0)
        assert rep.verdict == probes.REFUTED
        assert rep.witness is not None

    def test_halving_c4(self):
        rep = probes.probe_lower_bound(build_model("ex6_place_dependent"), "C4", 0.0, 0.5,
                                       [1.0], probes.geometric_grid(20.0), 2000, 4)
        assert rep.verdict == probes.SUPPORTED

    def test_finite_set_condition(self):
        rep = probes.probe_lower_bound(build_model("identity"), "C", [[0.0], [3.0]], 0.5,
                                       [0.1, 2.9], self.grid, 2, 0)
        assert rep.proxy == 1.0

    def test_grid_too_short(self):
        with pytest.raises(probes.ProbeError):
            probes.probe_lower_bound(build_model("identity"), "C1", 0.0, 1.0, [0.0],
                                     [1.0, 2.0], 2, 0)

    def test_report_serializes(self, tmp_path):
        rep = probes.probe_lower_bound(build_model("drift"), "C3", 0.0, 1.0, [0.0],
                                       self.grid, 2, 0)
        rep.to_json(tmp_path / "r.json")
        rep.to_csv(tmp_path / "r.csv")
        back = json.loads((tmp_path / "r.json").read_text())
        assert back["verdict"] == rep.verdict and back["seed"] == 0


class TestRegularity:
    radii = [1 / n for n in (2, 5, 10, 20, 50)]

    def test_absorbing_chain_cesaro_e_property_fails(self):
        rep = probes.probe_regularity(absorbing_chain_model(), "cesaro_e_prop", 0.0, F,
                                      self.radii, lambda r: [1 / r], 2, 0, use_exact=True)
        assert rep.verdict == probes.REFUTED
        assert rep.witness["gap"] >= 1 - 2 / math.e

    def test_absorbing_chain_eventually_continuous(self):
        rep = probes.probe_regularity(absorbing_chain_model(), "evc", 0.0, F, self.radii,
                                      lambda r: [50 / r * 2**k for k in range(6)], 2, 0,
                                      use_exact=True, tol=1e-6)
        assert rep.verdict == probes.SUPPORTED

    def test_rotation_e_property_monte_carlo(self):
        T1 = Torus(1)
        rep = probes.probe_regularity(build_model("torus_rotation"), "e_prop", 0.0,
                                      clamped_distance_function(0.0, T1), [0.5, 0.1, 0.01],
                                      [1.0, 2.0, 3.0, 5.0], 2, 0)
        assert rep.verdict == probes.SUPPORTED

    def test_radii_must_decrease(self):
        with pytest.raises(probes.ProbeError):
            probes.probe_regularity(absorbing_chain_model(), "evc", 0.0, F, [0.1, 0.5],
                                    [1.0], 2, 0)


class TestDecomposition:
    def test_integer_chain_classes_exact(self):
        rep = probes.ergodic_decomposition(integer_chain_model(), [0, 1, 3, 5, 7], 200.0, 0,
                                           0.05, 0, use_exact=True)
        assert rep.class_of(1) == rep.class_of(2)
        assert len({rep.class_of(i) for i in (0, 1, 3, 4)}) == 4
        assert sorted(rep.ergodic_candidates) == sorted({rep.class_of(0), rep.class_of(1)})
        assert not rep.emds_violation

    def test_integer_chain_classes_monte_carlo(self):
        rep = probes.ergodic_decomposition(integer_chain_model(), [0, 1, 3, 5], 200.0, 2000,
                                           0.05, 1)
        assert rep.class_of(1) == rep.class_of(2) != rep.class_of(0)
        assert not rep.emds_violation

    def test_single_linkage(self):
        D = np.array([[0, 0.01, 1], [0.01, 0, 1], [1, 1, 0]])
        assert probes.single_linkage(D, 0.05) == [[0, 1], [2]]


class TestGlobalChecks:
    grid = probes.geometric_grid(50.0)

    def test_rotation_mean_ergodic_but_pt_oscillates(self):
        m = build_model("torus_rotation")
        fl = trio(Torus(1))
        me = probes.weak_star_mean_ergodicity_check(m, [0.0, 1.0, 2.0], fl, self.grid, 2, 0)
        pt = probes.pt_convergence_check(m, [0.0, 1.0], fl, self.grid, 2, 0)
        assert me.verdict == probes.SUPPORTED
        assert pt.verdict == probes.REFUTED

    def test_identity_not_mean_ergodic(self):
        me = probes.weak_star_mean_ergodicity_check(build_model("identity"), [0.0, 1.0],
                                                    trio(R1), self.grid, 2, 0)
        assert me.verdict == probes.REFUTED

    def test_needs_three_functions(self):
        with pytest.raises(probes.ProbeError):
            probes.weak_star_mean_ergodicity_check(build_model("identity"), [0.0, 1.0],
                                                   trio(R1)[:2], self.grid, 2, 0)

    def test_sweep_on_halving_system(self):
        rep = probes.sweep_check(build_model("ex6_place_dependent"), ([0.5], [3.0]), [1.0, 2.0],
                                 [1.0, 10.0, 100.0, 400.0], 2000, 0)
        assert rep.verdict == probes.SUPPORTED

    def test_sweep_exact_on_absorbing_chain(self):
        rep = probes.sweep_check(absorbing_chain_model(), ([0.1], [10.0]), [0.5, 2.0],
                                 [10.0, 100.0, 1000.0, 5000.0], 0, 0, use_exact=True)
        assert rep.verdict == probes.SUPPORTED
        assert rep.std_error == 0.0

    def test_tightness_curve(self):
        rows = probes.tightness_curve(build_model("drift"), 0.0, 0.0, [1.0, 10.0],
                                      [5.0, 20.0, 80.0], 2, 0)
        far = [r["outside"] for r in rows if r["R"] == 10.0]
        assert far[0] == 0.0 and far[-1] > 0.8
