import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from cesaro import sde
from cesaro.sde import BrownianGrid, HopfMode


class TestHopfRadius:
    @given(st.floats(0.1, 3.0), st.floats(0.05, 4.0))
    def test_noise_free_matches_ode(self, a, r0):
        g = BrownianGrid(0.01, np.zeros(1000))
        r = sde.hopf_radial_path(HopfMode(0, a, 0.0, r0=r0), g)
        ode = solve_ivp(lambda t, y: a * y - y**3, (0, 10), [r0], t_eval=g.times[::50],
                        rtol=1e-11, atol=1e-13)
        assert np.max(np.abs(r[::50] - ode.y[0])) < 1e-8

    def test_equilibrium_is_exact(self):
        g = BrownianGrid.sample(50.0, 0.01, 1)
        r = sde.hopf_radial_path(HopfMode(0, 1.0, 0.0, r0=1.0), g)
        assert np.max(np.abs(r - 1.0)) < 1e-13

    def test_closed_form_matches_fine_euler_maruyama(self):
        a, b, r0, h = 0.7, 0.6, 0.8, 1e-5
        g = BrownianGrid.sample(1.0, h, 17)
        r = sde.hopf_radial_path(HopfMode(0, a, b, r0=r0), g)
        x = r0
        for dB in g.increments:
            x = x + ((a + b * b / 2) * x - x**3) * h + b * x * dB
        assert abs(r[-1] - x) < 5e-3

    def test_ensemble_matches_single_paths_and_chunks(self):
        ens = sde.hopf_radial_ensemble(1.0, 0.5, 1.0, 12.0, 0.01, 3, 5, record=[0.0, 5.0, 12.0])
        for j in range(3):
            g = BrownianGrid.sample(12.0, 0.01, 5, 0, j)
            r = sde.hopf_radial_path(HopfMode(0, 1.0, 0.5, r0=1.0), g)
            assert ens[j] == pytest.approx(r[[0, 500, 1200]], rel=1e-12)

    def test_per_path_record_indices(self):
        idx = np.array([[0, 10], [3, 7]])
        out = sde.hopf_radial_ensemble(1.0, 0.5, 1.0, 0.1, 0.01, 2, 9, record=idx)
        full = sde.hopf_radial_ensemble(1.0, 0.5, 1.0, 0.1, 0.01, 2, 9,
                                        record=np.arange(11) * 0.01)
        assert out[0] == pytest.approx(full[0, [0, 10]])
        assert out[1] == pytest.approx(full[1, [3, 7]])

    @given(st.floats(-2, 2), st.floats(0, 1), st.integers(0, 2**32))
    def test_radius_stays_nonnegative(self, a, b, seed):
        r = sde.hopf_radial_ensemble(a, b, 0.5, 5.0, 0.01, 2, seed, record=[1.0, 5.0])
        assert np.all(r > 0) and np.all(np.isfinite(r))

    def test_zero_start_stays_zero(self):
        assert np.all(sde.hopf_radial_ensemble(1.0, 0.5, 0.0, 2.0, 0.01, 4, 1) == 0)

    def test_decay_below_threshold(self):
        r = sde.hopf_radial_ensemble(-1.0, 0.3, 1.0, 50.0, 0.01, 200, 2)
        assert r.mean() < 1e-3

    def test_grid_validation(self):
        with pytest.raises(sde.SdeError):
            BrownianGrid.sample(1.0, 0.3, 0)
        with pytest.raises(sde.SdeError):
            HopfMode(0, 1.0, 0.0, r0=-1.0)


class TestInvariantLaw:
    def test_noise_free_lambda_is_sqrt_a(self):
        for a in (0.5, 1.0, 2.0):
            lam = sde.hopf_lambda_samples(a, 0.0, 3, 0)
            assert lam == pytest.approx(math.sqrt(a), rel=1e-6)

    def test_zero_growth(self):
        assert np.all(sde.hopf_lambda_samples(0.0, 0.5, 5, 0) == 0)

    def test_second_moment(self):
        # d log r^2 = 2 (a - r^2) dt + 2 b dB, so E[r^2] = a under the invariant law
        lam = sde.hopf_lambda_samples(1.0, 0.5, 4000, 3)
        se = np.std(lam**2) / math.sqrt(len(lam))
        assert abs(np.mean(lam**2) - 1.0) < 4 * se

    def test_single_sample_matches_batch(self):
        assert sde.hopf_lambda_sample(1.0, 0.5, 1e-10, 7) == sde.hopf_lambda_samples(1.0, 0.5, 1, 7)[0]


class TestAnglesAndAssembly:
    def test_quasiperiodic_average(self):
        g = lambda x: np.cos(x[:, 0] - x[:, 1])  # noqa: E731
        ta = sde.quasiperiodic_average(g, [0.3, 1.1], [1.0, math.sqrt(2)], 1e4)
        assert abs(ta - sde.torus_average(g, 2)) < 0.02

    def test_torus_average_exact_for_trig(self):
        assert sde.torus_average(lambda x: np.cos(x[:, 0]) ** 2, 1) == pytest.approx(0.5)

    def test_assemble_shapes_and_x0(self):
        modes = [HopfMode(n, 1.0 - 0.1 * n * n, 0.3, im_F=float(n), r0=0.5) for n in (-1, 0, 1)]
        s = sde.hopf_assemble(modes, 2.0, 20, 4, n_max=1)
        assert s.r.shape == (20, 3)
        assert sde.in_x0(modes)
        assert s.measure.is_probability()
        q = sde.hopf_assemble(modes, 2.0, 20, 4, cesaro=True)
        assert np.all((q.times >= 0) & (q.times <= 2.0))
        with pytest.raises(sde.SdeError):
            sde.hopf_assemble(modes[:2], 2.0, 5, 4, n_max=1)

    def test_phase_sweep(self):
        rows = sde.phase_transition_sweep([0.1, 0.25, 1.0, 2.0], 1.0, 3)
        # a_n = 1 - nu n^2; at nu = 0.25 the n = +-2 modes sit on the boundary
        assert [r["support_dim"] for r in rows] == [12, 4, 0, 0]

    def test_dumps(self, tmp_path):
        g = BrownianGrid.sample(0.1, 0.01, 0)
        sde.dump_hopf_csv(tmp_path / "h.csv", HopfMode(0, 1.0, 0.1), g)
        assert (tmp_path / "h.csv").read_text().startswith("t,r,theta\n")
        sde.dump_sweep_json(tmp_path / "s.json", sde.phase_transition_sweep([0.5], 1.0, 2))


class TestLorenz:
    def test_plane_is_invariant_bit_for_bit(self):
        p = sde.lorenz_simulate([0.0, 0.0, 1.0], 5.0, 0.001, 3, n_paths=20)
        assert np.all(p.states[:, :, :2] == 0.0)

    def test_z_variance_matches_recursion(self):
        params = sde.LorenzParams(alpha=1.0)
        p = sde.lorenz_simulate([0.0, 0.0, 0.0], 10.0, 0.002, 8, params, n_paths=4000,
                                record=[10.0])
        v = p.states[:, 0, 2].var(ddof=1)
        target = sde.ou_em_stationary_variance(params.beta, params.alpha, 0.002)
        assert abs(v - target) < 4 * target * math.sqrt(2 / 4000)

    def test_off_plane_start_decays_to_plane(self):
        p = sde.lorenz_simulate([1.0, -1.0, 0.5], 20.0, 0.001, 1, n_paths=5, record=[20.0])
        assert np.max(np.abs(p.states[:, 0, :2])) < 1e-3

    def test_guards(self):
        with pytest.raises(sde.SdeError):
            sde.LorenzParams(rho=1.5)
        with pytest.raises(sde.SdeError):
            sde.lorenz_simulate([0, 0, 0], 1.0, 0.02, 0)

    def test_csv(self, tmp_path):
        p = sde.lorenz_simulate([0.0, 0.0, 1.0], 0.01, 0.001, 0)
        p.to_csv(tmp_path / "l.csv")
        assert len((tmp_path / "l.csv").read_text().splitlines()) == 12
