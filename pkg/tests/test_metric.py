import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog
from scipy.stats import wasserstein_distance

from cesaro.metric import (Countable, EmpiricalMeasure, Euclidean, MeasureError, Product, Torus,
                           ball_mass, clamped_distance_function, constant_function,
                           dual_lipschitz_distance, make_bump_function, space_from_dict,
                           total_variation, wasserstein1_line)

R1 = Euclidean(1)
# lattice coordinates keep LP coefficients well scaled for the brute-force oracle
coords = st.integers(-20_000, 20_000).map(lambda k: k / 1000)


def _measure(draw, space, max_atoms=8):
    n = draw(st.integers(1, max_atoms))
    pts = np.array([[draw(coords) for _ in range(space.dim)] for _ in range(n)])
    w = np.array([draw(st.floats(0.05, 1.0)) for _ in range(n)])
    return EmpiricalMeasure(pts, w, space).normalized()


@st.composite
def line_pairs(draw, max_atoms=8):
    return _measure(draw, R1, max_atoms), _measure(draw, R1, max_atoms)


def brute_force_bl(mu, nu):
    """Direct LP over all pairwise Lipschitz constraints, with (f, L) variables."""
    pts = np.unique(np.concatenate([mu.points, nu.points]), axis=0)
    c = np.array([mu.mass_of(p) - nu.mass_of(p) for p in pts])
    n = len(pts)
    D = mu.space.distance(pts[:, None, :], pts[None, :, :])
    A, b = [], []
    for i in range(n):
        for j in range(n):
            if i != j:
                row = np.zeros(n + 1)
                row[i], row[j], row[n] = 1.0, -1.0, -D[i, j]
                A.append(row)
                b.append(0.0)
        for s in (1.0, -1.0):
            row = np.zeros(n + 1)
            row[i], row[n] = s, 1.0
            A.append(row)
            b.append(1.0)
    res = linprog(-np.append(c, 0.0), A_ub=np.array(A), b_ub=np.array(b),
                  bounds=[(None, None)] * n + [(0, 1)], method="highs")
    return -res.fun


class TestSpaces:
    @given(st.lists(st.tuples(coords, coords, coords), min_size=3, max_size=3))
    def test_axioms_all_spaces(self, triple):
        for sp in (Euclidean(1), Torus(1), Countable()):
            x, y, z = (np.array([t[0]]) for t in triple)
            assert sp.distance(x, x) == 0
            assert sp.distance(x, y) == pytest.approx(sp.distance(y, x), abs=1e-12)
            assert sp.distance(x, z) <= sp.distance(x, y) + sp.distance(y, z) + 1e-12
        prod = Product([Euclidean(1), Torus(1)])
        x, y, z = (np.array(t[:2]) for t in triple)
        assert prod.distance(x, z) <= prod.distance(x, y) + prod.distance(y, z) + 1e-12

    def test_torus_wraps(self):
        T = Torus(1)
        assert T.distance(np.array([0.1]), np.array([2 * math.pi - 0.1])) == pytest.approx(0.2)
        assert T.distance(np.array([0.0]), np.array([math.pi])) == pytest.approx(math.pi)

    def test_product_is_max_of_components(self):
        P = Product([Euclidean(1), Torus(1)])
        assert P.distance(np.array([0.0, 0.0]), np.array([0.5, 6.0])) == pytest.approx(0.5)

    def test_roundtrip_dict(self):
        for sp in (Euclidean(2), Torus(3), Countable(), Product([Euclidean(1), Torus(1)])):
            assert space_from_dict(sp.to_dict()).to_dict() == sp.to_dict()

    def test_dimension_mismatch(self):
        with pytest.raises(MeasureError):
            Euclidean(2).as_points(np.zeros((3, 3)))


class TestFunctions:
    @given(st.floats(-5, 5), st.floats(0.1, 2), st.floats(0.1, 2))
    def test_bump_bounds_hold(self, z, r, extra):
        f = make_bump_function(z, r, r + extra, R1)
        pts = np.linspace(z - 5, z + 5, 301)
        v = f.violations(pts, R1)
        assert v["ok"], v
        assert float(f(np.array([z]))) == pytest.approx(1.0)
        assert float(f(np.array([z + r + extra + 0.01]))) == 0.0

    def test_bump_on_torus_wraps(self):
        T = Torus(1)
        f = make_bump_function(0.0, 0.5, 1.0, T)
        assert float(f(np.array([2 * math.pi - 0.1]))) == 1.0
        assert f.violations(np.linspace(0, 2 * math.pi, 200), T)["ok"]

    def test_clamped_distance(self):
        f = clamped_distance_function(0.0, R1)
        assert float(f(np.array([0.25]))) == 0.25
        assert float(f(np.array([7.0]))) == 1.0
        assert f.norm == 2.0
        assert f.normalized().norm == pytest.approx(1.0)

    def test_invalid_bump(self):
        with pytest.raises(ValueError):
            make_bump_function(0.0, 1.0, 0.5, R1)

    def test_constant(self):
        assert np.all(constant_function(0.3)(np.zeros((4, 1))) == 0.3)


class TestMeasures:
    def test_rejects_nonpositive_weights(self):
        with pytest.raises(MeasureError):
            EmpiricalMeasure(np.zeros((2, 1)), np.array([1.0, 0.0]), R1)

    def test_merge_and_mass(self):
        mu = EmpiricalMeasure.from_samples([1.0, 1.0, 2.0, 1.0], R1)
        assert mu.n_atoms == 2
        assert mu.mass_of(1.0) == pytest.approx(0.75)
        assert ball_mass(mu, 2.0, 0.5) == pytest.approx(0.25)

    def test_mixture(self):
        m = EmpiricalMeasure.mixture([EmpiricalMeasure.dirac(0.0, R1),
                                      EmpiricalMeasure.dirac(1.0, R1)], [0.25, 0.75])
        assert m.mass_of(1.0) == pytest.approx(0.75)

    def test_csv_json_roundtrip(self, tmp_path):
        mu = EmpiricalMeasure(np.array([[0.1, 2.0], [3.0, -1.0]]), np.array([0.3, 0.7]),
                              Product([Euclidean(1), Torus(1)]))
        mu.to_csv(tmp_path / "m.csv")
        back = EmpiricalMeasure.from_csv(tmp_path / "m.csv", mu.space)
        assert np.array_equal(back.points, mu.points)
        assert np.array_equal(back.weights, mu.weights)
        again = EmpiricalMeasure.from_json(mu.to_json())
        assert np.array_equal(again.weights, mu.weights)

    def test_total_variation_half_l1(self):
        mu = EmpiricalMeasure.from_mapping({0: 0.5, 1: 0.5}, Countable())
        nu = EmpiricalMeasure.from_mapping({0: 1.0}, Countable())
        assert total_variation(mu, nu) == pytest.approx(0.5)


class TestDualLipschitz:
    def test_two_diracs_closed_form(self):
        # value is max over L of min(2 (1 - L), L d), attained at L = 2 / (2 + d)
        for d in (0.1, 0.5, 1.0, 3.0):
            mu, nu = EmpiricalMeasure.dirac(0.0, R1), EmpiricalMeasure.dirac(d, R1)
            grid = np.linspace(0, 1, 100001)
            brute = np.max(np.minimum(2 * (1 - grid), grid * d))
            val = dual_lipschitz_distance(mu, nu).value
            assert val == pytest.approx(2 * d / (2 + d), abs=1e-9)
            assert val == pytest.approx(brute, abs=1e-4)

    @given(line_pairs(6))
    def test_exact_matches_brute_force(self, pair):
        mu, nu = pair
        ref = brute_force_bl(mu, nu)
        assert dual_lipschitz_distance(mu, nu, mode="exact_small").value == pytest.approx(ref, abs=1e-8)
        assert dual_lipschitz_distance(mu, nu, mode="exact_line").value == pytest.approx(ref, abs=1e-8)

    @given(line_pairs())
    def test_sandwich(self, pair):
        mu, nu = pair
        ex = dual_lipschitz_distance(mu, nu).value
        lo = dual_lipschitz_distance(mu, nu, mode="dictionary").value
        assert -1e-12 <= lo <= ex + 1e-9
        assert ex <= wasserstein1_line(mu, nu) + 1e-9
        assert ex <= 2 * total_variation(mu, nu) + 1e-9

    @given(line_pairs(5), st.data())
    def test_symmetry_and_triangle(self, pair, data):
        mu, nu = pair
        rho = _measure(data.draw, R1, 5)
        d = lambda a, b: dual_lipschitz_distance(a, b).value  # noqa: E731
        assert d(mu, nu) == pytest.approx(d(nu, mu), abs=1e-9)
        assert d(mu, rho) <= d(mu, nu) + d(nu, rho) + 1e-9
        assert d(mu, mu) == pytest.approx(0.0, abs=1e-12)

    def test_torus_line_matches_small(self):
        T = Torus(1)
        g = np.random.default_rng(1)
        for _ in range(10):
            mu = EmpiricalMeasure(g.uniform(0, 6.28, (6, 1)), g.uniform(0.1, 1, 6), T).normalized()
            nu = EmpiricalMeasure(g.uniform(0, 6.28, (5, 1)), g.uniform(0.1, 1, 5), T).normalized()
            a = dual_lipschitz_distance(mu, nu, mode="exact_small").value
            b = dual_lipschitz_distance(mu, nu, mode="exact_line").value
            assert a == pytest.approx(b, abs=1e-8)

    def test_wasserstein_matches_scipy(self):
        g = np.random.default_rng(2)
        a, b = g.normal(size=50), g.normal(1, 2, size=70)
        mu, nu = EmpiricalMeasure.from_samples(a, R1), EmpiricalMeasure.from_samples(b, R1)
        assert wasserstein1_line(mu, nu) == pytest.approx(wasserstein_distance(a, b), rel=1e-12)

    def test_large_samples_auto(self):
        g = np.random.default_rng(3)
        mu = EmpiricalMeasure.from_samples(g.normal(size=2000), R1)
        nu = EmpiricalMeasure.from_samples(g.normal(size=2000), R1)
        res = dual_lipschitz_distance(mu, nu, mode="auto")
        assert res.mode == "exact_line"
        assert 0 < res.value < 0.2

    def test_requires_probability(self):
        mu = EmpiricalMeasure(np.zeros((1, 1)), np.array([0.5]), R1)
        with pytest.raises(MeasureError):
            dual_lipschitz_distance(mu, mu)
