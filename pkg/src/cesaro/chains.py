"""Exact transition functions and Cesaro averages for countable-state chains.

Two chains are built in:

* the absorbing chain on ``{0} u {1/n} u {n}`` whose transition
  probabilities are available in closed form (:class:`AbsorbingChain`);
* the integer chain of the ergodic-decomposition example, represented by its
  jump matrix on a truncated window and evaluated through uniformization
  (:func:`integer_chain`, :func:`uniformized_transition`).

Uniformized quantities always report the mass lost to the Poisson-series
truncation (``tail``) and the mass routed outside the state window (``leak``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, sparse, stats

from .metric import Countable, EmpiricalMeasure, TestFunction, dual_lipschitz_distance

COUNTABLE = Countable()


class ChainError(ValueError):
    pass


class TruncationError(ChainError):
    pass


class QuadratureError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# the closed-form chain on {0} u {1/n} u {n}
# --------------------------------------------------------------------------


def _absorbing_kind(x: float) -> tuple[str, int]:
    x = float(x)
    if x == 0.0:
        return "zero", 0
    if x >= 2:
        n = round(x)
        if abs(x - n) < 1e-9:
            return "big", n
    elif 0 < x <= 0.5:
        n = round(1 / x)
        if n >= 2 and abs(1 / n - x) < 1e-12:
            return "inv", n
    raise ChainError(f"{x!r} is not a state of the chain on {{0}} u {{1/n}} u {{n}}")


class AbsorbingChain:
    """Absorbing chain: ``1/n -> n -> 0`` with exponential holding times of
    mean ``n``.  Every transition probability is evaluated in closed form."""

    space = COUNTABLE

    @staticmethod
    def transition(i: float, j: float, t: float) -> float:
        if t < 0:
            raise ChainError("time must be nonnegative")
        ki, ni = _absorbing_kind(i)
        kj, nj = _absorbing_kind(j)
        if ki == "zero":
            return 1.0 if kj == "zero" else 0.0
        stay = math.exp(-t / ni)
        if ki == "inv":
            if kj == "inv" and nj == ni:
                return stay
            if kj == "big" and nj == ni:
                return (t / ni) * stay
            if kj == "zero":
                # 1 - e^{-u} - u e^{-u}, u = t/n, without cancellation
                u = t / ni
                return -math.expm1(-u) - u * stay
            return 0.0
        if kj == "big" and nj == ni:
            return stay
        if kj == "zero":
            return -math.expm1(-t / ni)
        return 0.0

    def row(self, i: float, t: float) -> EmpiricalMeasure:
        ki, n = _absorbing_kind(i)
        if ki == "zero":
            return EmpiricalMeasure.dirac(0.0, COUNTABLE)
        targets = [float(i), float(n), 0.0] if ki == "inv" else [float(i), 0.0]
        masses = {j: self.transition(i, j, t) for j in targets}
        return EmpiricalMeasure.from_mapping(masses, COUNTABLE)

    def Pf(self, f: TestFunction, x: float, t: float) -> float:
        mu = self.row(x, t)
        return float(np.dot(mu.weights, f(mu.points)))

    @staticmethod
    def cesaro_closed_form(f: TestFunction, x: float, t: float) -> float:
        """``Q_t f(x)`` from the antiderivatives of the three transition terms."""
        k, n = _absorbing_kind(x)
        f0 = float(f(np.array([0.0])))
        if k == "zero":
            return f0
        u = t / n
        occ_self = n * (-math.expm1(-u)) / t
        if k == "big":
            return float(f(np.array([float(n)]))) * occ_self + f0 * (1 - occ_self)
        occ_big = n * (-math.expm1(-u) - u * math.exp(-u)) / t
        return (float(f(np.array([1.0 / n]))) * occ_self
                + float(f(np.array([float(n)]))) * occ_big
                + f0 * (1 - occ_self - occ_big))


_ABSORBING = AbsorbingChain()


def absorbing_transition(i: float, j: float, t: float) -> float:
    return _ABSORBING.transition(i, j, t)


# --------------------------------------------------------------------------
# uniformized chains on a truncated window
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UniformizedChain:
    """Jump matrix of a rate-``rate`` uniformized chain on integer states
    ``states``.  ``leak[k]`` is the jump mass from ``states[k]`` that leaves
    the window; stored rows sum to ``1 - leak``."""

    jump_matrix: sparse.csr_matrix
    states: np.ndarray
    leak: np.ndarray
    truncation_bound: int
    rate: float = 1.0

    space = COUNTABLE

    @classmethod
    def from_rule(cls, rule: Callable[[int], dict], n_max: int,
                  rate: float = 1.0) -> "UniformizedChain":
        states = np.arange(-n_max, n_max + 1)
        index = {int(s): k for k, s in enumerate(states)}
        rows, cols, vals = [], [], []
        leak = np.zeros(len(states))
        for k, s in enumerate(states):
            row = rule(int(s))
            total = sum(row.values())
            if abs(total - 1.0) > 1e-12:
                raise ChainError(f"row {s} sums to {total}")
            for j, p in row.items():
                if p == 0:
                    continue
                if j in index:
                    rows.append(k)
                    cols.append(index[j])
                    vals.append(p)
                else:
                    leak[k] += p
        P = sparse.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
        return cls(P, states, leak, n_max, rate)

    @classmethod
    def from_entries(cls, entries: dict, n_max: int, rate: float = 1.0):
        """Build from sparse ``{(i, j): p}`` entries; unlisted rows are absorbing."""
        by_row: dict = {}
        for (i, j), p in entries.items():
            by_row.setdefault(int(i), {})[int(j)] = float(p)
        return cls.from_rule(lambda s: by_row.get(s, {s: 1.0}), n_max, rate)

    def index_of(self, state: int) -> int:
        k = int(state) + self.truncation_bound
        if not 0 <= k < len(self.states) or self.states[k] != int(state):
            raise ChainError(f"state {state} outside the window ±{self.truncation_bound}")
        return k

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.jump_matrix.sum(axis=1)).ravel()

    def Pf(self, f: TestFunction, x: int, t: float, tol: float = 1e-12) -> float:
        res = uniformized_transition(self, x, t, tol)
        return float(res.vector @ f(self.states.astype(float)[:, None]))


def integer_chain_rule(s: int) -> dict:
    """Jump kernel of the integer chain with ergodic classes {0} and {1, 3}.

    Negative states step further down with probability ``exp(-1/n^2)`` and
    fall to 0 otherwise; this is the orientation under which escape to
    ``-inf`` has positive probability.
    """
    if s == 0:
        return {0: 1.0}
    if s == 1:
        return {3: 1.0}
    if s == 3:
        return {1: 1.0}
    if s < 0:
        n = -s
        down = math.exp(-1.0 / n**2)
        return {s - 1: down, 0: 1.0 - down}
    if s % 2 == 0:
        return {s - 2: 1.0}
    n = (s - 1) // 2
    return {0: 1.0 / n, 1: 1.0 - 1.0 / n}


def integer_chain(n_max: int = 200) -> UniformizedChain:
    return UniformizedChain.from_rule(integer_chain_rule, n_max)


def poisson_terms(mean: float, tol: float) -> np.ndarray:
    """Poisson(mean) probabilities ``p_0..p_N`` with ``N >= mean`` the smallest
    index whose upper tail ``P(X > N)`` is at most ``tol``."""
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if mean == 0:
        return np.ones(1)
    guess = stats.poisson.isf(tol, mean)  # nan below double resolution
    n = max(int(guess) if np.isfinite(guess) else 0, int(math.ceil(mean)))
    while n > 0 and stats.poisson.sf(n - 1, mean) <= tol and n - 1 >= mean:
        n -= 1
    while stats.poisson.sf(n, mean) > tol:
        n += 1
    return stats.poisson.pmf(np.arange(n + 1), mean)


@dataclass(frozen=True, eq=False)
class ChainDistribution:
    """Distribution over ``states``; ``1 - vector.sum() == tail + leak``."""

    states: np.ndarray
    vector: np.ndarray
    tail: float
    leak: float
    n_terms: int

    @property
    def measure(self) -> EmpiricalMeasure:
        keep = self.vector > 0
        return EmpiricalMeasure(self.states[keep].astype(float)[:, None],
                                self.vector[keep], COUNTABLE)

    @property
    def deficit(self) -> float:
        return 1.0 - float(self.vector.sum())

    def mass(self, state: int) -> float:
        k = np.searchsorted(self.states, state)
        if k < len(self.states) and self.states[k] == state:
            return float(self.vector[k])
        return 0.0


def _check_leak(leak: float, leak_budget: float | None):
    if leak_budget is not None and leak > leak_budget:
        raise TruncationError(
            f"{leak:.3e} of the mass left the state window (budget {leak_budget:.1e})")


def uniformized_transition(chain: UniformizedChain, i: int, t: float, tol: float,
                           leak_budget: float | None = None) -> ChainDistribution:
    """``P_t(i, .) = sum_n e^{-rt} (rt)^n / n! P^n(i, .)``, series cut where
    the Poisson tail drops below ``tol``."""
    if t < 0:
        raise ChainError("time must be nonnegative")
    weights = poisson_terms(chain.rate * t, tol)
    v = np.zeros(len(chain.states))
    v[chain.index_of(i)] = 1.0
    PT = chain.jump_matrix.T.tocsr()
    out = np.zeros_like(v)
    leak = 0.0
    for n, w in enumerate(weights):
        out += w * v
        leak += w * (1.0 - v.sum())
        if n + 1 < len(weights):
            v = PT @ v
    tail = float(stats.poisson.sf(len(weights) - 1, chain.rate * t)) if t > 0 else 0.0
    _check_leak(leak, leak_budget)
    return ChainDistribution(chain.states, out, tail, leak, len(weights))


def cesaro_uniformized(chain: UniformizedChain, i: int, t: float, tol: float,
                       leak_budget: float | None = None) -> ChainDistribution:
    """Exact ``Q_t(i, .)`` of a uniformized chain.

    Integrating the Poisson weights over ``[0, t]`` gives
    ``Q_t = sum_n P(N_t > n) / (rt) * P^n``; the coefficients sum to one, and
    the series is cut once the remaining coefficient mass is below ``tol``.
    """
    if t <= 0:
        raise ChainError("Cesaro averages need t > 0")
    mean = chain.rate * t
    # coefficient of P^n is P(N_t > n) / (rt); remaining mass is summed from the far end
    big = len(poisson_terms(mean, min(tol, 1e-15))) + 32
    coefs = stats.poisson.sf(np.arange(big), mean) / mean
    remaining = np.concatenate([np.cumsum(coefs[::-1])[::-1][1:], [0.0]])
    cut = int(np.nonzero(remaining <= tol)[0][0])
    coefs, tail = coefs[:cut + 1], float(remaining[cut])
    v = np.zeros(len(chain.states))
    v[chain.index_of(i)] = 1.0
    PT = chain.jump_matrix.T.tocsr()
    out = np.zeros_like(v)
    leak = 0.0
    for n, c in enumerate(coefs):
        out += c * v
        leak += c * (1.0 - v.sum())
        if n + 1 < len(coefs):
            v = PT @ v
    _check_leak(leak, leak_budget)
    return ChainDistribution(chain.states, out, tail, leak, len(coefs))


def cesaro_exact(chain, f: TestFunction, x, t: float, quad_tol: float = 1e-10) -> float:
    """``Q_t f(x) = (1/t) int_0^t P_s f(x) ds`` by adaptive Gauss-Kronrod.

    ``chain`` is anything exposing ``Pf(f, x, s)``: :class:`AbsorbingChain` or a
    :class:`UniformizedChain`.
    """
    if t <= 0:
        raise ChainError("Cesaro averages need t > 0")
    if quad_tol <= 0:
        raise ValueError("quad_tol must be positive")
    val, err, info = integrate.quad(lambda s: chain.Pf(f, x, s), 0.0, t, epsabs=quad_tol * t,
                                    epsrel=0.0, limit=500, full_output=True)[:3]
    if err > quad_tol * t:
        raise QuadratureError(f"quadrature error estimate {err:.3e} above tolerance")
    return val / t


@dataclass(frozen=True, eq=False)
class LimitEstimate:
    state: int
    t: float
    distribution: ChainDistribution
    half_distance: float
    stable: bool
    in_tight_set: bool
    note: str = ""

    @property
    def measure(self) -> EmpiricalMeasure:
        return self.distribution.measure


def integer_chain_limit(x: int, t: float, tol: float = 1e-8,
                      stability_tol: float = 0.02,
                      chain: UniformizedChain | None = None) -> LimitEstimate:
    """Cesaro-averaged distribution ``Q_t(x, .)`` of the integer chain, with a
    stability check against ``Q_{t/2}(x, .)``.

    Negative starts are outside the set of tight Cesaro families; for them the
    result is a diagnostic whose ``leak`` records mass escaping downwards.
    """
    chain = chain or integer_chain()
    q = cesaro_uniformized(chain, x, t, tol)
    q_half = cesaro_uniformized(chain, x, t / 2, tol)
    a, b = q.measure, q_half.measure
    if a.total_weight <= 0 or b.total_weight <= 0:
        dist = float("nan")
    else:
        mode = "exact_small" if len(np.union1d(a.points[:, 0], b.points[:, 0])) <= 64 \
            else "exact_line"
        dist = dual_lipschitz_distance(a.normalized(), b.normalized(), mode=mode).value
    note = ""
    if x < 0:
        note = (f"start {x} is transient towards -inf: leak {q.leak:.3e} at t={t}; "
                "no Cesaro limit is claimed")
    return LimitEstimate(int(x), t, q, dist, bool(dist < stability_tol), x >= 0, note)
