"""The weighted spacing-product process and its exact moment oracles.

For iid unit exponentials ``E_1, E_2, ...`` and ``gamma > 0`` define the block
products

    P(j, k) = exp(-gamma * sum_{h=j}^{k-1} E_h / h),   1 <= j <= k,

with ``P(k, k) = 1``.  Because ``E[exp(-t E)] = 1 / (1 + t)`` and the blocks
``[i, j)`` and ``[j, k)`` are independent, every first and second moment of the
``P(j, k)`` is a finite product of ratios ``h / (h + c)``.  Those products are
evaluated in log-space through Pochhammer symbols, which stays accurate for
``k`` in the tens of millions.

Given a weight function ``f`` with ``f(0) = 0`` and increments ``df(j)`` the
process of interest is

    A_k = sum_{j=1}^{k-1} df(j) P(j, k),
    W_k = sum_{j=1}^{k-1} f(j) [P(j+1, k) - P(j, k)] = f(k-1) - A_k,

and the normalized path reported by :func:`simulate_path` is ``A_k / f(k)``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaln, poch

from .errors import ContractError, DivergenceError, ParameterError
from .sampling import SeededStream, draw_exponentials


# --------------------------------------------------------------------------
# weights and parameters


@dataclass(frozen=True)
class WeightFunction:
    """Increasing integer weight ``f`` with ``f(0) = 0``.

    ``kind`` is one of ``"power"`` (``f(j) = j**tau``), ``"table"`` (explicit
    values ``f(0), f(1), ...``) or ``"rule"`` (an arbitrary vectorized callable).
    """

    kind: str
    tau: Optional[float] = None
    table: Optional[tuple] = None
    rule: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "power":
            if self.tau is None or not self.tau > 0:
                raise ParameterError("power weight needs tau > 0")
        elif self.kind == "table":
            if self.table is None or len(self.table) < 2:
                raise ParameterError("table weight needs at least f(0), f(1)")
            vals = np.asarray(self.table, dtype=np.float64)
            _check_weights(vals, np.arange(vals.size))
            object.__setattr__(self, "table", tuple(float(v) for v in vals))
        elif self.kind == "rule":
            if self.rule is None:
                raise ParameterError("rule weight needs a callable")
        else:
            raise ParameterError(f"unknown weight kind {self.kind!r}")

    @classmethod
    def power(cls, tau: float) -> "WeightFunction":
        return cls("power", tau=float(tau))

    @classmethod
    def identity(cls) -> "WeightFunction":
        return cls.power(1.0)

    @classmethod
    def from_table(cls, values: Sequence[float]) -> "WeightFunction":
        return cls("table", table=tuple(values))

    @classmethod
    def from_rule(cls, rule: Callable[[np.ndarray], np.ndarray]) -> "WeightFunction":
        return cls("rule", rule=rule)

    @property
    def max_index(self) -> Optional[int]:
        return len(self.table) - 1 if self.kind == "table" else None

    def __call__(self, j) -> np.ndarray:
        j_arr = np.asarray(j)
        if np.any(j_arr < 0):
            raise IndexError("weight index must be non-negative")
        if self.kind == "power":
            return np.asarray(j_arr, dtype=np.float64) ** self.tau
        if self.kind == "table":
            if np.any(j_arr > self.max_index):
                raise IndexError(f"weight table only defined up to j = {self.max_index}")
            return np.asarray(self.table)[j_arr]
        return np.asarray(self.rule(np.asarray(j_arr, dtype=np.float64)), dtype=np.float64)

    def values_upto(self, m: int) -> np.ndarray:
        """``f(0), ..., f(m)`` with the weight invariants checked."""
        vals = self(np.arange(m + 1))
        _check_weights(vals, np.arange(m + 1))
        return vals

    def increments_upto(self, m: int) -> np.ndarray:
        """Array ``d`` of length ``m + 1`` with ``d[j] = f(j) - f(j-1)`` and ``d[0] = 0``.

        Power weights use ``expm1``/``log1p`` so increments keep full precision
        at large ``j``.
        """
        if self.kind == "power":
            j = np.arange(1, m + 1, dtype=np.float64)
            d = np.empty(m + 1)
            d[0] = 0.0
            with np.errstate(divide="ignore"):
                d[1:] = j**self.tau * -np.expm1(self.tau * np.log1p(-1.0 / j))
            d[1] = 1.0
            return d
        vals = self.values_upto(m)
        return np.concatenate([[0.0], np.diff(vals)])

    def to_dict(self) -> dict:
        if self.kind == "power":
            return {"kind": "power", "tau": self.tau}
        if self.kind == "table":
            return {"kind": "table", "table": list(self.table)}
        raise ParameterError("rule weights are not serializable")

    @classmethod
    def from_dict(cls, data: dict) -> "WeightFunction":
        if data["kind"] == "power":
            return cls.power(data["tau"])
        if data["kind"] == "table":
            return cls.from_table(data["table"])
        raise ParameterError(f"cannot deserialize weight kind {data['kind']!r}")


def _check_weights(vals: np.ndarray, j: np.ndarray) -> None:
    if not np.all(np.isfinite(vals)):
        raise ParameterError("weights must be finite")
    if j.size and j[0] == 0 and vals[0] != 0.0:
        raise ParameterError("weight function must satisfy f(0) = 0")
    if np.any(np.diff(vals) <= 0):
        bad = int(np.argmax(np.diff(vals) <= 0)) + 1
        raise ContractError(f"weight function not strictly increasing at j = {int(j[bad])}")


def alpha_one(k):
    return np.ones_like(np.asarray(k, dtype=np.float64))


@dataclass(frozen=True)
class PowerAlpha:
    """Scaling ``alpha(k) = k**exponent``."""

    exponent: float = 0.0

    def __call__(self, k):
        return np.asarray(k, dtype=np.float64) ** self.exponent


@dataclass(frozen=True)
class ProcessParams:
    """Tail parameter, weights, row scaling ``alpha(k)``, cutoff ``L`` and ``delta``.

    ``nu = (1 - delta) / 2`` is the growth allowance used by the variance
    conditions.
    """

    gamma: float
    weight: WeightFunction = field(default_factory=WeightFunction.identity)
    alpha: Callable = PowerAlpha(0.0)
    cutoff: int = 10
    delta: float = 0.5

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.cutoff < 1:
            raise ParameterError("cutoff L must be at least 1")
        if not 0 < self.delta < 3:
            raise ParameterError(f"delta must lie in (0, 3), got {self.delta}")

    @classmethod
    def power(cls, gamma: float, tau: float, *, cutoff: int = 10, delta: float = 0.5,
              alpha_exponent: Optional[float] = None) -> "ProcessParams":
        """``f(j) = j**tau`` with ``alpha(k) = k**(1 - tau)`` unless overridden."""
        exp = 1.0 - tau if alpha_exponent is None else alpha_exponent
        return cls(float(gamma), WeightFunction.power(tau), PowerAlpha(float(exp)),
                   int(cutoff), float(delta))

    @property
    def nu(self) -> float:
        return (1.0 - self.delta) / 2.0

    def alpha_values(self, k) -> np.ndarray:
        a = np.asarray(self.alpha(np.asarray(k, dtype=np.float64)), dtype=np.float64)
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise ParameterError("alpha(k) must be positive and finite")
        return a

    def to_dict(self) -> dict:
        if not isinstance(self.alpha, PowerAlpha):
            raise ParameterError("only power-law alpha rules are serializable")
        return {"gamma": self.gamma, "weight": self.weight.to_dict(),
                "alpha_exponent": self.alpha.exponent, "cutoff": self.cutoff,
                "delta": self.delta}

    @classmethod
    def from_dict(cls, data: dict) -> "ProcessParams":
        return cls(float(data["gamma"]), WeightFunction.from_dict(data["weight"]),
                   PowerAlpha(float(data.get("alpha_exponent", 0.0))),
                   int(data.get("cutoff", 10)), float(data.get("delta", 0.5)))


# --------------------------------------------------------------------------
# exact moments of the block products


def _check_indices(j: int, k: int, lowest: int = 1) -> None:
    if j < lowest or j > k:
        raise IndexError(f"need {lowest} <= j <= k, got j={j}, k={k}")


def log_product_mean(j: int, k: int, gamma: float) -> float:
    """``log prod_{h=j}^{k-1} h / (h + gamma)``."""
    _check_indices(j, k)
    if j == k:
        return 0.0
    with np.errstate(over="ignore"):
        a, b = poch(j, gamma), poch(k, gamma)
    if np.isfinite(a) and np.isfinite(b) and a > 0 and b > 0:
        return math.log(a) - math.log(b)
    return float((gammaln(k) - gammaln(k + gamma)) - (gammaln(j) - gammaln(j + gamma)))


def product_mean(j: int, k: int, gamma: float) -> float:
    """``E P(j, k) = prod_{h=j}^{k-1} h / (h + gamma)``."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    return math.exp(log_product_mean(j, k, gamma))


def product_var(j: int, k: int, gamma: float) -> float:
    """Exact ``Var P(j, k) = E P(j,k; 2 gamma) - E P(j,k; gamma)**2``."""
    m1 = product_mean(j, k, gamma)
    return max(product_mean(j, k, 2 * gamma) - m1 * m1, 0.0)


def product_cov(i: int, j: int, k: int, gamma: float) -> float:
    """Exact ``Cov(P(i, k), P(j, k))`` for ``i <= j <= k``.

    ``P(i, k) = P(i, j) P(j, k)`` with independent factors, so
    ``E[P(i,k) P(j,k)] = E P(i,j) * E P(j,k)**2``.
    """
    _check_indices(i, j)
    _check_indices(j, k)
    second = math.exp(log_product_mean(i, j, gamma) + log_product_mean(j, k, 2 * gamma))
    first = math.exp(log_product_mean(i, k, gamma) + log_product_mean(j, k, gamma))
    return max(second - first, 0.0)


@dataclass(frozen=True)
class NewmanBound:
    """Bounds on ``gamma**2 * sum_{h=j}^{k-1} h**-2``.

    ``exact`` is the partial sum itself and ``integral`` the bound
    ``gamma**2 / (j - 1)`` from ``h**-2 <= int_{h-1}^{h} x**-2 dx``.  ``stated``
    is ``gamma**2 / j``, which is *not* a bound in general: the full tail
    ``sum_{h>=j} h**-2`` behaves like ``1/j + 1/(2 j**2)`` and exceeds ``1/j``
    once ``k`` is large.
    """

    exact: float
    integral: float
    stated: float

    @property
    def stated_holds(self) -> bool:
        return self.exact <= self.stated


def newman_bound(j: int, k: int, gamma: float) -> NewmanBound:
    """Covariance bound for the block products from Newman's inequality.

    ``|Cov(P(i,k), P(j,k))| <= Var(gamma * sum_{h=j}^{k-1} E_h / h)`` for
    ``i <= j`` since ``exp(-x)`` has unit Lipschitz constant on ``x >= 0``.
    """
    _check_indices(j, k, lowest=2)
    g2 = gamma * gamma
    if j == k:
        return NewmanBound(0.0, 0.0, 0.0)
    h = np.arange(j, k, dtype=np.float64)
    exact = g2 * math.fsum((1.0 / h) ** 2)
    return NewmanBound(exact, g2 / (j - 1), g2 / j)


class MomentOracle:
    """Cached log-cumulative products for vectorized moment tables.

    ``log_cum(c)[h] = sum_{t=1}^{h-1} log(t / (t + c))`` so that
    ``E P(j, k) = exp(log_cum(gamma)[k] - log_cum(gamma)[j])``.  Caches grow by
    doubling under a lock; reads after warm-up are lock-free.
    """

    def __init__(self, gamma: float):
        if not gamma > 0:
            raise ParameterError("gamma must be positive")
        self.gamma = float(gamma)
        self._cache: dict = {}
        self._lock = threading.Lock()

    def log_cum(self, c: float, upto: int) -> np.ndarray:
        arr = self._cache.get(c)
        if arr is not None and arr.size > upto:
            return arr
        with self._lock:
            arr = self._cache.get(c)
            if arr is None or arr.size <= upto:
                size = max(upto + 1, 2 * (arr.size if arr is not None else 64))
                t = np.arange(1, size, dtype=np.float64)
                arr = np.concatenate([[0.0, 0.0], np.cumsum(-np.log1p(c / t))[:-1]])
                self._cache[c] = arr
        return arr

    def mean_table(self, j, k, c: Optional[float] = None) -> np.ndarray:
        """``E P(j, k)`` with exponent rate ``c`` (default ``gamma``), broadcast over arrays."""
        c = self.gamma if c is None else c
        j = np.asarray(j)
        k = np.asarray(k)
        if np.any(j < 1) or np.any(j > k):
            raise IndexError("need 1 <= j <= k")
        lc = self.log_cum(c, int(np.max(k)))
        return np.exp(lc[k] - lc[j])

    def cov_matrix(self, idx: np.ndarray, k: int) -> np.ndarray:
        """Covariance matrix of ``P(i, k)`` for ``i`` in ``idx`` (entries ``<= k``)."""
        idx = np.asarray(idx)
        lo = np.minimum.outer(idx, idx)
        hi = np.maximum.outer(idx, idx)
        g = self.gamma
        lg = self.log_cum(g, k)
        l2 = self.log_cum(2 * g, k)
        second = np.exp((lg[hi] - lg[lo]) + (l2[k] - l2[hi]))
        first = np.exp((lg[k] - lg[lo]) + (lg[k] - lg[hi]))
        return np.maximum(second - first, 0.0)


# --------------------------------------------------------------------------
# row moments of the weighted sum A_k = sum_j a_j P(j, k)


def row_moments(a: np.ndarray, gamma: float, k_max: int):
    """First two moments of ``sum_{j=1}^{k-1} a[j] P(j, k)`` for all ``k <= k_max``.

    Uses the recursions
    ``M_{k+1} = (M_k + a_k) k/(k+gamma)`` and
    ``T_{k+1} = (T_k + a_k (a_k + 2 M_k)) k/(k+2 gamma)``,
    which follow from ``P(j, k+1) = P(j, k) P(k, k+1)``.  Returns arrays ``M``
    and ``T`` indexed by ``k`` (entries 0 and 1 are zero).  Cost is ``O(k_max)``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.size < k_max:
        raise ParameterError("weight array too short")
    M = np.zeros(k_max + 1)
    T = np.zeros(k_max + 1)
    m = t = 0.0
    g = float(gamma)
    for k in range(1, k_max):
        ak = a[k]
        t = (t + ak * (ak + 2.0 * m)) * (k / (k + 2.0 * g))
        m = (m + ak) * (k / (k + g))
        M[k + 1] = m
        T[k + 1] = t
    return M, T


def row_variances(params: ProcessParams, k_max: int) -> np.ndarray:
    """``Var`` of the centered row sum ``alpha(k) * sum_j df(j) (P(j,k) - E P(j,k))``.

    Returned array is indexed by ``k`` for ``k = 0..k_max``.
    """
    d = params.weight.increments_upto(k_max)
    M, T = row_moments(d, params.gamma, k_max)
    k = np.arange(k_max + 1)
    alpha = np.ones(k_max + 1)
    alpha[1:] = params.alpha_values(k[1:])
    return alpha**2 * np.maximum(T - M * M, 0.0)


# --------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class ProcessPath:
    """One simulated trajectory.

    ``values[k-1]`` is the normalized sum ``A_k / f(k)`` and ``raw[k-1]`` the
    telescoped statistic ``W_k = f(k-1) - A_k``, for ``k = 1..k_max``.
    """

    seed: int
    k_max: int
    values: np.ndarray
    raw: np.ndarray

    def at(self, k: int) -> float:
        return float(self.values[k - 1])

    def raw_at(self, k: int) -> float:
        return float(self.raw[k - 1])


def _check_kmax(k_max: int) -> None:
    if k_max < 2:
        raise ParameterError("k_max must be at least 2")


def _decays(exps: np.ndarray, gamma: float) -> np.ndarray:
    h = np.arange(1, exps.shape[-1] + 1, dtype=np.float64)
    return np.exp(-gamma * exps / h)


def simulate_sums(exps: np.ndarray, gamma: float, d: np.ndarray) -> np.ndarray:
    """Unnormalized ``A_k`` for ``k = 1..len(exps)+1`` from given exponentials.

    Recursion ``A_k = (A_{k-1} + d[k-1]) exp(-gamma E_{k-1} / (k-1))`` costs
    ``O(k_max)``.  ``exps[h-1]`` holds ``E_h``.
    """
    return simulate_sums_batch(_decays(np.asarray(exps), gamma)[None, :], d)[0]


def simulate_sums_batch(decays: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Row-wise recursion over a ``(R, k_max - 1)`` matrix of per-step decay factors.

    Performs the same floating-point operations as the single-path recursion,
    so batched and single runs agree bitwise.
    """
    R, n = decays.shape
    out = np.zeros((R, n + 1))
    acc = np.zeros(R)
    for k in range(2, n + 2):
        acc = (acc + d[k - 1]) * decays[:, k - 2]
        out[:, k - 1] = acc
    return out


def simulate_path(stream: SeededStream, params: ProcessParams, k_max: int) -> ProcessPath:
    """Simulate ``A_k / f(k)`` and ``W_k`` for ``k = 1..k_max``.

    Consumes ``k_max - 1`` exponentials ``E_1..E_{k_max-1}`` from ``stream``.
    """
    _check_kmax(k_max)
    seed = stream.seed
    exps = draw_exponentials(stream, k_max - 1)
    d = params.weight.increments_upto(k_max)
    f = params.weight.values_upto(k_max)
    sums = simulate_sums(exps, params.gamma, d)
    k = np.arange(1, k_max + 1)
    return ProcessPath(seed, k_max, sums / f[k], f[k - 1] - sums)


def brute_force_sums(exps: np.ndarray, gamma: float, d: np.ndarray) -> np.ndarray:
    """``O(k**2)`` double-sum evaluation of ``A_k``; independent check of the recursion."""
    n = exps.size
    out = np.zeros(n + 1)
    for k in range(2, n + 2):
        total = 0.0
        for j in range(1, k):
            s = 0.0
            for h in range(j, k):
                s += exps[h - 1] / h
            total += d[j] * math.exp(-gamma * s)
        out[k - 1] = total
    return out


def expected_sums(params: ProcessParams, k_max: int) -> np.ndarray:
    """Exact ``E A_k`` for ``k = 0..k_max`` (index ``k``)."""
    d = params.weight.increments_upto(k_max)
    M, _ = row_moments(d, params.gamma, k_max)
    return M


def simulate_centered_path(stream: SeededStream, params: ProcessParams, k_max: int) -> np.ndarray:
    """``S*_k / k`` for ``k = 1..k_max``, where
    ``S*_k = alpha(k) sum_{j<k} df(j) (P(j,k) - E P(j,k))``.
    """
    _check_kmax(k_max)
    exps = draw_exponentials(stream, k_max - 1)
    d = params.weight.increments_upto(k_max)
    sums = simulate_sums(exps, params.gamma, d)
    centered = sums - expected_sums(params, k_max)[1:]
    k = np.arange(1, k_max + 1, dtype=np.float64)
    return params.alpha_values(k) * centered / k


# --------------------------------------------------------------------------
# expected path and its limit


def expected_path_value(params: ProcessParams, k: int) -> float:
    """``k**-1 * alpha(k) * sum_{j=1}^{k-1} df(j) E P(j, k)``."""
    if k < 2:
        raise ParameterError("k must be at least 2")
    d = params.weight.increments_upto(k)[1:k]
    j = np.arange(1, k)
    oracle = MomentOracle(params.gamma)
    means = oracle.mean_table(j, np.full(j.shape, k))
    return float(params.alpha_values(k) * math.fsum(d * means) / k)


@dataclass(frozen=True)
class LimitEstimate:
    value: Optional[float]
    error: float
    converged: bool
    grid: tuple
    values: tuple
    rate: Optional[float] = None

    def require(self) -> float:
        if not self.converged or self.value is None:
            raise DivergenceError("expected path value does not converge on the grid")
        return self.value


def limit_of_expected(params: ProcessParams, *, k_start: int = 1000, ratio: int = 4,
                      levels: int = 6, tol: float = 1e-6) -> LimitEstimate:
    """Extrapolate ``lim_k expected_path_value(params, k)``.

    The exact finite-``k`` values are taken on the geometric grid
    ``k_start * ratio**m``.  Assuming an error ``c k**-p`` (``p`` estimated
    from successive differences), each consecutive triple is Aitken/Richardson
    extrapolated; the reported error is the spread of the last two
    extrapolants.  If the successive differences fail to shrink the sequence is
    flagged as non-convergent.
    """
    grid = [k_start * ratio**m for m in range(levels)]
    vals = [expected_path_value(params, k) for k in grid]
    diffs = np.diff(vals)
    if np.any(~np.isfinite(vals)):
        return LimitEstimate(None, math.inf, False, tuple(grid), tuple(vals))
    if abs(diffs[-1]) < tol * max(1.0, abs(vals[-1])) * 1e-3:
        return LimitEstimate(vals[-1], abs(diffs[-1]), True, tuple(grid), tuple(vals))
    shrink = np.abs(diffs[1:]) / np.maximum(np.abs(diffs[:-1]), 1e-300)
    if shrink[-1] >= 0.99:
        return LimitEstimate(None, math.inf, False, tuple(grid), tuple(vals))
    extrap = []
    rates = []
    for m in range(len(vals) - 2):
        d1, d2 = vals[m + 1] - vals[m], vals[m + 2] - vals[m + 1]
        q = d2 / d1  # = ratio**-p under a pure power-law error
        if not 0 < q < 1:
            extrap.append(vals[m + 2])
            continue
        rates.append(-math.log(q) / math.log(ratio))
        extrap.append(vals[m + 2] + d2 * q / (1 - q))
    err = abs(extrap[-1] - extrap[-2]) if len(extrap) > 1 else abs(diffs[-1])
    rate = rates[-1] if rates else None
    return LimitEstimate(float(extrap[-1]), float(err), True, tuple(grid), tuple(vals), rate)


def power_case_limits(gamma: float, tau: float) -> dict:
    """Candidate closed-form limits for the normalized path with ``f(j) = j**tau``.

    ``tau / (tau + gamma)`` follows from ``E P(j,k) ~ (j/k)**gamma``;
    ``tau / (gamma + 1)`` is the alternative form that coincides only at
    ``tau = 1``.  Neither is assumed; compare against :func:`limit_of_expected`.
    """
    return {"tau_over_tau_plus_gamma": tau / (tau + gamma),
            "tau_over_gamma_plus_one": tau / (gamma + 1.0)}
