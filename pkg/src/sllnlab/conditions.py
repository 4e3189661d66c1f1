"""Numerical evaluators for strong-law sufficient conditions.

A statement such as ``sup_q V(q) < inf`` cannot be decided from finitely many
terms.  Each evaluator therefore tabulates the quantity on a geometric grid
and classifies the trend:

* ``bounded``: the least-squares slope of ``log |V|`` against ``log q`` over
  the top half of the grid is at most ``slope_tol`` and the running supremum
  is finite;
* ``diverging``: the slope exceeds ``slope_tol`` and the RMS residual of the
  fit is below ``residual_tol`` (a clean power-law growth);
* ``inconclusive`` otherwise.

Conditions that require a limit of zero (the Cesaro criterion) use the same
fit but demand a *decaying* trend, ``slope <= -slope_tol``.

Covariance structures are supplied through :class:`CovarianceModel`
subclasses.  Triangular arrays (the weighted spacing-product rows) take a
``row`` argument; other models ignore it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DivergenceError, ParameterError
from .process import MomentOracle, ProcessParams, row_moments, row_variances
from .sampling import SeededStream

SLOPE_TOL = 0.02
RESIDUAL_TOL = 0.05
GRID_RATIO = 1.25

BOUNDED, DIVERGING, INCONCLUSIVE = "bounded", "diverging", "inconclusive"


def geometric_grid(stop: int, start: int = 1, ratio: float = GRID_RATIO) -> np.ndarray:
    """Distinct integers ``ceil(ratio**m)`` in ``[start, stop]``."""
    if stop < start:
        return np.zeros(0, dtype=np.int64)
    m_max = int(math.ceil(math.log(stop) / math.log(ratio))) + 1
    pts = np.unique(np.ceil(ratio ** np.arange(m_max + 1) - 1e-9).astype(np.int64))
    return pts[(pts >= start) & (pts <= stop)]


# --------------------------------------------------------------------------
# reports


@dataclass
class ConditionReport:
    condition_id: str
    parameters: dict
    index: np.ndarray
    values: np.ndarray
    running_sup: float
    loglog_slope: float
    residual: float
    verdict: str
    target: str = "bounded"

    def grid(self) -> list:
        return list(zip(self.index.tolist(), self.values.tolist()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["index"] = self.index.tolist()
        d["values"] = self.values.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionReport":
        d = dict(d)
        d["index"] = np.asarray(d["index"], dtype=np.int64)
        d["values"] = np.asarray(d["values"], dtype=np.float64)
        return cls(**d)

    def summary_line(self) -> str:
        return (f"{self.condition_id}: {self.verdict} "
                f"(sup={self.running_sup:.6g}, slope={self.loglog_slope:.4f})")


def loglog_fit(index: np.ndarray, values: np.ndarray):
    """Slope and RMS residual of ``log|v|`` vs ``log q`` over the top half of the grid."""
    idx = np.asarray(index, dtype=np.float64)
    val = np.abs(np.asarray(values, dtype=np.float64))
    half = idx.size // 2
    x, y = idx[half:], val[half:]
    if y.size == 0 or np.all(y == 0):
        return 0.0, 0.0
    keep = y > 0
    if keep.sum() < 3:
        return math.nan, math.nan
    lx, ly = np.log(x[keep]), np.log(y[keep])
    coef = np.polyfit(lx, ly, 1)
    resid = ly - np.polyval(coef, lx)
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def classify(slope: float, residual: float, sup: float, *, target: str = "bounded",
             slope_tol: float = SLOPE_TOL, residual_tol: float = RESIDUAL_TOL) -> str:
    if not (math.isfinite(slope) and math.isfinite(residual)):
        return INCONCLUSIVE
    if target == "zero":
        if slope <= -slope_tol and math.isfinite(sup):
            return BOUNDED
        return DIVERGING if residual < residual_tol else INCONCLUSIVE
    if slope <= slope_tol and math.isfinite(sup):
        return BOUNDED
    if slope > slope_tol and residual < residual_tol:
        return DIVERGING
    return INCONCLUSIVE


def make_report(condition_id: str, parameters: dict, index, values, *, target="bounded",
                slope_tol=SLOPE_TOL, residual_tol=RESIDUAL_TOL) -> ConditionReport:
    index = np.asarray(index, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    sup = float(np.max(np.abs(values))) if values.size else 0.0
    slope, resid = loglog_fit(index, values)
    verdict = classify(slope, resid, sup, target=target, slope_tol=slope_tol,
                       residual_tol=residual_tol)
    return ConditionReport(condition_id, dict(parameters), index, values, sup, slope, resid,
                           verdict, target)


def combined_verdict(reports: Sequence[ConditionReport]) -> str:
    verdicts = [r.verdict for r in reports]
    if DIVERGING in verdicts:
        return DIVERGING
    if all(v == BOUNDED for v in verdicts):
        return BOUNDED
    return INCONCLUSIVE


# --------------------------------------------------------------------------
# covariance models


class CovarianceModel:
    """Source of ``Cov(X_i, X_j)`` for 1-based indices.

    Subclasses implement :meth:`cov`; the generic matrix-based methods below
    are overridden where a model admits a faster closed form.
    """

    kind = "general"
    triangular = False
    associated = False
    max_index: Optional[int] = None

    def cov(self, i, j, row: Optional[int] = None) -> np.ndarray:
        raise NotImplementedError

    def _check_n(self, n: int) -> None:
        if self.max_index is not None and n > self.max_index:
            raise ParameterError(f"{self.kind} model only covers indices up to {self.max_index}")

    def matrix(self, n: int, row: Optional[int] = None) -> np.ndarray:
        self._check_n(n)
        i = np.arange(1, n + 1)
        return np.asarray(self.cov(i[:, None], i[None, :], row), dtype=np.float64)

    def variances(self, n: int) -> np.ndarray:
        i = np.arange(1, n + 1)
        return np.asarray(self.cov(i, i), dtype=np.float64)

    def prefix_variances(self, qs) -> np.ndarray:
        """``Var(X_1 + ... + X_q)`` for each ``q`` (row ``q`` for triangular models)."""
        qs = np.asarray(qs, dtype=np.int64)
        if qs.size == 0:
            return np.zeros(0)
        if self.triangular:
            return np.array([self.matrix(int(q), row=int(q)).sum() for q in qs])
        c = self.matrix(int(qs.max()))
        cs = c.cumsum(0).cumsum(1)
        return cs[qs - 1, qs - 1]

    def block_prefix_variances(self, start: int, stop: int, row: Optional[int] = None) -> np.ndarray:
        """``Var(X_start + ... + X_e)`` for ``e = start..stop``."""
        self._check_n(stop)
        i = np.arange(start, stop + 1)
        c = np.asarray(self.cov(i[:, None], i[None, :], row), dtype=np.float64)
        cs = c.cumsum(0).cumsum(1)
        return np.diag(cs).copy()

    def square_block_sup(self, q: int) -> float:
        """``sup`` over ``q**2 < k <= (q+1)**2`` and ``j <= k`` of ``Var(sum_{i=q**2+1}^{j} X_i)``."""
        lo, hi = q * q + 1, (q + 1) ** 2
        return float(self.block_prefix_variances(lo, hi).max())

    def cov_with_sum(self, n: int) -> np.ndarray:
        """``Cov(X_i, X_1 + ... + X_n)`` for ``i = 1..n`` (row ``n`` if triangular)."""
        return self.matrix(n, row=n if self.triangular else None).sum(axis=1)

    def cov_with_own_prefix(self, n: int) -> np.ndarray:
        """``Cov(X_i, X_1 + ... + X_i)`` for ``i = 1..n`` (row ``n`` if triangular)."""
        c = self.matrix(n, row=n if self.triangular else None)
        return np.tril(c).sum(axis=1)

    def scaled(self, factor: float) -> "CovarianceModel":
        return ScaledModel(self, factor)

    def drop_negative_covariances(self) -> "CovarianceModel":
        """Replace negative off-diagonal covariances by zero (an upper bound on every partial-sum variance)."""
        return ClippedModel(self)


class IndependentModel(CovarianceModel):
    kind = "independent"
    associated = True

    def __init__(self, variances: Callable[[np.ndarray], np.ndarray] | Sequence[float]):
        if callable(variances):
            self._v = variances
            self.max_index = None
        else:
            arr = np.asarray(variances, dtype=np.float64)
            self._v = lambda i: arr[np.asarray(i).astype(np.int64) - 1]
            self.max_index = arr.size

    def variances(self, n: int) -> np.ndarray:
        self._check_n(n)
        v = np.asarray(self._v(np.arange(1, n + 1, dtype=np.float64)), dtype=np.float64)
        if np.any(v < 0):
            raise ContractError("variances must be non-negative")
        return np.broadcast_to(v, (n,)).copy()

    def cov(self, i, j, row=None):
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        out = np.zeros(i.shape)
        diag = i == j
        if np.any(diag):
            out[diag] = np.asarray(self._v(i[diag].astype(np.float64)), dtype=np.float64)
        return out

    def prefix_variances(self, qs):
        qs = np.asarray(qs, dtype=np.int64)
        if qs.size == 0:
            return np.zeros(0)
        cs = np.cumsum(self.variances(int(qs.max())))
        return cs[qs - 1]

    def block_prefix_variances(self, start, stop, row=None):
        return np.cumsum(self.variances(stop)[start - 1:])

    def cov_with_sum(self, n):
        return self.variances(n)

    def cov_with_own_prefix(self, n):
        return self.variances(n)


class StationaryModel(CovarianceModel):
    """Second-order stationary: ``Cov(X_i, X_j) = rho(|i - j|)`` with ``rho(0)`` the variance."""

    kind = "stationary"

    def __init__(self, rho: Callable[[np.ndarray], np.ndarray]):
        self.rho = rho
        self.associated = True

    def lags(self, m: int) -> np.ndarray:
        """``rho(0), ..., rho(m)``."""
        out = np.asarray(self.rho(np.arange(m + 1, dtype=np.float64)), dtype=np.float64)
        return np.broadcast_to(out, (m + 1,)).copy()

    def cov(self, i, j, row=None):
        lag = np.abs(np.asarray(i) - np.asarray(j)).astype(np.float64)
        return np.asarray(self.rho(lag), dtype=np.float64) * np.ones_like(lag)

    def length_variances(self, m_max: int) -> np.ndarray:
        """``Var`` of a sum of ``m`` consecutive terms for ``m = 0..m_max``.

        ``Var_m = m rho(0) + 2 sum_{l=1}^{m-1} (m - l) rho(l)``.
        """
        r = self.lags(max(m_max, 1))
        m = np.arange(m_max + 1, dtype=np.float64)
        c1 = np.concatenate([[0.0], np.cumsum(r[1:])])  # c1[m] = sum_{l=1}^{m} rho(l)
        c2 = np.concatenate([[0.0], np.cumsum(np.arange(1, r.size) * r[1:])])
        idx = np.maximum(m.astype(np.int64) - 1, 0)
        return m * r[0] + 2.0 * (m * c1[idx] - c2[idx])

    def prefix_variances(self, qs):
        qs = np.asarray(qs, dtype=np.int64)
        if qs.size == 0:
            return np.zeros(0)
        return self.length_variances(int(qs.max()))[qs]

    def block_prefix_variances(self, start, stop, row=None):
        return self.length_variances(stop - start + 1)[1:]

    def cov_with_sum(self, n):
        r = self.lags(n)
        R = np.cumsum(r)  # R[m] = sum_{l=0}^{m} rho(l)
        i = np.arange(1, n + 1)
        return R[i - 1] + R[n - i] - r[0]

    def cov_with_own_prefix(self, n):
        R = np.cumsum(self.lags(n))
        return R[: n]


class GeneralModel(CovarianceModel):
    kind = "general"

    def __init__(self, rule: Callable, associated: bool = False):
        self.rule = rule
        self.associated = associated

    def cov(self, i, j, row=None):
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        return np.asarray(self.rule(i, j), dtype=np.float64) * np.ones(i.shape)


class EmpiricalModel(CovarianceModel):
    """Covariance matrix estimated from replications, with entrywise standard errors."""

    kind = "empirical"

    def __init__(self, cov: np.ndarray, se: np.ndarray, replications: int, mean: np.ndarray):
        self.matrix_ = np.asarray(cov, dtype=np.float64)
        self.se = np.asarray(se, dtype=np.float64)
        self.replications = int(replications)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.max_index = self.matrix_.shape[0]
        self.associated = False

    def cov(self, i, j, row=None):
        return self.matrix_[np.asarray(i) - 1, np.asarray(j) - 1]


class ScaledModel(CovarianceModel):
    def __init__(self, base: CovarianceModel, factor: float):
        if not factor > 0:
            raise ParameterError("scale factor must be positive")
        self.base, self.factor = base, float(factor)
        self.kind = base.kind
        self.triangular = base.triangular
        self.associated = base.associated
        self.max_index = base.max_index

    def cov(self, i, j, row=None):
        return self.factor * self.base.cov(i, j, row)

    def prefix_variances(self, qs):
        return self.factor * self.base.prefix_variances(qs)

    def block_prefix_variances(self, start, stop, row=None):
        return self.factor * self.base.block_prefix_variances(start, stop, row)

    def square_block_sup(self, q):
        return self.factor * self.base.square_block_sup(q)

    def cov_with_sum(self, n):
        return self.factor * self.base.cov_with_sum(n)

    def cov_with_own_prefix(self, n):
        return self.factor * self.base.cov_with_own_prefix(n)


class ClippedModel(CovarianceModel):
    def __init__(self, base: CovarianceModel):
        self.base = base
        self.kind = base.kind
        self.triangular = base.triangular
        self.associated = True
        self.max_index = base.max_index

    def cov(self, i, j, row=None):
        c = np.asarray(self.base.cov(i, j, row), dtype=np.float64)
        off = np.broadcast_to(np.asarray(i) != np.asarray(j), c.shape)
        return np.where(off, np.maximum(c, 0.0), c)


class ProcessRowModel(CovarianceModel):
    """Triangular array ``X_{i,k} = alpha(k) df(i) (P(i,k) - E P(i,k))``, ``i < k``.

    ``X_{k,k}`` is identically zero, so ``X_{1,k} + ... + X_{k,k}`` is the
    centered row sum.  Exact moments come from the closed-form oracle.
    """

    kind = "process"
    triangular = True
    associated = True

    def __init__(self, params: ProcessParams):
        self.params = params
        self.oracle = MomentOracle(params.gamma)

    def _d(self, m: int) -> np.ndarray:
        return self.params.weight.increments_upto(m)

    def cov(self, i, j, row=None):
        if row is None:
            raise ParameterError("process model is triangular: pass row=k")
        k = int(row)
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        if np.any(i < 1) or np.any(j < 1):
            raise IndexError("indices start at 1")
        out = np.zeros(i.shape)
        live = (i < k) & (j < k)
        if np.any(live):
            ii, jj = i[live], j[live]
            lo, hi = np.minimum(ii, jj), np.maximum(ii, jj)
            g = self.oracle.gamma
            lg = self.oracle.log_cum(g, k)
            l2 = self.oracle.log_cum(2 * g, k)
            second = np.exp((lg[hi] - lg[lo]) + (l2[k] - l2[hi]))
            first = np.exp((lg[k] - lg[lo]) + (lg[k] - lg[hi]))
            d = self._d(k)
            a2 = float(self.params.alpha_values(k)) ** 2
            out[live] = a2 * d[ii] * d[jj] * np.maximum(second - first, 0.0)
        return out

    def prefix_variances(self, qs):
        qs = np.asarray(qs, dtype=np.int64)
        if qs.size == 0:
            return np.zeros(0)
        return row_variances(self.params, int(qs.max()))[qs]

    def block_row_variances(self, start: int, stop: int, rows: Sequence[int]) -> np.ndarray:
        """``Var`` of ``sum_{i=start}^{e} X_{i,k}`` for ``e`` in ``[start, stop]`` and ``k`` in ``rows``.

        Returns a ``(len(rows), stop - start + 1)`` array.  Writing the block
        sum as ``P(e+1, k) * Z_e`` with ``Z_e = sum_{i=start}^{e} df(i) P(i, e+1)``
        independent of ``P(e+1, k)`` gives the variance from two scalar
        recursions in ``e``.  Entries with ``e >= k`` use the truncated block
        ``start..k-1`` (the remaining terms vanish in row ``k``).
        """
        rows = np.asarray(rows, dtype=np.int64)
        kmax = int(rows.max())
        d = self._d(max(stop, kmax) + 1).copy()
        d[:start] = 0.0
        g = self.params.gamma
        M, T = row_moments(d, g, max(stop, kmax) + 1)
        e = np.arange(start, stop + 1)
        out = np.zeros((rows.size, e.size))
        for r, k in enumerate(rows):
            ee = np.minimum(e, k - 1)
            valid = ee >= start
            if not np.any(valid):
                continue
            nxt = ee[valid] + 1
            m1 = self.oracle.mean_table(nxt, np.full(nxt.shape, k))
            m2 = self.oracle.mean_table(nxt, np.full(nxt.shape, k), 2 * g)
            var = m2 * T[nxt] - (m1 * M[nxt]) ** 2
            out[r, valid] = float(self.params.alpha_values(k)) ** 2 * np.maximum(var, 0.0)
        return out

    def square_block_sup(self, q):
        lo, hi = q * q + 1, (q + 1) ** 2
        rows = np.arange(lo, hi + 1)
        return float(self.block_row_variances(lo, hi, rows).max())

    def block_prefix_variances(self, start, stop, row=None):
        row = stop + 1 if row is None else row
        return self.block_row_variances(start, stop, [row])[0]


# --------------------------------------------------------------------------
# evaluators


def _check_delta(delta: float) -> None:
    if not 0 < delta < 3:
        raise ParameterError(f"delta must lie in (0, 3), got {delta}")


def eval_gcip(model: CovarianceModel, delta: float, q_max: int, *, slope_tol=SLOPE_TOL,
              residual_tol=RESIDUAL_TOL):
    """Squared-index variance conditions.

    Report 1 tabulates ``Var(X_1 + ... + X_q) / q**((3 - delta)/2)`` for
    ``q <= q_max``; report 2 tabulates, for ``q <= sqrt(q_max)``, the largest
    variance of a partial block sum starting at ``q**2 + 1`` and ending before
    ``(q+1)**2``, divided by ``q**(3 - delta)``.
    """
    _check_delta(delta)
    if q_max < 10:
        raise ParameterError("q_max must be at least 10")
    params = {"delta": delta, "nu": (1 - delta) / 2, "q_max": q_max}
    kw = dict(slope_tol=slope_tol, residual_tol=residual_tol)
    q1 = geometric_grid(q_max, start=2 if model.triangular else 1)
    v1 = model.prefix_variances(q1) / q1.astype(np.float64) ** ((3 - delta) / 2)
    r1 = make_report("gcip1", params, q1, v1, **kw)
    q2 = geometric_grid(int(math.isqrt(q_max)), start=1)
    v2 = np.array([model.square_block_sup(int(q)) for q in q2]) / q2.astype(np.float64) ** (3 - delta)
    r2 = make_report("gcip2", params, q2, v2, **kw)
    return r1, r2


def eval_variance_growth(model: CovarianceModel, nu: float, n_max: int, **kw) -> ConditionReport:
    """``n**-(1+nu) * sum_{i<=n} Var(X_i)``: the independent-case reduction of the squared-index conditions."""
    n = geometric_grid(n_max)
    v = np.cumsum(model.variances(n_max))[n - 1] / n.astype(np.float64) ** (1 + nu)
    return make_report("variance_growth", {"nu": nu, "n_max": n_max}, n, v, **kw)


def _b_values(b_rule, n: int) -> np.ndarray:
    b = np.asarray(b_rule(np.arange(1, n + 1, dtype=np.float64)), dtype=np.float64)
    b = np.broadcast_to(b, (n,))
    if np.any(b <= 0):
        raise ContractError("b_i must be positive")
    if np.any(np.diff(b) < 0):
        raise ContractError("b_i must be non-decreasing")
    return b


def eval_gchr(model: CovarianceModel, b_rule: Callable, r: float, n_max: int, *,
              condition_id: str = "gchr", **kw) -> ConditionReport:
    """Hajek-Renyi type sum ``sum_{i<=n} b_i**-r Cov(X_i, S_n)`` for ``n <= n_max``."""
    if not r > 0:
        raise ParameterError("r must be positive")
    b = _b_values(b_rule, n_max)
    if b[-1] <= b[0]:
        raise ContractError("b_i must be unbounded (strictly growing over the grid)")
    w = b ** -float(r)
    n = geometric_grid(n_max)
    if isinstance(model, IndependentModel) or (isinstance(model, ScaledModel)
                                               and isinstance(model.base, IndependentModel)):
        vals = np.cumsum(w * model.cov_with_sum(n_max))[n - 1]
    else:
        vals = np.array([float(np.dot(w[:m], model.cov_with_sum(int(m)))) for m in n])
    return make_report(condition_id, {"r": r, "n_max": n_max}, n, vals, **kw)


def eval_kolmogorov(model: CovarianceModel, n_max: int, **kw) -> ConditionReport:
    """``sum_{i<=n} Var(X_i) / i**2`` (the Hajek-Renyi sum with ``b_i = i``, ``r = 2`` for independent terms)."""
    n = geometric_grid(n_max)
    i = np.arange(1, n_max + 1, dtype=np.float64)
    vals = np.cumsum(model.variances(n_max) / i**2)[n - 1]
    return make_report("kolmogorov", {"n_max": n_max}, n, vals, **kw)


def eval_birkel(model: CovarianceModel, n_max: int, **kw) -> ConditionReport:
    """``sum_{i<=n} i**-2 Cov(X_i, S_i)``; triangular models use row ``n``."""
    n = geometric_grid(n_max)
    i2 = np.arange(1, n_max + 1, dtype=np.float64) ** 2
    if model.triangular:
        vals = np.array([float(np.sum(model.cov_with_own_prefix(int(m)) / i2[:m])) for m in n])
    else:
        vals = np.cumsum(model.cov_with_own_prefix(n_max) / i2)[n - 1]
    return make_report("birkel", {"n_max": n_max}, n, vals, **kw)


def _require_stationary(model) -> StationaryModel:
    base = model.base if isinstance(model, ScaledModel) else model
    if not isinstance(base, StationaryModel):
        raise ParameterError("condition requires a stationary covariance model")
    return model


def eval_stationary_gchr(model: CovarianceModel, n_max: int, **kw) -> ConditionReport:
    """Stationary reduction of the Hajek-Renyi sum: ``sum_{j=2}^{n} Cov(X_1, X_j)``."""
    _require_stationary(model)
    n = geometric_grid(n_max, start=2)
    i = np.arange(1, n_max + 1)
    c = np.asarray(model.cov(np.ones_like(i), i), dtype=np.float64)
    vals = np.cumsum(c[1:])[n - 2]
    return make_report("stationary_gchr", {"n_max": n_max}, n, vals, **kw)


def eval_stationary_variance(model: CovarianceModel, nu: float, q_max: int, **kw) -> ConditionReport:
    """``q**-nu [rho(0) + (2/q) sum_{i=2}^{q} (q - i + 1) rho(i - 1)]``, i.e. ``Var(S_q) / q**(1+nu)``."""
    _require_stationary(model)
    q = geometric_grid(q_max)
    vals = model.prefix_variances(q) / q.astype(np.float64) ** (1 + nu)
    return make_report("stationary_variance", {"nu": nu, "q_max": q_max}, q, vals, **kw)


def eval_cesaro(model: CovarianceModel, n_max: int, **kw) -> ConditionReport:
    """``n**-1 sum_{j=1}^{n} Cov(X_1, X_j)``; the condition asks for a zero limit."""
    _require_stationary(model)
    n = geometric_grid(n_max)
    i = np.arange(1, n_max + 1)
    c = np.asarray(model.cov(np.ones_like(i), i), dtype=np.float64)
    vals = np.cumsum(c)[n - 1] / n
    return make_report("cesaro", {"n_max": n_max}, n, vals, target="zero", **kw)


@dataclass(frozen=True)
class SeriesResult:
    value: Optional[float]
    converged: bool
    terms: int
    tail_estimate: float
    tail_exponent: Optional[float]

    def require(self) -> float:
        if not self.converged:
            raise DivergenceError("series diverges")
        return self.value


def newman_sigma2(model: CovarianceModel, tol: float = 1e-8, *, max_terms: int = 1 << 24) -> SeriesResult:
    """``rho(0) + 2 sum_{l>=1} rho(l)`` for a stationary model.

    Partial sums are taken over doubling blocks.  The tail beyond the last
    block is estimated by fitting ``rho(l) ~ C l**-p`` on the final block and
    integrating; ``p <= 1`` (or a non-shrinking sequence of estimates) flags
    divergence.
    """
    _require_stationary(model)
    n = 1 << 10
    prev = None
    partial = 0.0
    done = 0
    r0 = float(model.cov(np.array(1), np.array(1)))
    while True:
        lags = np.arange(done + 1, n + 1, dtype=np.float64)
        block = np.asarray(model.cov(np.ones(lags.shape, dtype=np.int64), lags.astype(np.int64) + 1),
                           dtype=np.float64)
        partial += math.fsum(block)
        done = n
        tail, p = _power_tail(model, n)
        if p is not None and p <= 1.0 + 1e-3:
            return SeriesResult(None, False, n, math.inf, p)
        est = r0 + 2.0 * (partial + tail)
        if prev is not None and abs(est - prev) < tol:
            return SeriesResult(est, True, n, 2.0 * tail, p)
        prev = est
        if 2 * n > max_terms:
            return SeriesResult(None, False, n, math.inf, p)
        n *= 2


def _power_tail(model, n: int):
    """Tail ``sum_{l>n} rho(l)`` under a power-law fit on ``[n/4, n]``."""
    lags = np.unique(np.geomspace(max(n // 4, 1), n, 16).astype(np.int64))
    vals = np.asarray(model.cov(np.ones(lags.shape, dtype=np.int64), lags + 1), dtype=np.float64)
    if np.all(vals == 0):
        return 0.0, None
    if np.any(vals <= 0):
        return 0.0, None
    slope, icpt = np.polyfit(np.log(lags), np.log(vals), 1)
    p = -slope
    if p <= 1.0:
        return math.inf, p
    c = math.exp(icpt)
    return c * (n + 0.5) ** (1 - p) / (p - 1), p


# --------------------------------------------------------------------------
# conditions on the weighted spacing-product process


EVT_CONDITION_IDS = ("evt_diagonal", "evt_cross", "evt_boundary",
                     "evt_block_diagonal", "evt_block_cross")


def eval_process_conditions(params: ProcessParams, k_max: int, **kw) -> list:
    """The five deterministic sums controlling the variance of the centered process.

    With ``L = params.cutoff`` and ``nu = (1 - delta)/2``:

    * ``evt_diagonal``: ``alpha(k)**2 k**-(2 gamma + 1 + nu) sum_{j=L}^{k-1} df(j)**2 j**(2 gamma)``
    * ``evt_cross``: ``alpha(k)**2 k**-(1+nu) sum_{j=L+1}^{k-1} [sum_{i=L}^{j-1} df(i)] df(j) / j``
    * ``evt_boundary``: ``alpha(k)**2 k**-(1+nu) sum_{j=L}^{k-1} df(j) / j``
    * ``evt_block_diagonal``: ``sup_k alpha(k)**2 q**-(3-delta) sum_{i=1}^{2q+1} df(q**2+i)**2 ((q**2+i)/k)**(2 gamma)``
    * ``evt_block_cross``: ``sup_k alpha(k)**2 q**-(3-delta) sum_{j=2}^{2q+1} [sum_{i<j} df(q**2+i)] df(q**2+j) / (q**2+j)``

    where the block sups run over ``q**2 < k <= (q+1)**2`` with ``q**2 >= L``.
    """
    L = params.cutoff
    if L >= k_max:
        raise ParameterError(f"cutoff L={L} must be below k_max={k_max}")
    if k_max < L * L:
        raise ParameterError(f"k_max must be at least L**2 = {L * L}")
    g, nu, delta = params.gamma, params.nu, params.delta
    top = int(math.isqrt(k_max))
    d = params.weight.increments_upto(max(k_max, (top + 1) ** 2) + 1)
    f = np.cumsum(d)
    pars = {"gamma": g, "delta": delta, "nu": nu, "cutoff": L, "k_max": k_max}

    ks = geometric_grid(k_max, start=L + 1)
    kf = ks.astype(np.float64)
    alpha2 = params.alpha_values(kf) ** 2

    diag = np.empty(ks.size)
    for t, k in enumerate(ks):
        j = np.arange(L, k, dtype=np.float64)
        diag[t] = math.fsum(d[L:k] ** 2 * np.exp(2 * g * np.log(j / k)))
    diag *= alpha2 / kf ** (1 + nu)

    j_all = np.arange(k_max + 1, dtype=np.float64)
    j_all[0] = 1.0
    partial_f = np.zeros(k_max + 1)  # f(j-1) - f(L-1) = sum_{i=L}^{j-1} df(i)
    partial_f[L:] = f[L - 1:k_max] - f[L - 1]
    cross_terms = np.zeros(k_max + 1)
    cross_terms[L + 1:] = partial_f[L + 1:] * d[L + 1:k_max + 1] / j_all[L + 1:]
    cross = np.cumsum(cross_terms)[ks - 1] * alpha2 / kf ** (1 + nu)

    bterms = np.zeros(k_max + 1)
    bterms[L:] = d[L:k_max + 1] / j_all[L:]
    boundary = np.cumsum(bterms)[ks - 1] * alpha2 / kf ** (1 + nu)

    q_lo = max(1, int(math.ceil(math.sqrt(L))))
    qs = geometric_grid(top, start=q_lo)
    qs = qs[(qs + 1) ** 2 <= k_max]
    bdiag = np.empty(qs.size)
    bcross = np.empty(qs.size)
    for t, q in enumerate(qs):
        q = int(q)
        q2 = q * q
        i = np.arange(1, 2 * q + 2)
        rows = np.arange(q2 + 1, (q + 1) ** 2 + 1, dtype=np.float64)
        a2 = params.alpha_values(rows) ** 2
        pos = (q2 + i).astype(np.float64)
        logratio = np.log(pos[None, :] / rows[:, None])
        per_row = (d[q2 + i] ** 2)[None, :] * np.exp(2 * g * logratio)
        bdiag[t] = float(np.max(a2 * per_row.sum(axis=1))) / q ** (3 - delta)
        dj = d[q2 + i]
        prefix = np.concatenate([[0.0], np.cumsum(dj)[:-1]])  # sum_{i'<j}
        s = math.fsum((prefix * dj / pos)[1:])
        bcross[t] = float(np.max(a2)) * s / q ** (3 - delta)

    reports = [
        make_report("evt_diagonal", pars, ks, diag, **kw),
        make_report("evt_cross", pars, ks, cross, **kw),
        make_report("evt_boundary", pars, ks, boundary, **kw),
        make_report("evt_block_diagonal", pars, qs, bdiag, **kw),
        make_report("evt_block_cross", pars, qs, bcross, **kw),
    ]
    return reports


# --------------------------------------------------------------------------
# maximal-inequality probe


@dataclass
class MaxVarReport:
    constant: float
    standard_error: float
    lambda_star: float
    e_max_ratio: float
    e_max_se: float
    var_sn: float
    r: float
    n: int
    reps: int
    degenerate: bool = False
    lambdas: list = field(default_factory=list)
    ratios: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def maxvar_probe(sampler: Callable[[SeededStream, int], np.ndarray], r: float, n: int, *,
                 reps: int = 1000, base_seed: int = 0, lambda_grid: Optional[Sequence[float]] = None,
                 var_sn: Optional[float] = None) -> MaxVarReport:
    """Monte Carlo estimate of ``sup_lambda lambda**r P(max_{l<=n} |S_l| >= lambda) / Var(S_n)``.

    Replicate ``t`` draws its path from ``SeededStream(base_seed + t)``.  If
    ``var_sn`` is not given it is estimated from the same replications and its
    sampling error is folded into the standard error by the delta method.
    Also returns ``E[max |S_l|**2] / Var(S_n)``.
    """
    if reps < 1000:
        raise ParameterError("reps must be at least 1000")
    if n < 1:
        raise ParameterError("n must be at least 1")
    maxima = np.empty(reps)
    finals = np.empty(reps)
    for t in range(reps):
        x = np.asarray(sampler(SeededStream.for_replicate(base_seed, t), n), dtype=np.float64)
        s = np.cumsum(x)
        maxima[t] = np.max(np.abs(s))
        finals[t] = s[-1]
    rel_var_se = 0.0
    if var_sn is None:
        var_sn = float(np.var(finals, ddof=1))
        c = finals - finals.mean()
        m4 = float(np.mean(c**4))
        rel_var_se = math.sqrt(max(m4 - var_sn**2, 0.0) / reps) / var_sn if var_sn > 0 else 0.0
    if not var_sn > 0:
        return MaxVarReport(math.nan, math.nan, math.nan, math.nan, math.nan, float(var_sn),
                            r, n, reps, degenerate=True)
    if lambda_grid is None:
        lambda_grid = np.quantile(maxima, np.linspace(0.5, 0.995, 40))
    lam = np.asarray(lambda_grid, dtype=np.float64)
    lam = lam[lam > 0]
    p = (maxima[None, :] >= lam[:, None]).mean(axis=1)
    ratios = lam**r * p / var_sn
    best = int(np.argmax(ratios))
    p_se = math.sqrt(p[best] * (1 - p[best]) / reps)
    se = math.hypot(lam[best] ** r * p_se / var_sn, ratios[best] * rel_var_se)
    m2 = maxima**2
    e_ratio = float(m2.mean() / var_sn)
    e_se = math.hypot(float(m2.std(ddof=1) / math.sqrt(reps) / var_sn), e_ratio * rel_var_se)
    return MaxVarReport(float(ratios[best]), se, float(lam[best]), e_ratio, e_se, float(var_sn),
                        r, n, reps, lambdas=lam.tolist(), ratios=ratios.tolist())
