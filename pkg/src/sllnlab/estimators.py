"""Functional Hill estimator and its endpoint-normalized ratio."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ContractError, EmptyRequestError, EndpointError, ParameterError
from .process import WeightFunction, row_moments
from .sampling import OrderStatSample


@dataclass(frozen=True)
class HillEstimate:
    n: int
    k: int
    weight: WeightFunction
    statistic: float
    ratio: Optional[float] = None


def _as_sorted(sample) -> np.ndarray:
    if isinstance(sample, OrderStatSample):
        return sample.values
    values = np.asarray(sample, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise EmptyRequestError("sample must be a non-empty vector")
    if np.any(np.diff(values) < 0):
        raise ContractError("sample must be sorted ascending")
    return values


def _statistic(y: np.ndarray, k: int, weight: WeightFunction) -> float:
    n = y.size
    if not 1 <= k < n:
        raise IndexError(f"need 1 <= k < n, got k={k}, n={n}")
    f = weight(np.arange(k + 1))
    if not f[k] > 0:
        raise ParameterError("weight f(k) must be positive")
    top = y[n - k - 1:]  # Y_{n-k,n}, ..., Y_{n,n}
    spacings = np.diff(top)[::-1]  # j = 1..k : Y_{n-j+1,n} - Y_{n-j,n}
    return float(np.dot(f[1:], spacings) / f[k])


def hill_functional(sample, k: int, weight: WeightFunction | None = None) -> HillEstimate:
    """``f(k)**-1 sum_{j=1}^{k} f(j) (Y_{n-j+1,n} - Y_{n-j,n})`` on log-data ``Y``.

    Only the top ``k + 1`` order statistics are used.  Ties give zero spacings
    and are accepted.
    """
    weight = weight or WeightFunction.identity()
    y = _as_sorted(sample)
    return HillEstimate(y.size, k, weight, _statistic(y, k, weight))


def hill_ratio(sample, k: int, weight: WeightFunction | None = None, *, y0: float) -> float:
    """Hill statistic divided by the distance ``y0 - Y_{n-k,n}`` to the endpoint."""
    return hill_estimate_with_ratio(sample, k, weight, y0=y0).ratio


def hill_estimate_with_ratio(sample, k: int, weight: WeightFunction | None = None, *,
                             y0: float) -> HillEstimate:
    weight = weight or WeightFunction.identity()
    y = _as_sorted(sample)
    if not y0 > y[-1]:
        raise EndpointError(f"endpoint y0={y0} must exceed the sample maximum {y[-1]}")
    stat = _statistic(y, k, weight)
    return HillEstimate(y.size, k, weight, stat, float(stat / (y0 - y[y.size - k - 1])))


def expected_hill_ratio(k: int, weight: WeightFunction, gamma_eff: float) -> float:
    """Exact mean of the Hill ratio under a pure power quantile model.

    When ``y0 - G^{-1}(1-u) = c u**e`` the ratio equals in law
    ``1 - f(k)**-1 sum_{j=1}^{k} df(j) P(j, k+1)`` with products built at rate
    ``e``, which gives this closed form.  ``gamma_eff`` is ``e``.
    """
    d = weight.increments_upto(k + 1)
    M, _ = row_moments(d, gamma_eff, k + 1)
    return 1.0 - M[k + 1] / float(weight(k))


def hill_sweep(sample, ks: Iterable[int], weight: WeightFunction | None = None, *,
               y0: Optional[float] = None) -> list:
    out = []
    for k in ks:
        if y0 is None:
            out.append(hill_functional(sample, k, weight))
        else:
            out.append(hill_estimate_with_ratio(sample, k, weight, y0=y0))
    return out


def load_sample_csv(path, *, take_log: bool = False) -> OrderStatSample:
    """Read one value per line (blank lines and ``#`` comments skipped), sort ascending.

    A non-numeric first line is treated as a header.
    """
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if lineno == 0:
                    continue
                raise ParameterError(f"{path}:{lineno + 1}: not a number: {row[0]!r}")
    if not values:
        raise EmptyRequestError(f"{path}: no values")
    arr = np.asarray(values)
    if take_log:
        if np.any(arr <= 0):
            raise ParameterError("log requested but sample has non-positive values")
        arr = np.log(arr)
    return OrderStatSample(np.sort(arr))


SWEEP_COLUMNS = ("k", "statistic", "ratio")


def sweep_rows(estimates) -> list:
    return [(e.k, repr(e.statistic), "" if e.ratio is None else repr(e.ratio)) for e in estimates]


def read_sweep_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ratio = row["ratio"]
            rows.append((int(row["k"]), float(row["statistic"]),
                         None if ratio == "" else float(ratio)))
    return rows


def ratio_limit_candidates(gamma: float, tau: float = 1.0) -> dict:
    """Limits of the Hill ratio for ``f(j) = j**tau`` under each exponent convention.

    With exponent ``e`` the ratio tends to ``1 - tau / (tau + e)``.
    """
    def lim(e):
        return 1.0 - tau / (tau + e)
    return {"gamma": lim(gamma), "inverse_gamma": lim(1.0 / gamma),
            "one_over_gamma_plus_one": 1.0 / (gamma + 1.0)}

