"""Generators of associated (and negatively associated) sequences, plus
empirical checks of the covariance consequences of association.

Association itself quantifies over every pair of monotone functions and cannot
be verified by sampling.  What is checked here are necessary consequences:
sign of covariances and instances of Newman's covariance inequality.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .conditions import EmpiricalModel
from .errors import ContractError, DecompositionError, ParameterError
from .sampling import SeededStream, draw_exponentials, draw_normals, draw_uniforms

_PSD_RTOL = 1e-10


@dataclass(frozen=True)
class AssocGenerator:
    """Recipe for one random vector.

    kinds
      ``iid``          distribution in {normal, exponential, uniform}
      ``gaussian``     correlation ``rule(i, j)`` or explicit ``matrix``
      ``transform``    coordinate-wise monotone ``maps`` applied to ``base``
      ``partial_sums`` cumulative sums of an ``iid`` base
      ``multinomial``  cell counts (negatively associated; labeled extension)
      ``permutation``  random permutation of fixed ``values`` (negatively associated)
    """

    kind: str
    distribution: str = "normal"
    rule: Optional[Callable] = field(default=None, compare=False)
    matrix: Optional[np.ndarray] = field(default=None, compare=False)
    base: Optional["AssocGenerator"] = None
    maps: Optional[Callable] = field(default=None, compare=False)
    trials: int = 0
    probs: Optional[tuple] = None
    values: Optional[tuple] = None

    @classmethod
    def iid(cls, distribution: str = "normal") -> "AssocGenerator":
        if distribution not in ("normal", "exponential", "uniform"):
            raise ParameterError(f"unknown distribution {distribution!r}")
        return cls("iid", distribution=distribution)

    @classmethod
    def gaussian(cls, rule: Optional[Callable] = None, matrix=None) -> "AssocGenerator":
        if (rule is None) == (matrix is None):
            raise ParameterError("give exactly one of rule or matrix")
        return cls("gaussian", rule=rule,
                   matrix=None if matrix is None else np.asarray(matrix, dtype=np.float64))

    @classmethod
    def transform(cls, base: "AssocGenerator", maps: Callable) -> "AssocGenerator":
        return cls("transform", base=base, maps=maps)

    @classmethod
    def partial_sums(cls, base: "AssocGenerator") -> "AssocGenerator":
        if base.kind != "iid":
            raise ParameterError("partial_sums requires an iid base")
        return cls("partial_sums", base=base)

    @classmethod
    def multinomial(cls, trials: int, probs: Sequence[float]) -> "AssocGenerator":
        p = np.asarray(probs, dtype=np.float64)
        if trials < 1 or np.any(p < 0) or not math.isclose(p.sum(), 1.0):
            raise ParameterError("need trials >= 1 and a probability vector")
        return cls("multinomial", trials=int(trials), probs=tuple(p))

    @classmethod
    def permutation(cls, values: Sequence[float]) -> "AssocGenerator":
        return cls("permutation", values=tuple(float(v) for v in values))

    def correlation(self, n: int) -> np.ndarray:
        if self.matrix is not None:
            if self.matrix.shape[0] < n:
                raise ParameterError(f"correlation matrix only has {self.matrix.shape[0]} rows")
            return self.matrix[:n, :n]
        i = np.arange(1, n + 1)
        return np.asarray(self.rule(i[:, None], i[None, :]), dtype=np.float64) * np.ones((n, n))


def gaussian_factor(corr: np.ndarray) -> np.ndarray:
    """Symmetric square root ``B`` with ``B @ B.T == corr`` via the eigendecomposition.

    Refuses (rather than repairs) matrices that are asymmetric, have negative
    entries, or a negative eigenvalue beyond round-off.  The error carries the
    offending index pair, or the order of the first leading principal
    submatrix that is not positive semidefinite.
    """
    corr = np.asarray(corr, dtype=np.float64)
    if not np.allclose(corr, corr.T, atol=1e-12):
        i, j = np.unravel_index(np.argmax(np.abs(corr - corr.T)), corr.shape)
        raise DecompositionError(f"correlation not symmetric at ({i + 1}, {j + 1})", (i + 1, j + 1))
    if np.any(corr < 0):
        i, j = np.argwhere(corr < 0)[0]
        raise DecompositionError(
            f"negative correlation at ({i + 1}, {j + 1}); Gaussian vectors are associated only "
            "with non-negative correlations", (i + 1, j + 1))
    w, v = np.linalg.eigh(corr)
    scale = max(float(np.max(np.abs(w))), 1.0)
    if w[0] < -_PSD_RTOL * scale:
        order = _first_bad_minor(corr)
        raise DecompositionError(
            f"correlation not positive semidefinite (min eigenvalue {w[0]:.3g}); "
            f"leading minor of order {order} fails", tuple(range(1, order + 1)))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _first_bad_minor(corr: np.ndarray) -> int:
    lo, hi = 1, corr.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        wm = np.linalg.eigvalsh(corr[:mid, :mid])
        if wm[0] < -_PSD_RTOL * max(float(np.max(np.abs(wm))), 1.0):
            hi = mid
        else:
            lo = mid + 1
    return lo


def _iid(stream: SeededStream, n: int, distribution: str) -> np.ndarray:
    if distribution == "normal":
        return draw_normals(stream, n)
    if distribution == "exponential":
        return draw_exponentials(stream, n)
    return draw_uniforms(stream, n)


def generate(gen: AssocGenerator, stream: SeededStream, n: int) -> np.ndarray:
    """One realization of length ``n``."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    if gen.kind == "iid":
        return _iid(stream, n, gen.distribution)
    if gen.kind == "gaussian":
        return gaussian_factor(gen.correlation(n)) @ draw_normals(stream, n)
    if gen.kind == "transform":
        x = generate(gen.base, stream, n)
        return np.asarray(gen.maps(x), dtype=np.float64)
    if gen.kind == "partial_sums":
        return np.cumsum(generate(gen.base, stream, n))
    if gen.kind == "multinomial":
        if n != len(gen.probs):
            raise ParameterError("multinomial length is fixed by probs")
        u = draw_uniforms(stream, gen.trials)
        cells = np.searchsorted(np.cumsum(gen.probs), u, side="right")
        return np.bincount(np.minimum(cells, n - 1), minlength=n).astype(np.float64)
    if gen.kind == "permutation":
        if n != len(gen.values):
            raise ParameterError("permutation length is fixed by values")
        order = np.argsort(draw_uniforms(stream, n), kind="stable")
        return np.asarray(gen.values)[order]
    raise ParameterError(f"unknown generator kind {gen.kind!r}")


def check_monotone_maps(maps: Callable, grid: np.ndarray) -> bool:
    """True when ``maps`` is coordinate-wise non-decreasing or non-increasing on ``grid`` (shape ``(m, n)``, sorted along axis 0)."""
    y = np.asarray(maps(grid), dtype=np.float64)
    dy = np.diff(y, axis=0)
    return bool(np.all((dy >= 0).all(axis=0) | (dy <= 0).all(axis=0)))


def replicate(gen: AssocGenerator, n: int, reps: int, base_seed: int = 0) -> np.ndarray:
    """``(reps, n)`` matrix; row ``t`` uses seed ``base_seed + t``."""
    return np.vstack([generate(gen, SeededStream.for_replicate(base_seed, t), n) for t in range(reps)])


# --------------------------------------------------------------------------
# empirical covariance


def empirical_cov_model(samples: np.ndarray) -> EmpiricalModel:
    """Unbiased covariance matrix of the columns with per-entry standard errors.

    The standard error of entry ``(i, j)`` is the sample standard deviation of
    the centered products ``(x_i - mean_i)(x_j - mean_j)`` over ``sqrt(R)``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ParameterError("samples must be a (replications, n) matrix")
    R = x.shape[0]
    if R < 2:
        raise ParameterError("covariance undefined for fewer than 2 replications")
    if R < 30:
        warnings.warn(f"only {R} replications; standard errors are unreliable", stacklevel=2)
    mean = x.mean(axis=0)
    c = x - mean
    cov = c.T @ c / (R - 1)
    prod_sq = (c**2).T @ (c**2) / R
    var_prod = np.maximum(prod_sq - (c.T @ c / R) ** 2, 0.0)
    se = np.sqrt(var_prod / R)
    return EmpiricalModel(cov, se, R, mean)


def load_correlation_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    m = np.asarray(rows, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f"{path}: correlation matrix must be square")
    return m


# --------------------------------------------------------------------------
# Newman's covariance inequality


@dataclass(frozen=True)
class NewmanCheck:
    cov_fg: float
    cov_fg_se: float
    cov_xy: float
    cov_xy_se: float
    lipschitz: float
    holds: bool

    @property
    def bound(self) -> float:
        return self.lipschitz * self.cov_xy


def _cov_and_se(a: np.ndarray, b: np.ndarray):
    R = a.size
    p = (a - a.mean()) * (b - b.mean())
    return float(p.sum() / (R - 1)), float(p.std(ddof=1) / math.sqrt(R))


def check_newman_lemma(pair_sampler: Callable[[SeededStream, int], tuple], f: Callable, g: Callable,
                       f_prime_sup: float, g_prime_sup: float, reps: int, *,
                       base_seed: int = 0, exact_cov_xy: Optional[float] = None) -> NewmanCheck:
    """Monte Carlo check of ``|Cov(f(X), g(Y))| <= |f'|_inf |g'|_inf Cov(X, Y)``.

    ``pair_sampler(stream, reps)`` returns two arrays of ``reps`` joint draws.
    The inequality is accepted when it holds within three combined standard
    errors.  ``exact_cov_xy`` replaces the Monte Carlo ``Cov(X, Y)`` when known.
    """
    if reps < 1000:
        raise ParameterError("reps must be at least 1000 for a meaningful check")
    x, y = pair_sampler(SeededStream(base_seed), reps)
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    cfg, cfg_se = _cov_and_se(np.asarray(f(x)), np.asarray(g(y)))
    if exact_cov_xy is None:
        cxy, cxy_se = _cov_and_se(x, y)
    else:
        cxy, cxy_se = float(exact_cov_xy), 0.0
    if cxy < -3 * cxy_se:
        raise ContractError("pair is not positively correlated; inequality presumes association")
    lip = float(f_prime_sup) * float(g_prime_sup)
    slack = 3.0 * math.hypot(cfg_se, lip * cxy_se)
    return NewmanCheck(cfg, cfg_se, cxy, cxy_se, lip, abs(cfg) <= lip * cxy + slack)
