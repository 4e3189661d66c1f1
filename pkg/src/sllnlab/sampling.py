"""Seedable variate generation: exponentials, uniform order statistics and
samples from the Weibull max-domain quantile model.

All randomness flows through :class:`SeededStream`, a thin counter-based
wrapper around numpy's Philox generator.  A stream is identified by its
``seed`` (the Philox key) and ``counter`` (number of 64-bit words already
consumed), so the same ``(seed, counter)`` pair always yields the same next
variate, and replications can be distributed across workers by giving each a
distinct seed.

Uniforms are built from raw words as ``((w >> 11) + 0.5) * 2**-53`` which lies
strictly inside (0, 1).  Exponentials and normals are obtained by inversion, so
every variate consumes exactly one word.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtri

from .errors import EmptyRequestError, ParameterError

_MASK64 = (1 << 64) - 1
_WORDS_PER_BLOCK = 4  # Philox4x64 emits four words per counter increment


@dataclass
class SeededStream:
    """Counter-based random stream.

    The stream is a plain value: copying it (``dataclasses.replace`` or
    :meth:`fork`) gives an independent cursor over the same sequence.
    """

    seed: int
    counter: int = 0

    def __post_init__(self):
        if self.counter < 0:
            raise ParameterError("stream counter must be non-negative")
        self.seed = int(self.seed) & _MASK64

    def _raw(self, n: int) -> np.ndarray:
        bitgen = np.random.Philox(key=self.seed)
        blocks, offset = divmod(self.counter, _WORDS_PER_BLOCK)
        if blocks:
            bitgen.advance(blocks)
        if offset:
            bitgen.random_raw(offset)
        words = bitgen.random_raw(n)
        self.counter += n
        return np.asarray(words, dtype=np.uint64)

    def uniforms(self, n: int) -> np.ndarray:
        if n < 1:
            raise EmptyRequestError("requested zero variates")
        words = self._raw(n)
        return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def fork(self) -> "SeededStream":
        return SeededStream(self.seed, self.counter)

    @classmethod
    def for_replicate(cls, base_seed: int, index: int) -> "SeededStream":
        """Stream for replicate ``index`` under the ``base_seed + index`` schedule."""
        return cls(int(base_seed) + int(index))


def draw_uniforms(stream: SeededStream, n: int) -> np.ndarray:
    return stream.uniforms(n)


def draw_exponentials(stream: SeededStream, n: int) -> np.ndarray:
    """``n`` iid unit-rate exponentials; advances the stream by exactly ``n``."""
    return -np.log(stream.uniforms(n))


def draw_normals(stream: SeededStream, n: int) -> np.ndarray:
    """``n`` iid standard normals by inversion (one word per variate)."""
    return ndtri(stream.uniforms(n))


@dataclass(frozen=True)
class OrderStatSample:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise EmptyRequestError("order statistic sample must be a non-empty vector")
        if np.any(np.diff(values) < 0):
            raise ParameterError("order statistics must be sorted ascending")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size


def uniform_order_stats(stream: SeededStream, n: int) -> OrderStatSample:
    """Uniform order statistics via the Malmquist construction.

    Top-down: ``U_{n,n} = V**(1/n)`` and ``log U_{j,n} = log U_{j+1,n} - E_j / j``,
    so ``j * log(U_{j+1,n} / U_{j,n})`` are iid unit exponentials.
    """
    return OrderStatSample(np.exp(log_uniform_order_stats(stream, n)))


def log_uniform_order_stats(stream: SeededStream, n: int) -> np.ndarray:
    """Logarithms of the uniform order statistics, ascending.

    Working in log-space keeps the smallest order statistics representable
    for large ``n``.  Consumes ``n`` words: ``E_1..E_{n-1}`` then ``E_n``,
    where ``E_n / n`` plays the role of ``-log V / n``.
    """
    if n < 1:
        raise EmptyRequestError("requested zero order statistics")
    e = draw_exponentials(stream, n)
    h = np.arange(1, n + 1, dtype=np.float64)
    # log U_{j,n} = -sum_{h=j}^{n} E_h / h
    return -np.cumsum((e / h)[::-1])[::-1]


@dataclass(frozen=True)
class QuantileRep:
    """Quantile model ``y0 - G^{-1}(1-u) = c * u**e * (1 + p(u)) * exp(int_u^1 b(t)/t dt)``.

    ``e`` is ``gamma`` when ``exponent_mode == "gamma"`` and ``1/gamma`` for
    ``"inverse_gamma"``.  ``p`` and ``b`` default to zero.
    """

    y0: float = 0.0
    c: float = 1.0
    gamma: float = 1.0
    exponent_mode: str = "gamma"
    p: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    b: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def validate(self, vanish_tol: float = 1e-2) -> None:
        if not self.c > 0:
            raise ParameterError(f"scale c must be positive, got {self.c}")
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.exponent_mode not in ("gamma", "inverse_gamma"):
            raise ParameterError(f"unknown exponent mode {self.exponent_mode!r}")
        # p(u), b(u) -> 0 as u -> 0, checked on a small-u grid
        grid = np.logspace(-12, -8, 5)
        for name, fn in (("p", self.p), ("b", self.b)):
            if fn is None:
                continue
            vals = np.abs(np.asarray(fn(grid), dtype=np.float64))
            if not np.all(np.isfinite(vals)) or vals.max() > vanish_tol:
                raise ParameterError(f"{name}(u) does not vanish as u -> 0")

    @property
    def exponent(self) -> float:
        return self.gamma if self.exponent_mode == "gamma" else 1.0 / self.gamma

    def distance_to_endpoint(self, u: np.ndarray) -> np.ndarray:
        """``y0 - G^{-1}(1-u)`` evaluated at ``u``."""
        u = np.asarray(u, dtype=np.float64)
        out = self.c * u**self.exponent
        if self.p is not None:
            out = out * (1.0 + np.asarray(self.p(u), dtype=np.float64))
        if self.b is not None:
            out = out * np.exp(_integral_b_over_t(self.b, u))
        return out

    def quantile_upper(self, u: np.ndarray) -> np.ndarray:
        """``G^{-1}(1-u)``."""
        return self.y0 - self.distance_to_endpoint(u)


def _integral_b_over_t(b, u: np.ndarray) -> np.ndarray:
    """``int_u^1 b(t)/t dt`` for every entry of ``u`` (adaptive quadrature, rtol 1e-8).

    Points are integrated piecewise between consecutive sorted values so each
    quadrature covers a short interval.
    """
    flat = np.ravel(u)
    order = np.argsort(flat)[::-1]
    knots = np.concatenate([[1.0], flat[order]])
    pieces = np.empty(flat.size)
    fn = lambda t: float(b(np.asarray(t))) / t  # noqa: E731
    for i in range(flat.size):
        lo, hi = knots[i + 1], knots[i]
        pieces[i] = integrate.quad(fn, lo, hi, epsrel=1e-8, epsabs=0.0)[0] if hi > lo else 0.0
    out = np.empty(flat.size)
    out[order] = np.cumsum(pieces)
    return out.reshape(np.shape(u))


def sample_weibull_domain(stream: SeededStream, n: int, rep: QuantileRep) -> OrderStatSample:
    """Order statistics of ``n`` draws of ``Y = log X`` under ``rep``.

    Values are sorted ascending and lie strictly below ``rep.y0``.
    """
    rep.validate()
    if n < 1:
        raise EmptyRequestError("requested zero draws")
    u = np.exp(log_uniform_order_stats(stream, n))
    y = np.sort(rep.quantile_upper(u))
    return OrderStatSample(y)
