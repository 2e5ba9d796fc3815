"""Percolation of words on the oriented lattice ``Z_+^d``.

A word ``phi`` is seen from ``v0`` along an oriented path ``v0, v1, ...``
(each step adds one to a single coordinate) when ``omega(v_i) = phi_i`` for
every ``i >= 1``.  Oriented paths never revisit a vertex, and every vertex at
``L1`` distance ``n`` from ``v0`` is reached in exactly ``n`` steps, so the
set of vertices reachable at depth ``n`` follows from the set at depth
``n - 1`` by one shift per axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .env import ParameterError, WindowError
from .perc_core import EstimateResult
from .rng import Stream, Tag


@dataclass(frozen=True)
class Word:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.ndim != 1 or np.any(b > 1):
            raise ParameterError("a word is a one-dimensional binary sequence")
        object.__setattr__(self, "bits", b)

    def __len__(self):
        return int(self.bits.size)

    def complement(self) -> "Word":
        return Word(1 - self.bits)


@dataclass(frozen=True)
class SiteField:
    """Site states on the box ``[0, n_1) x ... x [0, n_d)``."""

    omega: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=np.uint8)
        if w.ndim < 2 or np.any(w > 1):
            raise ParameterError("a site field is a binary array of dimension >= 2")
        object.__setattr__(self, "omega", w)

    @property
    def d(self) -> int:
        return self.omega.ndim

    def complement(self) -> "SiteField":
        return SiteField(1 - self.omega)


@dataclass(frozen=True)
class WordParams:
    alpha: float
    beta: float
    d: int = 2

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ParameterError(f"{name}={v!r} is not a probability")
        if self.d < 2:
            raise ParameterError("d must be >= 2")

    @property
    def c(self) -> float:
        return self.alpha * self.beta + (1 - self.alpha) * (1 - self.beta)

    @property
    def c_exact(self) -> Fraction:
        a, b = Fraction(self.alpha), Fraction(self.beta)
        return a * b + (1 - a) * (1 - b)


def _levels(shape: tuple[int, ...], v0: tuple[int, ...]) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(n) - o for n, o in zip(shape, v0)], indexing="ij")
    lev = sum(grids)
    below = np.any(np.stack(grids) < 0, axis=0)
    return np.where(below, -1, lev)


def z_counts(omega: np.ndarray, phi: np.ndarray, v0: tuple[int, ...] | None = None) -> np.ndarray:
    """Batched ``Z`` sequences.

    ``omega`` has shape ``(batch, n_1, ..., n_d)`` and ``phi`` shape
    ``(batch, n)``.  Returns integer counts of shape ``(batch, n + 1)`` with
    ``Z[:, 0] = 1``.
    """
    omega = np.asarray(omega, dtype=bool)
    phi = np.asarray(phi, dtype=bool)
    batch, shape = omega.shape[0], omega.shape[1:]
    d = len(shape)
    n = phi.shape[1]
    v0 = tuple(v0) if v0 is not None else (0,) * d
    if len(v0) != d:
        raise ParameterError("v0 has the wrong dimension")
    for i in range(d):
        if not (0 <= v0[i] and v0[i] + n < shape[i]):
            raise WindowError(f"window {shape} too small for depth {n} from {v0}")
    levels = _levels(shape, v0)
    reach = np.zeros(omega.shape, dtype=bool)
    reach[(slice(None),) + v0] = True
    Z = np.zeros((batch, n + 1), dtype=np.int64)
    Z[:, 0] = 1
    expand = (slice(None),) + (None,) * d
    for t in range(1, n + 1):
        nxt = np.zeros_like(reach)
        for ax in range(d):
            src = [slice(None)] * (d + 1)
            dst = [slice(None)] * (d + 1)
            src[ax + 1] = slice(0, -1)
            dst[ax + 1] = slice(1, None)
            nxt[tuple(dst)] |= reach[tuple(src)]
        nxt &= (levels == t)[None]
        nxt &= omega == phi[:, t - 1][expand]
        reach = nxt
        Z[:, t] = reach.reshape(batch, -1).sum(axis=1)
    return Z


def word_seen_oriented(field: SiteField, word: Word, v0=None) -> tuple[bool, np.ndarray]:
    """``(Z[n] > 0, Z)`` for one field and one word of length ``n``."""
    Z = z_counts(field.omega[None], word.bits[None], v0)[0]
    return bool(Z[-1] > 0), Z


def sample_fields(params: WordParams, n: int, stream: Stream, row0: int, count: int,
                  antithetic: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Fields on ``[0, n]^d`` and words of length ``n`` for replicates ``row0..row0+count-1``.

    Replicate ``r`` reads row ``r`` of the ``WORD_OMEGA`` and ``WORD_PHI``
    fields.  ``antithetic`` uses ``u >= 1 - p`` in place of ``u < p`` so that
    running ``(1 - alpha, 1 - beta)`` antithetically yields the exact
    complements of the plain ``(alpha, beta)`` samples.
    """
    side = n + 1
    u = stream.uniform(Tag.WORD_OMEGA, count, side ** params.d, row0=row0)
    w = stream.uniform(Tag.WORD_PHI, count, n, row0=row0)
    if antithetic:
        omega = u >= 1.0 - params.alpha
        phi = w >= 1.0 - params.beta
    else:
        omega = u < params.alpha
        phi = w < params.beta
    return omega.reshape((count,) + (side,) * params.d), phi


@dataclass
class HProxy:
    """Depth-``n`` survival frequency with the mean and standard error of ``Z``."""

    estimate: EstimateResult
    depth: int
    mean_z: np.ndarray
    se_z: np.ndarray
    survival: np.ndarray


def word_counts(params: WordParams, n: int, seed: int, r0: int, r1: int, *,
                antithetic: bool = False, batch: int = 2000) -> tuple[np.ndarray, ...]:
    """Integer sums ``(sum Z, sum Z**2, #{Z > 0})`` per level over replicates ``r0..r1-1``.

    Sums over disjoint replicate ranges add up exactly, so any split of the
    range reproduces the same totals.
    """
    stream = Stream(seed)
    z_sum = np.zeros(n + 1, dtype=np.int64)
    z_sq = np.zeros(n + 1, dtype=np.int64)
    alive = np.zeros(n + 1, dtype=np.int64)
    per = max(1, batch // max(1, (n + 1) ** (params.d - 2)))
    for a in range(r0, r1, per):
        cnt = min(per, r1 - a)
        omega, phi = sample_fields(params, n, stream, a, cnt, antithetic)
        Z = z_counts(omega, phi)
        z_sum += Z.sum(axis=0)
        z_sq += (Z * Z).sum(axis=0)
        alive += (Z > 0).sum(axis=0)
    return z_sum, z_sq, alive


def summarize_counts(n: int, replicates: int, seed: int, z_sum, z_sq, alive) -> HProxy:
    mean = z_sum / replicates
    if replicates > 1:
        var = (z_sq - replicates * mean ** 2) / (replicates - 1)
        se = np.sqrt(np.maximum(var, 0.0) / replicates)
    else:
        se = np.zeros(n + 1)
    est = EstimateResult.from_counts(int(alive[n]), replicates, seed)
    return HProxy(est, n, mean, se, alive / replicates)


def estimate_h_proxy(params: WordParams, n: int, replicates: int, seed: int = 0, *,
                     antithetic: bool = False) -> HProxy:
    """Monte Carlo surrogate for ``h(alpha, beta)``: frequency of ``Z[n] > 0`` from the origin.

    This is a finite-depth proxy; ``h`` itself is a 0-1 quantity.
    """
    if replicates < 1:
        raise ParameterError("replicates must be >= 1")
    if n < 1:
        raise ParameterError("depth must be >= 1")
    sums = word_counts(params, n, seed, 0, replicates, antithetic=antithetic)
    return summarize_counts(n, replicates, seed, *sums)


@dataclass
class ThresholdReport:
    c: float
    d: int
    subcritical: bool
    delta: float
    p_g: float
    p_b: float

    def line_label(self, phi_n: int) -> str:
        """Ladder ``n`` of the mapped model is good when ``phi_n = 1``."""
        return "good" if phi_n == 1 else "bad"


def threshold_check(params: WordParams) -> ThresholdReport:
    """Subcritical certificate ``c <= 1/d`` and the map onto the ladder model.

    The map is ``(delta, p_g, p_b) = (1 - beta, alpha, 1 - alpha)``.
    """
    sub = params.c_exact <= Fraction(1, params.d)
    return ThresholdReport(params.c, params.d, bool(sub), 1.0 - params.beta,
                           params.alpha, 1.0 - params.alpha)


def first_moment_bound(params: WordParams, n: int) -> float:
    """``(d c)**n``, the expected number of oriented paths spelling the word."""
    return (params.d * params.c) ** n


def beta_sweep(alpha: float, betas, d: int, depth: int, replicates: int, seed: int = 0) -> list[dict]:
    """Proxy and mean ``Z`` at ``depth`` along a grid of ``beta``."""
    out = []
    for b in betas:
        p = WordParams(alpha, float(b), d)
        r = estimate_h_proxy(p, depth, replicates, seed)
        out.append({"alpha": alpha, "beta": float(b), "d": d, "n": depth,
                    "proxy": r.estimate.point, "mean_z": float(r.mean_z[depth]),
                    "ci_low": r.estimate.ci_low, "ci_high": r.estimate.ci_high})
    return out
