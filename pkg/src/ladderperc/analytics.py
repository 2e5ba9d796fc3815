"""Closed-form quantities of the multiscale induction.

Probabilities that approach one are carried as ``log(1 - p)`` so that
``(1 - p) ** J`` never underflows silently.  Every quantity also has a plain
floating-point evaluation used as a cross-check where both are finite.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp

from .env import ParameterError

LOG_ZERO = -math.inf


class DomainError(ValueError):
    """Argument on the boundary or outside a function's domain."""


class DivergenceError(ValueError):
    """A geometric series in a bound does not converge."""


def _check_open_prob(name: str, p: float) -> None:
    if not (0.0 < p < 1.0):
        raise ParameterError(f"{name}={p!r} must lie in (0, 1)")


def log1mexp(a: float) -> float:
    """``log(1 - exp(a))`` for ``a <= 0``, accurate near both ends."""
    if a > 0:
        raise ValueError("log1mexp needs a <= 0")
    if a == 0:
        return LOG_ZERO
    return math.log(-math.expm1(a)) if a > -math.log(2) else math.log1p(-math.exp(a))


# ---------------------------------------------------------------------------
# the sequence p_k


@dataclass(frozen=True)
class PSequence:
    """``p_k = 1 - (1 - p0)**(k + 1)`` for ``k = 0..k_max``."""

    p0: float
    k_max: int

    @property
    def log_q(self) -> np.ndarray:
        """``log q_k = (k + 1) log(1 - p0)``."""
        return (np.arange(self.k_max + 1) + 1) * math.log1p(-self.p0)

    @property
    def q(self) -> np.ndarray:
        return np.exp(self.log_q)

    @property
    def values(self) -> np.ndarray:
        return -np.expm1(self.log_q)

    def __getitem__(self, k: int) -> float:
        return -math.expm1((k + 1) * math.log1p(-self.p0))

    def theta(self) -> tuple[float, float]:
        """Truncated product ``prod_{k<=k_max} p_k`` and its error bound ``sum_{k>k_max} q_k``."""
        log_theta = float(np.sum(np.log1p(-self.q)))
        q0 = 1.0 - self.p0
        tail = q0 ** (self.k_max + 2) / self.p0
        return math.exp(log_theta), tail


def p_sequence(p0: float, k_max: int) -> PSequence:
    _check_open_prob("p0", p0)
    if k_max < 0:
        raise ParameterError("k_max must be >= 0")
    return PSequence(float(p0), int(k_max))


def p_k(p0: float, k: int) -> float:
    return -math.expm1(log_q_k(p0, k))


def log_q_k(p0: float, k: int) -> float:
    return LOG_ZERO if p0 == 1.0 else (k + 1) * math.log1p(-p0)


def _log_pair(log_p: float, log_q: float) -> tuple[float, float]:
    """Rebuild the larger of ``log p``, ``log(1 - p)`` from the smaller, more precise one."""
    if log_p < -math.log(2.0):
        return log_p, log1mexp(log_p)
    if log_q == LOG_ZERO:
        return 0.0, LOG_ZERO
    return log1mexp(log_q), log_q


def _margin(a: float, b: float) -> float:
    return 0.0 if a == b else a - b


# ---------------------------------------------------------------------------
# the recursion p_{j,m}


@dataclass(frozen=True)
class RecursionParams:
    p_g: float
    p_b: float
    rho: float
    varkappa: int
    N: int
    strict: bool = True

    def __post_init__(self):
        for name in ("p_g", "p_b"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ParameterError(f"{name}={v!r} must lie in (0, 1]")
        if not (0.75 < self.rho < 1.0):
            raise ParameterError(f"rho={self.rho} outside (3/4, 1)")
        if self.varkappa < 1 or self.N < 1:
            raise ParameterError("varkappa and N must be positive")
        if self.strict and not self.p_b <= self.p_g:
            raise ParameterError("recursion needs p_b <= p_g")

    @property
    def psi(self) -> float:
        return 2.0 * self.rho - 1.0

    @property
    def J(self) -> int:
        return math.floor(self.psi / 3.0 * math.sqrt(self.N) + 1e-12)


@dataclass
class Recursion:
    """``p_{j,m}`` for ``j = 0..m`` with ``log p`` and ``log(1 - p)`` tracked."""

    m: int
    log_p: np.ndarray
    log_q: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_p)


def _log_pk_pow(p0: float, k: int, e: float) -> tuple[float, float]:
    """``log`` of ``p_k**e`` and of ``1 - p_k**e``."""
    if e == 0:
        return 0.0, LOG_ZERO
    lq = log_q_k(p0, k)
    lp = e * log1mexp(lq) if lq > LOG_ZERO else 0.0
    return lp, log1mexp(lp) if lp < 0 else LOG_ZERO


def _one_minus_pow(log_q_prev: float, J: int) -> tuple[float, float]:
    """``log`` of ``1 - q**J`` and of ``q**J`` given ``log q``."""
    lqJ = J * log_q_prev if log_q_prev > LOG_ZERO else LOG_ZERO
    return (log1mexp(lqJ) if lqJ < 0 else LOG_ZERO), lqJ


def recursion_pjm(params: RecursionParams, m: int) -> Recursion:
    """Log-space evaluation of ``p_{0,m}, ..., p_{m,m}``."""
    J = params.J
    if J < 1:
        raise ParameterError(f"J={J} < 1; N must exceed (3/psi)^2")
    if m < 1:
        raise ParameterError("m must be >= 1")
    k, pg, pb = params.varkappa, params.p_g, params.p_b
    log_p = np.empty(m + 1)
    log_q = np.empty(m + 1)
    lp0 = m * math.log(pb) + k * (m - 1) * math.log(pg)
    log_p[0], log_q[0] = _log_pair(lp0, log1mexp(lp0) if lp0 < 0 else LOG_ZERO)
    for j in range(1, m):
        a_lp, a_lq = _one_minus_pow(log_q[j - 1], J)
        b_lp, b_lq = _log_pk_pow(pg, j, k * (m - j - 1))
        # 1 - A B = (1 - B) + B (1 - A)
        log_p[j], log_q[j] = _log_pair(a_lp + b_lp, np.logaddexp(b_lq, b_lp + a_lq))
    log_p[m], log_q[m] = _log_pair(*_one_minus_pow(log_q[m - 1], J))
    return Recursion(m, log_p, log_q)


def recursion_pjm_plain(params: RecursionParams, m: int) -> np.ndarray:
    """Direct evaluation on probabilities (cross-check only).

    ``1 - (1 - x)**J`` is formed as ``-expm1(J log1p(-x))``; the naive form
    loses all digits once ``x`` is below ``1e-8``.
    """
    J = params.J
    if J < 1:
        raise ParameterError(f"J={J} < 1")
    pg, pb, k = params.p_g, params.p_b, params.varkappa
    boost = lambda x: -math.expm1(J * math.log1p(-x)) if x < 1.0 else 1.0  # noqa: E731
    out = np.empty(m + 1)
    out[0] = pb ** m * pg ** (k * (m - 1))
    for j in range(1, m):
        out[j] = boost(out[j - 1]) * p_k(pg, j) ** (k * (m - j - 1))
    out[m] = boost(out[m - 1])
    return out


@dataclass
class InductionRow:
    m: int
    site_ok: bool
    site_margin: float
    bond_ok: bool
    bond_margin: float


@dataclass
class InductionReport:
    rows: list[InductionRow]
    g_n_ok: bool | None = None
    g_n_margin: float | None = None
    induction_ok: list[bool] = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        ok = all(r.site_ok and r.bond_ok for r in self.rows)
        if self.g_n_ok is not None:
            ok = ok and self.g_n_ok and all(self.induction_ok)
        return ok


def induction_check(params: RecursionParams, m_max: int, C: float = 8.0,
                    g_n_p0: float | None = None) -> InductionReport:
    """Evaluate the two step inequalities for ``2 <= m <= m_max``.

    * site: ``p_{m,m} >= p_m``, margin ``log q_m - log(1 - p_{m,m})``;
    * bond: ``C (1 - p_{m-1,m})**(psi N / 6) <= q_m``, margin in log space.

    Positive margins pass.  ``g_n_p0`` (an estimate of ``g_N(p_0)``) adds the
    base inequality ``g_N(p_0) > 1 - (1 - p_0)**2`` and the induction
    ``g_N(p_k) >= p_{k+1}`` obtained from it by the sandwich composition.
    """
    if m_max < 2:
        raise ParameterError("m_max must be >= 2")
    p0 = params.p_g
    e = params.psi * params.N / 6.0
    rows = []
    for m in range(2, m_max + 1):
        rec = recursion_pjm(params, m)
        lq_m = log_q_k(p0, m)
        site_margin = _margin(lq_m, rec.log_q[m])
        left = math.log(C) + e * rec.log_q[m - 1] if rec.log_q[m - 1] > LOG_ZERO else LOG_ZERO
        bond_margin = _margin(lq_m, left)
        rows.append(InductionRow(m, bool(site_margin >= 0), float(site_margin),
                                bool(bond_margin >= 0), float(bond_margin)))
    rep = InductionReport(rows)
    if g_n_p0 is not None:
        base = 1.0 - (1.0 - p0) ** 2
        rep.g_n_margin = g_n_p0 - base
        rep.g_n_ok = g_n_p0 > base
        # p_k = 1 - (1 - p_0)(1 - p_{k-1}), so the sandwich bound gives
        # g_N(p_k) >= 1 - (1 - g_N(p_0))(1 - g_N(p_{k-1}))
        lower = g_n_p0
        for k in range(0, m_max):
            if k:
                lower = 1.0 - (1.0 - g_n_p0) * (1.0 - lower)
            rep.induction_ok.append(lower >= p_k(p0, k + 1))
    return rep


# ---------------------------------------------------------------------------
# large deviations


def rate_function(p: float, x: float) -> float:
    """``I_p(x) = x log(x/p) + (1-x) log((1-x)/(1-p))``."""
    if not (0.0 < p < 1.0) or not (0.0 < x < 1.0):
        raise DomainError(f"rate function needs p, x in (0, 1); got p={p}, x={x}")
    return x * math.log(x / p) + (1.0 - x) * (math.log1p(-x) - math.log1p(-p))


def f(p: float) -> float:
    """``f(p) = I_p(p / 2)``."""
    return rate_function(p, p / 2.0)


def f_closed_form(p: float) -> float:
    """``(1 - p/2) log((2 - p)/(1 - p)) - log 2``."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"p={p} outside (0, 1)")
    return (1.0 - p / 2.0) * (math.log(2.0 - p) - math.log1p(-p)) - math.log(2.0)


def f_from_log_p(log_p: float) -> float:
    """``f(p)`` from ``log p``, keeping precision when ``p`` is near one."""
    q = -math.expm1(log_p)
    if q <= 0:
        return math.inf
    return (1.0 + q) / 2.0 * (math.log1p(q) - math.log(q)) - math.log(2.0)


@dataclass
class EstimSum:
    lhs: float
    rhs: float
    log_lhs: float
    log_rhs: float
    passed: bool
    halves: tuple[float, float]


def estim_sum(params: RecursionParams, p0: float, m: int) -> EstimSum:
    """Sum over ``i = 1..m-1`` of ``exp[-4 (J/2)**(i+1) prod_{j<i} p_{m-j-1}**(j kappa) f(p_{m-i-1}**(i kappa))]``
    against ``(1 - p_m) / 2``.

    The comparison is made in log space.  ``halves`` reports the log-sums of
    the terms with ``i <= m // 2`` and ``i > m // 2``.
    """
    _check_open_prob("p0", p0)
    if m < 2:
        raise ParameterError("m must be >= 2")
    J = params.J
    if J <= 1:
        warnings.warn(f"J={J} <= 1: the sum bound is outside its intended regime", RuntimeWarning)
    kap = params.varkappa
    log_terms = []
    for i in range(1, m):
        lp_prod = 0.0
        for j in range(1, i):
            lp_prod += j * kap * math.log(p_k(p0, m - j - 1))
        fi = f_from_log_p(i * kap * math.log(p_k(p0, m - i - 1)))
        if J == 0:
            expo = 0.0
        else:
            expo = -4.0 * math.exp((i + 1) * math.log(J / 2.0) + lp_prod) * fi
        log_terms.append(expo)
    log_terms = np.array(log_terms)
    log_lhs = float(logsumexp(log_terms))
    log_rhs = log_q_k(p0, m) - math.log(2.0)
    h = m // 2
    halves = (float(logsumexp(log_terms[:h])) if h else LOG_ZERO,
              float(logsumexp(log_terms[h:])) if m - 1 > h else LOG_ZERO)
    return EstimSum(math.exp(log_lhs), math.exp(log_rhs), log_lhs, log_rhs,
                    log_lhs <= log_rhs, halves)


def estim_sum_plain(params: RecursionParams, p0: float, m: int) -> float:
    """Direct evaluation of the left-hand side (cross-check only)."""
    J, kap = params.J, params.varkappa
    total = 0.0
    for i in range(1, m):
        prod = 1.0
        for j in range(1, i):
            prod *= p_k(p0, m - j - 1) ** (j * kap)
        total += math.exp(-4.0 * (J / 2.0) ** (i + 1) * prod * f(p_k(p0, m - i - 1) ** (i * kap)))
    return total


# ---------------------------------------------------------------------------
# bounds and maps


def peierls_tail(C: float, p: float, n0: int) -> float:
    """``C [C(1-p)]**(4 n0 - 1) / (1 - C(1-p))``."""
    r = C * (1.0 - p)
    if r >= 1.0:
        raise DivergenceError(f"C(1-p)={r} >= 1: the circuit sum diverges")
    return C * r ** (4 * n0 - 1) / (1.0 - r)


def delta_condition(M: int) -> Fraction:
    """Supremum of ``delta`` with ``M < (64 delta)**(-1/2)``, i.e. ``1 / (64 M^2)`` (exclusive)."""
    if M < 3:
        raise ParameterError(f"M={M} < 3")
    return Fraction(1, 64 * M * M)


def potts_map(J_e: float, q: int) -> float:
    """Bond probability ``(1 - e^{-2J}) / (1 + (q - 1) e^{-2J})``."""
    if q < 2:
        raise ParameterError(f"q={q} < 2")
    if J_e < 0:
        raise ParameterError(f"J_e={J_e} < 0")
    if math.isinf(J_e):
        return 1.0
    t = math.exp(-2.0 * J_e)
    return -math.expm1(-2.0 * J_e) / (1.0 + (q - 1) * t)


def magnetization_bound(theta: float, q: int) -> float:
    """``1/q + ((q - 1)/q) theta``."""
    if q < 2:
        raise ParameterError(f"q={q} < 2")
    if not (0.0 <= theta <= 1.0):
        raise ParameterError(f"theta={theta} is not a probability")
    return 1.0 / q + (q - 1) / q * theta
