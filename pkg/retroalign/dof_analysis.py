"""
Degrees-of-Freedom Analysis

Exact rational evaluation of the achievable DoF of every retrospective
alignment scheme: the per-phase recursions unrolled from the last phase down,
their closed forms, the integer searches over the number of simultaneously
active transmitters, and the K -> infinity limits. Every DoF value is a
``fractions.Fraction`` so closed forms and recursions compare exactly.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Rational = Fraction

ChannelKind = Literal["IC", "X"]
FeedbackKind = Literal["FD", "OF", "SF"]

# Q-function signature used by the recursions: (m, n) -> Q_m(n)
QFunc = Callable[[int, int], int]

MODEL_NAMES = ("icfd", "icof", "icsf", "xfd", "xof", "xsf")

FEEDBACK_LABELS = {
    "FD": "full-duplex delayed CSIT",
    "OF": "output feedback",
    "SF": "Shannon feedback",
}


@dataclass(frozen=True)
class ModelId:
    """Channel family plus transmitter side-information model."""
    channel: ChannelKind      # "IC" (K-user interference) or "X" (M x K X channel)
    feedback: FeedbackKind    # "FD", "OF" or "SF"

    def __post_init__(self) -> None:
        if self.channel not in ("IC", "X"):
            raise ValueError(f"Unknown channel kind: {self.channel!r} (expected 'IC' or 'X')")
        if self.feedback not in FEEDBACK_LABELS:
            raise ValueError(
                f"Unknown feedback model: {self.feedback!r} (expected one of {sorted(FEEDBACK_LABELS)})"
            )

    @property
    def name(self) -> str:
        prefix = "ic" if self.channel == "IC" else "x"
        return prefix + self.feedback.lower()

    @property
    def uses_fullduplex(self) -> bool:
        return self.feedback == "FD"

    @property
    def has_output_feedback(self) -> bool:
        return self.feedback in ("OF", "SF")

    @property
    def has_delayed_csit(self) -> bool:
        return self.feedback in ("FD", "SF")

    @classmethod
    def from_name(cls, name: str) -> "ModelId":
        """
        Parse a model string such as ``"icfd"`` or ``"xsf"``.

        Raises:
            ValueError: If the string names no known model
        """
        key = name.strip().lower()
        if key not in MODEL_NAMES:
            raise ValueError(f"Unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
        channel: ChannelKind = "IC" if key.startswith("ic") else "X"
        feedback = key[len(channel):].upper()
        return cls(channel, feedback)  # type: ignore[arg-type]

    def resolve_transmitters(self, K: int, M: Optional[int] = None) -> int:
        """
        Return the transmitter count for K receivers, validating the pairing rules.

        Interference channels and X channels with output or Shannon feedback pair
        every receiver with one transmitter, so M must equal K there.

        Raises:
            ValueError: If M contradicts the model's pairing rule
        """
        if self.channel == "IC" or self.has_output_feedback:
            if M is not None and M != K:
                raise ValueError(
                    f"{self.name} requires M = K (got M={M}, K={K}); feedback pairs TX_j with RX_j"
                )
            return K
        if M is None:
            raise ValueError(f"{self.name} requires the transmitter count M")
        return M

    def __str__(self) -> str:
        return self.name


ICFD = ModelId("IC", "FD")
ICOF = ModelId("IC", "OF")
ICSF = ModelId("IC", "SF")
XFD = ModelId("X", "FD")
XOF = ModelId("X", "OF")
XSF = ModelId("X", "SF")


class CombinatoricsCache:
    """
    Exact binomials and harmonic partial sums, grown on demand.

    Prefix tables hold sum_{l<=n} 1/l and sum_{l<=n} 1/l^2 as exact rationals so
    every ranged sum is a single subtraction. Growth happens under a lock, so
    the cache is safe to share between threads.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._harmonic: List[Fraction] = [Fraction(0)]
        self._harmonic_sq: List[Fraction] = [Fraction(0)]
        self._binomials: Dict[Tuple[int, int], int] = {}
        self.stats = {"binomial_hits": 0, "binomial_misses": 0, "prefix_extensions": 0}

    def binomial(self, n: int, k: int) -> int:
        """C(n, k), zero outside 0 <= k <= n."""
        if n < 0 or k < 0 or k > n:
            return 0
        key = (n, k)
        with self._lock:
            cached = self._binomials.get(key)
            if cached is not None:
                self.stats["binomial_hits"] += 1
                return cached
            value = math.comb(n, k)
            self._binomials[key] = value
            self.stats["binomial_misses"] += 1
            return value

    def _extend(self, n: int) -> None:
        with self._lock:
            while len(self._harmonic) <= n:
                ell = len(self._harmonic)
                self._harmonic.append(self._harmonic[-1] + Fraction(1, ell))
                self._harmonic_sq.append(self._harmonic_sq[-1] + Fraction(1, ell * ell))
                self.stats["prefix_extensions"] += 1

    def harmonic(self, lo: int, hi: int, power: int = 1) -> Fraction:
        """
        Exact sum of 1/l**power for lo <= l <= hi.

        An empty range (lo > hi) sums to zero.

        Args:
            lo: First index (>= 1 for a non-empty range)
            hi: Last index
            power: 1 or 2

        Returns:
            The partial sum as a Fraction

        Raises:
            ValueError: If power is unsupported or a non-empty range starts below 1
        """
        if power not in (1, 2):
            raise ValueError(f"Unsupported harmonic power: {power} (expected 1 or 2)")
        if hi < lo:
            return Fraction(0)
        if lo < 1:
            raise ValueError(f"Harmonic range must start at 1 or above (got {lo})")
        self._extend(hi)
        table = self._harmonic if power == 1 else self._harmonic_sq
        return table[hi] - table[lo - 1]

    def get_stats(self) -> Dict[str, int]:
        with self._lock:
            stats = dict(self.stats)
            stats["prefix_length"] = len(self._harmonic) - 1
            stats["binomials_cached"] = len(self._binomials)
        return stats


_CACHE = CombinatoricsCache()


def binomial(n: int, k: int) -> int:
    return _CACHE.binomial(n, k)


def harmonic(lo: int, hi: int) -> Fraction:
    """sum_{l=lo}^{hi} 1/l, zero when lo > hi."""
    return _CACHE.harmonic(lo, hi, power=1)


def harmonic_sq(lo: int, hi: int) -> Fraction:
    """sum_{l=lo}^{hi} 1/l^2, zero when lo > hi."""
    return _CACHE.harmonic(lo, hi, power=2)


def combinatorics_stats() -> Dict[str, int]:
    return _CACHE.get_stats()


def _ceil_half(K: int) -> int:
    return (K + 1) // 2


def _floor_half(K: int) -> int:
    return K // 2


def _check_users(K: int, minimum: int, what: str) -> None:
    if K < minimum:
        raise ValueError(f"{what} needs K >= {minimum} (got K={K})")


def _check_order(m: int, lo: int, hi: int, what: str) -> None:
    if not lo <= m <= hi:
        raise ValueError(f"{what}: order m={m} outside [{lo}, {hi}]")


def is_supported_regime(model: ModelId, K: int, M: Optional[int] = None) -> bool:
    """
    Whether the DoF formulas of a model are stated for this size.

    The interference-channel formulas start at K = 3; with two users no scheme
    beats one DoF, and the DoF functions return 1 there.
    """
    if model.channel == "IC":
        return K >= 3
    if K < 2:
        return False
    if model.has_output_feedback:
        return M is None or M == K
    return M is None or M >= 2


# ---------------------------------------------------------------------------
# Shared IC quantities
# ---------------------------------------------------------------------------

def q_min(m: int, n: int) -> int:
    """
    Q_m(n) = min(n - m, m).

    Raises:
        ValueError: If m is outside 1 <= m < n
    """
    if not 1 <= m < n:
        raise ValueError(f"q_min: need 1 <= m < n (got m={m}, n={n})")
    return min(n - m, m)


def l_lcm(m: int, n: int) -> int:
    """
    L_m(n) = lcm(n - m, m).

    Raises:
        ValueError: If m is outside 1 <= m < n
    """
    if not 1 <= m < n:
        raise ValueError(f"l_lcm: need 1 <= m < n (got m={m}, n={n})")
    return math.lcm(n - m, m)


def _alpha(m: int, K: int) -> int:
    q = q_min(m, K)
    return binomial(K, m + 1) * binomial(K - m - 1, q - 1) * l_lcm(m, K)


def alpha(m: int, K: int) -> int:
    """
    alpha_m(K) = C(K, m+1) * C(K-m-1, Q_m(K)-1) * L_m(K).

    Phase m of the full-duplex and output-feedback IC schemes consumes
    (m+1)/m * alpha_m(K) symbols in alpha_m(K)/Q_m(K) slots.

    Raises:
        ValueError: If m is outside 2 <= m <= K-2
    """
    if not 2 <= m <= K - 2:
        raise ValueError(f"alpha: need 2 <= m <= K-2 (got m={m}, K={K})")
    return _alpha(m, K)


@lru_cache(maxsize=None)
def _ic_order_table(K: int, q_func: QFunc = q_min) -> Tuple[Fraction, ...]:
    # index m holds DoF_m for 2 <= m <= K-1; slots 0 and 1 are placeholders
    table = [Fraction(0)] * K
    table[K - 1] = Fraction(K, K - 1)
    for m in range(K - 2, 1, -1):
        q = q_func(m, K)
        table[m] = Fraction(m + 1, m) * q / (1 + Fraction(q - 1) / table[m + 1])
    return tuple(table)


def _ic_order_recursive(m: int, K: int, q_func: QFunc = q_min) -> Fraction:
    _check_users(K, 3, "IC order recursion")
    _check_order(m, 2, K - 1, "IC order recursion")
    return _ic_order_table(K, q_func)[m]


def dof_icfd_recursive(m: int, K: int, q_func: QFunc = q_min) -> Fraction:
    """
    DoF of phase m of the full-duplex IC scheme, by unrolling its recursion.

    Phase K-1 delivers K symbols in K-1 slots; phases 2 <= m <= K-2 follow
    DoF_m = (m+1)/m * Q / (1 + (Q-1)/DoF_{m+1}); phase 1 gives
    DoF_1 = 2 / (1 + 1/DoF_2).

    Args:
        m: Phase index, 1 <= m <= K-1
        K: Number of users
        q_func: Q_m(n) implementation (replaceable for negative controls)

    Returns:
        Exact DoF of the phase (1 for the two-user channel)

    Raises:
        ValueError: If K < 2 or m is out of range
    """
    if K == 2 and m == 1:
        return Fraction(1)
    _check_users(K, 3, "dof_icfd_recursive")
    _check_order(m, 1, K - 1, "dof_icfd_recursive")
    if m >= 2:
        return _ic_order_recursive(m, K, q_func)
    return 2 / (1 + 1 / _ic_order_recursive(2, K, q_func))


def dof_icfd_order(m: int, K: int) -> Fraction:
    """
    Closed form of the order-m DoF shared by the full-duplex and output-feedback
    IC schemes, for 2 <= m <= K-1.

    The branches split at ceil(K/2) and agree at the boundary.
    """
    _check_users(K, 3, "dof_icfd_order")
    _check_order(m, 2, K - 1, "dof_icfd_order")
    c, f = _ceil_half(K), _floor_half(K)
    if m <= c:
        inverse = (
            Fraction(1, 2)
            - Fraction(m * (m - 1), 2 * c * (c - 1))
            + Fraction(m * (m - 1), f * (c - 1)) * harmonic(c + 1, K)
        )
    else:
        inverse = Fraction(m, K - m) * harmonic(m + 1, K)
    return 1 / inverse


def dof_icfd_closed(K: int) -> Fraction:
    """
    Sum DoF of the full-duplex IC scheme:
    4 / (3 - 2/(c(c-1)) + 4/(f(c-1)) * sum_{l=c+1}^{K} 1/l) with c = ceil(K/2),
    f = floor(K/2).
    """
    if K == 2:
        return Fraction(1)
    _check_users(K, 3, "dof_icfd_closed")
    c, f = _ceil_half(K), _floor_half(K)
    denominator = 3 - Fraction(2, c * (c - 1)) + Fraction(4, f * (c - 1)) * harmonic(c + 1, K)
    return 4 / denominator


dof_icfd = dof_icfd_closed


# ---------------------------------------------------------------------------
# Output feedback IC
# ---------------------------------------------------------------------------

def dof_icof_order(m: int, K: int) -> Fraction:
    """
    Closed form for order-m symbols under output feedback (2 <= m <= K-1).

    Output feedback reproduces the full-duplex phase accounting for every
    order m >= 2, so the closed form coincides with ``dof_icfd_order``.
    """
    return dof_icfd_order(m, K)


def a_coefficient(K: int) -> Fraction:
    """a(K) = 1/(c-1) * (-1/(2c) + (1/f) * sum_{l=c+1}^{K} 1/l)."""
    _check_users(K, 3, "a_coefficient")
    c, f = _ceil_half(K), _floor_half(K)
    return Fraction(1, c - 1) * (Fraction(-1, 2 * c) + Fraction(1, f) * harmonic(c + 1, K))


def f_icof(w: int, K: int) -> Fraction:
    """
    Output-feedback sum DoF when w transmitters are active in phase 1:
    w / (a(K) * w * (w-1)^2 + (w+1)/2).

    Equals w / (1 + (w-1)/DoF_w) for every 2 <= w <= ceil(K/2).
    """
    _check_users(K, 3, "f_icof")
    _check_order(w, 2, _ceil_half(K), "f_icof")
    return w / (a_coefficient(K) * w * (w - 1) ** 2 + Fraction(w + 1, 2))


dof_icof_at = f_icof


def w_star(K: int) -> float:
    """
    Real maximizer of f_icof over w: the root of w^3 - w^2 = 1/(4 a(K)).

    Only used to pick two integer candidates; the comparison between them is
    exact.
    """
    a = float(a_coefficient(K))
    if a <= 0:
        return float("inf")
    root = math.sqrt(48 * a + 81)
    upper = np.cbrt((8 * a + 3 * root + 27) / a)
    lower = np.cbrt((8 * a - 3 * root + 27) / a)
    return float(1 / 3 + upper / 6 + lower / 6)


def _argmax_low(candidates: List[int], objective: Callable[[int], Fraction]) -> int:
    best_w = candidates[0]
    best_value = objective(best_w)
    for w in candidates[1:]:
        value = objective(w)
        if value > best_value:
            best_w, best_value = w, value
    return best_w


def mu_exhaustive(K: int) -> int:
    """Exhaustive argmax of f_icof over 2..ceil(K/2), ties to the smaller w."""
    _check_users(K, 3, "mu_exhaustive")
    return _argmax_low(list(range(2, _ceil_half(K) + 1)), lambda w: f_icof(w, K))


def mu_star(K: int) -> int:
    """
    Number of transmitters active in phase 1 of the output-feedback IC scheme.

    Picks between floor(w*) and ceil(w*), clamped to [2, ceil(K/2)], by exact
    comparison of f_icof; ties go to the smaller w.

    Raises:
        ValueError: If K < 3
    """
    _check_users(K, 3, "mu_star")
    c = _ceil_half(K)
    ws = w_star(K)
    if math.isinf(ws):
        return c
    candidates = sorted({min(max(math.floor(ws), 2), c), min(max(math.ceil(ws), 2), c)})
    mu = _argmax_low(candidates, lambda w: f_icof(w, K))
    logger.debug("mu_star(K=%d): w*=%.6f candidates=%s -> %d", K, ws, candidates, mu)
    return mu


def dof_icof_recursive(m: int, K: int, q_func: QFunc = q_min) -> Fraction:
    """
    Unrolled output-feedback recursion: orders m >= 2 share the full-duplex
    recursion, phase 1 is DoF_1 = mu / (1 + (mu-1)/DoF_mu).
    """
    if K == 2 and m == 1:
        return Fraction(1)
    _check_users(K, 3, "dof_icof_recursive")
    _check_order(m, 1, K - 1, "dof_icof_recursive")
    if m >= 2:
        return _ic_order_recursive(m, K, q_func)
    mu = mu_star(K)
    return mu / (1 + (mu - 1) / _ic_order_recursive(mu, K, q_func))


def dof_icof(K: int) -> Fraction:
    """Sum DoF of the output-feedback IC scheme, f_icof(mu_star(K), K)."""
    if K == 2:
        return Fraction(1)
    _check_users(K, 3, "dof_icof")
    return f_icof(mu_star(K), K)


# ---------------------------------------------------------------------------
# Shannon feedback IC
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _icsf_order_table(K: int, q_func: QFunc = q_min) -> Tuple[Fraction, ...]:
    table = [Fraction(0)] * (K + 1)
    table[K] = Fraction(1)
    for m in range(K - 1, 1, -1):
        q = q_func(m, K + 1)
        table[m] = (m + 1) * q / (m + 1 + m * Fraction(q - 1) / table[m + 1])
    return tuple(table)


def dof_icsf_recursive(m: int, K: int, q_func: QFunc = q_min) -> Fraction:
    """
    Unrolled Shannon-feedback recursion for order-m symbols, 2 <= m <= K:
    DoF_K = 1 and DoF_m = (m+1) Q / (m+1 + m (Q-1)/DoF_{m+1}) with Q = Q_m(K+1).
    """
    _check_users(K, 3, "dof_icsf_recursive")
    _check_order(m, 2, K, "dof_icsf_recursive")
    return _icsf_order_table(K, q_func)[m]


def dof_icsf_order(m: int, K: int) -> Fraction:
    """
    Closed form for order-m symbols under Shannon feedback (2 <= m <= K).

    Branches split at floor(K/2).
    """
    _check_users(K, 3, "dof_icsf_order")
    _check_order(m, 2, K, "dof_icsf_order")
    c, f = _ceil_half(K), _floor_half(K)
    if m <= f:
        bracket = (
            Fraction(1, m)
            - Fraction(1, f)
            - harmonic_sq(m + 1, f)
            + Fraction(1, f * c) * harmonic(f + 1, K)
        )
        inverse = Fraction(1, m) + m * (m - 1) * bracket
    else:
        inverse = Fraction(m, K - m + 1) * harmonic(m, K)
    return 1 / inverse


def dof_icsf_at(
    w: int,
    K: int,
    icof_order: Callable[[int, int], Fraction] = dof_icof_order,
    icsf_order: Callable[[int, int], Fraction] = dof_icsf_order,
) -> Fraction:
    """
    Shannon-feedback sum DoF when round 1 activates w transmitters:
    w / (1 + (w-2)/DoF_w^OF + w / ((w+1) DoF_{w+1}^SF)).
    """
    _check_users(K, 3, "dof_icsf_at")
    _check_order(w, 2, _ceil_half(K), "dof_icsf_at")
    forwarded = Fraction(w - 2) / icof_order(w, K) if w > 2 else Fraction(0)
    return w / (1 + forwarded + Fraction(w, w + 1) / icsf_order(w + 1, K))


def nu_star(K: int) -> int:
    """Round-1 width maximizing dof_icsf_at over 2..ceil(K/2), ties low."""
    _check_users(K, 3, "nu_star")
    return _argmax_low(list(range(2, _ceil_half(K) + 1)), lambda w: dof_icsf_at(w, K))


def dof_icsf(K: int) -> Fraction:
    """Sum DoF of the Shannon-feedback IC scheme, dof_icsf_at(nu_star(K), K)."""
    if K == 2:
        return Fraction(1)
    _check_users(K, 3, "dof_icsf")
    return dof_icsf_at(nu_star(K), K)


def beta(K: int) -> int:
    """beta(K) = C(K, nu) C(K-nu, nu-1) (nu-1): round-1 slots of the Shannon IC scheme."""
    nu = nu_star(K)
    return binomial(K, nu) * binomial(K - nu, nu - 1) * (nu - 1)


# ---------------------------------------------------------------------------
# Full-duplex X channel
# ---------------------------------------------------------------------------

def _check_x(M: int, K: int, what: str) -> None:
    if M < 2 or K < 2:
        raise ValueError(f"{what}: need M >= 2 and K >= 2 (got M={M}, K={K})")


def xfd_q(m: int, M: int, K: int) -> int:
    """Q_m(M, K) = min(M-1, K-m, m)."""
    return min(M - 1, K - m, m)


def xfd_theta(m: int, M: int, K: int) -> int:
    """Theta_m(M, K) = min(M, floor(K/2)+1, m): transmitters holding an order-m symbol."""
    return min(M, _floor_half(K) + 1, m)


def xfd_case(m: int, M: int, K: int) -> str:
    """
    Regime of XFD phase m (2 <= m <= K-1).

    "i"/"iii" use full-duplex pairing among m+1 transmitters; "ii"/"iv"
    are broadcast-style phases without full-duplex use.
    """
    _check_x(M, K, "xfd_case")
    _check_order(m, 2, K - 1, "xfd_case")
    if 2 * M > K:
        return "i" if 2 * m <= K else "ii"
    return "iii" if m < M else "iv"


def dof_xfd_case_step(m: int, M: int, K: int, next_dof: Fraction) -> Fraction:
    """Per-regime phase-m relation given DoF_{m+1}."""
    case = xfd_case(m, M, K)
    if case in ("i", "iii"):
        return Fraction((m + 1) ** 2) / (m + 1 + m * m / next_dof)
    if case == "ii":
        return Fraction((m + 1) * (K - m + 1)) / (m + 1 + m * (K - m) / next_dof)
    q = min(M - 1, K - m)
    return Fraction((m + 1) * (q + 1)) / (m + 1 + m * q / next_dof)


@lru_cache(maxsize=None)
def _xfd_table(M: int, K: int) -> Tuple[Fraction, ...]:
    table = [Fraction(0)] * (K + 1)
    table[K] = Fraction(1)
    for m in range(K - 1, 0, -1):
        q = xfd_q(m, M, K)
        table[m] = Fraction((m + 1) * (q + 1)) / (m + 1 + m * q / table[m + 1])
    return tuple(table)


def dof_xfd_recursive(m: int, M: int, K: int) -> Fraction:
    """
    Unrolled XFD recursion: DoF_K = 1 and
    DoF_m = (m+1)(Q+1) / (m+1 + m Q / DoF_{m+1}), Q = min(M-1, K-m, m).
    """
    _check_x(M, K, "dof_xfd_recursive")
    _check_order(m, 1, K, "dof_xfd_recursive")
    return _xfd_table(M, K)[m]


def _xfd_tail(m_start: int, exponent_base: int, M: int, K: int) -> Fraction:
    # sum_{l=m_start}^{K} (1/l) ((M-1)/M)^(min(l, K-M+1) - exponent_base)
    ratio = Fraction(M - 1, M)
    cap = K - M + 1
    total = Fraction(0)
    for ell in range(m_start, K + 1):
        total += Fraction(1, ell) * ratio ** (min(ell, cap) - exponent_base)
    return total


def dof_xfd_order(m: int, M: int, K: int) -> Fraction:
    """
    Closed form of the XFD order-m DoF for 1 <= m <= K.

    With c = ceil(K/2), the M > c regime has two pieces split at c; the
    M <= c regime has three pieces split at M-1 and K-M+1.

    Raises:
        ValueError: If M < 2, K < 2 or m is out of range
    """
    _check_x(M, K, "dof_xfd_order")
    _check_order(m, 1, K, "dof_xfd_order")
    c, f = _ceil_half(K), _floor_half(K)
    if M > c:
        if m >= c:
            inverse = Fraction(m, K - m + 1) * harmonic(m, K)
        else:
            inverse = (
                Fraction(m * m, c)
                - m
                + m * m * harmonic_sq(m, c - 1)
                + Fraction(m * m, c * (f + 1)) * harmonic(c, K)
            )
        return 1 / inverse
    if m >= K - M + 1:
        inverse = Fraction(m, K - m + 1) * harmonic(m, K)
    elif m >= M - 1:
        inverse = Fraction(m, M) * _xfd_tail(m, m, M, K)
    else:
        inverse = (
            Fraction(m * m, M - 1)
            - m
            + m * m * harmonic_sq(m, M - 2)
            + Fraction(m, M) ** 2 * _xfd_tail(M - 1, M, M, K)
        )
    return 1 / inverse


def dof_xfd(M: int, K: int) -> Fraction:
    """Sum DoF of the full-duplex M x K X channel scheme (closed form)."""
    _check_x(M, K, "dof_xfd")
    return dof_xfd_order(1, M, K)


# ---------------------------------------------------------------------------
# X channel with output / Shannon feedback
# ---------------------------------------------------------------------------

def dof_xof(K: int) -> Fraction:
    """2K / (K+1): K^2 symbols in K + C(K, 2) slots."""
    if K < 2:
        raise ValueError(f"dof_xof needs K >= 2 (got K={K})")
    return Fraction(2 * K, K + 1)


def dof_xsf(K: int) -> Fraction:
    """Closed-form sum DoF of the K x K X channel scheme with Shannon feedback."""
    if K < 2:
        raise ValueError(f"dof_xsf needs K >= 2 (got K={K})")
    c, f = _ceil_half(K), _floor_half(K)
    denominator = (
        Fraction(K * K + 7 * K - 6, 2)
        - Fraction(2 * (K - 1), f)
        - 2 * (K - 1) * harmonic_sq(1, f)
        + Fraction(2 * (K - 1), f * c) * harmonic(f + 1, K)
    )
    return K * K / denominator


def dof_xsf_composed(
    K: int, icsf_order: Callable[[int, int], Fraction] = dof_icsf_order
) -> Fraction:
    """
    Compose the two rounds: DoF_1 = K^2 / (K + (K-1)(K-2)/2 + (K-1)/DoF_2),
    DoF_2 = 6 / (3 + 2/DoF_3) with DoF_3 from the Shannon IC orders.
    """
    if K < 2:
        raise ValueError(f"dof_xsf_composed needs K >= 2 (got K={K})")
    if K == 2:
        second = Fraction(1)
    else:
        second = 6 / (3 + 2 / icsf_order(3, K))
    return K * K / (K + Fraction((K - 1) * (K - 2), 2) + (K - 1) / second)


def dof_of(model: ModelId, K: int, M: Optional[int] = None) -> Fraction:
    """
    Sum DoF of any model by name dispatch.

    Raises:
        ValueError: If (K, M) is outside the model's formula domain
    """
    M = model.resolve_transmitters(K, M)
    if model == ICFD:
        return dof_icfd(K)
    if model == ICOF:
        return dof_icof(K)
    if model == ICSF:
        return dof_icsf(K)
    if model == XFD:
        return dof_xfd(M, K)
    if model == XOF:
        return dof_xof(K)
    return dof_xsf(K)


# ---------------------------------------------------------------------------
# Limits
# ---------------------------------------------------------------------------

def asymptote(model: ModelId, M: Optional[Union[int, str]] = None) -> Union[Fraction, float]:
    """
    K -> infinity limit of a model's sum DoF.

    Args:
        model: Model identifier
        M: For XFD, a fixed transmitter count, or "wide"/None for M > K/2

    Returns:
        Fraction for the rational limits (4/3, 2), float otherwise

    Raises:
        ValueError: If M is not a valid transmitter count
    """
    if model == ICFD:
        return Fraction(4, 3)
    if model != XFD:
        return Fraction(2)
    if M is None or M == "wide":
        return 6 / (math.pi ** 2 - 6)
    if not isinstance(M, int) or M < 2:
        raise ValueError(f"asymptote: M must be an integer >= 2 or 'wide' (got {M!r})")
    ratio = (M - 1) / M
    partial = sum(ratio ** ell / ell for ell in range(1, M - 1))
    tail = (M / (M - 1)) ** (M - 2) / (M - 1) ** 2 * (math.log(M) - partial)
    head = 1 / (M - 1) - 1 + sum(1 / ell ** 2 for ell in range(1, M - 1))
    return 1 / (head + tail)


# ---------------------------------------------------------------------------
# Closed form versus recursion
# ---------------------------------------------------------------------------

@dataclass
class SweepMismatch:
    """One closed-form/recursion disagreement."""
    model: str
    K: int
    m: Optional[int]
    M: Optional[int]
    closed: Fraction
    recursive: Fraction

    def describe(self) -> str:
        where = f"K={self.K}"
        if self.M is not None:
            where += f", M={self.M}"
        if self.m is not None:
            where += f", m={self.m}"
        return f"{self.model} {where}: closed={self.closed} recursive={self.recursive}"


@dataclass
class SweepRow:
    model: str
    K: int
    checks: int
    mismatches: int


@dataclass
class SweepReport:
    """Result of ``consistency_sweep``."""
    K_max: int
    rows: List[SweepRow] = field(default_factory=list)
    mismatches: List[SweepMismatch] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    @property
    def first_mismatch(self) -> Optional[SweepMismatch]:
        if not self.mismatches:
            return None
        return min(self.mismatches, key=lambda item: item.K)


class _RowCollector:
    def __init__(self, report: SweepReport, model: str, K: int):
        self.report = report
        self.row = SweepRow(model=model, K=K, checks=0, mismatches=0)

    def check(self, closed: Fraction, recursive: Fraction,
              m: Optional[int] = None, M: Optional[int] = None) -> None:
        self.row.checks += 1
        if closed != recursive:
            self.row.mismatches += 1
            mismatch = SweepMismatch(self.row.model, self.row.K, m, M, closed, recursive)
            self.report.mismatches.append(mismatch)
            logger.warning("Recursion mismatch: %s", mismatch.describe())

    def close(self) -> None:
        self.report.rows.append(self.row)


def consistency_sweep(K_max: int, q_func: QFunc = q_min) -> SweepReport:
    """
    Compare every closed form with its unrolled recursion for 3 <= K <= K_max.

    One row is produced per (model, K). The X-channel rows cover every
    2 <= M <= K and every order m. ``q_func`` replaces Q_m(n) inside the IC
    recursions, which turns the sweep into a negative control.

    Raises:
        ValueError: If K_max < 3
    """
    if K_max < 3:
        raise ValueError(f"consistency_sweep needs K_max >= 3 (got {K_max})")
    report = SweepReport(K_max=K_max)

    for K in range(3, K_max + 1):
        row = _RowCollector(report, "icfd", K)
        row.check(dof_icfd_closed(K), dof_icfd_recursive(1, K, q_func))
        for m in range(2, K):
            row.check(dof_icfd_order(m, K), dof_icfd_recursive(m, K, q_func), m=m)
        row.close()

        row = _RowCollector(report, "icof", K)
        row.check(dof_icof(K), dof_icof_recursive(1, K, q_func))
        for m in range(2, K):
            row.check(dof_icof_order(m, K), dof_icof_recursive(m, K, q_func), m=m)
        row.close()

        row = _RowCollector(report, "icsf", K)
        for m in range(2, K + 1):
            row.check(dof_icsf_order(m, K), dof_icsf_recursive(m, K, q_func), m=m)
        by_recursion = max(
            dof_icsf_at(
                w, K,
                icof_order=lambda mm, kk: dof_icof_recursive(mm, kk, q_func),
                icsf_order=lambda mm, kk: dof_icsf_recursive(mm, kk, q_func),
            )
            for w in range(2, _ceil_half(K) + 1)
        )
        row.check(dof_icsf(K), by_recursion)
        row.close()

        row = _RowCollector(report, "xfd", K)
        for M in range(2, K + 1):
            row.check(dof_xfd(M, K), dof_xfd_recursive(1, M, K), M=M)
            for m in range(1, K + 1):
                recursive = dof_xfd_recursive(m, M, K)
                row.check(dof_xfd_order(m, M, K), recursive, m=m, M=M)
                if 2 <= m <= K - 1:
                    stepped = dof_xfd_case_step(m, M, K, dof_xfd_recursive(m + 1, M, K))
                    row.check(stepped, recursive, m=m, M=M)
        row.close()

        row = _RowCollector(report, "xof", K)
        row.check(dof_xof(K), Fraction(K * K, K + binomial(K, 2)))
        row.close()

        row = _RowCollector(report, "xsf", K)
        row.check(
            dof_xsf(K),
            dof_xsf_composed(K, icsf_order=lambda mm, kk: dof_icsf_recursive(mm, kk, q_func)),
        )
        row.close()

    logger.debug("consistency_sweep(K_max=%d): %d rows, %d mismatches",
                 K_max, len(report.rows), len(report.mismatches))
    return report
