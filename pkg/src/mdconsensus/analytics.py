"""Closed-form attack thresholds and patient-attack values.

Rational inputs (``int``, ``Fraction``) give exact ``Fraction`` results
wherever the formula stays rational; floats propagate as floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, Union

Number = Union[int, float, Fraction]

BFT_BOUND = Fraction(1, 3)


def _num(x) -> Number:
    if isinstance(x, bool):
        raise TypeError("boolean is not a number")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, Decimal):
        return Fraction(x)
    return x


def _exact_sqrt(x: Number) -> Number:
    if isinstance(x, Fraction) and x >= 0:
        n, d = math.isqrt(x.numerator), math.isqrt(x.denominator)
        if n * n == x.numerator and d * d == x.denominator:
            return Fraction(n, d)
    return math.sqrt(x)


def _check_bft(R, F, theta):
    if R < 0 or theta < 0:
        raise ValueError("R and theta must be non-negative")
    if not F > 0:
        raise ValueError("F must be positive")


def attack_threshold_informed(R, F, theta) -> Number:
    """Coalition share above which a proposer who knows its role attacks."""
    R, F, theta = _num(R), _num(F), _num(theta)
    if R == 0 and F == 0 and theta == 0:
        raise ValueError("threshold undefined when R, F and theta are all zero")
    _check_bft(R, F, theta)
    return (R + F) / (R + theta + F)


def attack_threshold_blind(R, F, theta) -> Number:
    """Threshold when messages are committed before roles are known."""
    return _exact_sqrt(attack_threshold_informed(R, F, theta))


@dataclass(frozen=True)
class ThresholdReport:
    threshold_informed: Number
    threshold_blind: Number
    beats_bft_informed: bool
    beats_bft_blind: bool


def threshold_report(R, F, theta) -> ThresholdReport:
    thr = attack_threshold_informed(R, F, theta)
    exact = Fraction(thr)
    return ThresholdReport(
        threshold_informed=thr,
        threshold_blind=attack_threshold_blind(R, F, theta),
        beats_bft_informed=exact > BFT_BOUND,
        # sqrt(t) > 1/3  <=>  t > 1/9, decided without rounding
        beats_bft_blind=exact > BFT_BOUND * BFT_BOUND,
    )


# -- fork attack ---------------------------------------------------------------

@dataclass(frozen=True)
class ForkAttackReport:
    k: int
    R: Number
    theta: Number
    F: Number
    precondition_holds: bool
    s_low: Number | None
    s_high: Number | None
    profitable_interval: tuple[Number, Number] | None
    profit_fn: Callable[[float], float] = field(repr=False, compare=False)


def fork_profit_expanded(s, k, R, theta, F):
    """Attack return minus the no-attack earnings skR, term by term."""
    kR = k * R
    attack = (1 - s) * s * kR + s * (-F + s * (kR + theta) + (1 - s) * s * kR)
    return attack - s * kR


def fork_profit_factored(s, k, R, theta, F):
    kR = k * R
    return s * (-kR * s * s + (theta + kR) * s - F)


def fork_attack_analysis(k: int, R, theta, F) -> ForkAttackReport:
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ValueError("k must be a positive integer")
    R, theta, F = _num(R), _num(theta), _num(F)
    if not R > 0 or not F > 0 or theta < 0:
        raise ValueError("need R > 0, F > 0, theta >= 0")
    kR = k * R
    disc = (theta + kR) ** 2 - 4 * F * kR

    def profit(s, _k=k, _R=R, _t=theta, _F=F):
        return fork_profit_factored(s, _k, _R, _t, _F)

    if disc < 0:
        return ForkAttackReport(k, R, theta, F, False, None, None, None, profit)
    root = _exact_sqrt(disc)
    s_low = Fraction(1, 2) + (theta - root) / (2 * kR)
    s_high = Fraction(1, 2) + (theta + root) / (2 * kR)
    upper = min(s_high, 1)
    interval = (s_low, upper) if s_low < upper else None
    return ForkAttackReport(k, R, theta, F, True, s_low, s_high, interval, profit)


def lcr_beaten(k: int, R, theta, F) -> bool:
    """Whether the fork-attack threshold beats the usual s < 1/2 LCR bound."""
    return _num(theta) >= (4 * _num(F) - k * _num(R)) / 2


# -- penultimate round ---------------------------------------------------------

def penultimate_deterrence(x: int, theta, F) -> bool:
    """True iff (x+1)θ < F: x attackers facing one honest node do not attack."""
    if x < 1:
        raise ValueError("x must be at least 1")
    return (x + 1) * _num(theta) < _num(F)


def blanket_deterrence(theta, F) -> bool:
    """The blanket sufficient condition F > (3/2)θ."""
    return _num(F) > Fraction(3, 2) * _num(theta)


def penultimate_share(x: int) -> Fraction:
    """The share mapping s = (1 + 2x)/2; exceeds 1 for every x >= 1."""
    return Fraction(1 + 2 * x, 2)


# -- patient attacks -----------------------------------------------------------

def paper_recursion_value(a: int, h: int, N: int, R, theta, F, base: Mapping | None = None):
    """Literal transcription of the displayed two-term recursion.

    ``a`` and ``h`` are the remaining coalition and honest counts, so
    ``N - 2 == a + h``. Each inner state uses ``N - 2`` as its own ``N``.
    ``base`` overrides values of particular states; states with no coalition
    nodes are worth 0.
    """
    if N <= 2:
        raise ValueError("recursion divides by N - 2; N must exceed 2")
    if a + h != N - 2:
        raise ValueError("state must satisfy a + h == N - 2")
    R, theta, F = _num(R), _num(theta), _num(F)
    base = dict(base or {})
    memo: dict[tuple[int, int], Number] = {}

    def V(a_: int, h_: int):
        if (a_, h_) in base:
            return base[(a_, h_)]
        if a_ <= 0:
            return 0
        if (a_, h_) in memo:
            return memo[(a_, h_)]
        m = a_ + h_
        pa, ph = Fraction(a_, m), Fraction(h_, m)
        nxt = V(a_ - 1, h_ - 1) if h_ > 0 else 0
        proposer = max(pa * (R + theta) - ph * (F - nxt), R)
        confirmer = max(nxt - F, 0) if h_ > 0 else 0
        memo[(a_, h_)] = val = pa * (proposer + ph * confirmer)
        return val

    return V(a, h)


@dataclass(frozen=True)
class PatientValueTable:
    R: Number
    theta: Number
    F: Number
    values: Mapping[tuple[int, int], Number]
    policy: Mapping[tuple[int, int], Mapping[str, str]]

    def __getitem__(self, state: tuple[int, int]) -> Number:
        return self.values[state]


def _terminal_value(a: int, h: int, R, theta):
    if a + h < 2 or a == 0:
        return 0
    if h == 0:
        return R + theta
    return None


def _dp_state(a, h, R, theta, F, nxt):
    """Value and seat policy of (a, h) given V(a-1, h-1) = nxt."""
    m = a + h
    pairs = m * (m - 1)
    cont = -F + nxt
    prop_val = max(R, R - F, cont)
    conf_val = max(0, cont)
    value = (Fraction(a * h, pairs) * conf_val + Fraction(a * h, pairs) * prop_val
             + Fraction(a * (a - 1), pairs) * (R + theta))
    pol = {
        "proposer": "ContinueDispute" if cont > R else "ProposeTruth",
        "confirmer": "ContinueDispute" if cont > 0 else "ConfirmTruth",
    }
    if a >= 2:
        pol["pair"] = "AttackPair"
    return value, pol


def patient_attack_dp(a: int, h: int, R, theta, F) -> PatientValueTable:
    """Exact backward induction over every state (a', h') with a' <= a, h' <= h.

    Pairs are drawn uniformly without replacement and the coalition sees
    whether each seat is its own. Two honest seats commit the true block
    (value 0), two coalition seats commit the distorted block (R + θ).
    """
    if a < 0 or h < 0:
        raise ValueError("counts must be non-negative")
    R, theta, F = _num(R), _num(theta), _num(F)
    values: dict[tuple[int, int], Number] = {}
    policy: dict[tuple[int, int], dict[str, str]] = {}
    for ai in range(a + 1):
        for hi in range(h + 1):
            term = _terminal_value(ai, hi, R, theta)
            if term is not None:
                values[(ai, hi)] = term
                policy[(ai, hi)] = {"pair": "AttackPair"} if ai >= 2 else {}
                continue
            values[(ai, hi)], policy[(ai, hi)] = _dp_state(ai, hi, R, theta, F, values[(ai - 1, hi - 1)])
    return PatientValueTable(R, theta, F, values, policy)


def patient_value_at(a: int, h: int, R, theta, F):
    """V(a, h) without materialising the full table (only the diagonal is needed)."""
    return _patient_cell(a, h, R, theta, F)[0]


def patient_policy_at(a: int, h: int, R, theta, F, seat: str) -> str:
    return _patient_cell(a, h, R, theta, F)[1].get(seat, "ProposeTruth" if seat == "proposer" else "ConfirmTruth")


@lru_cache(maxsize=None)
def _patient_cell(a: int, h: int, R, theta, F):
    term = _terminal_value(a, h, R, theta)
    if term is not None:
        return term, {}
    # walk down the diagonal to its base, then back up
    j = min(a, h)
    base_a, base_h = a - j, h - j
    prev = _terminal_value(base_a, base_h, R, theta)
    cell = (prev, {})
    for step in range(1, j + 1):
        ai, hi = base_a + step, base_h + step
        t = _terminal_value(ai, hi, R, theta)
        if t is not None:
            cell = (t, {})
        else:
            cell = _dp_state(ai, hi, R, theta, F, cell[0])
        prev = cell[0]
    return cell


@dataclass(frozen=True)
class PatientComparison:
    a: int
    h: int
    literal_value: Number
    dp_value: Number

    @property
    def discrepancy(self):
        return self.literal_value - self.dp_value

    def report(self) -> str:
        return (
            f"state (a={self.a}, h={self.h}): literal recursion = {float(self.literal_value):.6g}, "
            f"pair-draw DP = {float(self.dp_value):.6g}, discrepancy = {float(self.discrepancy):.6g}"
        )


def compare_patient(a: int, h: int, R, theta, F) -> PatientComparison:
    literal = paper_recursion_value(a, h, a + h + 2, R, theta, F)
    dp = patient_attack_dp(a, h, R, theta, F)[(a, h)]
    return PatientComparison(a, h, literal, dp)
