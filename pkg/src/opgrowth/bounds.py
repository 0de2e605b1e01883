"""Closed-form light-cone bound calculators with auditable constants."""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .scales import K_max, check_R

__all__ = [
    "TailSum",
    "BoundReport",
    "power_tail",
    "lemma42_tail_sum",
    "lemma42_rate_constant",
    "rate_constant_sup",
    "frobenius_front_rate_bound",
    "frobenius_rate_closed_form",
    "frobenius_lightcone_time",
    "pnorm_constants",
    "pnorm_lightcone_time",
    "concentration_bound",
    "concentration_beta",
    "typical_state_tail",
    "regime",
    "bound_report",
]

PARTIAL_TERMS = 10**6
PREFACTOR = 36 * math.e  # 2 (HO and OH) * 9 (Pauli channels) * 2e (submultiplicativity)


@dataclass(frozen=True)
class TailSum:
    """Enclosure ``lower <= sum <= upper`` of a convergent tail sum."""

    partial: float
    lower: float
    upper: float

    @property
    def estimate(self) -> float:
        return 0.5 * (self.lower + self.upper)


@functools.lru_cache(maxsize=8)
def _powers(s: float, size: int) -> np.ndarray:
    """``m^-s`` for ``m = 1..size``."""
    out = np.arange(1, size + 1, dtype=float) ** -s
    out.setflags(write=False)
    return out


def _power_table(s: float, end: int) -> np.ndarray:
    # power-of-two sizes so every start index shares one table per exponent
    return _powers(s, 1 << max(20, (end - 1).bit_length()))


def power_tail(s: float, start: int, terms: int = PARTIAL_TERMS) -> TailSum:
    """Bracket ``sum_{m >= start} m^-s`` for ``s > 1``.

    Direct sum over ``terms`` values, remainder bracketed by the integral test.
    """
    if s <= 1:
        raise ValueError("tail diverges for s <= 1")
    if start < 1:
        raise ValueError("start must be >= 1")
    end = start + terms  # first index not summed
    partial = float(np.sum(_power_table(float(s), end)[start - 1 : end - 1][::-1]))
    lo = end ** (1 - s) / (s - 1)  # integral from `end`
    hi = (end - 1) ** (1 - s) / (s - 1)  # integral from `end - 1`
    return TailSum(partial, partial + lo, partial + hi)


def _j0(q: int) -> int:
    return 1 if q <= 1 else 1 << (q - 1)


def lemma42_tail_sum(alpha: float, q: int, terms: int = PARTIAL_TERMS) -> TailSum:
    """Bracket ``T(q) = sum_{i<=0} sum_{j>=j0} (j-i)^(-2 alpha)`` with ``j0 = max(1, 2^(q-1))``.

    Grouping by ``m = j - i`` gives ``sum_{m>=j0} (m - j0 + 1) m^(-2 alpha)``.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    j0 = _j0(q)
    s1 = power_tail(2 * alpha - 1, j0, terms)
    s2 = power_tail(2 * alpha, j0, terms)
    c = j0 - 1
    return TailSum(
        s1.partial - c * s2.partial, s1.lower - c * s2.upper, s1.upper - c * s2.lower
    )


@functools.lru_cache(maxsize=4096)
def lemma42_rate_constant(alpha: float, q: int) -> float:
    """Valid ``C(q)`` with ``||L_{q,k} O|| <= C(q) ||O|| (|ln ||O|| | + 1) 2^(-q(alpha-1))``.

    ``C(q) = 36 e 2^(q(alpha-1)) sqrt(T(q))`` using the upper end of the tail
    enclosure, so the returned value never underestimates the exact constant.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if q < 0:
        raise ValueError("q must be >= 0")
    T = lemma42_tail_sum(alpha, q)
    return PREFACTOR * 2 ** (q * (alpha - 1)) * math.sqrt(T.upper)


def rate_constant_sup(alpha: float, q_star: int) -> float:
    """A single constant valid at every scale ``0..q_star``."""
    return max(lemma42_rate_constant(alpha, q) for q in range(q_star + 1))


def frobenius_front_rate_bound(
    alpha: float,
    R: int,
    profile: Sequence[Sequence[float]] | None = None,
    worst_case: bool = True,
    C: float | None = None,
) -> float:
    """Upper bound on ``d/dt (A|F|A)`` on the chain ``[0, R]``.

    Evaluates ``2C sum_q sum_n p_{q,n} (1 - ln(p_{q,n})/2) 2^(-q(alpha-2))``.
    ``profile[q][n]`` are the block probabilities; with ``worst_case`` (and no
    profile) the maximizing uniform profile ``p_{q,n} = 2/(K_q+1)`` is used.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    qs = check_R(R)
    C = rate_constant_sup(alpha, qs) if C is None else C
    total = 0.0
    for q in range(qs + 1):
        nk = K_max(q, R) + 1
        if profile is None:
            if not worst_case:
                raise ValueError("need a profile when worst_case is False")
            p = np.full(nk, 2.0 / nk)
        else:
            p = np.asarray(profile[q], dtype=float)
            if p.shape != (nk,) or np.any(p < 0) or np.any(p > 1 + 1e-12):
                raise ValueError(f"profile at q={q} must hold {nk} probabilities")
        pos = p[p > 0]
        total += float(np.sum(pos * (1 - 0.5 * np.log(pos)))) * 2.0 ** (-q * (alpha - 2))
    return 2 * C * total


def frobenius_rate_closed_form(alpha: float, q_star: int, C: float) -> float:
    """Closed form of ``2C sum_{q=0}^{q*} (2 + (1+q*-q) ln2 / 2) x^q``, ``x = 2^(2-alpha)``."""
    ln2 = math.log(2)
    if math.isclose(alpha, 2.0, rel_tol=0, abs_tol=1e-12):
        return C * (q_star + 1) * (4 + (1 + q_star / 2) * ln2)
    x = 2.0 ** (2 - alpha)
    xq = x ** (q_star + 1)
    return C / (1 - x) ** 2 * (
        (4 + ln2) * (x - 1) * (xq - 1) + ln2 * (xq + q_star - (1 + q_star) * x)
    )


def frobenius_lightcone_time(alpha: float, R: int, delta: float, **rate_kw) -> float:
    """Earliest time at which ``||Q_R A(t)||_F >= delta`` is allowed: ``delta^2 R / rate``."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    return delta**2 * R / frobenius_front_rate_bound(alpha, R, **rate_kw)


def _R_of_r(alpha: float, r: float) -> float:
    if alpha > 2.5 and not math.isclose(alpha, 2.5):
        return float(r)
    if math.isclose(alpha, 2.5):
        return r / math.log(r) ** 1.5
    return r ** (alpha - 1.5)


def pnorm_constants(alpha: float, r: float) -> dict[str, Any]:
    """Long-sequence thresholds ``N_q``, normalizer ``M``, ``q1`` and ``R(r)``."""
    if alpha <= 1.5:
        raise ValueError("alpha must exceed 3/2")
    if r < 4:
        raise ValueError("r must be >= 4")
    qs = int(math.floor(math.log2(r))) - 1
    w = [2.0 ** (-q * (alpha - 2.5) * 2 / 3) for q in range(qs + 1)]
    M = sum(w)
    N = [math.ceil(0.5 * w[q] / M * r / 2 ** (q + 1)) for q in range(qs + 1)]
    q1 = next(
        (q for q in range(qs + 1) if M / r >= 0.25 * 2.0 ** (-q * (alpha - 1) * 2 / 3)), None
    )
    return {"q_star": qs, "N_q": N, "M": M, "q1": q1, "R_of_r": _R_of_r(alpha, r)}


def pnorm_lightcone_time(alpha: float, r: float, p: float, delta: float, c_prime: float = 1.0) -> float:
    """``delta sqrt(p) c' R(r)``; ``c'`` is structural (unspecified), default 1."""
    if p < 2:
        raise ValueError("p must be >= 2")
    if alpha <= 1.5:
        raise ValueError("alpha must exceed 3/2")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    return delta * math.sqrt(p) * c_prime * _R_of_r(alpha, r)


def concentration_beta(alpha: float, delta_exp: float = 0.0) -> float:
    return min(1.0, 6 - 2 * alpha) - delta_exp


def concentration_bound(
    alpha: float, r: float, epsilon: float, C: float = 1.0, delta_exp: float = 0.0
) -> float:
    """``exp(2 - eps^2 C r^beta)`` clamped to ``[0, 1]``; ``C`` is structural."""
    if not 2 < alpha < 3:
        raise ValueError("alpha must lie in (2, 3)")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    beta = concentration_beta(alpha, delta_exp)
    return min(1.0, max(0.0, math.exp(2 - epsilon**2 * C * r**beta)))


def typical_state_tail(pnorm_value: float, a: float, p: float) -> float:
    """``min(1, (value / a)^p)``: Markov bound on a typical-state amplitude."""
    if a <= 0:
        raise ValueError("threshold must be positive")
    if p < 1:
        raise ValueError("p must be >= 1")
    return min(1.0, (pnorm_value / a) ** p)


def regime(alpha: float) -> str:
    if alpha <= 1:
        return "alpha<=1"
    if math.isclose(alpha, 2.0):
        return "alpha=2"
    return "1<alpha<2" if alpha < 2 else "alpha>2"


@dataclass
class BoundReport:
    """Evaluated bounds and every constant used to produce them."""

    regime: str
    inputs: dict[str, Any]
    bound: float
    constants: dict[str, Any] = field(default_factory=dict)
    structural: dict[str, str] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def bound_report(
    alpha: float,
    R: int,
    delta: float = 0.5,
    d: int = 1,
    p: float = 2.0,
    epsilon: float | None = None,
    r: float | None = None,
    c_prime: float = 1.0,
    C_conc: float = 1.0,
    delta_exp: float = 0.0,
) -> BoundReport:
    """Frobenius light-cone time at ``R`` plus the p-norm and concentration
    quantities that apply at this ``alpha``."""
    qs = check_R(R)
    C = rate_constant_sup(alpha, qs)
    rate = frobenius_front_rate_bound(alpha, R, C=C)
    t_min = delta**2 * R / rate
    r_eff = float(R if r is None else r)
    rep = BoundReport(
        regime=regime(alpha),
        inputs={"alpha": alpha, "d": d, "R": R, "r": r_eff, "delta": delta, "p": p, "epsilon": epsilon},
        bound=t_min,
        constants={
            "q_star": qs,
            "C": C,
            "C_per_scale": [lemma42_rate_constant(alpha, q) for q in range(qs + 1)],
            "rate_bound": rate,
            "rate_closed_form": frobenius_rate_closed_form(alpha, qs, C),
            "tail_sum_q0": asdict(lemma42_tail_sum(alpha, 0)),
        },
    )
    if alpha > 1.5 and r_eff >= 4:
        pc = pnorm_constants(alpha, r_eff)
        rep.constants.update({f"pnorm_{k}": v for k, v in pc.items()})
        rep.extras["pnorm_time"] = pnorm_lightcone_time(alpha, r_eff, p, delta, c_prime)
        rep.structural["c_prime"] = f"{c_prime} (unspecified constant; default 1)"
        rep.structural["k_i"] = "validity window t <= k_i R(r) reported with k_i = 1"
    if 2 < alpha < 3 and epsilon is not None:
        rep.constants["beta"] = concentration_beta(alpha, delta_exp)
        rep.extras["concentration"] = concentration_bound(alpha, r_eff, epsilon, C_conc, delta_exp)
        rep.structural["C_conc"] = f"{C_conc} (unspecified constant; default 1)"
    return rep
