"""Classical label process equivalent to the channel-averaged protocol.

Each site carries a label: ``IDENTITY`` (unoccupied), ``NU`` (an X or Y letter)
or ``ZONLY``.  A growth layer at scale ``q`` flips ``IDENTITY <-> ZONLY`` on every
non-``NU`` site of a ``q``-cube with probability ``p_l`` set by the number ``l``
of ``NU`` sites in that cube; a depolarizing layer resamples every occupied site
to ``NU`` with probability 2/3 and ``ZONLY`` otherwise.
"""

from __future__ import annotations

import enum
import functools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .protocol import ProtocolParams, ProtocolSchedule, assemble, cubes
from .seeding import derive_rng

__all__ = [
    "SiteLabel",
    "ReducedState",
    "Trajectory",
    "RecursionRow",
    "RecursionTable",
    "SuccessEstimate",
    "sinc",
    "sinc_bounds",
    "p1",
    "p_ell",
    "p_star",
    "apply_zz_reduced",
    "apply_depolarizer_reduced",
    "initial_state",
    "run_trial",
    "run_trials",
    "estimate_success",
    "lambda_eta",
    "analytic_recursion",
]


class SiteLabel(enum.IntEnum):
    IDENTITY = 0
    NU = 1
    ZONLY = 2


@dataclass
class ReducedState:
    """Labels of every site of the top cube (flat, row-major) and the layer counter.

    A dense ``int8`` array is used: at the sizes reachable here (``R^d`` up to a
    few million) it is smaller and faster than a site set.
    """

    labels: np.ndarray
    params: ProtocolParams
    stage: int = 0

    def __post_init__(self):
        if self.labels.shape != (self.params.n_sites,):
            raise ValueError("label array does not cover the top cube")

    @property
    def occupied(self) -> np.ndarray:
        return np.flatnonzero(self.labels)

    @property
    def occupancy(self) -> int:
        return int(np.count_nonzero(self.labels))

    def diameter(self) -> int:
        """L1 diameter of the occupied sites together with the origin."""
        occ = self.occupied
        if occ.size == 0:
            return 0
        if self.params.d == 1:
            return int(occ.max())
        x, y = np.divmod(occ, self.params.side)
        u = np.append(x + y, 0)
        v = np.append(x - y, 0)
        return int(max(u.max() - u.min(), v.max() - v.min()))


def sinc(x: float) -> float:
    return 1.0 if x == 0 else math.sin(x) / x


def sinc_bounds(x: float) -> tuple[float, float, float]:
    """``(F(x), 1 - x^2/6, 1 - x^2/6 + x^4/120)`` with ``F(x) = sin(x)/x``."""
    if x < 0:
        raise ValueError("x must be >= 0")
    F = sinc(x)
    lo, hi = 1 - x * x / 6, 1 - x * x / 6 + x**4 / 120
    if x * x <= 20 and not lo - 1e-15 <= F <= hi + 1e-15:
        raise AssertionError(f"Taylor sandwich failed at x={x}")
    return F, lo, hi


def p1(tau: float, R_q: float, alpha: float, d: int = 1) -> float:
    """Flip probability ``E[sin^2(2 theta)] = (1 - F(4 tau / (d R_q)^alpha)) / 2``.

    ``theta = J tau (d R_q)^-alpha`` with ``J ~ U[-1, 1]``.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return 0.5 * (1 - sinc(4 * tau / (d * R_q) ** alpha))


def p_ell(p1_value, ell):
    """``l``-fold composition of a symmetric flip with probability ``p1``."""
    p = np.asarray(p1_value, dtype=float)
    # p1 = (1 - sinc)/2 reaches ~0.609 at large tau; the composition law holds on [0, 1]
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p1 must lie in [0, 1]")
    ell = np.asarray(ell)
    if np.any(ell < 0):
        raise ValueError("ell must be >= 0")
    out = 0.5 * (1 - (1 - 2 * p) ** ell)
    return float(out) if out.ndim == 0 else out


def p_star(p_ell_value: float, cube_size: int) -> float:
    """Probability that a cube of ``cube_size`` sites receives at least one seed."""
    if cube_size < 1:
        raise ValueError("cube_size must be >= 1")
    return 1 - (1 - p_ell_value) ** cube_size


def initial_state(params: ProtocolParams) -> ReducedState:
    labels = np.zeros(params.n_sites, dtype=np.int8)
    labels[0] = SiteLabel.NU
    return ReducedState(labels, params)


@functools.lru_cache(maxsize=64)
def _cube_index(params: ProtocolParams, q: int) -> np.ndarray:
    c = cubes(params, q)
    c.setflags(write=False)
    return c


def apply_zz_reduced(
    state: ReducedState, q: int, tau: float, rng: np.random.Generator
) -> ReducedState:
    """Growth layer at scale ``q``; cubes without ``NU`` sites are untouched."""
    params = state.params
    lab = state.labels.copy()
    c = _cube_index(params, q)
    if params.d == 1:
        block = lab.reshape(c.shape)
    else:
        block = lab[c]
    ell = np.count_nonzero(block == SiteLabel.NU, axis=1)
    live = np.flatnonzero(ell)
    if live.size:
        pr = p_ell(p1(tau, params.R(q), params.alpha, params.d), ell[live])
        sub = block[live]
        flip = (rng.random(sub.shape) < pr[:, None]) & (sub != SiteLabel.NU)
        sub[flip] = SiteLabel.ZONLY - sub[flip]  # 0 <-> 2
        block[live] = sub
        if params.d == 1:
            lab = block.reshape(-1)
        else:
            lab[c] = block
    return ReducedState(lab, params, state.stage + 1)


def apply_depolarizer_reduced(state: ReducedState, rng: np.random.Generator) -> ReducedState:
    """Every occupied site becomes ``NU`` w.p. 2/3, else ``ZONLY``."""
    lab = state.labels.copy()
    occ = np.flatnonzero(lab)
    nu = rng.random(occ.size) < 2.0 / 3.0
    lab[occ] = np.where(nu, SiteLabel.NU, SiteLabel.ZONLY)
    return ReducedState(lab, state.params, state.stage + 1)


@dataclass
class Trajectory:
    """Occupancy and diameter before the first and after every layer."""

    occupancy: np.ndarray
    diameter: np.ndarray
    final: np.ndarray
    level_ends: list[int] = field(default_factory=list)

    def level_occupancy(self) -> np.ndarray:
        """Occupancy after each completed ``schedule(q)`` prefix, ``q = 1..q*``."""
        return self.occupancy[np.array(self.level_ends)]


def _adaptive_s(state: ReducedState, q: int) -> float:
    if q == 1:
        return 1.0
    c = _cube_index(state.params, q - 1)
    per = np.count_nonzero(state.labels[c], axis=1)
    return float(max(1, per.max()))


def run_trial(
    params: ProtocolParams,
    rng: np.random.Generator,
    schedule: ProtocolSchedule | None = None,
    adaptive_tau: bool = False,
) -> Trajectory:
    """One Monte-Carlo trajectory of the label process from a single ``NU`` at the origin.

    With ``adaptive_tau`` the growth time uses the largest realized occupancy of
    a ``(q-1)``-cube instead of the pessimistic default.
    """
    sched = schedule or assemble(params)
    st = initial_state(params)
    occ = [st.occupancy]
    diam = [st.diameter()]
    for layer in sched:
        if layer.kind == "zz":
            tau = params.tau(layer.q, _adaptive_s(st, layer.q)) if adaptive_tau else layer.duration
            st = apply_zz_reduced(st, layer.q, tau, rng)
        else:
            st = apply_depolarizer_reduced(st, rng)
        occ.append(st.occupancy)
        diam.append(st.diameter())
    return Trajectory(np.array(occ), np.array(diam), st.labels, sched.level_ends())


def _trial_worker(args):
    params, seed, idx, adaptive = args
    out = []
    sched = assemble(params)
    for t in idx:
        tr = run_trial(params, derive_rng(seed, f"trial/{t}"), sched, adaptive)
        out.append((t, tr.occupancy, tr.diameter))
    return out


def default_threads() -> int:
    return max(1, int(os.environ.get("OPGROWTH_THREADS", "1")))


def run_trials(
    params: ProtocolParams,
    trials: int,
    seed: int = 0,
    threads: int | None = None,
    adaptive_tau: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Occupancy and diameter trajectories, shape ``(trials, layers + 1)``.

    Trial ``t`` always uses the stream ``(seed, "trial/t")`` so results do not
    depend on the worker count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    threads = default_threads() if threads is None else threads
    chunks = [list(range(k, trials, threads)) for k in range(threads)]
    jobs = [(params, seed, ch, adaptive_tau) for ch in chunks if ch]
    if threads == 1:
        results = [_trial_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(threads) as ex:
            results = list(ex.map(_trial_worker, jobs))
    n_layers = 2 ** (params.q_star + 1) - 1
    occ = np.zeros((trials, n_layers), dtype=np.int64)
    dia = np.zeros((trials, n_layers), dtype=np.int64)
    for res in results:
        for t, o, d in res:
            occ[t], dia[t] = o, d
    return occ, dia


@dataclass(frozen=True)
class SuccessEstimate:
    probability: float
    low: float
    high: float
    successes: int
    trials: int
    threshold: float
    min_diameter: float


def estimate_success(
    params: ProtocolParams,
    trials: int,
    lam: float,
    L: float | None = None,
    seed: int = 0,
    threads: int | None = None,
    data: tuple[np.ndarray, np.ndarray] | None = None,
) -> SuccessEstimate:
    """Fraction of trials ending with ``occupancy >= lam R^d`` and ``diameter >= L``.

    ``L`` defaults to ``R_{q*-1}`` (one sub-cube side).  The 95% interval is Wilson's.
    """
    L = params.R(params.q_star - 1) if L is None else L
    occ, dia = data if data is not None else run_trials(params, trials, seed, threads)
    ok = (occ[:, -1] >= lam * params.n_sites) & (dia[:, -1] >= L)
    k = int(ok.sum())
    ci = binomtest(k, len(ok)).proportion_ci(0.95, method="wilson")
    return SuccessEstimate(k / len(ok), float(ci.low), float(ci.high), k, len(ok), lam, L)


# ----------------------------------------------------------------------------
# analytic recursion


def _clamp(v: float) -> float:
    return min(1.0, max(0.0, v))


def lambda_eta(m: int, d: int, q_star: int) -> tuple[list[float], list[tuple[float, float, float]]]:
    """``lambda_{1,q}`` and ``(eta1, eta2, eta3)`` at ``q = 1..q*`` (clamped to [0, 1])."""
    md = float(m) ** d
    w = md / 30
    lam = [1 / 30]
    eta1 = [_clamp(1 - math.exp(-md / 120))]
    eta23 = []
    for q in range(1, q_star + 1):
        s = lam[q - 1] * float(m**q) ** d
        e2 = _clamp(1 - math.exp(-md / 120) - math.exp(-s / 72))
        e3 = _clamp(1 - math.exp(-w * eta1[q - 1] / 8))
        eta23.append((e2, e3))
        if q < q_star:
            lam.append(eta1[q - 1] * lam[q - 1] / 60)
            eta1.append(_clamp(eta1[q - 1] * e2 * e3))
    return lam, [(a, b, c) for a, (b, c) in zip(eta1, eta23)]


@dataclass(frozen=True)
class RecursionRow:
    q: int
    lambda1: float
    eta1: float
    eta2: float
    eta3: float
    s: float
    tau: float
    p_star: float


@dataclass(frozen=True)
class RecursionTable:
    rows: tuple[RecursionRow, ...]
    floor: float
    vacuous: bool

    def row(self, q: int) -> RecursionRow:
        return self.rows[q - 1]


def analytic_recursion(params: ProtocolParams) -> RecursionTable:
    """Certified occupancy fractions and stage success probabilities per scale.

    ``p_star`` is evaluated at the default time with ``l = ceil(s/2)`` seeds in a
    cube of ``R_{q-1}^d`` sites.
    """
    lam, eta = lambda_eta(params.m, params.d, params.q_star)
    rows = []
    for q in range(1, params.q_star + 1):
        s, tau = params.s(q), params.tau(q)
        pl = p_ell(p1(tau, params.R(q), params.alpha, params.d), math.ceil(s / 2))
        ps = p_star(pl, params.R(q - 1) ** params.d)
        e1, e2, e3 = eta[q - 1]
        rows.append(RecursionRow(q, lam[q - 1], e1, e2, e3, s, tau, ps))
    md = params.m**params.d
    floor = 1 - 3 * params.q_star * math.exp(-md / 2160)
    vac = md <= 120 or rows[-1].eta1 <= 0
    return RecursionTable(tuple(rows), floor, vac)
