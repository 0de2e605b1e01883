"""Numerical falsification harnesses for the norm inequalities and identities.

Every check returns a :class:`CheckReport`.  ``max_slack`` is the largest
relative excess ``(LHS - RHS) / max(|RHS|, 1e-300)`` seen (negative when all
instances hold) and ``passed`` is ``max_slack <= tolerance``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import asdict, dataclass, field
from math import comb
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.stats import unitary_group

from . import bounds
from .dense import (
    PAULIS,
    depolarizer_group,
    depolarizer_superchannel,
    embed,
    pauli_coefficient_table,
    pauli_coefficients,
    propagator,
    schatten_norm,
    superdensity_depolarize,
    to_matrix,
)
from .pauli import PauliString, WeightedPauliSum, project_site
from .protocol import ProtocolParams, assemble, cubes, simulate_exact, simulate_pauli_branching
from .reduced import run_trials
from .scales import PowerLawHamiltonian, check_R, sample_powerlaw_hamiltonian
from .seeding import derive_rng

__all__ = [
    "CheckReport",
    "random_matrix",
    "random_contraction",
    "partial_trace",
    "check_uniform_smoothness",
    "check_nc_convexity",
    "check_holder",
    "check_riesz_thorin",
    "check_commutator_projection",
    "check_double_commutator_projector",
    "pair_norm_h2",
    "check_submultiplicativity",
    "check_depolarizer_group",
    "check_zz_rotation",
    "check_inclusion_exclusion",
    "front_tables",
    "front_and_rate",
    "check_markov_front",
    "exact_occupancy_distribution",
    "reduced_occupancy_distribution",
    "check_reduced_vs_exact",
    "check_branching_vs_exact",
    "run_all",
]

REL_TOL = 1e-9


@dataclass
class CheckReport:
    name: str
    trials: int
    max_slack: float
    worst_seed: int | None
    passed: bool
    tolerance: float
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: trials={self.trials} max_slack={self.max_slack:.3e}"


class _Tracker:
    """Running maximum of the relative slack and the instance that produced it."""

    def __init__(self):
        self.max_slack = -math.inf
        self.worst = None
        self.max_ratio = 0.0

    def add(self, lhs: float, rhs: float, seed) -> None:
        slack = (lhs - rhs) / max(abs(rhs), 1e-300)
        if slack > self.max_slack:
            self.max_slack, self.worst = slack, seed
        if rhs > 0:
            self.max_ratio = max(self.max_ratio, float(lhs / rhs))

    def report(self, name, trials, tol=REL_TOL, **details) -> CheckReport:
        details.setdefault("max_ratio", self.max_ratio)
        return CheckReport(name, trials, float(self.max_slack), self.worst,
                           bool(self.max_slack <= tol), tol, details)


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def random_matrix(dim: int, rng: np.random.Generator, kind: str | None = None) -> np.ndarray:
    """Random test matrix; ``kind`` in gaussian, hermitian, lowrank, skewed, unitary."""
    kind = kind or rng.choice(["gaussian", "hermitian", "lowrank", "skewed", "unitary"])
    G = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    if kind == "gaussian":
        return G
    if kind == "hermitian":
        return (G + G.conj().T) / 2
    if kind == "lowrank":
        k = int(rng.integers(1, max(2, dim // 2) + 1))
        return G[:, :k] @ G[:k, :]
    if kind == "skewed":
        U, _, Vh = np.linalg.svd(G)
        s = np.exp(rng.normal(scale=3.0, size=dim))
        return (U * s) @ Vh
    if kind == "unitary":
        return unitary_group.rvs(dim, random_state=rng)
    raise ValueError(f"unknown kind {kind!r}")


def random_contraction(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-rotated real spectrum in ``[-1, 1]``, often sparse or shrunk."""
    spec = rng.uniform(-1, 1, size=dim)
    zero_frac = rng.choice([0.0, 0.5, 0.9, 0.99])
    spec[rng.random(dim) < zero_frac] = 0.0
    if not spec.any():
        spec[rng.integers(dim)] = rng.uniform(-1, 1)
    spec *= rng.choice([1.0, rng.uniform(0, 1), 10 ** rng.uniform(-4, 0)])
    U = unitary_group.rvs(dim, random_state=rng)
    O = (U * spec) @ U.conj().T
    return O


def partial_trace(Y: np.ndarray, dim_j: int, dim_i: int) -> np.ndarray:
    """Trace out the second factor of a ``dim_j * dim_i`` operator."""
    return np.trace(Y.reshape(dim_j, dim_i, dim_j, dim_i), axis1=1, axis2=3)


def _structured_pair(dim_i, dim_j, rng):
    Xj = random_matrix(dim_j, rng)
    X = np.kron(Xj, np.eye(dim_i))
    Y = random_matrix(dim_i * dim_j, rng)
    Y = Y - np.kron(partial_trace(Y, dim_j, dim_i), np.eye(dim_i)) / dim_i
    Y *= 10 ** rng.uniform(-2, 2)
    return X, Y


def _dims(dims) -> list[tuple[int, int]]:
    if dims is None:
        return [(2, 2), (2, 4), (4, 2), (2, 8), (8, 2), (4, 4)]
    return [tuple(d) for d in dims]


def check_uniform_smoothness(dim_i=2, dim_j=2, q_list=(2, 3, 4, 6), trials=1000, rng=0,
                             dims=None) -> CheckReport:
    """``||X+Y||_q^2 <= ||X||_q^2 + (q-1)||Y||_q^2`` for ``X = X_j (x) I_i``, ``Tr_i Y = 0``."""
    if min(q_list) < 2:
        raise ValueError("q must be >= 2")
    rng = _rng(rng)
    pairs = _dims(dims) if dims is not None else [(dim_i, dim_j)]
    tr = _Tracker()
    for t in range(trials):
        di, dj = pairs[t % len(pairs)]
        X, Y = _structured_pair(di, dj, rng)
        for q in q_list:
            lhs = schatten_norm(X + Y, q) ** 2
            rhs = schatten_norm(X, q) ** 2 + (q - 1) * schatten_norm(Y, q) ** 2
            tr.add(lhs, rhs, (t, q))
    return tr.report("uniform_smoothness", trials * len(q_list))


def check_nc_convexity(dims=None, p_list=(2, 3, 4, 6), trials=1000, rng=0) -> CheckReport:
    """``||X||_p <= ||X + Y||_p`` for the same structured pairs."""
    if min(p_list) < 2:
        raise ValueError("p must be >= 2")
    rng = _rng(rng)
    pairs = _dims(dims)
    tr = _Tracker()
    for t in range(trials):
        di, dj = pairs[t % len(pairs)]
        X, Y = _structured_pair(di, dj, rng)
        for p in p_list:
            tr.add(schatten_norm(X, p), schatten_norm(X + Y, p), (t, p))
    return tr.report("nc_convexity", trials * len(p_list))


def _exponent_triple(rng):
    p = float(rng.choice([1.0, 2.0, rng.uniform(1, 8)]))
    if rng.random() < 0.15:
        return p, p, math.inf
    p1 = p * rng.uniform(1.0001, 6)
    p2 = 1 / (1 / p - 1 / p1)
    return p, p1, p2


def check_holder(trials=1000, rng=0, max_dim=16) -> CheckReport:
    """``||AB||_p <= ||A||_p1 ||B||_p2`` with ``1/p = 1/p1 + 1/p2``."""
    rng = _rng(rng)
    tr = _Tracker()
    for t in range(trials):
        dim = int(rng.integers(2, max_dim + 1))
        A, B = random_matrix(dim, rng), random_matrix(dim, rng)
        p, p1, p2 = _exponent_triple(rng)
        if rng.random() < 0.5:
            p1, p2 = p2, p1
        norm = bool(rng.random() < 0.5)
        tr.add(schatten_norm(A @ B, p, norm),
               schatten_norm(A, p1, norm) * schatten_norm(B, p2, norm), t)
    return tr.report("holder", trials)


def check_riesz_thorin(trials=1000, rng=0, max_dim=16) -> CheckReport:
    """``||A||_{p_theta} <= ||A||_p1^theta ||A||_p2^(1-theta)``."""
    rng = _rng(rng)
    tr = _Tracker()
    for t in range(trials):
        dim = int(rng.integers(2, max_dim + 1))
        A = random_matrix(dim, rng)
        p1 = float(rng.uniform(1, 10))
        p2 = math.inf if rng.random() < 0.2 else float(rng.uniform(1, 10))
        th = float(rng.uniform(0, 1))
        pth = 1 / (th / p1 + (1 - th) / p2)
        norm = bool(rng.random() < 0.5)
        tr.add(schatten_norm(A, pth, norm),
               schatten_norm(A, p1, norm) ** th * schatten_norm(A, p2, norm) ** (1 - th), t)
    return tr.report("riesz_thorin", trials)


def _random_pauli_sum(n: int, rng: np.random.Generator, terms: int) -> WeightedPauliSum:
    keys = {(int(rng.integers(1 << n)), int(rng.integers(1 << n))) for _ in range(terms)}
    return WeightedPauliSum(n, {k: complex(rng.normal(), rng.normal()) for k in keys})


def check_commutator_projection(n=4, trials=200, rng=0) -> CheckReport:
    """``||[B_y, A]||_F <= 2 ||B_y||_inf sqrt((A|P_y|A))`` for ``B_y`` on one site."""
    rng = _rng(rng)
    tr = _Tracker()
    for t in range(trials):
        A = _random_pauli_sum(n, rng, int(rng.integers(1, 12)))
        y = int(rng.integers(n))
        b = random_matrix(2, rng)
        B = embed(b, [y], n)
        Am = to_matrix(A)
        lhs = schatten_norm(B @ Am - Am @ B, 2, normalized=True)
        rhs = 2 * schatten_norm(b, math.inf) * project_site(A, y).norm()
        tr.add(lhs, rhs, t)
    return tr.report("commutator_projection", trials)


def check_double_commutator_projector(n=3, trials=50, rng=0) -> CheckReport:
    """Site projector equals ``(1/8) sum_a [s_a, [s_a, .]]`` on dense operators.

    ``max_slack`` is the largest entrywise error relative to ``max |A|``.
    """
    rng = _rng(rng)
    worst, seed = 0.0, None
    for t in range(trials):
        A = _random_pauli_sum(n, rng, int(rng.integers(1, 20)))
        x = int(rng.integers(n))
        M = to_matrix(A)
        ch = np.zeros_like(M)
        for s in PAULIS[1:]:
            S = embed(s, [x], n)
            inner = S @ M - M @ S
            ch += (S @ inner - inner @ S) / 8
        scale = max(1.0, float(np.max(np.abs(M))))
        err = float(np.max(np.abs(ch - to_matrix(project_site(A, x))), initial=0.0)) / scale
        if err > worst:
            worst, seed = err, t
    return CheckReport("double_commutator_projector", trials, worst, seed, worst <= 1e-12, 1e-12)


def pair_norm_h2(H: PowerLawHamiltonian) -> float:
    """``sqrt(sum_pairs ||H_ij||_inf^2)`` with exact per-pair operator norms."""
    total = 0.0
    for (i, j), cs in H.pair_terms().items():
        local = PowerLawHamiltonian(H.alpha, 2, tuple(
            type(c)(0 if c.i == i else 1, 1 if c.j == j else 0, c.a, c.b, c.J) for c in cs
        ), _validate=False)
        total += schatten_norm(to_matrix(local.to_pauli_sum()), math.inf) ** 2
    return math.sqrt(total)


def _klocal_hamiltonian(n, alpha, k, rng):
    """Random k-local Pauli Hamiltonian with per-set norm ~ diam^-alpha; returns (matrix, h2)."""
    terms: dict[tuple[int, int], complex] = {}
    h2 = 0.0
    for S in itertools.combinations(range(n), k):
        scale = (S[-1] - S[0]) ** (-alpha)
        local = np.zeros((1 << k, 1 << k), dtype=complex)
        for _ in range(int(rng.integers(1, 4))):
            letters = [int(rng.integers(1, 4)) for _ in S]
            J = scale * rng.uniform(-1, 1)
            op = np.array([[1.0 + 0j]])
            p = PauliString.identity(n)
            for s, a in zip(S, letters):
                op = np.kron(op, PAULIS[a])
                p = p * PauliString.single(n, s, "IXYZ"[a])
            local += J * op
            terms[p.key] = terms.get(p.key, 0) + J * p.coefficient
        h2 += schatten_norm(local, math.inf) ** 2
    return to_matrix(WeightedPauliSum(n, terms)), math.sqrt(h2)


def check_submultiplicativity(n=8, alpha=2.0, trials=200, rng=0, k=2, p=2.0) -> CheckReport:
    """``||HO||_pbar <= e p^(k/2) ||H||_(2) ||O||_pbar (|ln ||O||_pbar| + 1)^(k/2)``.

    For ``k = p = 2`` this is ``2e ||H||_(2) ||O||_F (|ln ||O||_F| + 1)``.
    """
    if n > 10:
        raise ValueError("n must be <= 10")
    rng = _rng(rng)
    tr = _Tracker()
    dim = 1 << n
    for t in range(trials):
        if k == 2:
            Hs = sample_powerlaw_hamiltonian(n, alpha, rng, mode=rng.choice(["sampled", "dense"]))
            H, h2 = to_matrix(Hs.to_pauli_sum()), pair_norm_h2(Hs)
        else:
            H, h2 = _klocal_hamiltonian(n, alpha, k, rng)
        O = random_contraction(dim, rng)  # ||O||_inf <= 1 by construction
        on = schatten_norm(O, p, normalized=True)
        lhs = schatten_norm(H @ O, p, normalized=True)
        rhs = math.e * p ** (k / 2) * h2 * on * (abs(math.log(on)) + 1) ** (k / 2) if on > 0 else 0.0
        tr.add(lhs, rhs, t)
    return tr.report(f"submultiplicativity_k{k}_p{p:g}", trials, n=n, alpha=alpha)


def check_depolarizer_group(tol: float = 1e-12) -> CheckReport:
    """Order, closure and inverses of the group, plus the averaged-channel identities."""
    G = np.array(depolarizer_group())
    flat = G.reshape(len(G), -1)

    def index_of(M):
        d = np.max(np.abs(flat - M.reshape(1, -1)), axis=1)
        i = int(np.argmin(d))
        return i if d[i] < tol else None

    distinct = len({index_of(g) for g in G}) == len(G) == 48
    closed = all(index_of(a @ b) is not None for a in G for b in G)
    inverses = all(index_of(g.conj().T) is not None for g in G)
    S = depolarizer_superchannel()
    basis = np.eye(4)
    mu = sum(np.outer(basis[a], basis[a]) for a in (1, 2, 3)) / 3
    dev = 0.0
    for a in range(4):
        for b in range(4):
            out = (S @ np.outer(basis[a], basis[b]).ravel()).reshape(4, 4)
            if a == b == 0:
                want = np.outer(basis[0], basis[0])
            elif a == b:
                want = mu
            else:
                want = np.zeros((4, 4))
            dev = max(dev, float(np.max(np.abs(out - want))))
    ok = distinct and closed and inverses and dev < tol
    return CheckReport("depolarizer_group", 48, dev, None, ok, tol,
                       {"order48": distinct, "closed": closed, "inverses": inverses})


def check_zz_rotation(theta_list: Iterable[float] = (0.0, math.pi / 8, math.pi / 4, 0.3, 1.1)) -> CheckReport:
    """``exp(i theta ZZ) (X I) exp(-i theta ZZ) = cos(2 theta) XI - sin(2 theta) YZ``."""
    ZZ = np.kron(PAULIS[3], PAULIS[3])
    A = np.kron(PAULIS[1], PAULIS[0])
    worst, seed = 0.0, None
    thetas = list(theta_list)
    weights = []
    for k, th in enumerate(thetas):
        U = propagator(ZZ, th)
        c = pauli_coefficients(U.conj().T @ A @ U)
        want = WeightedPauliSum.from_labels({"XI": math.cos(2 * th), "YZ": -math.sin(2 * th)})
        keys = set(c.terms) | set(want.terms)
        err = max(abs(c.terms.get(q, 0) - want.terms.get(q, 0)) for q in keys)
        weights.append((abs(c.coefficient("XI")) ** 2, abs(c.coefficient("YZ")) ** 2))
        if err > worst:
            worst, seed = err, k
    return CheckReport("zz_rotation", len(thetas), worst, seed, worst < 1e-12, 1e-12,
                       {"weights": weights})


def check_inclusion_exclusion(N: int, k_max: int) -> CheckReport:
    """Weighted subsequence count equals ``[M >= N]`` for every ``M <= k_max``."""
    if not 1 <= N <= k_max <= 12:
        raise ValueError("need 1 <= N <= k_max <= 12")
    bad = []
    for M in range(k_max + 1):
        total = 0
        for k in range(N, M + 1):
            a_k = sum((-1) ** (k - p) * comb(k, p) for p in range(N, k + 1))
            count = sum(1 for _ in itertools.combinations(range(M), k))
            total += a_k * count
        if total != (1 if M >= N else 0):
            bad.append((M, total))
    return CheckReport("inclusion_exclusion", k_max + 1, float(len(bad)), None, not bad, 0.0,
                       {"N": N, "failures": bad})


# ----------------------------------------------------------------------------
# light-cone machinery on the dense oracle


@functools.lru_cache(maxsize=16)
def front_tables(n: int, R: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-string clipped rightmost site and the ``x >= R`` indicator, basis-order masks."""
    dim = 1 << n
    m = np.arange(dim)[:, None] | np.arange(dim)[None, :]
    # basis bit b <-> site n-1-b, so the rightmost site is n-1-(lowest set bit)
    low = np.where(m == 0, n, np.log2((m & -m).clip(min=1)).astype(np.int64))
    rho = np.where(m == 0, -1, n - 1 - low)
    f = np.clip(rho, 0, R).astype(float)
    return f, (rho >= R)


def front_and_rate(A: np.ndarray, H: np.ndarray, R: int) -> tuple[float, float, float]:
    """``(A|F|A)``, its time derivative under ``dA/dt = i[H, A]`` and ``||Q_R A||_F^2``."""
    n = A.shape[0].bit_length() - 1
    f, edge = front_tables(n, R)
    c = pauli_coefficient_table(A)
    cdot = pauli_coefficient_table(1j * (H @ A - A @ H))
    w = np.abs(c) ** 2
    F = float(np.sum(f * w))
    dF = float(2 * np.sum(f * np.real(np.conj(c) * cdot)))
    return F, dF, float(np.sum(w[edge]))


def check_markov_front(
    n: int = 8,
    alpha: float = 2.0,
    t_grid: Sequence[float] | None = None,
    trials: int = 20,
    rng=0,
    R: int | None = None,
    mode: str = "dense",
) -> tuple[CheckReport, CheckReport]:
    """Markov step ``||Q_R A(t)||^2 <= (A|F|A)/R`` and the front-rate bound on the oracle.

    ``A(0)`` is a random single-site Pauli at the origin; the rate is the exact
    derivative ``2 Re (A|F|i[H, A])``.
    """
    if n > 10:
        raise ValueError("n must be <= 10")
    rng = _rng(rng)
    R = R if R is not None else (1 << (n.bit_length() - 1)) - 1
    check_R(R)
    if R >= n:
        raise ValueError("R must lie inside the chain")
    ts = np.linspace(0, 3, 20) if t_grid is None else np.asarray(t_grid, float)
    alphas = [alpha] if np.isscalar(alpha) else list(alpha)
    markov, rate = _Tracker(), _Tracker()
    bound = {a: bounds.frobenius_front_rate_bound(a, R) for a in alphas}
    for t in range(trials):
        a = alphas[t % len(alphas)]
        Hs = sample_powerlaw_hamiltonian(n, a, rng, mode=mode)
        H = to_matrix(Hs.to_pauli_sum())
        w, V = np.linalg.eigh(H)
        A0 = to_matrix(PauliString.single(n, 0, "XYZ"[int(rng.integers(3))]))
        At0 = V.conj().T @ A0 @ V
        for k, time in enumerate(ts):
            ph = np.exp(1j * w * time)
            A = V @ (ph[:, None] * At0 * ph.conj()[None, :]) @ V.conj().T
            F, dF, qR = front_and_rate(A, H, R)
            markov.add(qR, F / R, (t, k))
            rate.add(dF, bound[a], (t, k))
    return (
        markov.report("markov_step", trials * len(ts), n=n, R=R, alphas=alphas),
        rate.report("front_rate_bound", trials * len(ts), n=n, R=R, alphas=alphas,
                    bound={str(a): b for a, b in bound.items()}),
    )


# ----------------------------------------------------------------------------
# reduced process against the exact channel-averaged super-density


def _pauli_basis(n: int) -> np.ndarray:
    out = [np.array([[1.0 + 0j]])]
    for _ in range(n):
        out = [np.kron(a, s) for a in out for s in PAULIS]
    return np.array(out)


def _zz_transfer(n: int, i: int, j: int, theta: float, basis: np.ndarray) -> np.ndarray:
    """Real transfer matrix ``T[a, b] = (P_a | U^dag P_b U)`` for ``U = exp(-i theta Z_i Z_j)``."""
    dim = 1 << n
    zi = 1 - 2 * ((np.arange(dim) >> (n - 1 - i)) & 1)
    zj = 1 - 2 * ((np.arange(dim) >> (n - 1 - j)) & 1)
    v = np.exp(-1j * theta * zi * zj)
    imgs = v.conj()[None, :, None] * basis * v[None, None, :]
    return np.einsum("aij,bij->ab", basis.conj(), imgs).real / dim


def exact_occupancy_distribution(params: ProtocolParams, quad_nodes: int = 64) -> dict[int, float]:
    """Distribution of the occupied-site set after the full schedule, computed exactly.

    The super-density is a ``4^n x 4^n`` table over Pauli pairs.  Each coupling's
    channel average ``E_J[O_J (.) O_J^T]`` uses the exact decomposition
    ``O = A + cos(2 theta) B + sin(2 theta) C`` with moments by Gauss-Legendre
    quadrature over ``J``; depolarizers use the 48-element average.
    """
    n = params.n_sites
    if n > 5:
        raise ValueError("exact super-density limited to 5 sites")
    basis = _pauli_basis(n)
    dim = 4**n
    rho = np.zeros((dim, dim))
    start = 1 * 4 ** (n - 1)  # X on site 0
    rho[start, start] = 1.0
    xs, ws = np.polynomial.legendre.leggauss(quad_nodes)
    ws = ws / 2  # uniform density on [-1, 1]
    for layer in assemble(params):
        if layer.kind == "depolarize":
            for s in range(n):
                rho = superdensity_depolarize(rho, s, n)
            continue
        q = layer.q
        amp = layer.duration * params.prefactor(q)
        th = amp * xs
        fs = {"1": np.ones_like(th), "c": np.cos(2 * th), "s": np.sin(2 * th)}
        mom = {(a, b): float(np.sum(ws * fs[a] * fs[b])) for a in fs for b in fs}
        for cube in cubes(params, q):
            for i, j in itertools.combinations(cube, 2):
                T0 = _zz_transfer(n, i, j, 0.0, basis)
                Th = _zz_transfer(n, i, j, math.pi / 4, basis)
                Tp = _zz_transfer(n, i, j, math.pi / 2, basis)
                mats = {"1": (T0 + Tp) / 2, "c": (T0 - Tp) / 2}
                mats["s"] = Th - mats["1"]
                new = np.zeros_like(rho)
                for (a, b), mval in mom.items():
                    if abs(mval) > 1e-15:
                        new += mval * mats[a] @ rho @ mats[b].T
                rho = new
    diag = np.clip(np.diag(rho), 0, None)
    digits = np.array([[(a // 4 ** (n - 1 - s)) % 4 for s in range(n)] for a in range(dim)])
    masks = ((digits != 0) * (1 << np.arange(n))).sum(axis=1)
    out: dict[int, float] = {}
    for mk, pr in zip(masks, diag):
        out[int(mk)] = out.get(int(mk), 0.0) + float(pr)
    return out


def reduced_occupancy_distribution(params: ProtocolParams, trials: int, seed: int = 0) -> dict[int, float]:
    """Empirical occupied-set distribution from the label process (batched, d = 1)."""
    from .reduced import p1, p_ell

    rng = derive_rng(seed, "reduced-vs-exact")
    n = params.n_sites
    lab = np.zeros((trials, n), dtype=np.int8)
    lab[:, 0] = 1
    for layer in assemble(params):
        if layer.kind == "depolarize":
            occ = lab != 0
            nu = rng.random(lab.shape) < 2 / 3
            lab = np.where(occ, np.where(nu, 1, 2), 0).astype(np.int8)
            continue
        pr1 = p1(layer.duration, params.R(layer.q), params.alpha, params.d)
        for cube in cubes(params, layer.q):
            sub = lab[:, cube]
            ell = np.count_nonzero(sub == 1, axis=1)
            pl = p_ell(pr1, ell)
            flip = (rng.random(sub.shape) < np.asarray(pl)[:, None]) & (sub != 1)
            sub = np.where(flip, 2 - sub, sub)
            lab[:, cube] = sub
    masks = ((lab != 0) * (1 << np.arange(n))).sum(axis=1)
    vals, counts = np.unique(masks, return_counts=True)
    return {int(v): c / trials for v, c in zip(vals, counts)}


def check_reduced_vs_exact(params: ProtocolParams | None = None, trials: int = 100_000,
                           seed: int = 0, tol: float = 0.02) -> CheckReport:
    """Total-variation distance between the label process and the exact channel."""
    params = params or ProtocolParams(d=1, alpha=1.5, m=2, q_star=2)
    exact = exact_occupancy_distribution(params)
    mc = reduced_occupancy_distribution(params, trials, seed)
    keys = set(exact) | set(mc)
    tvd = 0.5 * sum(abs(exact.get(k, 0) - mc.get(k, 0)) for k in keys)
    return CheckReport("reduced_vs_exact", trials, tvd - tol, seed, tvd < tol, 0.0,
                       {"tvd": tvd, "exact": exact, "mc": mc})


def _random_params(rng: np.random.Generator, seed: int) -> ProtocolParams:
    m, q = [(2, 1), (3, 1), (4, 1), (5, 1), (6, 1), (2, 2)][int(rng.integers(6))]
    return ProtocolParams(d=1, alpha=float(rng.uniform(1.1, 3.0)), m=m, q_star=q, seed=seed)


def check_branching_vs_exact(trials: int = 100, seed: int = 0, truncation: float = 0.0,
                             tol: float = 1e-9) -> CheckReport:
    """Pauli branching against dense conjugation on random schedules with ``n <= 6``.

    ``max_slack`` is the largest coefficient error; with ``truncation > 0`` the
    check instead bounds the error by the discarded weight.
    """
    rng = derive_rng(seed, "branching-vs-exact")
    worst, worst_seed, rows = 0.0, None, []
    for t in range(trials):
        s = int(rng.integers(2**31))
        params = _random_params(rng, s)
        n = params.n_sites
        letters = "".join("IXYZ"[int(rng.integers(4))] for _ in range(n))
        if set(letters) == {"I"}:
            letters = "X" + letters[1:]
        init = WeightedPauliSum.from_pauli(PauliString.from_label(letters))
        sched = assemble(params)
        exact = simulate_exact(sched, init)
        branch, lost = simulate_pauli_branching(sched, init, truncation=truncation)
        diff = exact - branch
        err = max((abs(v) for v in diff.terms.values()), default=0.0)
        if truncation > 0:
            err = max(0.0, diff.norm() ** 2 - lost)
        rows.append({"seed": s, "m": params.m, "q_star": params.q_star, "alpha": params.alpha,
                     "initial": letters, "max_error": err, "discarded": lost})
        if err >= worst:
            worst, worst_seed = err, s
    return CheckReport("branching_vs_exact", trials, worst, worst_seed, worst < tol, tol,
                       {"instances": rows})


def run_all(seed: int = 0, scale: float = 1.0) -> list[CheckReport]:
    """The full suite at ``scale`` times the default trial counts."""
    def n(k):
        return max(1, int(k * scale))

    out = [
        check_depolarizer_group(),
        check_zz_rotation(),
        check_inclusion_exclusion(1, 12),
        check_uniform_smoothness(trials=n(1000), rng=derive_rng(seed, "us"), dims=_dims(None)),
        check_nc_convexity(trials=n(1000), rng=derive_rng(seed, "ncc")),
        check_holder(trials=n(1000), rng=derive_rng(seed, "holder")),
        check_riesz_thorin(trials=n(1000), rng=derive_rng(seed, "rt")),
        check_commutator_projection(trials=n(200), rng=derive_rng(seed, "comm")),
        check_double_commutator_projector(trials=n(50), rng=derive_rng(seed, "dc")),
        check_submultiplicativity(n=6, trials=n(100), rng=derive_rng(seed, "sm2")),
        check_submultiplicativity(n=6, k=3, p=4.0, trials=n(50), rng=derive_rng(seed, "sm3")),
    ]
    out.extend(check_markov_front(n=8, alpha=(1.5, 2.0, 3.0), trials=n(6),
                                  rng=derive_rng(seed, "front")))
    out.append(check_branching_vs_exact(trials=n(100), seed=seed))
    out.append(check_reduced_vs_exact(trials=max(n(100_000), 50_000), seed=seed))
    return out
