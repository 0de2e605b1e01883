"""Random operator-growth protocol: parameters, layer schedule and quantum simulation.

The protocol on scale ``q`` is ``schedule(q) = schedule(q-1) + [ZZ(q)] + [D] +
schedule(q-1)`` with an empty ``schedule(0)``; layers are listed in the order in
which they act on the Heisenberg-picture operator.
"""

from __future__ import annotations

import functools
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .dense import MAX_QUBITS, ResourceError, depolarizer_group, pauli_coefficients, to_matrix
from .pauli import Lattice, PauliString, WeightedPauliSum
from .seeding import derive_rng

__all__ = [
    "VacuousRegimeWarning",
    "ProtocolParams",
    "Layer",
    "DepolarizerSample",
    "ZZSample",
    "ProtocolSchedule",
    "derive_params",
    "cubes",
    "sample_depolarizer",
    "sample_zz_layer",
    "assemble",
    "runtime",
    "runtime_scaling",
    "fit_slope",
    "clifford_tables",
    "simulate_exact",
    "simulate_pauli_branching",
]

log = logging.getLogger(__name__)

T_DEPOLARIZE = math.pi / 2
EXACT_CAP = 8


class VacuousRegimeWarning(UserWarning):
    """``m^d <= 120``: the analytic success bounds carry no information."""


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol parameters; ``R_q = m^q`` and the system is one ``q*``-cube."""

    d: int
    alpha: float
    m: int
    q_star: int
    r: float | None = None
    seed: int = 0
    t_D: float = T_DEPOLARIZE
    s_override: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.q_star < 1:
            raise ValueError("q_star must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.t_D <= T_DEPOLARIZE:
            raise ValueError("depolarizer duration must lie in (0, pi/2]")
        if self.s_override is not None and len(self.s_override) != self.q_star:
            raise ValueError("s_override needs one entry per scale 1..q*")
        for q in range(1, self.q_star + 1):
            tau, cap = self.tau(q), self.tau_cap(q)
            if not tau < cap:
                raise ValueError(f"tau_{q} = {tau:.4g} violates the cap {cap:.4g}")

    def R(self, q: int) -> int:
        return self.m**q

    @property
    def side(self) -> int:
        return self.R(self.q_star)

    @property
    def n_sites(self) -> int:
        return self.side**self.d

    @property
    def lattice(self) -> Lattice:
        return Lattice((self.side,) * self.d)

    @property
    def vacuous(self) -> bool:
        return self.m**self.d <= 120

    def s(self, q: int) -> float:
        """Assumed number of occupied sites per ``(q-1)``-cube entering scale ``q``."""
        if not 1 <= q <= self.q_star:
            raise ValueError(f"scale {q} outside 1..{self.q_star}")
        if self.s_override is not None:
            return float(self.s_override[q - 1])
        return _default_s(self.m, self.d, self.q_star)[q - 1]

    def tau(self, q: int, s: float | None = None) -> float:
        s = self.s(q) if s is None else s
        if s < 1:
            raise ValueError("s must be >= 1")
        return self.R(q) ** self.alpha / math.sqrt(2 * s * self.R(q - 1) ** self.d)

    def tau_cap(self, q: int) -> float:
        return 120.0**q * self.m**self.d * float(self.R(q)) ** (self.alpha - self.d)

    def prefactor(self, q: int) -> float:
        return (self.d * self.R(q)) ** (-self.alpha)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["s_override"] = list(self.s_override) if self.s_override is not None else None
        return out


@functools.lru_cache(maxsize=256)
def _default_s(m: int, d: int, q_star: int) -> tuple[float, ...]:
    from .reduced import lambda_eta

    lam, _ = lambda_eta(m, d, q_star)
    out = [1.0]
    for q in range(2, q_star + 1):
        out.append(max(1.0, lam[q - 2] * float(m ** (q - 1)) ** d))
    return tuple(out)


def derive_params(
    r: float,
    alpha: float,
    d: int = 1,
    m: int | None = None,
    q_star: int | None = None,
    seed: int = 0,
    **kw,
) -> ProtocolParams:
    """Default ``m = ceil(exp(sqrt(ln r)))`` and ``q* = ceil(sqrt(ln r))``."""
    if not r >= math.e:
        raise ValueError(f"target distance must be >= e, got {r}")
    root = math.sqrt(math.log(r))
    m = math.ceil(math.exp(root)) if m is None else int(m)
    q_star = math.ceil(root) if q_star is None else int(q_star)
    params = ProtocolParams(d=d, alpha=alpha, m=m, q_star=q_star, r=r, seed=seed, **kw)
    if params.vacuous:
        warnings.warn(
            f"m^d = {m**d} <= 120: analytic success bounds are vacuous",
            VacuousRegimeWarning,
            stacklevel=2,
        )
    return params


def cubes(params: ProtocolParams, q: int) -> np.ndarray:
    """Site indices of every ``q``-cube, shape ``(n_cubes, R_q^d)``."""
    L, w = params.side, params.R(q)
    idx = np.arange(params.n_sites)
    if params.d == 1:
        return idx.reshape(-1, w)
    return idx.reshape(L // w, w, L // w, w).transpose(0, 2, 1, 3).reshape(-1, w * w)


@dataclass(frozen=True)
class DepolarizerSample:
    """Group-element index (into :func:`depolarizer_group`) for every site."""

    elements: np.ndarray


@dataclass(frozen=True)
class ZZSample:
    """Couplings ``theta_ij Z_i Z_j`` of one growth layer: ``theta = tau J (dR_q)^-alpha``."""

    q: int
    tau: float
    prefactor: float
    i: np.ndarray
    j: np.ndarray
    J: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return self.tau * self.prefactor * self.J


@dataclass(frozen=True)
class Layer:
    """One primitive layer; randomness is replayed from ``(seed, path)``."""

    kind: str  # "zz" or "depolarize"
    q: int
    duration: float
    path: str

    def sample(self, params: ProtocolParams):
        rng = derive_rng(params.seed, self.path)
        if self.kind == "depolarize":
            return sample_depolarizer(params.n_sites, rng)
        return sample_zz_layer(self.q, params, rng)


def sample_depolarizer(sites: int | Iterable[int], rng: np.random.Generator) -> DepolarizerSample:
    """Independent uniform group element per site."""
    n = sites if isinstance(sites, (int, np.integer)) else len(list(sites))
    return DepolarizerSample(rng.integers(0, len(depolarizer_group()), size=int(n)))


def sample_zz_layer(
    q: int, params: ProtocolParams, rng: np.random.Generator, s: float | None = None
) -> ZZSample:
    """All intra-cube pairs at scale ``q`` with ``J ~ U[-1, 1]`` and duration ``tau_q``."""
    if s is not None and s < 1:
        raise ValueError("s must be >= 1")
    tau = params.tau(q, s)
    if not tau < params.tau_cap(q):
        raise ValueError(f"tau_{q} violates its cap; check parameter overrides")
    c = cubes(params, q)
    iu, ju = np.triu_indices(c.shape[1], 1)
    i, j = c[:, iu].ravel(), c[:, ju].ravel()
    J = rng.uniform(-1.0, 1.0, size=i.size)
    pre = params.prefactor(q)
    lat = params.lattice
    if params.d == 1:
        dist = np.abs(j - i).astype(float)
    else:
        ci, cj = np.divmod(i, lat.shape[1]), np.divmod(j, lat.shape[1])
        dist = (np.abs(ci[0] - cj[0]) + np.abs(ci[1] - cj[1])).astype(float)
    if np.any(np.abs(J) * pre > dist ** (-params.alpha) * (1 + 1e-12)):
        raise AssertionError("growth layer exceeds the power-law bound")
    return ZZSample(q, tau, pre, i, j, J)


@dataclass
class ProtocolSchedule:
    """Flattened layer list of ``U_{q*}``."""

    params: ProtocolParams
    layers: list[Layer] = field(default_factory=list)

    def __iter__(self) -> Iterator[Layer]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def total_runtime(self) -> float:
        return float(sum(layer.duration for layer in self.layers))

    def counts(self) -> dict[str, int]:
        out = {"zz": 0, "depolarize": 0}
        for layer in self.layers:
            out[layer.kind] += 1
        return out

    def level_ends(self) -> list[int]:
        """Number of layers in the prefix ``schedule(q)`` for ``q = 1..q*``."""
        return [2 ** (q + 1) - 2 for q in range(1, self.params.q_star + 1)]

    def to_json(self) -> str:
        return json.dumps(
            {"params": self.params.to_dict(), "total_runtime": self.total_runtime,
             "layers": [asdict(layer) for layer in self.layers]},
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "ProtocolSchedule":
        data = json.loads(text)
        p = dict(data["params"])
        if p.get("s_override") is not None:
            p["s_override"] = tuple(p["s_override"])
        params = ProtocolParams(**p)
        return cls(params, [Layer(**layer) for layer in data["layers"]])


def assemble(params: ProtocolParams) -> ProtocolSchedule:
    """Unroll the recursion into ``2^(q*+1) - 2`` primitive layers."""
    layers: list[Layer] = []

    def unroll(q: int, path: str) -> None:
        if q == 0:
            return
        unroll(q - 1, path + "/L")
        layers.append(Layer("zz", q, params.tau(q), path + "/V"))
        layers.append(Layer("depolarize", q, params.t_D, path + "/D"))
        unroll(q - 1, path + "/R")

    unroll(params.q_star, f"U{params.q_star}")
    return ProtocolSchedule(params, layers)


def runtime(params: ProtocolParams) -> list[float]:
    """``t_q = 2 t_{q-1} + t_D + tau_q`` for ``q = 1..q*`` (``t_0 = 0``)."""
    t, out = 0.0, []
    for q in range(1, params.q_star + 1):
        t = 2 * t + params.t_D + params.tau(q)
        out.append(t)
    return out


def runtime_scaling(rs: Iterable[float], alpha: float, d: int = 1) -> list[tuple[float, float]]:
    """Deterministic total runtime ``t_{q*}(r)`` with default parameters."""
    if not d < alpha < d + 1:
        raise ValueError("runtime scaling needs d < alpha < d + 1")
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", VacuousRegimeWarning)
        for r in rs:
            out.append((float(r), runtime(derive_params(r, alpha, d))[-1]))
    return out


def fit_slope(table: Iterable[tuple[float, float]]) -> float:
    """Least-squares slope of ``log t`` against ``log r``."""
    r, t = np.array(list(table), dtype=float).T
    return float(np.polyfit(np.log(r), np.log(t), 1)[0])


# ----------------------------------------------------------------------------
# quantum-level simulation


@functools.lru_cache(maxsize=1)
def clifford_tables() -> tuple[np.ndarray, np.ndarray]:
    """``new_code[g, c]`` and ``sign[g, c]`` with ``D_g^dag P_c D_g = sign P_new``.

    Letter codes follow the mask convention ``c = x | z << 1`` (I, X, Z, Y).
    """
    mats = [PauliString.from_label(ch) for ch in "IXZY"]
    dense = [to_matrix(p) for p in mats]
    G = depolarizer_group()
    new = np.zeros((len(G), 4), dtype=np.int64)
    sign = np.zeros((len(G), 4))
    for g, D in enumerate(G):
        for c, P in enumerate(dense):
            img = D.conj().T @ P @ D
            for c2, Q in enumerate(dense):
                ov = np.trace(Q @ img) / 2
                if abs(abs(ov) - 1) < 1e-12:
                    if abs(ov.imag) > 1e-12:
                        raise AssertionError("conjugate of a Pauli acquired a complex phase")
                    new[g, c], sign[g, c] = c2, np.sign(ov.real)
                    break
            else:
                raise AssertionError(f"group element {g} is not Clifford")
    new.setflags(write=False)
    sign.setflags(write=False)
    return new, sign


def _check_sites(params: ProtocolParams, initial: WeightedPauliSum, cap: int) -> int:
    n = params.n_sites
    if n > cap:
        raise ResourceError(f"{n} sites exceeds the simulation cap of {cap}")
    if initial.n != n:
        raise ValueError(f"initial operator has {initial.n} sites, schedule has {n}")
    return n


def simulate_exact(
    schedule: ProtocolSchedule, initial: WeightedPauliSum, max_qubits: int = EXACT_CAP
) -> WeightedPauliSum:
    """Apply every sampled layer as exact dense conjugation ``A -> U^dag A U``."""
    n = _check_sites(schedule.params, initial, min(max_qubits, MAX_QUBITS))
    A = to_matrix(initial)
    norm0 = np.linalg.norm(A)
    G = depolarizer_group()
    bits = ((np.arange(1 << n)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1)
    zval = 1 - 2 * bits  # eigenvalue of Z_s on each basis state
    for layer in schedule:
        smp = layer.sample(schedule.params)
        if isinstance(smp, ZZSample):
            phase = (zval[:, smp.i] * zval[:, smp.j]) @ smp.theta
            v = np.exp(-1j * phase)
            A = v.conj()[:, None] * A * v[None, :]
        else:
            U = np.array([[1.0 + 0j]])
            for g in smp.elements:
                U = np.kron(U, G[g])
            A = U.conj().T @ A @ U
    if abs(np.linalg.norm(A) - norm0) > 1e-10 * max(1.0, norm0):
        raise AssertionError("dense evolution lost norm")
    return pauli_coefficients(A)


def _merge(x: np.ndarray, z: np.ndarray, c: np.ndarray, n: int):
    key = (x << n) | z
    uniq, inv = np.unique(key, return_inverse=True)
    cr = np.bincount(inv, weights=c.real, minlength=uniq.size)
    ci = np.bincount(inv, weights=c.imag, minlength=uniq.size)
    return uniq >> n, uniq & ((1 << n) - 1), cr + 1j * ci


def simulate_pauli_branching(
    schedule: ProtocolSchedule, initial: WeightedPauliSum, truncation: float = 1e-8, cap: int = 30
) -> tuple[WeightedPauliSum, float]:
    """Pauli-basis propagation with truncation.

    Depolarizer layers relabel strings (Clifford).  Each coupling ``theta Z_i Z_j``
    maps an anticommuting string ``P`` to ``cos(2 theta) P - i sin(2 theta) P Z_i Z_j``.
    Terms below ``truncation`` in magnitude are dropped after every coupling and
    their squared weight is returned alongside the result.
    """
    if truncation < 0:
        raise ValueError("truncation must be >= 0")
    n = _check_sites(schedule.params, initial, cap)
    x, z, c = initial.arrays()
    x, z = x.astype(np.int64), z.astype(np.int64)
    new_code, sign_tab = clifford_tables()
    discarded = 0.0
    for layer in schedule:
        smp = layer.sample(schedule.params)
        if isinstance(smp, DepolarizerSample):
            for s, g in enumerate(smp.elements):
                code = ((x >> s) & 1) | (((z >> s) & 1) << 1)
                nc = new_code[g][code]
                c = c * sign_tab[g][code]
                x = (x & ~(1 << s)) | ((nc & 1) << s)
                z = (z & ~(1 << s)) | (((nc >> 1) & 1) << s)
            continue
        for i, j, th in zip(smp.i, smp.j, smp.theta):
            zg = (1 << int(i)) | (1 << int(j))
            anti = (np.bitwise_count(x & zg) & 1).astype(bool)
            if not anti.any() or th == 0.0:
                continue
            xa, za, ca = x[anti], z[anti], c[anti]
            z2 = za ^ zg
            k = (np.bitwise_count(xa & za) - np.bitwise_count(xa & z2)).astype(np.int64) % 4
            branch = ca * (-1j * math.sin(2 * th)) * (1j ** k)
            c = c.copy()
            c[anti] = ca * math.cos(2 * th)
            x, z, c = _merge(
                np.concatenate([x, xa]), np.concatenate([z, z2]), np.concatenate([c, branch]), n
            )
            if truncation > 0:
                keep = np.abs(c) >= truncation
                discarded += float(np.sum(np.abs(c[~keep]) ** 2))
                x, z, c = x[keep], z[keep], c[keep]
    terms = {(int(a), int(b)): complex(v) for a, b, v in zip(x, z, c) if v != 0}
    return WeightedPauliSum(n, terms), discarded
