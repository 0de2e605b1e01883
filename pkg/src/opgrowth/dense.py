"""Dense exact engine for small systems.

Basis convention: site 0 is the most significant qubit, so ``X`` on site 0 of a
two-site system is ``kron(X, I)``.  Heisenberg evolution is ``A(t) = U^dag A U``
with ``U = exp(-iHt)`` (time ordered over piecewise-constant segments).
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .pauli import PauliString, WeightedPauliSum

__all__ = [
    "MAX_QUBITS",
    "ResourceError",
    "ContractError",
    "PAULIS",
    "HamiltonianTerms",
    "pauli_matrix",
    "to_matrix",
    "pauli_coefficients",
    "pauli_coefficient_table",
    "embed",
    "propagator",
    "evolve_heisenberg",
    "schatten_norm",
    "otoc_commutator_norm",
    "depolarizer_group",
    "pauli_transfer_matrix",
    "depolarizer_superchannel",
    "superdensity_depolarize",
]

MAX_QUBITS = 12

I2 = np.eye(2, dtype=complex)
X2 = np.array([[0, 1], [1, 0]], dtype=complex)
Y2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z2 = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X2, Y2, Z2)


class ResourceError(RuntimeError):
    """Requested dense object exceeds the qubit cap."""


class ContractError(ValueError):
    """Input violates a documented precondition."""


def _cap(n: int, cap: int = MAX_QUBITS) -> None:
    if n > cap:
        raise ResourceError(f"{n} qubits exceeds the dense cap of {cap}")


def _reverse_bits(mask: int, n: int) -> int:
    return int(format(mask, f"0{n}b")[::-1], 2) if n else 0


def pauli_matrix(p: PauliString) -> np.ndarray:
    """Dense matrix of a (possibly phased) Pauli string."""
    _cap(p.n)
    n = p.n
    xb, zb = _reverse_bits(p.x, n), _reverse_bits(p.z, n)
    b = np.arange(1 << n)
    M = np.zeros((1 << n, 1 << n), dtype=complex)
    M[b ^ xb, b] = (1j ** (bin(p.x & p.z).count("1") + p.phase)) * _parity_sign(b & zb)
    return M


def _parity_sign(v: np.ndarray) -> np.ndarray:
    return 1 - 2 * (np.bitwise_count(v) & 1).astype(np.int64)


def _sum_matrix(A: WeightedPauliSum) -> np.ndarray:
    n = A.n
    _cap(n)
    dim = 1 << n
    b = np.arange(dim)
    M = np.zeros((dim, dim), dtype=complex)
    for p, c in A:
        xb, zb = _reverse_bits(p.x, n), _reverse_bits(p.z, n)
        M[b ^ xb, b] += c * (1j ** bin(p.x & p.z).count("1")) * _parity_sign(b & zb)
    return M


def embed(op: np.ndarray, sites: Sequence[int], n: int) -> np.ndarray:
    """Place a local operator acting on ``sites`` (in the given order) into ``n`` qubits."""
    _cap(n)
    k = len(sites)
    if op.shape != (1 << k, 1 << k):
        raise ValueError("local operator shape does not match its site list")
    if len(set(sites)) != k or any(not 0 <= s < n for s in sites):
        raise ValueError("invalid site list")
    rest = [s for s in range(n) if s not in sites]
    order = list(sites) + rest
    full = np.kron(op, np.eye(1 << (n - k)))
    # full acts on qubits ordered as `order`; permute tensor legs back to 0..n-1
    t = full.reshape([2] * (2 * n))
    perm = [order.index(s) for s in range(n)]
    t = t.transpose(perm + [n + p for p in perm])
    return t.reshape(1 << n, 1 << n)


@dataclass(frozen=True)
class HamiltonianTerms:
    """Piecewise-constant Hamiltonian segment: local terms and a time window."""

    n: int
    terms: tuple[tuple[tuple[int, ...], np.ndarray, complex], ...]
    t_start: float = 0.0
    t_end: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_pauli_sum(cls, H: WeightedPauliSum, t_start: float = 0.0, t_end: float = 1.0):
        terms = []
        for p, c in H:
            sites = p.support
            local = PauliString(
                len(sites) or 1,
                sum(((p.x >> s) & 1) << k for k, s in enumerate(sites)),
                sum(((p.z >> s) & 1) << k for k, s in enumerate(sites)),
            )
            if not sites:
                terms.append(((0,), c * np.eye(2), 1.0))
            else:
                terms.append((tuple(sites), pauli_matrix(local), c))
        return cls(H.n, tuple(terms), t_start, t_end)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def matrix(self) -> np.ndarray:
        if "M" not in self._cache:
            _cap(self.n)
            M = np.zeros((1 << self.n, 1 << self.n), dtype=complex)
            for sites, op, c in self.terms:
                M += c * embed(op, sites, self.n)
            self._cache["M"] = M
        return self._cache["M"]


def to_matrix(A, n: int | None = None, cap: int = MAX_QUBITS) -> np.ndarray:
    """Dense matrix of a Pauli string, Pauli sum or Hamiltonian."""
    size = n if n is not None else A.n
    _cap(size, cap)
    if isinstance(A, PauliString):
        if A.n != size:
            raise ValueError("site count mismatch")
        return pauli_matrix(A)
    if isinstance(A, WeightedPauliSum):
        if A.n != size:
            raise ValueError("site count mismatch")
        return _sum_matrix(A)
    if isinstance(A, HamiltonianTerms):
        if A.n != size:
            raise ValueError("site count mismatch")
        return A.matrix()
    raise TypeError(f"cannot convert {type(A).__name__}")


def _walsh_hadamard(v: np.ndarray) -> np.ndarray:
    """Unnormalized transform along the last axis: out[z] = sum_b (-1)^{b.z} v[b]."""
    v = v.copy()
    n = v.shape[-1].bit_length() - 1
    lead = v.shape[:-1]
    for k in range(n):
        v = v.reshape(*lead, -1, 2, 1 << k)
        a, b = v[..., 0, :].copy(), v[..., 1, :].copy()
        v[..., 0, :], v[..., 1, :] = a + b, a - b
        v = v.reshape(*lead, -1)
    return v


def pauli_coefficient_table(M: np.ndarray) -> np.ndarray:
    """Pauli coefficients ``W[xb, zb]`` indexed by basis-order bit masks.

    Basis-order masks put site 0 in the most significant bit; computed in
    ``O(4^n n)`` with one Walsh-Hadamard transform per X pattern.
    """
    dim = M.shape[0]
    n = dim.bit_length() - 1
    if M.shape != (dim, dim) or 1 << n != dim:
        raise ValueError("matrix dimension must be a power of two")
    _cap(n)
    b = np.arange(dim)
    V = M[b[None, :] ^ b[:, None], b[None, :]]  # V[xb, b] = M[b ^ xb, b]
    W = _walsh_hadamard(V) / dim
    # P = i^{|x&z|} X^x Z^z, so c_P = i^{-|x&z|} W
    k = np.bitwise_count(b[:, None] & b[None, :]) % 4
    return W * (1j ** (-k.astype(float)))


def pauli_coefficients(M: np.ndarray, tol: float = 1e-13) -> WeightedPauliSum:
    """Expand a dense matrix in the normalized Pauli basis, dropping ``|c| <= tol``."""
    W = pauli_coefficient_table(M)
    n = M.shape[0].bit_length() - 1
    rev = np.array([_reverse_bits(i, n) for i in range(M.shape[0])])
    xs, zs = np.nonzero(np.abs(W) > tol)
    terms = {(int(rev[a]), int(rev[b])): W[a, b] for a, b in zip(xs, zs)}
    return WeightedPauliSum(n, terms)


def _check_hermitian(H: np.ndarray, tol: float = 1e-10) -> None:
    if np.max(np.abs(H - H.conj().T), initial=0.0) > tol:
        raise ContractError("Hamiltonian is not Hermitian")


def propagator(H: np.ndarray, t: float, hermitian: bool = True) -> np.ndarray:
    """``exp(-iHt)`` via eigendecomposition, scaling-and-squaring otherwise."""
    if hermitian:
        _check_hermitian(H)
        w, V = np.linalg.eigh(H)
        U = (V * np.exp(-1j * w * t)) @ V.conj().T
    else:
        U = scipy.linalg.expm(-1j * t * H)
    err = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
    if err > 1e-10:
        raise ContractError(f"propagator not unitary (deviation {err:.2e})")
    return U


def evolve_heisenberg(A, H, t: float | None = None) -> np.ndarray:
    """Heisenberg picture ``U^dag A U`` for one segment or an ordered list of segments.

    With a single :class:`HamiltonianTerms` (or dense matrix) ``t`` is the
    evolution time; with a sequence the segments' own windows set the times and
    ``t`` (if given) truncates the schedule.
    """
    A = to_matrix(A) if not isinstance(A, np.ndarray) else A
    if isinstance(H, (HamiltonianTerms, np.ndarray)):
        segs = [(H.matrix() if isinstance(H, HamiltonianTerms) else H, 0.0 if t is None else t)]
    else:
        ordered = sorted(H, key=lambda s: s.t_start)
        for a, b in zip(ordered, ordered[1:]):
            if b.t_start < a.t_end - 1e-12:
                raise ContractError("segments overlap")
        segs = []
        for s in ordered:
            end = s.t_end if t is None else min(s.t_end, t)
            if end > s.t_start:
                segs.append((s.matrix(), end - s.t_start))
    U = np.eye(A.shape[0], dtype=complex)
    for Hm, dt in segs:
        U = propagator(Hm, dt) @ U
    return U.conj().T @ A @ U


def schatten_norm(A: np.ndarray, p: float, normalized: bool = False) -> float:
    """Schatten p-norm from singular values; ``normalized`` divides by ``||I||_p``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    A = np.asarray(A)
    dim = A.shape[0]
    if p == 2:
        val = float(np.linalg.norm(A))
        return val / math.sqrt(dim) if normalized else val
    s = np.linalg.svd(A, compute_uv=False)
    if math.isinf(p):
        return float(s.max(initial=0.0))
    smax = s.max(initial=0.0)
    if smax == 0:
        return 0.0
    val = smax * float(np.sum((s / smax) ** p)) ** (1.0 / p)
    return val / dim ** (1.0 / p) if normalized else val


def otoc_commutator_norm(
    A: WeightedPauliSum, B: WeightedPauliSum, H, t: float, p: float = 2.0
) -> float:
    """Normalized p-norm of ``[A(t), B]``."""
    At = evolve_heisenberg(to_matrix(A), H, t)
    Bm = to_matrix(B)
    return schatten_norm(At @ Bm - Bm @ At, p, normalized=True)


@functools.lru_cache(maxsize=1)
def depolarizer_group() -> tuple[np.ndarray, ...]:
    """The 48-element single-qubit group used by the depolarizing layers."""
    s = 1 / math.sqrt(2)
    P = (X2, Y2, Z2)
    els: list[np.ndarray] = [I2.copy(), -I2]
    for a in range(3):
        for sg1, sg2 in itertools.product((1, -1), repeat=2):
            els.append(s * (sg1 * I2 + sg2 * 1j * P[a]))
    for a in range(3):
        for sg in (1, -1):
            els.append(sg * 1j * P[a])
    for a, b in itertools.combinations(range(3), 2):
        for sg1, sg2 in itertools.product((1, -1), repeat=2):
            els.append(s * (sg1 * 1j * P[a] + sg2 * 1j * P[b]))
    for sg in itertools.product((1, -1), repeat=4):
        els.append(0.5 * (sg[0] * I2 + 1j * (sg[1] * X2 + sg[2] * Y2 + sg[3] * Z2)))
    for e in els:
        e.setflags(write=False)
    return tuple(els)


def pauli_transfer_matrix(U: np.ndarray) -> np.ndarray:
    """Real matrix ``R[a, b] = Tr(s_a U^dag s_b U) / 2`` of ``s -> U^dag s U`` on (I, X, Y, Z)."""
    R = np.empty((4, 4))
    for b, sb in enumerate(PAULIS):
        img = U.conj().T @ sb @ U
        for a, sa in enumerate(PAULIS):
            R[a, b] = np.real(np.trace(sa @ img)) / 2
    return R


@functools.lru_cache(maxsize=1)
def depolarizer_superchannel() -> np.ndarray:
    """16x16 group average of ``R_D kron R_D`` on the per-site Pauli-pair basis."""
    S = np.zeros((16, 16))
    G = depolarizer_group()
    for D in G:
        R = pauli_transfer_matrix(D)
        S += np.kron(R, R)
    S /= len(G)
    S.setflags(write=False)
    return S


def superdensity_depolarize(table: np.ndarray, site: int, n_sites: int | None = None) -> np.ndarray:
    """Apply the averaged depolarizer on one site of a Pauli-pair coefficient table.

    ``table[a, b]`` is the coefficient of ``|P_a)(P_b|`` with ``a, b`` base-4
    indices over sites (site 0 most significant, letters ordered I, X, Y, Z).
    """
    table = np.asarray(table)
    dim = table.shape[0]
    n = n_sites if n_sites is not None else int(round(math.log(dim, 4)))
    if table.shape != (4**n, 4**n):
        raise ValueError("table must be 4^n x 4^n")
    if not 0 <= site < n:
        raise IndexError(f"site {site} outside 0..{n - 1}")
    S = depolarizer_superchannel().reshape(4, 4, 4, 4)
    t = table.reshape([4] * (2 * n))
    out = np.tensordot(S, t, axes=([2, 3], [site, n + site]))
    out = np.moveaxis(out, (0, 1), (site, n + site))
    return out.reshape(4**n, 4**n)
