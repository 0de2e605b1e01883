"""Dyadic scale blocks, coupling-to-scale assignment and power-law Hamiltonians."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .pauli import Lattice, PauliString, WeightedPauliSum

__all__ = [
    "ScaleBlock",
    "Coupling",
    "PowerLawHamiltonian",
    "check_R",
    "q_star_of",
    "blocks",
    "assign_scale",
    "h2_norm",
    "region_interaction_norms",
    "sample_powerlaw_hamiltonian",
]

_AXES = "XYZ"


def check_R(R: int) -> int:
    """Return ``q*`` for a chain end ``R`` with ``R + 1 = 2^(q*+1)``."""
    if R < 1 or (R + 1) & R:
        raise ValueError(f"R + 1 must be a power of two >= 2, got R={R}")
    return (R + 1).bit_length() - 2


q_star_of = check_R


@dataclass(frozen=True)
class ScaleBlock:
    """Sites ``[2^q k, 2^q (k+2) - 1]``, clipped to ``[0, R]`` by :meth:`sites`."""

    q: int
    k: int

    @property
    def start(self) -> int:
        return (1 << self.q) * self.k

    @property
    def stop(self) -> int:
        """Last site of the unclipped interval (inclusive)."""
        return (1 << self.q) * (self.k + 2) - 1

    def sites(self, R: int) -> range:
        return range(self.start, min(self.stop, R) + 1)

    def contains(self, i: int) -> bool:
        return self.start <= i <= self.stop


def K_max(q: int, R: int) -> int:
    return (R + 1) // (1 << q) - 1


def blocks(R: int) -> list[ScaleBlock]:
    """Every block ``(q, k)`` with ``0 <= q <= q*`` and ``0 <= k <= K_q``."""
    qs = check_R(R)
    return [ScaleBlock(q, k) for q in range(qs + 1) for k in range(K_max(q, R) + 1)]


def assign_scale(i: int, j: int, R: int) -> tuple[int, int]:
    """Smallest scale whose block holds both sites; smallest ``k`` at that scale."""
    qs = check_R(R)
    if not 0 <= i < j <= R:
        raise ValueError(f"need 0 <= i < j <= R, got ({i}, {j}) with R={R}")
    for q in range(qs + 1):
        w = 1 << q
        k = max(0, -(-(j + 1) // w) - 2)
        if k * w <= i and k <= K_max(q, R):
            return q, k
    raise AssertionError("unreachable: the top block spans [0, R]")


@dataclass(frozen=True)
class Coupling:
    """Two-site term ``J * sigma^a_i sigma^b_j`` with ``a, b`` in ``'XYZ'``."""

    i: int
    j: int
    a: str
    b: str
    J: float

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("coupling needs two distinct sites")
        if self.a not in _AXES or self.b not in _AXES:
            raise ValueError("Pauli axes must be X, Y or Z")


@dataclass(frozen=True)
class PowerLawHamiltonian:
    """Two-local Hamiltonian whose couplings obey ``|J| <= d(i, j)^-alpha``."""

    alpha: float
    n: int
    couplings: tuple[Coupling, ...]
    lattice: Lattice | None = None
    _validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        lat = self.lattice or Lattice.chain(self.n)
        object.__setattr__(self, "lattice", lat)
        if lat.n_sites != self.n:
            raise ValueError("lattice size does not match n")
        for c in self.couplings:
            if not (0 <= c.i < self.n and 0 <= c.j < self.n):
                raise ValueError(f"coupling {c} leaves the lattice")
        if self._validate and not self.admissible():
            raise ValueError("a coupling exceeds the power-law bound")

    def admissible(self, rtol: float = 1e-12) -> bool:
        return all(
            abs(c.J) <= self.lattice.distance(c.i, c.j) ** (-self.alpha) * (1 + rtol)
            for c in self.couplings
        )

    def to_pauli_sum(self) -> WeightedPauliSum:
        out: dict[tuple[int, int], complex] = {}
        for c in self.couplings:
            p = PauliString.single(self.n, c.i, c.a) * PauliString.single(self.n, c.j, c.b)
            out[p.key] = out.get(p.key, 0) + c.J * p.coefficient
        return WeightedPauliSum(self.n, out)

    def to_terms(self, t_start: float = 0.0, t_end: float = 1.0):
        from .dense import HamiltonianTerms

        return HamiltonianTerms.from_pauli_sum(self.to_pauli_sum(), t_start, t_end)

    def pair_terms(self) -> dict[tuple[int, int], list[Coupling]]:
        """Couplings grouped by unordered site pair."""
        groups: dict[tuple[int, int], list[Coupling]] = {}
        for c in self.couplings:
            groups.setdefault((min(c.i, c.j), max(c.i, c.j)), []).append(c)
        return groups

    def scale_tags(self, R: int) -> list[tuple[int, int]]:
        return [assign_scale(min(c.i, c.j), max(c.i, c.j), R) for c in self.couplings]

    def to_text(self) -> str:
        lines = [f"alpha={self.alpha!r} n={self.n}"]
        lines += [f"{c.i} {c.j} {c.a} {c.b} {c.J!r}" for c in self.couplings]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PowerLawHamiltonian":
        rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        rows = [r for r in rows if r]
        if not rows:
            raise ValueError("empty Hamiltonian file")
        header = dict(kv.split("=", 1) for kv in rows[0].split())
        try:
            alpha, n = float(header["alpha"]), int(header["n"])
        except KeyError as exc:
            raise ValueError(f"header missing {exc}") from None
        cs = []
        for r in rows[1:]:
            i, j, a, b, J = r.split()
            cs.append(Coupling(int(i), int(j), a, b, float(J)))
        return cls(alpha, n, tuple(cs))


def h2_norm(H: PowerLawHamiltonian) -> float:
    """``sqrt(sum J^2)`` over the coupling list."""
    return math.sqrt(sum(c.J**2 for c in H.couplings))


def region_interaction_norms(
    ball1: Iterable[int], ball2: Iterable[int], alpha: float, lattice: Lattice | None = None
) -> tuple[float, float]:
    """``(sum d^-alpha, sqrt(sum d^-2alpha))`` over cross pairs of two disjoint regions."""
    a, b = sorted(set(ball1)), sorted(set(ball2))
    if set(a) & set(b):
        raise ValueError("regions overlap")
    if lattice is None:
        d = np.abs(np.subtract.outer(np.array(a, float), np.array(b, float)))
    else:
        d = np.array([[lattice.distance(x, y) for y in b] for x in a], dtype=float)
    return float(np.sum(d**-alpha)), float(math.sqrt(np.sum(d ** (-2 * alpha))))


def sample_powerlaw_hamiltonian(
    n: int,
    alpha: float,
    rng: np.random.Generator,
    mode: str = "sampled",
    lattice: Lattice | None = None,
    at_bound: bool = False,
) -> PowerLawHamiltonian:
    """Random two-local Hamiltonian at the power-law bound.

    ``mode="sampled"`` draws one channel ``(a, b)`` per unordered pair;
    ``mode="dense"`` emits all nine channels.  ``J`` is uniform on
    ``[-d^-alpha, d^-alpha]``, or ``+-d^-alpha`` with ``at_bound``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if mode not in ("sampled", "dense"):
        raise ValueError(f"unknown mode {mode!r}")
    lat = lattice or Lattice.chain(n)
    out = []
    for i, j in itertools.combinations(range(n), 2):
        bound = lat.distance(i, j) ** (-alpha)
        if mode == "dense":
            channels: Sequence[tuple[str, str]] = list(itertools.product(_AXES, repeat=2))
        else:
            channels = [(_AXES[rng.integers(3)], _AXES[rng.integers(3)])]
        for a, b in channels:
            if at_bound:
                J = bound * (1.0 if rng.random() < 0.5 else -1.0)
            else:
                J = bound * rng.uniform(-1.0, 1.0)
            out.append(Coupling(i, j, a, b, float(J)))
    return PowerLawHamiltonian(alpha, n, tuple(out), lat)
