"""Pauli-string algebra on finite lattices, operator sums and projectors.

Strings are stored as a pair of integer bit masks: bit ``i`` of ``x`` and ``z``
holds the letter on site ``i`` (I=00, X=10, Z=01, Y=11).  A canonical string
with masks ``(x, z)`` denotes ``prod_i i^{x_i z_i} X_i^{x_i} Z_i^{z_i}``, which
is Hermitian and equals the usual tensor product of Pauli letters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

__all__ = [
    "DimensionError",
    "Lattice",
    "PauliString",
    "WeightedPauliSum",
    "multiply",
    "commutes",
    "frobenius_norm",
    "project_site",
    "rightmost_site",
    "rightmost_project",
    "front_expectation",
    "project_min_diameter",
]

_LETTERS = "IXZY"
_CODES = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_PHASES = (1, 1j, -1, -1j)


class DimensionError(ValueError):
    """Operands live on lattices of different size."""


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class Lattice:
    """Hypercubic open lattice with row-major site indices and the L1 metric."""

    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) not in (1, 2):
            raise ValueError("only d=1 and d=2 lattices are supported")
        if any(s < 1 for s in shape):
            raise ValueError("every extent must be >= 1")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def chain(cls, n: int) -> "Lattice":
        return cls((n,))

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def n_sites(self) -> int:
        return math.prod(self.shape)

    def coords(self, i: int) -> tuple[int, ...]:
        if not 0 <= i < self.n_sites:
            raise IndexError(f"site {i} outside lattice of {self.n_sites} sites")
        if self.d == 1:
            return (i,)
        return divmod(i, self.shape[1])

    def index(self, coords: Iterable[int]) -> int:
        c = tuple(coords)
        if self.d == 1:
            return c[0]
        return c[0] * self.shape[1] + c[1]

    def distance(self, i: int, j: int) -> int:
        return sum(abs(a - b) for a, b in zip(self.coords(i), self.coords(j)))

    def diameter(self, sites: Iterable[int]) -> int:
        """Largest pairwise L1 distance inside ``sites`` (0 for fewer than two)."""
        pts = np.array([self.coords(s) for s in sites], dtype=np.int64)
        if len(pts) < 2:
            return 0
        if self.d == 1:
            return int(pts.max() - pts.min())
        u = pts[:, 0] + pts[:, 1]
        v = pts[:, 0] - pts[:, 1]
        return int(max(u.max() - u.min(), v.max() - v.min()))


@dataclass(frozen=True)
class PauliString:
    """Pauli word ``phase * P(x, z)`` on ``n`` sites; ``phase`` is a power of i."""

    n: int
    x: int = 0
    z: int = 0
    phase: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        full = (1 << self.n) - 1
        if self.x & ~full or self.z & ~full or self.x < 0 or self.z < 0:
            raise ValueError("mask has bits outside the lattice")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def from_label(cls, label: str, phase: int = 0) -> "PauliString":
        x = z = 0
        for i, ch in enumerate(label.upper()):
            try:
                bx, bz = _CODES[ch]
            except KeyError:
                raise ValueError(f"bad Pauli letter {ch!r}") from None
            x |= bx << i
            z |= bz << i
        return cls(len(label), x, z, phase)

    @classmethod
    def single(cls, n: int, site: int, letter: str) -> "PauliString":
        if not 0 <= site < n:
            raise IndexError(f"site {site} outside 0..{n - 1}")
        bx, bz = _CODES[letter.upper()]
        return cls(n, bx << site, bz << site)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n)

    @property
    def key(self) -> tuple[int, int]:
        return (self.x, self.z)

    @property
    def coefficient(self) -> complex:
        return _PHASES[self.phase]

    @property
    def label(self) -> str:
        return "".join(
            _LETTERS[((self.x >> i) & 1) | (((self.z >> i) & 1) << 1)] for i in range(self.n)
        )

    @property
    def support_mask(self) -> int:
        return self.x | self.z

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x | self.z
        return tuple(i for i in range(self.n) if (m >> i) & 1)

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)

    def __repr__(self) -> str:
        sign = ("+", "+i", "-", "-i")[self.phase]
        return f"PauliString({sign}{self.label})"


def _product(x1: int, z1: int, x2: int, z2: int) -> tuple[int, int, int]:
    """Masks and i-power of ``P(x1,z1) P(x2,z2)`` for phase-free canonical strings."""
    x3, z3 = x1 ^ x2, z1 ^ z2
    k = _popcount(x1 & z1) + _popcount(x2 & z2) + 2 * _popcount(z1 & x2) - _popcount(x3 & z3)
    return x3, z3, k % 4


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Product ``a * b`` with the accumulated phase."""
    if a.n != b.n:
        raise DimensionError(f"strings on {a.n} and {b.n} sites")
    x, z, k = _product(a.x, a.z, b.x, b.z)
    return PauliString(a.n, x, z, a.phase + b.phase + k)


def commutes(a: PauliString, b: PauliString) -> bool:
    """True iff ``ab = ba`` (symplectic form over GF(2))."""
    if a.n != b.n:
        raise DimensionError(f"strings on {a.n} and {b.n} sites")
    return (_popcount(a.x & b.z) + _popcount(a.z & b.x)) % 2 == 0


class WeightedPauliSum:
    """Sparse operator ``sum_P c_P P`` keyed by phase-free masks ``(x, z)``.

    Instances are treated as immutable; every operation returns a new sum.
    Zero coefficients are removed on construction.
    """

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms: Mapping[tuple[int, int], complex] | None = None):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = int(n)
        full = (1 << n) - 1
        clean: dict[tuple[int, int], complex] = {}
        for (x, z), c in (terms or {}).items():
            if x & ~full or z & ~full:
                raise ValueError("mask has bits outside the lattice")
            c = complex(c)
            if c != 0:
                clean[(int(x), int(z))] = c
        self._terms = clean

    # construction -----------------------------------------------------------
    @classmethod
    def from_pauli(cls, p: PauliString, coeff: complex = 1.0) -> "WeightedPauliSum":
        return cls(p.n, {p.key: coeff * p.coefficient})

    @classmethod
    def from_labels(cls, items: Mapping[str, complex]) -> "WeightedPauliSum":
        out: dict[tuple[int, int], complex] = {}
        n = None
        for label, c in items.items():
            p = PauliString.from_label(label)
            if n is None:
                n = p.n
            elif p.n != n:
                raise DimensionError("labels of different length")
            out[p.key] = out.get(p.key, 0) + c
        if n is None:
            raise ValueError("need at least one label")
        return cls(n, out)

    @classmethod
    def zero(cls, n: int) -> "WeightedPauliSum":
        return cls(n)

    # container protocol -----------------------------------------------------
    @property
    def terms(self) -> Mapping[tuple[int, int], complex]:
        return dict(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[tuple[PauliString, complex]]:
        for (x, z), c in self._terms.items():
            yield PauliString(self.n, x, z), c

    def coefficient(self, p: PauliString | str) -> complex:
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return self._terms.get(p.key, 0j) * (1 if p.phase == 0 else np.conj(p.coefficient))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Masks and coefficients as numpy arrays (object dtype for n > 62)."""
        dt = np.int64 if self.n <= 62 else object
        keys = list(self._terms)
        x = np.array([k[0] for k in keys], dtype=dt)
        z = np.array([k[1] for k in keys], dtype=dt)
        c = np.array([self._terms[k] for k in keys], dtype=complex)
        return x, z, c

    def _check(self, other: "WeightedPauliSum"):
        if other.n != self.n:
            raise DimensionError(f"sums on {self.n} and {other.n} sites")

    # algebra ----------------------------------------------------------------
    def __add__(self, other: "WeightedPauliSum") -> "WeightedPauliSum":
        self._check(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0) + c
        return WeightedPauliSum(self.n, out)

    def __neg__(self) -> "WeightedPauliSum":
        return WeightedPauliSum(self.n, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other: "WeightedPauliSum") -> "WeightedPauliSum":
        return self + (-other)

    def scale(self, s: complex) -> "WeightedPauliSum":
        return WeightedPauliSum(self.n, {k: s * c for k, c in self._terms.items()})

    def __rmul__(self, s: complex) -> "WeightedPauliSum":
        return self.scale(s)

    def __matmul__(self, other: "WeightedPauliSum") -> "WeightedPauliSum":
        self._check(other)
        out: dict[tuple[int, int], complex] = {}
        for (x1, z1), c1 in self._terms.items():
            for (x2, z2), c2 in other._terms.items():
                x, z, k = _product(x1, z1, x2, z2)
                key = (x, z)
                out[key] = out.get(key, 0) + c1 * c2 * _PHASES[k]
        return WeightedPauliSum(self.n, out)

    def commutator(self, other: "WeightedPauliSum") -> "WeightedPauliSum":
        """``[self, other]``; only anticommuting pairs contribute (twice)."""
        self._check(other)
        out: dict[tuple[int, int], complex] = {}
        for (x1, z1), c1 in self._terms.items():
            for (x2, z2), c2 in other._terms.items():
                if (_popcount(x1 & z2) + _popcount(z1 & x2)) % 2 == 0:
                    continue
                x, z, k = _product(x1, z1, x2, z2)
                key = (x, z)
                out[key] = out.get(key, 0) + 2 * c1 * c2 * _PHASES[k]
        return WeightedPauliSum(self.n, out)

    def adjoint(self) -> "WeightedPauliSum":
        return WeightedPauliSum(self.n, {k: np.conj(c) for k, c in self._terms.items()})

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    def chop(self, tol: float) -> "WeightedPauliSum":
        return WeightedPauliSum(self.n, {k: c for k, c in self._terms.items() if abs(c) >= tol})

    def filter(self, keep) -> "WeightedPauliSum":
        """Keep terms for which ``keep(x, z)`` is true."""
        return WeightedPauliSum(self.n, {k: c for k, c in self._terms.items() if keep(*k)})

    def norm(self) -> float:
        return frobenius_norm(self)

    def normalized(self) -> "WeightedPauliSum":
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize the zero operator")
        return self.scale(1.0 / nrm)

    def allclose(self, other: "WeightedPauliSum", atol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self._terms.get(k, 0) - other._terms.get(k, 0)) <= atol for k in keys)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightedPauliSum):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        body = ", ".join(f"{c:.4g}*{p.label}" for p, c in list(self)[:6])
        more = "" if len(self) <= 6 else f", ... ({len(self)} terms)"
        return f"WeightedPauliSum({body}{more})"

    # text format ------------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"{c.real!r} {c.imag!r} {p.label}" for p, c in sorted(self, key=lambda t: t[0].label)]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, n: int | None = None) -> "WeightedPauliSum":
        out: dict[tuple[int, int], complex] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected '<re> <im> <letters>'")
            p = PauliString.from_label(parts[2])
            if n is None:
                n = p.n
            elif p.n != n:
                raise DimensionError(f"line {lineno}: string length {p.n} != {n}")
            out[p.key] = out.get(p.key, 0) + complex(float(parts[0]), float(parts[1]))
        if n is None:
            raise ValueError("empty sum needs an explicit site count")
        return cls(n, out)


def frobenius_norm(A: WeightedPauliSum) -> float:
    """Normalized Frobenius norm ``sqrt(sum |c_P|^2)``."""
    return math.sqrt(sum(abs(c) ** 2 for c in A._terms.values()))


def project_site(A: WeightedPauliSum, x: int) -> WeightedPauliSum:
    """Keep the strings acting non-trivially on site ``x``."""
    if not 0 <= x < A.n:
        raise IndexError(f"site {x} outside 0..{A.n - 1}")
    bit = 1 << x
    return A.filter(lambda xm, zm: bool((xm | zm) & bit))


def rightmost_site(mask: int) -> int:
    """Index of the highest occupied site, -1 for the identity."""
    return mask.bit_length() - 1


def rightmost_project(A: WeightedPauliSum, x: int, R: int) -> WeightedPauliSum:
    """Chain projector onto strings whose rightmost letter sits at ``x``.

    Sector 0 also absorbs the identity and sector ``R`` absorbs every string
    reaching site ``R`` or beyond, so that the sectors ``0..R`` sum to the identity.
    """
    if not 0 <= x <= R:
        raise ValueError(f"need 0 <= x <= R, got x={x}, R={R}")
    if x == 0:
        return A.filter(lambda xm, zm: rightmost_site(xm | zm) <= 0)
    if x == R:
        return A.filter(lambda xm, zm: rightmost_site(xm | zm) >= R)
    return A.filter(lambda xm, zm: rightmost_site(xm | zm) == x)


def front_expectation(A: WeightedPauliSum, R: int, tol: float = 1e-9) -> float:
    """``(A|F|A) = sum_x x ||Q_x A||^2`` for a unit-norm operator."""
    if abs(frobenius_norm(A) - 1.0) > tol:
        raise ValueError("front expectation needs a unit-norm operator")
    total = 0.0
    for (xm, zm), c in A._terms.items():
        rho = rightmost_site(xm | zm)
        total += min(max(rho, 0), R) * abs(c) ** 2
    return total


def project_min_diameter(
    A: WeightedPauliSum, L: float, lattice: Lattice | None = None, origin: int = 0
) -> WeightedPauliSum:
    """Keep strings with ``diam(support + {origin}) >= L``."""
    if L < 0:
        raise ValueError("L must be >= 0")
    lat = lattice or Lattice.chain(A.n)
    if lat.n_sites != A.n:
        raise DimensionError("lattice size does not match the operator")

    def keep(xm: int, zm: int) -> bool:
        m = xm | zm
        sites = [origin] + [i for i in range(A.n) if (m >> i) & 1]
        return lat.diameter(sites) >= L

    return A.filter(keep)
