"""Phase-exact n-qubit Pauli algebra in the symplectic (x, z) representation.

A label ``a`` in V^n = (Z2 x Z2)^n is stored as two n-bit words ``x`` and ``z``
with bit ``q`` belonging to qubit ``q``.  The single-qubit operator is
``P_(x,z) = i^(xz) X^x Z^z`` so that (0,0)=I, (0,1)=Z, (1,0)=X, (1,1)=Y.

Dense tables over V^n use the canonical "IZXY-lsb0" order: the index of a
label is sum_q d_q 4^q with per-qubit digit d_q = 2 x_q + z_q.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Callable, Mapping

import numpy as np

MAX_QUBITS = 16
DENSE_LIMIT = 12

TABLE_ORDER = "IZXY-lsb0"

_CHARS = "IZXY"
_DIGIT = {"I": 0, "Z": 1, "X": 2, "Y": 3}

I2 = np.eye(2, dtype=complex)
X2 = np.array([[0, 1], [1, 0]], dtype=complex)
Z2 = np.array([[1, 0], [0, -1]], dtype=complex)
Y2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SINGLE_QUBIT_PAULIS = (I2, Z2, X2, Y2)

_PHASE_VALUES = (1, 1j, -1, -1j)
_PHASE_TOKENS = ("+", "+i", "-", "-i")


class DenseLimitError(ValueError):
    """Raised when a dense 2^n object is requested above the configured limit."""


def check_dense(n: int, limit: int | None = None) -> None:
    limit = DENSE_LIMIT if limit is None else limit
    if n > limit:
        raise DenseLimitError(f"n={n} exceeds the dense limit of {limit} qubits")


@dataclass(frozen=True, order=True)
class PauliLabel:
    """A point of V^n, i.e. a phase-free Pauli operator P_a."""

    n: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUBITS:
            raise ValueError(f"qubit count must be in [1, {MAX_QUBITS}], got {self.n}")
        full = (1 << self.n) - 1
        if self.x < 0 or self.z < 0 or self.x & ~full or self.z & ~full:
            raise ValueError("label bits set outside the qubit range")

    @classmethod
    def identity(cls, n: int) -> PauliLabel:
        return cls(n, 0, 0)

    @classmethod
    def from_string(cls, text: str) -> PauliLabel:
        """Parse ``"XIZ"``; character ``q`` acts on qubit ``q``."""
        text = text.strip().upper()
        x = z = 0
        for q, ch in enumerate(text):
            if ch not in _DIGIT:
                raise ValueError(f"invalid Pauli character {ch!r} in {text!r}")
            d = _DIGIT[ch]
            x |= (d >> 1) << q
            z |= (d & 1) << q
        return cls(len(text), x, z)

    @classmethod
    def from_index(cls, n: int, index: int) -> PauliLabel:
        if not 0 <= index < 4**n:
            raise ValueError(f"index {index} out of range for n={n}")
        x = z = 0
        for q in range(n):
            d = (index >> (2 * q)) & 3
            x |= (d >> 1) << q
            z |= (d & 1) << q
        return cls(n, x, z)

    @classmethod
    def single(cls, n: int, qubit: int, kind: str) -> PauliLabel:
        """Weight-one label with ``kind`` in "IXYZ" on ``qubit``."""
        d = _DIGIT[kind.upper()]
        return cls(n, (d >> 1) << qubit, (d & 1) << qubit)

    @property
    def index(self) -> int:
        idx = 0
        for q in range(self.n):
            d = 2 * ((self.x >> q) & 1) + ((self.z >> q) & 1)
            idx |= d << (2 * q)
        return idx

    @property
    def support(self) -> int:
        """Bitmask of qubits on which the label is not the identity."""
        return self.x | self.z

    @property
    def weight(self) -> int:
        return self.support.bit_count()

    @property
    def num_y(self) -> int:
        return (self.x & self.z).bit_count()

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def __str__(self) -> str:
        return "".join(_CHARS[2 * ((self.x >> q) & 1) + ((self.z >> q) & 1)] for q in range(self.n))


@dataclass(frozen=True)
class PhasedPauli:
    """``i^phase * P_label`` with the phase kept exactly in Z4."""

    label: PauliLabel
    phase: int = 0

    def __post_init__(self):
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def from_string(cls, text: str) -> PhasedPauli:
        """Parse an optional leading ``+``, ``-``, ``+i``, ``-i`` and a Pauli string."""
        text = text.strip()
        phase = 0
        for token, value in (("+i", 1), ("-i", 3), ("i", 1), ("+", 0), ("-", 2)):
            if text.startswith(token):
                phase = value
                text = text[len(token):]
                break
        return cls(PauliLabel.from_string(text), phase)

    @property
    def n(self) -> int:
        return self.label.n

    @property
    def coefficient(self) -> complex:
        return _PHASE_VALUES[self.phase]

    def __str__(self) -> str:
        return _PHASE_TOKENS[self.phase] + str(self.label)


def _check_same_n(a, b) -> None:
    if a.n != b.n:
        raise ValueError(f"qubit count mismatch: {a.n} vs {b.n}")


def pauli_compose(p: PhasedPauli, q: PhasedPauli) -> PhasedPauli:
    """Exact product ``p @ q``.

    With P_(x,z) = i^(xz) X^x Z^z, moving Z^z1 past X^x2 costs (-1)^(z1 x2),
    and the result X^x3 Z^z3 equals i^(-x3 z3) P_(x3,z3).
    """
    _check_same_n(p, q)
    a, b = p.label, q.label
    x3, z3 = a.x ^ b.x, a.z ^ b.z
    k = (a.x & a.z).bit_count() + (b.x & b.z).bit_count()
    k += 2 * (a.z & b.x).bit_count()
    k -= (x3 & z3).bit_count()
    return PhasedPauli(PauliLabel(a.n, x3, z3), p.phase + q.phase + k)


def symplectic_inner(a: PauliLabel, b: PauliLabel) -> int:
    """sum_i (x_i z'_i - z_i x'_i) mod 2; zero iff P_a and P_b commute."""
    _check_same_n(a, b)
    return ((a.x & b.z) ^ (a.z & b.x)).bit_count() & 1


def conjugate_sign(a: PauliLabel, c: PauliLabel) -> int:
    """Sign s with P_c P_a P_c^dagger = s P_a."""
    return -1 if symplectic_inner(a, c) else 1


def dense_matrix(p: PhasedPauli | PauliLabel, limit: int | None = None) -> np.ndarray:
    """2^n x 2^n matrix; qubit 0 is the least significant tensor factor."""
    if isinstance(p, PauliLabel):
        p = PhasedPauli(p)
    n = p.n
    check_dense(n, limit)
    out = np.ones((1, 1), dtype=complex)
    lab = p.label
    for q in reversed(range(n)):
        d = 2 * ((lab.x >> q) & 1) + ((lab.z >> q) & 1)
        out = np.kron(out, SINGLE_QUBIT_PAULIS[d])
    return p.coefficient * out


def all_labels(n: int) -> list[PauliLabel]:
    """Every label of V^n in canonical table order."""
    return [PauliLabel.from_index(n, i) for i in range(4**n)]


@lru_cache(maxsize=None)
def label_bits(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays (x, z) of bit words for every table index."""
    idx = np.arange(4**n)
    x = np.zeros(4**n, dtype=np.int64)
    z = np.zeros(4**n, dtype=np.int64)
    for q in range(n):
        d = (idx >> (2 * q)) & 3
        x |= (d >> 1) << q
        z |= (d & 1) << q
    x.setflags(write=False)
    z.setflags(write=False)
    return x, z


@lru_cache(maxsize=None)
def support_masks(n: int) -> np.ndarray:
    x, z = label_bits(n)
    out = x | z
    out.setflags(write=False)
    return out


def popcount(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.uint64)
    return np.bitwise_count(arr).astype(np.int64)


# Single-qubit character table (-1)^<u,x>_s in I,Z,X,Y order.
_CHAR1 = np.array(
    [[1, 1, 1, 1],
     [1, 1, -1, -1],
     [1, -1, 1, -1],
     [1, -1, -1, 1]],
    dtype=float,
)


def _apply_per_qubit(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    size = values.shape[-1]
    n = round(np.log(size) / np.log(4))
    if 4**n != size:
        raise ValueError(f"table length {size} is not a power of 4")
    t = values.reshape(values.shape[:-1] + (4,) * n)
    lead = values.ndim - 1
    for axis in range(n):
        t = np.moveaxis(np.tensordot(kernel, t, axes=([1], [lead + axis])), 0, lead + axis)
    return t.reshape(values.shape)


def symplectic_fourier(f: np.ndarray) -> np.ndarray:
    """f_hat(u) = 4^-n sum_x f(x) (-1)^<u,x>_s over a canonical V^n table."""
    f = np.asarray(f, dtype=float)
    return _apply_per_qubit(f, _CHAR1) / f.shape[-1]


def inverse_symplectic_fourier(g: np.ndarray) -> np.ndarray:
    """f(x) = sum_u g(u) (-1)^<u,x>_s."""
    return _apply_per_qubit(g, _CHAR1)


# -- subsets of [n] -----------------------------------------------------------


def check_mask(n: int, mask: int) -> int:
    if mask < 0 or mask >> n:
        raise ValueError(f"subset mask {mask} has bits outside [0, {n})")
    return mask


def submasks(mask: int) -> list[int]:
    """All subsets of ``mask`` in increasing order."""
    bits = [1 << q for q in range(mask.bit_length()) if mask >> q & 1]
    out = [0]
    for b in bits:
        out += [s | b for s in out]
    return sorted(out)


def all_subsets(n: int) -> range:
    return range(1 << n)


def subset_str(mask: int) -> str:
    members = [str(q) for q in range(mask.bit_length()) if mask >> q & 1]
    return "{" + ",".join(members) + "}"


def subset_moebius_sum(h: Mapping[int, float] | Callable[[int], float], S: int, signed: bool = True) -> float:
    """sum_{A subset S} (-1)^{|S|-|A|} h(A), or the plain subset sum if not ``signed``."""
    get = h if callable(h) else h.__getitem__
    total = 0.0
    size = S.bit_count()
    for A in submasks(S):
        try:
            value = get(A)
        except KeyError:
            raise KeyError(f"missing subset entry {subset_str(A)}") from None
        if signed and (size - A.bit_count()) & 1:
            total -= value
        else:
            total += value
    return total


def subsets_of_size(n: int, k: int) -> list[int]:
    return [sum(1 << q for q in c) for c in combinations(range(n), k)]


# -- observables --------------------------------------------------------------


_TERM = re.compile(r"([+-]?)(?:((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\*)?([IXYZixyz]+)")


def parse_observable(text: str, n: int | None = None) -> dict[PauliLabel, float]:
    """Parse ``"0.5*ZI + 1.5*XX - YY"`` into a label -> real coefficient map.

    Repeated labels accumulate.  A bare Pauli string has coefficient 1.
    """
    compact = re.sub(r"\s*([+*-])\s*", r"\1", text.strip())
    if not compact or re.search(r"\s", compact):
        raise ValueError(f"malformed observable expression {text!r}")
    out: dict[PauliLabel, float] = {}
    pos = 0
    while pos < len(compact):
        m = _TERM.match(compact, pos)
        if m is None or (pos > 0 and not m.group(1)):
            raise ValueError(f"malformed observable expression {text!r} at position {pos}")
        sign, coef_text, pauli = m.groups()
        coef = float(coef_text) if coef_text else 1.0
        if sign == "-":
            coef = -coef
        label = PauliLabel.from_string(pauli)
        if n is not None and label.n != n:
            raise ValueError(f"term {pauli!r} has {label.n} qubits, expected {n}")
        out[label] = out.get(label, 0.0) + coef
        pos = m.end()
    sizes = {a.n for a in out}
    if len(sizes) != 1:
        raise ValueError(f"observable terms have mixed qubit counts {sorted(sizes)}")
    return out


def format_observable(O: Mapping[PauliLabel, float]) -> str:
    """Inverse of ``parse_observable`` (coefficients printed with full precision)."""
    parts = []
    for a, c in O.items():
        c = float(c)
        sign = "-" if c < 0 or (c == 0 and str(c).startswith("-")) else "+"
        parts.append(f"{sign} {abs(c)!r}*{a}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[2:]
