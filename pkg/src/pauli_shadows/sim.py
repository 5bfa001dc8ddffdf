"""Dense small-n simulator: states, channels in Kraus form, Choi states.

Conventions: computational-basis index ``j`` has bit ``q`` equal to the value
of qubit ``q`` (qubit 0 least significant), and bitstrings are written with
character ``q`` for qubit ``q``.  States are plain numpy arrays: a vector of
length 2^n is a pure state, a 2^n x 2^n array a density matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .pauli import PauliLabel, check_dense, dense_matrix, label_bits, popcount

ATOL = 1e-10


def num_qubits(dim: int) -> int:
    n = dim.bit_length() - 1
    if dim != 1 << n:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def bits_to_int(bits: str) -> int:
    """``"0101"`` -> integer with character ``q`` as bit ``q``."""
    value = 0
    for q, ch in enumerate(bits):
        if ch not in "01":
            raise ValueError(f"invalid bitstring {bits!r}")
        value |= int(ch) << q
    return value


def int_to_bits(value: int, n: int) -> str:
    return "".join(str((value >> q) & 1) for q in range(n))


def basis_state(n: int, bits: int | str) -> np.ndarray:
    check_dense(n)
    if isinstance(bits, str):
        if len(bits) != n:
            raise ValueError(f"bitstring {bits!r} does not have length {n}")
        bits = bits_to_int(bits)
    psi = np.zeros(1 << n, dtype=complex)
    psi[bits] = 1.0
    return psi


def ghz_state(n: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def maximally_mixed(n: int) -> np.ndarray:
    check_dense(n)
    return np.eye(1 << n, dtype=complex) / (1 << n)


def density(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    return state


def random_density_matrix(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-distributed random state of the given rank (full rank by default)."""
    d = 1 << n
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure_state(n: int, rng: np.random.Generator) -> np.ndarray:
    d = 1 << n
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    return psi / np.linalg.norm(psi)


def is_unitary(U: np.ndarray, atol: float = ATOL) -> bool:
    return np.allclose(U.conj().T @ U, np.eye(U.shape[0]), atol=atol)


def apply_unitary(state: np.ndarray, U: np.ndarray) -> np.ndarray:
    """U|psi> for vectors, U rho U^dagger for density matrices."""
    state = np.asarray(state)
    if U.shape[0] != state.shape[0]:
        raise ValueError(f"dimension mismatch: unitary {U.shape} vs state {state.shape}")
    if state.ndim == 1:
        return U @ state
    return U @ state @ U.conj().T


def born_probabilities(state: np.ndarray) -> np.ndarray:
    """Outcome distribution of a computational-basis measurement."""
    state = np.asarray(state)
    if state.ndim == 1:
        p = np.abs(state) ** 2
    else:
        p = np.clip(np.diagonal(state).real, 0.0, None)
    return p / p.sum()


def sample_index(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from ``probs`` using one uniform ``u`` in [0, 1)."""
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(probs) - 1))


def measure(state: np.ndarray, rng: np.random.Generator) -> int:
    """Sample an outcome integer (bit q = qubit q) by the Born rule."""
    return sample_index(born_probabilities(state), rng.random())


def pauli_expectation(rho: np.ndarray, a: PauliLabel) -> float:
    """Tr(rho P_a) for a density matrix or <psi|P_a|psi> for a vector."""
    rho = np.asarray(rho)
    if rho.shape[0] != 1 << a.n:
        raise ValueError(f"dimension mismatch: state {rho.shape} vs {a.n}-qubit label")
    if rho.ndim == 1:
        return float(pure_pauli_expectations(rho[None, :], [a])[0, 0])
    return float(np.trace(rho @ dense_matrix(a)).real)


def pure_pauli_expectations(psi: np.ndarray, labels: Sequence[PauliLabel] | None = None) -> np.ndarray:
    """<psi_k|P_a|psi_k> for a batch of pure states, shape (batch, len(labels)).

    Uses X^x Z^z |j> = (-1)^{z.j} |j xor x>.  The identity label evaluates to
    exactly 1.0 since every snapshot state is normalised by construction.
    """
    psi = np.atleast_2d(psi)
    d = psi.shape[1]
    n = num_qubits(d)
    if labels is None:
        xs, zs = label_bits(n)
    else:
        xs = np.array([a.x for a in labels], dtype=np.int64)
        zs = np.array([a.z for a in labels], dtype=np.int64)
    j = np.arange(d)
    out = np.empty((psi.shape[0], len(xs)))
    for k, (x, z) in enumerate(zip(xs.tolist(), zs.tolist())):
        if x == 0 and z == 0:
            out[:, k] = 1.0
            continue
        sign = 1 - 2 * (popcount(j & z) & 1)
        val = np.einsum("bj,bj->b", psi[:, j ^ x].conj(), psi * sign)
        # i^(xz) times a purely imaginary or real number; keep the real part
        ny = (x & z).bit_count() % 4
        val = val * (1j) ** ny
        out[:, k] = val.real
    return out


_PAULI_STACK = np.stack([np.eye(2), [[1, 0], [0, -1]], [[0, 1], [1, 0]], [[0, -1j], [1j, 0]]]).astype(complex)


def pauli_coefficients(mat: np.ndarray) -> np.ndarray:
    """Tr(M P_a) for every label in canonical order (complex), batched over leading axes."""
    mat = np.asarray(mat, dtype=complex)
    n = num_qubits(mat.shape[-1])
    lead = mat.shape[:-2]
    nl = len(lead)
    t = mat.reshape(lead + (2,) * (2 * n))
    # contract qubit k's (row, col) axes with P[c, r]; digit axes pile up at the end
    for k in range(n):
        m = n - k
        t = np.tensordot(t, _PAULI_STACK, axes=([nl + m - 1, nl + 2 * m - 1], [2, 1]))
    # trailing digit axes run qubit 0..n-1; canonical order wants qubit 0 last
    perm = tuple(range(nl)) + tuple(nl + n - 1 - i for i in range(n))
    return np.transpose(t, perm).reshape(lead + (4**n,))


def from_pauli_coefficients(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pauli_coefficients`: M = 2^-n sum_a c_a P_a."""
    t = np.asarray(coeffs).reshape((4,) * n).astype(complex)
    for _ in range(n):
        t = np.tensordot(t, _PAULI_STACK, axes=([0], [0]))
    # axes are now (r_{n-1}, c_{n-1}, ..., r_0, c_0)
    order = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
    return np.transpose(t, order).reshape(1 << n, 1 << n) / (1 << n)


# -- channels -----------------------------------------------------------------


@dataclass(frozen=True)
class QuantumChannel:
    """Channel in Kraus form; Pauli channels also carry their probability table."""

    n: int
    kraus: tuple[np.ndarray, ...]
    name: str = "custom"
    pauli_probs: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        d = 1 << self.n
        ks = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        for k in ks:
            if k.shape != (d, d):
                raise ValueError(f"Kraus operator of shape {k.shape}, expected {(d, d)}")
        object.__setattr__(self, "kraus", ks)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return apply_channel(rho, self)

    def adjoint(self) -> QuantumChannel:
        return QuantumChannel(self.n, tuple(k.conj().T for k in self.kraus), name=f"{self.name}^dagger")

    def is_trace_preserving(self, atol: float = ATOL) -> bool:
        s = sum(k.conj().T @ k for k in self.kraus)
        return np.allclose(s, np.eye(1 << self.n), atol=atol)

    def is_unital(self, atol: float = ATOL) -> bool:
        out = apply_channel(np.eye(1 << self.n, dtype=complex), self)
        return float(np.max(np.abs(out - np.eye(1 << self.n)))) <= atol

    @property
    def tag(self) -> str:
        return self.name


def apply_channel(rho: np.ndarray, ch: QuantumChannel, adjoint: bool = False) -> np.ndarray:
    """sum_k K rho K^dagger (or K^dagger rho K); batched over leading axes."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-1] != 1 << ch.n:
        raise ValueError(f"dimension mismatch: state {rho.shape} vs {ch.n}-qubit channel")
    K = np.stack(ch.kraus)
    if adjoint:
        K = K.conj().transpose(0, 2, 1)
    return np.einsum("kij,...jl,kml->...im", K, rho, K.conj(), optimize=True)


def identity_channel(n: int) -> QuantumChannel:
    probs = np.zeros(4**n)
    probs[0] = 1.0
    return QuantumChannel(n, (np.eye(1 << n, dtype=complex),), name="identity", pauli_probs=probs)


def pauli_channel(probs: Mapping[PauliLabel, float] | np.ndarray, n: int | None = None, name: str = "pauli") -> QuantumChannel:
    """T[rho] = sum_a p_a P_a rho P_a with Kraus operators sqrt(p_a) P_a."""
    if isinstance(probs, Mapping):
        if not probs:
            raise ValueError("empty Pauli distribution")
        n = next(iter(probs)).n
        table = np.zeros(4**n)
        for a, p in probs.items():
            table[a.index] += p
    else:
        table = np.asarray(probs, dtype=float)
        n = num_qubits(int(round(np.sqrt(table.size)))) if n is None else n
        if table.size != 4**n:
            raise ValueError(f"probability table of length {table.size}, expected {4**n}")
    if np.any(table < -1e-12) or abs(table.sum() - 1) > ATOL:
        raise ValueError("Pauli probabilities must be nonnegative and sum to 1")
    table = np.clip(table, 0.0, None)
    kraus = tuple(
        np.sqrt(p) * dense_matrix(PauliLabel.from_index(n, i)) for i, p in enumerate(table) if p > 0
    )
    return QuantumChannel(n, kraus, name=name, pauli_probs=table)


def depolarizing_channel(p: float, n: int) -> QuantumChannel:
    """D_p[rho] = (1-p) rho + p Tr(rho) I / 2^n, written as a Pauli channel."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability {p} outside [0, 1]")
    table = np.full(4**n, p / 4**n)
    table[0] += 1.0 - p
    return pauli_channel(table, n, name=f"depolarizing:{p!r}")


def embed_single_qubit(op: np.ndarray, n: int, qubit: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for q in reversed(range(n)):
        out = np.kron(out, op if q == qubit else np.eye(2))
    return out


def bit_flip_channel(p: float, n: int, qubit: int = 0) -> QuantumChannel:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"bit-flip probability {p} outside [0, 1]")
    table = np.zeros(4**n)
    table[0] = 1 - p
    table[PauliLabel.single(n, qubit, "X").index] = p
    return pauli_channel(table, n, name=f"bitflip:{p!r}")


def amplitude_damping_channel(gamma: float, n: int, qubit: int = 0) -> QuantumChannel:
    """Non-unital single-qubit decay |1> -> |0> with probability ``gamma``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"damping rate {gamma} outside [0, 1]")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return QuantumChannel(
        n, (embed_single_qubit(k0, n, qubit), embed_single_qubit(k1, n, qubit)), name=f"amplitude_damping:{gamma!r}"
    )


def choi_state(ch: QuantumChannel) -> np.ndarray:
    """J(T) = (id x T)(|Psi><Psi|) on input x output, i.e. kron(input, output) ordering."""
    check_dense(2 * ch.n)
    d = 1 << ch.n
    J = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d), dtype=complex)
            E[i, j] = 1.0
            J += np.kron(E, apply_channel(E, ch))
    return J / d


# -- subsystems ---------------------------------------------------------------


def partial_trace(rho: np.ndarray, keep: int, n: int) -> np.ndarray:
    """Reduced state on the qubits in bitmask ``keep`` (qubit order preserved)."""
    rho = np.asarray(rho, dtype=complex)
    t = rho.reshape((2,) * (2 * n))
    # row axis i and column axis n+i both carry qubit n-1-i
    rows = list(range(n))
    cols = [n + i if keep >> (n - 1 - i) & 1 else i for i in range(n)]
    out = [i for i in range(n) if keep >> (n - 1 - i) & 1]
    out = out + [n + i for i in out]
    red = np.einsum(t, rows + cols, out)
    k = keep.bit_count()
    return red.reshape(1 << k, 1 << k)


def renyi2_purity(rho: np.ndarray, A: int) -> float:
    """Tr(rho_A^2) = exp(-S2_A(rho)); A is a qubit bitmask, A = 0 gives 1."""
    rho = density(rho)
    n = num_qubits(rho.shape[0])
    if A == 0:
        return 1.0
    red = partial_trace(rho, A, n)
    return float(np.vdot(red, red).real)


def pure_purities(psi: np.ndarray, A: int) -> np.ndarray:
    """Batched Tr(rho_A^2) for pure states of shape (batch, 2^n)."""
    psi = np.atleast_2d(psi)
    b, d = psi.shape
    n = num_qubits(d)
    if A == 0 or A == (1 << n) - 1:
        return np.ones(b)
    keep = [q for q in range(n) if A >> q & 1]
    rest = [q for q in range(n) if not A >> q & 1]
    t = psi.reshape((b,) + (2,) * n)
    axes = [0] + [1 + n - 1 - q for q in keep] + [1 + n - 1 - q for q in rest]
    m = np.transpose(t, axes).reshape(b, 1 << len(keep), 1 << len(rest))
    red = m @ m.conj().transpose(0, 2, 1)
    return np.einsum("bij,bij->b", red.conj(), red).real


def hs_inner(A: np.ndarray, B: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product Tr(A^dagger B)."""
    return complex(np.vdot(A, B))


def matrix_to_json(mat: np.ndarray) -> list:
    """Row-major nested [re, im] pairs, for debugging dumps."""
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(mat, dtype=complex)]


def matrix_from_json(data: list) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in data])
