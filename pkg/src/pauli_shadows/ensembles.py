"""Unitary ensembles invariant under right Pauli multiplication: specs, draws and enumeration."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

from .pauli import PauliLabel, check_dense, dense_matrix

PAULI_GROUP = "pauli_group"
LOCAL_CLIFFORD = "local_clifford"
GLOBAL_CLIFFORD = "global_clifford"
LOCALLY_SCRAMBLED_HAAR = "locally_scrambled_haar"
RANDOM_LOCAL_CIRCUIT = "random_local_circuit"
CUSTOM = "custom"
CIRCUIT = "circuit"

KINDS = (PAULI_GROUP, LOCAL_CLIFFORD, GLOBAL_CLIFFORD, LOCALLY_SCRAMBLED_HAAR, RANDOM_LOCAL_CIRCUIT, CUSTOM)

MAX_LOCAL_CLIFFORD_ENUM = 3
MAX_GLOBAL_CLIFFORD = 2


class NotEnumerableError(ValueError):
    """The ensemble is continuous or too large to list exhaustively."""


H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.array([[1, 0], [0, 1j]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)  # control q0, target q1

NAMED_GATES = {
    "I": np.eye(2, dtype=complex),
    "H": H,
    "S": S,
    "SDG": S.conj().T,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "CNOT": CNOT,
}


# -- Clifford tables ----------------------------------------------------------


def phase_normalize(mats: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Fix the global phase so the first non-negligible entry is real positive."""
    mats = np.asarray(mats, dtype=complex)
    single = mats.ndim == 2
    m = mats[None] if single else mats
    flat = m.reshape(m.shape[0], -1)
    first = np.argmax(np.abs(flat) > tol, axis=1)
    v = flat[np.arange(flat.shape[0]), first]
    out = m * (v.conj() / np.abs(v))[:, None, None]
    return out[0] if single else out


def matrix_keys(mats: np.ndarray, decimals: int = 8) -> list[bytes]:
    """Hashable keys identifying unitaries up to global phase."""
    m = phase_normalize(mats)
    if m.ndim == 2:
        m = m[None]
    re = np.round(m.real, decimals) + 0.0
    im = np.round(m.imag, decimals) + 0.0
    both = np.concatenate([re.reshape(len(m), -1), im.reshape(len(m), -1)], axis=1)
    return [row.tobytes() for row in both]


def _closure(generators: Sequence[np.ndarray]) -> np.ndarray:
    d = generators[0].shape[0]
    start = np.eye(d, dtype=complex)
    elements = [start]
    seen = {matrix_keys(start)[0]}
    frontier = [start]
    while frontier:
        nxt = []
        prods = np.array([g @ u for u in frontier for g in generators])
        prods = phase_normalize(prods)
        for key, m in zip(matrix_keys(prods), prods):
            if key not in seen:
                seen.add(key)
                elements.append(m)
                nxt.append(m)
        frontier = nxt
    out = np.array(elements)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def single_qubit_cliffords() -> np.ndarray:
    """The 24 single-qubit Cliffords modulo phase, generated from {H, S}."""
    return _closure([H, S])


@lru_cache(maxsize=None)
def two_qubit_cliffords() -> np.ndarray:
    """The 11520 two-qubit Cliffords modulo phase, generated from {H_i, S_i, CNOT}."""
    I2 = np.eye(2)
    gens = [np.kron(I2, H), np.kron(H, I2), np.kron(I2, S), np.kron(S, I2), CNOT]
    return _closure(gens)


def global_clifford_table(n: int) -> np.ndarray:
    if n == 1:
        return single_qubit_cliffords()
    if n == 2:
        return two_qubit_cliffords()
    raise ValueError(f"global Clifford ensemble is supported for n <= {MAX_GLOBAL_CLIFFORD}, got n={n}")


# -- specs and draws ----------------------------------------------------------


@dataclass(frozen=True)
class EnsembleSpec:
    """A unitary ensemble on ``n`` qubits.

    ``custom`` holds (unitary, probability) pairs for the ``custom`` kind and
    ``depth`` the number of brickwork layers for ``random_local_circuit``.
    """

    n: int
    kind: str
    depth: int = 1
    custom: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 1:
            raise ValueError("ensemble needs at least one qubit")
        if self.kind == GLOBAL_CLIFFORD and self.n > MAX_GLOBAL_CLIFFORD:
            raise ValueError(f"global Clifford ensemble is supported for n <= {MAX_GLOBAL_CLIFFORD}")
        if self.kind == RANDOM_LOCAL_CIRCUIT and self.depth < 1:
            raise ValueError("random local circuit needs depth >= 1")
        if self.kind == CUSTOM:
            if not self.custom:
                raise ValueError("custom ensemble needs at least one element")
            mats = tuple(np.asarray(u, dtype=complex) for u, _ in self.custom)
            probs = np.array([p for _, p in self.custom], dtype=float)
            d = 1 << self.n
            for u in mats:
                if u.shape != (d, d) or not np.allclose(u.conj().T @ u, np.eye(d), atol=1e-10):
                    raise ValueError("custom ensemble elements must be unitaries of matching size")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError("custom ensemble probabilities must be nonnegative and sum to 1")
            object.__setattr__(self, "custom", tuple(zip(mats, probs.tolist())))

    def enumerable(self) -> bool:
        if self.kind in (PAULI_GROUP, CUSTOM, GLOBAL_CLIFFORD):
            return True
        if self.kind == LOCAL_CLIFFORD:
            return self.n <= MAX_LOCAL_CLIFFORD_ENUM
        return False

    @property
    def name(self) -> str:
        base = self.kind.replace("_", "-")
        if self.kind == RANDOM_LOCAL_CIRCUIT:
            return f"{base}:depth={self.depth}"
        return base

    def to_dict(self) -> dict:
        out = {"n": self.n, "kind": self.kind}
        if self.kind == RANDOM_LOCAL_CIRCUIT:
            out["depth"] = self.depth
        if self.kind == CUSTOM:
            out["elements"] = [
                {"re": u.real.ravel().tolist(), "im": u.imag.ravel().tolist(), "p": p} for u, p in self.custom
            ]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> EnsembleSpec:
        n = int(data["n"])
        custom = ()
        if data["kind"] == CUSTOM:
            d = 1 << n
            custom = tuple(
                ((np.array(e["re"]) + 1j * np.array(e["im"])).reshape(d, d), e["p"]) for e in data["elements"]
            )
        return cls(n, data["kind"], depth=int(data.get("depth", 1)), custom=custom)

    @classmethod
    def parse(cls, text: str, n: int) -> EnsembleSpec:
        """Parse a CLI ensemble name such as ``local-clifford`` or ``random-local-circuit:depth=3``."""
        name, _, params = text.strip().partition(":")
        kind = name.replace("-", "_").lower()
        depth = 1
        if params:
            key, eq, value = params.partition("=")
            if eq and key.strip() != "depth":
                raise ValueError(f"unknown ensemble parameter {key!r}")
            depth = int(value if eq else key)
        if kind == CUSTOM:
            raise ValueError("custom ensembles cannot be given on the command line")
        return cls(n, kind, depth=depth)


def custom_ensemble(elements: Sequence[tuple[np.ndarray, float]]) -> EnsembleSpec:
    d = np.asarray(elements[0][0]).shape[0]
    return EnsembleSpec(d.bit_length() - 1, CUSTOM, custom=tuple(elements))


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def matrix(self) -> np.ndarray:
        if self.name in NAMED_GATES:
            return NAMED_GATES[self.name]
        if self.name in ("haar1", "haar2", "unitary"):
            d = 1 << len(self.qubits)
            p = np.asarray(self.params, dtype=float)
            return (p[0::2] + 1j * p[1::2]).reshape(d, d)
        raise ValueError(f"unknown gate {self.name!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "qubits": list(self.qubits), "params": list(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> Gate:
        return cls(data["name"], tuple(data["qubits"]), tuple(float(v) for v in data.get("params", ())))


def matrix_gate(name: str, qubits: Sequence[int], U: np.ndarray) -> Gate:
    flat = np.asarray(U, dtype=complex).ravel()
    params = np.empty(2 * flat.size)
    params[0::2] = flat.real
    params[1::2] = flat.imag
    return Gate(name, tuple(qubits), tuple(params.tolist()))


@dataclass(frozen=True)
class UnitaryDraw:
    """Compact record of one sampled unitary.

    Enumerable kinds store group-element indices in ``index`` (one per qubit
    for local Cliffords); continuous kinds store a gate list applied in order.
    """

    kind: str
    n: int
    index: tuple[int, ...] = ()
    gates: tuple[Gate, ...] = ()

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.index:
            out["index"] = list(self.index)
        if self.gates:
            out["gates"] = [g.to_dict() for g in self.gates]
        return out

    @classmethod
    def from_dict(cls, data: dict, n: int) -> UnitaryDraw:
        return cls(
            data["kind"],
            n,
            tuple(int(i) for i in data.get("index", ())),
            tuple(Gate.from_dict(g) for g in data.get("gates", ())),
        )


def circuit_draw(n: int, gates: Sequence[Gate]) -> UnitaryDraw:
    return UnitaryDraw(CIRCUIT, n, gates=tuple(gates))


# -- sampling -----------------------------------------------------------------


def _brickwork_layer(n: int, layer: int) -> list[tuple[int, ...]]:
    """Pairs (q, q+1) starting at offset layer % 2; a leftover boundary qubit stands alone."""
    off = layer % 2
    groups = [(q,) for q in range(off)]
    q = off
    while q + 1 < n:
        groups.append((q, q + 1))
        q += 2
    if q < n:
        groups.append((q,))
    return groups


def sample(spec: EnsembleSpec, rng: np.random.Generator) -> UnitaryDraw:
    """Draw one unitary from ``spec`` using ``rng``."""
    n = spec.n
    if spec.kind == PAULI_GROUP:
        return UnitaryDraw(PAULI_GROUP, n, (int(rng.integers(4**n)),))
    if spec.kind == LOCAL_CLIFFORD:
        return UnitaryDraw(LOCAL_CLIFFORD, n, tuple(int(i) for i in rng.integers(24, size=n)))
    if spec.kind == GLOBAL_CLIFFORD:
        return UnitaryDraw(GLOBAL_CLIFFORD, n, (int(rng.integers(len(global_clifford_table(n)))),))
    if spec.kind == CUSTOM:
        probs = np.array([p for _, p in spec.custom])
        return UnitaryDraw(CUSTOM, n, (int(rng.choice(len(probs), p=probs / probs.sum())),))
    if spec.kind == LOCALLY_SCRAMBLED_HAAR:
        gates = tuple(matrix_gate("haar1", (q,), unitary_group.rvs(2, random_state=rng)) for q in range(n))
        return UnitaryDraw(LOCALLY_SCRAMBLED_HAAR, n, gates=gates)
    if spec.kind == RANDOM_LOCAL_CIRCUIT:
        gates = []
        for layer in range(spec.depth):
            for group in _brickwork_layer(n, layer):
                name = "haar2" if len(group) == 2 else "haar1"
                gates.append(matrix_gate(name, group, unitary_group.rvs(1 << len(group), random_state=rng)))
        return UnitaryDraw(RANDOM_LOCAL_CIRCUIT, n, gates=tuple(gates))
    raise ValueError(f"cannot sample ensemble kind {spec.kind!r}")


# -- realization --------------------------------------------------------------


def apply_gate(U: np.ndarray, G: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Left-multiply U by gate G acting on ``qubits`` (first listed qubit is G's least significant bit)."""
    k = len(qubits)
    t = U.reshape((2,) * n + (U.shape[1],))
    g = G.reshape((2,) * (2 * k))
    g_in = [k + (k - 1 - j) for j in range(k)]
    t_ax = [n - 1 - q for q in qubits]
    t = np.tensordot(g, t, axes=(g_in, t_ax))
    dest = [n - 1 - qubits[k - 1 - i] for i in range(k)]
    t = np.moveaxis(t, list(range(k)), dest)
    return t.reshape(U.shape)


def batched_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, p, q = a.shape
    _, r, s = b.shape
    return np.einsum("bij,bkl->bikjl", a, b).reshape(m, p * r, q * s)


def realize(draw: UnitaryDraw, spec: EnsembleSpec | None = None) -> np.ndarray:
    """Dense unitary for ``draw``; ``spec`` is required for custom ensembles."""
    return realize_many([draw], spec)[0]


def realize_many(draws: Sequence[UnitaryDraw], spec: EnsembleSpec | None = None) -> np.ndarray:
    """Stack of dense unitaries, shape (len(draws), 2^n, 2^n)."""
    if not draws:
        raise ValueError("no draws to realize")
    n = draws[0].n
    check_dense(n)
    kind = draws[0].kind
    if any(d.kind != kind for d in draws):
        return np.array([realize_many([d], spec)[0] for d in draws])
    if kind == LOCAL_CLIFFORD:
        table = single_qubit_cliffords()
        idx = np.array([d.index for d in draws])
        out = table[idx[:, n - 1]]
        for q in range(n - 2, -1, -1):
            out = batched_kron(out, table[idx[:, q]])
        return out
    if kind == GLOBAL_CLIFFORD:
        table = global_clifford_table(n)
        return table[np.array([d.index[0] for d in draws])].copy()
    if kind == PAULI_GROUP:
        return np.array([dense_matrix(PauliLabel.from_index(n, d.index[0])) for d in draws])
    if kind == CUSTOM:
        if spec is None or spec.kind != CUSTOM:
            raise ValueError("realizing a custom draw needs its ensemble spec")
        mats = np.array([u for u, _ in spec.custom])
        return mats[np.array([d.index[0] for d in draws])]
    if kind == LOCALLY_SCRAMBLED_HAAR:
        per_qubit = np.array([[g.matrix() for g in d.gates] for d in draws])  # (m, n, 2, 2), gate q on qubit q
        out = per_qubit[:, n - 1]
        for q in range(n - 2, -1, -1):
            out = batched_kron(out, per_qubit[:, q])
        return out
    out = []
    d = 1 << n
    for draw in draws:
        U = np.eye(d, dtype=complex)
        for g in draw.gates:
            U = apply_gate(U, g.matrix(), g.qubits, n)
        out.append(U)
    return np.array(out)


# -- enumeration and invariance -----------------------------------------------


def enumerate_ensemble(spec: EnsembleSpec) -> list[tuple[UnitaryDraw, float]]:
    """Every element of a finite ensemble with its probability."""
    if not spec.enumerable():
        raise NotEnumerableError(f"ensemble {spec.name} on {spec.n} qubits is not enumerable")
    n = spec.n
    if spec.kind == PAULI_GROUP:
        p = 1.0 / 4**n
        return [(UnitaryDraw(PAULI_GROUP, n, (i,)), p) for i in range(4**n)]
    if spec.kind == LOCAL_CLIFFORD:
        p = 1.0 / 24**n
        return [(UnitaryDraw(LOCAL_CLIFFORD, n, idx), p) for idx in itertools.product(range(24), repeat=n)]
    if spec.kind == GLOBAL_CLIFFORD:
        size = len(global_clifford_table(n))
        return [(UnitaryDraw(GLOBAL_CLIFFORD, n, (i,)), 1.0 / size) for i in range(size)]
    return [(UnitaryDraw(CUSTOM, n, (i,)), spec.custom[i][1]) for i in range(len(spec.custom))]


# public alias matching the operation name
enumerate = enumerate_ensemble  # noqa: A001


def enumerated_unitaries(spec: EnsembleSpec) -> tuple[np.ndarray, np.ndarray]:
    """(unitaries, probabilities) arrays for an enumerable spec.

    Built-in kinds are cached; custom specs compare equal regardless of their
    elements, so they are rebuilt on every call.
    """
    if spec.kind == CUSTOM:
        return _enumerated(spec)
    return _enumerated_cached(spec)


@lru_cache(maxsize=16)
def _enumerated_cached(spec: EnsembleSpec) -> tuple[np.ndarray, np.ndarray]:
    return _enumerated(spec)


def _enumerated(spec: EnsembleSpec) -> tuple[np.ndarray, np.ndarray]:
    items = enumerate_ensemble(spec)
    mats = realize_many([d for d, _ in items], spec)
    probs = np.array([p for _, p in items])
    mats.setflags(write=False)
    probs.setflags(write=False)
    return mats, probs


@dataclass(frozen=True)
class InvarianceReport:
    passed: bool
    max_deviation: float
    mode: str


def check_pauli_invariance(
    spec: EnsembleSpec,
    mode: str = "exact",
    samples: int = 10_000,
    tol: float = 1e-2,
    seed: int = 0,
) -> InvarianceReport:
    """Check P(U) = P(U P_sigma) for every Pauli P_sigma.

    ``exact`` compares probability masses of the phase-free multiset and its
    right-translates.  ``statistical`` compares W tables built from the same
    sampled U and from U P_sigma with uniformly random sigma.  Since W is
    unchanged by right Pauli multiplication this is a consistency check of the
    sampler and realizer, not a test of the distribution itself.
    """
    if mode == "exact":
        if not spec.enumerable():
            raise NotEnumerableError(f"exact invariance check needs an enumerable ensemble, got {spec.name}")
        mats, probs = enumerated_unitaries(spec)
        mass: dict[bytes, float] = {}
        for key, p in zip(matrix_keys(mats), probs):
            mass[key] = mass.get(key, 0.0) + p
        worst = 0.0
        for i in range(4**spec.n):
            P = dense_matrix(PauliLabel.from_index(spec.n, i))
            shifted: dict[bytes, float] = {}
            for key, p in zip(matrix_keys(mats @ P), probs):
                shifted[key] = shifted.get(key, 0.0) + p
            for key in mass.keys() | shifted.keys():
                worst = max(worst, abs(mass.get(key, 0.0) - shifted.get(key, 0.0)))
        return InvarianceReport(bool(worst <= tol), float(worst), mode)
    if mode == "statistical":
        from .engine import w_from_unitaries

        rng_u, rng_s = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
        base = realize_many([sample(spec, rng_u) for _ in range(samples)], spec)
        sigmas = rng_s.integers(4**spec.n, size=samples)
        paulis = np.array([dense_matrix(PauliLabel.from_index(spec.n, int(s))) for s in sigmas])
        w_a, _ = w_from_unitaries(base)
        w_b, _ = w_from_unitaries(base @ paulis)
        dev = float(np.max(np.abs(w_a - w_b)))
        return InvarianceReport(bool(dev <= tol), dev, mode)
    raise ValueError(f"unknown mode {mode!r}")
