"""Classical shadow protocol: snapshot collection, W tables, reconstruction and estimation."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ensembles import (
    GLOBAL_CLIFFORD,
    LOCAL_CLIFFORD,
    LOCALLY_SCRAMBLED_HAAR,
    PAULI_GROUP,
    EnsembleSpec,
    NotEnumerableError,
    UnitaryDraw,
    enumerated_unitaries,
    realize_many,
    sample,
)
from .pauli import TABLE_ORDER, PauliLabel, check_dense, label_bits, support_masks
from .sim import (
    QuantumChannel,
    apply_channel,
    from_pauli_coefficients,
    int_to_bits,
    num_qubits,
    pauli_coefficients,
    pure_pauli_expectations,
    sample_index,
)

CHUNK = 4096
EXACT_FLOOR = 1e-12
MOM_DELTA = 0.01
MOM_SCALE = math.sqrt(math.pi / 2)  # stderr of a median relative to a mean, Gaussian limit

Observable = Mapping[PauliLabel, float]


class NonInvertibleError(ValueError):
    """Raised when a W coefficient is too small to invert; ``labels`` lists the offenders."""

    def __init__(self, labels: Sequence, message: str | None = None):
        self.labels = list(labels)
        shown = ", ".join(str(a) for a in self.labels[:32])
        more = "" if len(self.labels) <= 32 else f" (+{len(self.labels) - 32} more)"
        super().__init__(message or f"W is not invertible at {len(self.labels)} label(s): {shown}{more}")


def shot_rng(seed: int, shot: int) -> np.random.Generator:
    """Independent generator for one shot, derived from the master seed and the shot index."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(shot,)))


def spec_hash(spec: EnsembleSpec, noise: str | None = None) -> str:
    payload = json.dumps({"ensemble": spec.to_dict(), "noise": noise}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# -- data types ---------------------------------------------------------------


@dataclass(frozen=True)
class Snapshot:
    draw: UnitaryDraw
    outcome: int

    @property
    def n(self) -> int:
        return self.draw.n

    @property
    def bits(self) -> str:
        return int_to_bits(self.outcome, self.n)


@dataclass
class SnapshotSet:
    spec: EnsembleSpec
    seed: int
    snapshots: list[Snapshot]
    noise: str | None = None
    _states: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for s in self.snapshots:
            if s.n != self.spec.n:
                raise ValueError("snapshot qubit count does not match the ensemble")

    @property
    def n(self) -> int:
        return self.spec.n

    def __len__(self) -> int:
        return len(self.snapshots)

    def states(self) -> np.ndarray:
        """Snapshot state vectors U^dagger |b>, shape (shots, 2^n); computed once."""
        if self._states is None:
            self._states = snapshot_states(self.snapshots, self.spec)
        return self._states


@dataclass(frozen=True)
class WTable:
    """W[a] over all labels in canonical order, with optional per-entry stderr."""

    n: int
    values: np.ndarray
    stderr: np.ndarray | None = None
    provenance: str = "exact"
    samples: int | None = None
    spec: dict | None = None
    noise: str | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (4**self.n,):
            raise ValueError(f"W table needs {4**self.n} entries, got {values.shape}")
        object.__setattr__(self, "values", values)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))

    def __getitem__(self, a: PauliLabel | int) -> float:
        return float(self.values[a.index if isinstance(a, PauliLabel) else a])

    @property
    def spec_hash(self) -> str | None:
        if self.spec is None:
            return None
        return spec_hash(EnsembleSpec.from_dict(self.spec), self.noise)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "order": TABLE_ORDER,
            "values": self.values.tolist(),
            "stderr": None if self.stderr is None else self.stderr.tolist(),
            "provenance": self.provenance,
            "samples": self.samples,
            "spec": self.spec,
            "noise": self.noise,
        }

    @classmethod
    def from_dict(cls, data: dict) -> WTable:
        if data.get("order", TABLE_ORDER) != TABLE_ORDER:
            raise ValueError(f"unsupported table order {data['order']!r}")
        return cls(
            int(data["n"]),
            np.array(data["values"], dtype=float),
            None if data.get("stderr") is None else np.array(data["stderr"], dtype=float),
            data.get("provenance", "exact"),
            data.get("samples"),
            data.get("spec"),
            data.get("noise"),
        )


@dataclass(frozen=True)
class ReconstructionMap:
    """Diagonal inverse shadow channel: P_a -> inverse_coeffs[a] P_a."""

    n: int
    inverse_coeffs: np.ndarray

    def __getitem__(self, a: PauliLabel | int) -> float:
        return float(self.inverse_coeffs[a.index if isinstance(a, PauliLabel) else a])

    def apply_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs) * self.inverse_coeffs

    def apply(self, mat: np.ndarray) -> np.ndarray:
        return from_pauli_coefficients(self.apply_coefficients(pauli_coefficients(mat)), self.n)


@dataclass(frozen=True)
class EstimateReport:
    value: float
    stderr: float
    shots_used: int
    strategy: str = "mean"
    batches: int | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "shots_used": self.shots_used,
            "strategy": self.strategy,
            "batches": self.batches,
        }


# -- snapshot collection ------------------------------------------------------


def _chunks(total: int, size: int = CHUNK) -> list[tuple[int, int]]:
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


def _run_chunks(fn, total: int, threads: int) -> list:
    spans = _chunks(total)
    if threads <= 1 or len(spans) == 1:
        return [fn(lo, hi) for lo, hi in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda span: fn(*span), spans))


def born_outcome_probs(rho: np.ndarray, unitaries: np.ndarray, noise: QuantumChannel | None = None) -> np.ndarray:
    """diag of (Lambda)[U rho U^dagger] for a stack of unitaries."""
    evolved = unitaries @ rho @ unitaries.conj().transpose(0, 2, 1)
    if noise is not None:
        evolved = apply_channel(evolved, noise)
    probs = np.einsum("bii->bi", evolved).real
    return np.clip(probs, 0.0, None)


def collect_snapshots(
    rho: np.ndarray,
    spec: EnsembleSpec,
    shots: int,
    seed: int,
    noise: QuantumChannel | None = None,
    threads: int = 1,
) -> SnapshotSet:
    """Run ``shots`` rounds: U ~ P(U), then b ~ Born rule on (Lambda of) U rho U^dagger.

    Shot ``i`` uses its own substream, first for the draw and then for one
    uniform that selects the outcome, so results do not depend on ``threads``.
    """
    rho = np.asarray(rho, dtype=complex)
    if shots < 1:
        raise ValueError("shots must be at least 1")
    if rho.shape != (1 << spec.n, 1 << spec.n):
        raise ValueError(f"dimension mismatch: state {rho.shape} vs {spec.n}-qubit ensemble")
    if noise is not None and noise.n != spec.n:
        raise ValueError("noise channel acts on a different number of qubits")

    def work(lo: int, hi: int) -> list[Snapshot]:
        draws, us = [], []
        for i in range(lo, hi):
            rng = shot_rng(seed, i)
            draws.append(sample(spec, rng))
            us.append(rng.random())
        probs = born_outcome_probs(rho, realize_many(draws, spec), noise)
        return [Snapshot(d, sample_index(p, u)) for d, p, u in zip(draws, probs, us)]

    parts = _run_chunks(work, shots, threads)
    snaps = [s for part in parts for s in part]
    return SnapshotSet(spec, seed, snaps, None if noise is None else noise.tag)


def snapshot_states(snapshots: Sequence[Snapshot], spec: EnsembleSpec | None = None) -> np.ndarray:
    """Rows U^dagger |b> for each snapshot, i.e. conj(U[b, :])."""
    out = []
    for lo, hi in _chunks(len(snapshots)):
        part = snapshots[lo:hi]
        U = realize_many([s.draw for s in part], spec)
        b = np.array([s.outcome for s in part])
        out.append(U[np.arange(len(part)), b].conj())
    return np.concatenate(out)


def realize_snapshot(s: Snapshot, spec: EnsembleSpec | None = None) -> np.ndarray:
    """Dense sigma_hat = U^dagger |b><b| U."""
    check_dense(s.n)
    psi = snapshot_states([s], spec)[0]
    return np.outer(psi, psi.conj())


# -- W tables -----------------------------------------------------------------


def _w_per_unitary(unitaries: np.ndarray, weights_b: np.ndarray | None = None) -> np.ndarray:
    """(1/2^n) sum_b Tr(sigma_hat P_a)^2 [times weights_b[b]] for each unitary."""
    m, d, _ = unitaries.shape
    psi = unitaries.conj().reshape(m * d, d)  # row b of U, conjugated
    t = pure_pauli_expectations(psi).reshape(m, d, -1)
    sq = t * t
    if weights_b is not None:
        sq = sq * weights_b[None, :, None]
    return sq.mean(axis=1)


def w_from_unitaries(unitaries: np.ndarray, probs: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """W averaged over a stack of unitaries with E_b uniform.

    With ``probs`` the average is the exact weighted sum and no stderr is
    returned; otherwise the unitaries are treated as i.i.d. samples.
    """
    per = np.concatenate([_w_per_unitary(unitaries[lo:hi]) for lo, hi in _chunks(len(unitaries))])
    if probs is not None:
        return probs @ per, None
    m = len(per)
    mean = per.mean(axis=0)
    stderr = per.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros_like(mean)
    return mean, stderr


def _fix_identity(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float)
    values[0] = 1.0
    return values


def compute_W_exact(spec: EnsembleSpec) -> WTable:
    """W[a] = E_b E_U Tr(sigma_hat P_a)^2 by full enumeration."""
    if not spec.enumerable():
        raise NotEnumerableError(f"ensemble {spec.name} on {spec.n} qubits is not enumerable")
    check_dense(spec.n)
    mats, probs = enumerated_unitaries(spec)
    values, _ = w_from_unitaries(mats, probs)
    return WTable(spec.n, _fix_identity(values), None, "exact", None, spec.to_dict())


def estimate_W_monte_carlo(
    spec: EnsembleSpec,
    unitary_samples: int,
    seed: int,
    b_mode: str = "exact_average",
    threads: int = 1,
) -> WTable:
    """Monte Carlo W with per-entry stderr.

    ``exact_average`` sums all 2^n outcomes for each sampled U; ``sampled``
    draws a single uniform b per U instead.
    """
    if unitary_samples < 2:
        raise ValueError("need at least two samples for a standard error")
    n = spec.n
    check_dense(n)
    d = 1 << n

    def work(lo: int, hi: int) -> np.ndarray:
        draws, bs = [], []
        for i in range(lo, hi):
            rng = shot_rng(seed, i)
            draws.append(sample(spec, rng))
            bs.append(int(rng.integers(d)))
        U = realize_many(draws, spec)
        if b_mode == "exact_average":
            return _w_per_unitary(U)
        if b_mode == "sampled":
            psi = U[np.arange(len(U)), np.array(bs)].conj()
            t = pure_pauli_expectations(psi)
            return t * t
        raise ValueError(f"unknown b_mode {b_mode!r}")

    per = np.concatenate(_run_chunks(work, unitary_samples, threads))
    mean = per.mean(axis=0)
    stderr = per.std(axis=0, ddof=1) / math.sqrt(len(per))
    if b_mode == "exact_average":
        mean = _fix_identity(mean)
    return WTable(n, mean, stderr, "monte_carlo", unitary_samples, spec.to_dict())


def compute_W_noisy(spec: EnsembleSpec, noise: QuantumChannel) -> WTable:
    """W_Lambda[a] = E_b E_U Tr(sigma_hat P_a) Tr(U^dagger Lambda^dagger[|b><b|] U P_a)."""
    if not spec.enumerable():
        raise NotEnumerableError(f"ensemble {spec.name} on {spec.n} qubits is not enumerable")
    n = spec.n
    check_dense(n)
    if noise.n != n:
        raise ValueError("noise channel acts on a different number of qubits")
    d = 1 << n
    mats, probs = enumerated_unitaries(spec)
    proj = np.zeros((d, d, d), dtype=complex)
    proj[np.arange(d), np.arange(d), np.arange(d)] = 1.0
    back = apply_channel(proj, noise, adjoint=True)  # Lambda^dagger[|b><b|]
    total = np.zeros(4**n)
    for lo, hi in _chunks(len(mats), max(1, CHUNK // d)):
        U = mats[lo:hi]
        m = len(U)
        t = pure_pauli_expectations(U.conj().reshape(m * d, d)).reshape(m, d, -1)
        Ud = U.conj().transpose(0, 2, 1)
        pulled = Ud[:, None] @ back[None] @ U[:, None]  # (m, b, d, d)
        s = pauli_coefficients(pulled).real
        total += probs[lo:hi] @ (t * s).mean(axis=1)
    return WTable(n, total, None, "exact", None, spec.to_dict(), noise.tag)


def compute_W_u(spec: EnsembleSpec, noise: QuantumChannel) -> WTable:
    """W^u[a] = E_U E_b Tr(P_a sigma_hat)^2 <b|Lambda[I]|b>."""
    if not spec.enumerable():
        raise NotEnumerableError(f"ensemble {spec.name} on {spec.n} qubits is not enumerable")
    n = spec.n
    check_dense(n)
    weights = np.einsum("ii->i", noise(np.eye(1 << n, dtype=complex))).real
    mats, probs = enumerated_unitaries(spec)
    per = np.concatenate([_w_per_unitary(mats[lo:hi], weights) for lo, hi in _chunks(len(mats))])
    return WTable(n, probs @ per, None, "exact_unital_part", None, spec.to_dict(), noise.tag)


def analytic_W(spec: EnsembleSpec) -> WTable:
    """Closed-form W for the built-in ensembles that have one."""
    n = spec.n
    supp = support_masks(n)
    x, _ = label_bits(n)
    weight = np.array([int(s).bit_count() for s in supp])
    if spec.kind == PAULI_GROUP:
        values = (x == 0).astype(float)
    elif spec.kind in (LOCAL_CLIFFORD, LOCALLY_SCRAMBLED_HAAR):
        values = 3.0 ** (-weight)
    elif spec.kind == GLOBAL_CLIFFORD:
        values = np.full(4**n, 1.0 / (2**n + 1))
        values[0] = 1.0
    else:
        raise ValueError(f"no closed form for ensemble {spec.name}")
    return WTable(n, values, None, f"analytic:{spec.kind}", None, spec.to_dict())


def invert_W(w: WTable, floor: float | None = None) -> ReconstructionMap:
    """Coefficients 1/W[a]; entries at or below the floor raise NonInvertibleError.

    The default floor is 1e-12 for exact tables and max(1e-12, 3 stderr) for
    Monte Carlo tables.
    """
    if floor is None:
        floor_arr = np.full(4**w.n, EXACT_FLOOR)
        if w.stderr is not None:
            floor_arr = np.maximum(floor_arr, 3.0 * w.stderr)
    else:
        floor_arr = np.full(4**w.n, float(floor))
    bad = np.flatnonzero(w.values <= floor_arr)
    if bad.size:
        raise NonInvertibleError([PauliLabel.from_index(w.n, int(i)) for i in bad])
    return ReconstructionMap(w.n, 1.0 / w.values)


# -- estimation ---------------------------------------------------------------


def _observable_terms(O: Observable, n: int) -> tuple[list[PauliLabel], np.ndarray]:
    labels = list(O.keys())
    for a in labels:
        if a.n != n:
            raise ValueError(f"observable label {a} has {a.n} qubits, expected {n}")
    return labels, np.array([float(O[a]) for a in labels])


def per_snapshot_values(states: np.ndarray, recon: ReconstructionMap, O: Observable) -> np.ndarray:
    """o_hat for each snapshot: sum_a o_a W[a]^-1 Tr(P_a sigma_hat)."""
    n = num_qubits(states.shape[1])
    if recon.n != n:
        raise ValueError("reconstruction map and snapshots have different qubit counts")
    labels, coeffs = _observable_terms(O, n)
    if not labels:
        return np.zeros(len(states))
    t = pure_pauli_expectations(states, labels)
    inv = np.array([recon[a] for a in labels])
    if len(labels) == 1:
        return coeffs[0] * inv[0] * t[:, 0]
    return (t * (coeffs * inv)).sum(axis=1)


def snapshot_estimate(s: Snapshot, recon: ReconstructionMap, O: Observable, spec: EnsembleSpec | None = None) -> float:
    states = snapshot_states([s], spec)
    return float(per_snapshot_values(states, recon, O)[0])


def default_batches(num_observables: int = 1, delta: float = MOM_DELTA) -> int:
    return math.ceil(2.0 * math.log(2.0 * num_observables / delta))


def aggregate(values: np.ndarray, strategy: str = "mean", batches: int | None = None) -> EstimateReport:
    """Mean or median-of-means of per-snapshot values."""
    values = np.asarray(values, dtype=float)
    m = len(values)
    if m == 0:
        raise ValueError("cannot aggregate an empty snapshot set")
    if strategy == "mean":
        stderr = float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
        return EstimateReport(float(values.mean()), stderr, m, "mean", None)
    if strategy == "median_of_means":
        k = default_batches() if batches is None else int(batches)
        if k < 1 or k > m:
            raise ValueError(f"median-of-means needs 1 <= K <= shots, got K={k} for {m} shots")
        size = m // k
        means = values[: k * size].reshape(k, size).mean(axis=1)
        if k > 1:
            stderr = float(MOM_SCALE * means.std(ddof=1) / math.sqrt(k))
        else:
            stderr = float(values[:size].std(ddof=1) / math.sqrt(size)) if size > 1 else 0.0
        return EstimateReport(float(np.median(means)), stderr, k * size, "median_of_means", k)
    raise ValueError(f"unknown strategy {strategy!r}")


def estimate_observable(
    snapshots: SnapshotSet,
    recon: ReconstructionMap,
    O: Observable,
    strategy: str = "mean",
    batches: int | None = None,
) -> EstimateReport:
    if len(snapshots) == 0:
        raise ValueError("empty snapshot set")
    return aggregate(per_snapshot_values(snapshots.states(), recon, O), strategy, batches)


def average_shadow_coefficients(snapshots: SnapshotSet, recon: ReconstructionMap) -> np.ndarray:
    """Pauli coefficients Tr(rho_hat P_a) of the averaged shadow, one column mean per label."""
    t = pure_pauli_expectations(snapshots.states())
    vals = np.ascontiguousarray((t * recon.inverse_coeffs).T)
    return np.array([row.mean() for row in vals])


def average_shadow_estimate(snapshots: SnapshotSet, recon: ReconstructionMap) -> np.ndarray:
    """(1/m) sum_i M^-1[sigma_hat_i] as a dense matrix."""
    check_dense(snapshots.n)
    rho = from_pauli_coefficients(average_shadow_coefficients(snapshots, recon), snapshots.n)
    return (rho + rho.conj().T) / 2


# -- exact (enumerated) reconstruction ---------------------------------------


def exact_reconstruction(
    rho: np.ndarray,
    spec: EnsembleSpec,
    recon: ReconstructionMap,
    noise: QuantumChannel | None = None,
) -> np.ndarray:
    """sum_{U,b} P(U) P(b|U) M^-1[sigma_hat] by enumeration; equals rho when unbiased."""
    mats, probs = enumerated_unitaries(spec)
    n = spec.n
    d = 1 << n
    coeffs = np.zeros(4**n)
    for lo, hi in _chunks(len(mats), max(1, CHUNK // d)):
        U = mats[lo:hi]
        m = len(U)
        pb = born_outcome_probs(rho, U, noise)  # (m, d)
        t = pure_pauli_expectations(U.conj().reshape(m * d, d)).reshape(m, d, -1)
        coeffs += np.einsum("u,ub,uba->a", probs[lo:hi], pb, t)
    return from_pauli_coefficients(recon.apply_coefficients(coeffs), n)

