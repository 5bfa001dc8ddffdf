"""Shadow process tomography: channel snapshots, Choi-state reconstruction, Pauli eigenvalues.

Each round prepares ``U_i^dagger |b_in>`` for uniform ``b_in`` and ``U_i`` from the
input ensemble, sends it through the channel, applies ``U_o`` from the output
ensemble and measures ``b_out``.  The snapshot is the product state
``sigma_i (x) sigma_o`` with ``sigma_i = U_i^T |b_in><b_in| U_i^*`` (the transpose
of the prepared state) and ``sigma_o = U_o^dagger |b_out><b_out| U_o``.

Dense two-leg objects use kron(input, output) ordering and the Choi state
``J = 2^-n sum_ij |i><j| (x) T(|i><j|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import (
    CHUNK,
    EXACT_FLOOR,
    EstimateReport,
    NonInvertibleError,
    Observable,
    WTable,
    _chunks,
    _run_chunks,
    aggregate,
    invert_W,
    shot_rng,
)
from .ensembles import EnsembleSpec, UnitaryDraw, enumerated_unitaries, realize_many, sample
from .pauli import (
    PauliLabel,
    all_labels,
    check_dense,
    inverse_symplectic_fourier,
    label_bits,
    popcount,
    symplectic_fourier,
)
from .sim import (
    QuantumChannel,
    apply_channel,
    from_pauli_coefficients,
    int_to_bits,
    pauli_coefficients,
    pure_pauli_expectations,
    sample_index,
)


@dataclass(frozen=True)
class ChannelSnapshot:
    b_in: int
    draw_in: UnitaryDraw
    draw_out: UnitaryDraw
    b_out: int

    @property
    def n(self) -> int:
        return self.draw_in.n

    def to_dict(self) -> dict:
        return {
            "b_in": int_to_bits(self.b_in, self.n),
            "draw_in": self.draw_in.to_dict(),
            "draw_out": self.draw_out.to_dict(),
            "b_out": int_to_bits(self.b_out, self.n),
        }


@dataclass
class ChannelSnapshotSet:
    spec_in: EnsembleSpec
    spec_out: EnsembleSpec
    seed: int
    snapshots: list[ChannelSnapshot]
    channel_tag: str | None = None
    _states: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.spec_in.n != self.spec_out.n:
            raise ValueError("input and output ensembles act on different qubit counts")

    @property
    def n(self) -> int:
        return self.spec_in.n

    def __len__(self) -> int:
        return len(self.snapshots)

    def states(self) -> tuple[np.ndarray, np.ndarray]:
        """(prepared states U_i^dagger|b_in>, output snapshot states U_o^dagger|b_out>)."""
        if self._states is None:
            self._states = _leg_states(self.snapshots, self.spec_in, self.spec_out)
        return self._states


@dataclass(frozen=True)
class ChannelWTable:
    w_in: WTable
    w_out: WTable

    def __post_init__(self):
        if self.w_in.n != self.w_out.n:
            raise ValueError("input and output W tables have different qubit counts")

    @property
    def n(self) -> int:
        return self.w_in.n


@dataclass(frozen=True)
class ChannelReconstruction:
    """Coefficients W_in[a]^-1 W_out[c]^-1 for P_a (x) P_c, as a (4^n, 4^n) array."""

    n: int
    inv_in: np.ndarray
    inv_out: np.ndarray

    @property
    def coefficients(self) -> np.ndarray:
        return np.outer(self.inv_in, self.inv_out)

    def __getitem__(self, pair: tuple[PauliLabel, PauliLabel]) -> float:
        a, c = pair
        return float(self.inv_in[a.index] * self.inv_out[c.index])


@dataclass(frozen=True)
class PauliChannelSpectrum:
    n: int
    labels: tuple[PauliLabel, ...]
    lambdas: np.ndarray
    stderr: np.ndarray | None = None

    def __getitem__(self, b: PauliLabel) -> float:
        return float(self.lambdas[self.labels.index(b)])

    def probabilities(self) -> np.ndarray:
        """Pauli error probabilities from a complete spectrum (inverse Fourier relation)."""
        if len(self.labels) != 4**self.n or any(a.index != i for i, a in enumerate(self.labels)):
            raise ValueError("need the full spectrum in canonical order")
        return symplectic_fourier(self.lambdas)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "labels": [str(a) for a in self.labels],
            "lambda": self.lambdas.tolist(),
            "stderr": None if self.stderr is None else self.stderr.tolist(),
        }


def _num_y(n: int) -> np.ndarray:
    x, z = label_bits(n)
    return popcount(x & z)


def transpose_signs(n: int) -> np.ndarray:
    """(-1)^{#Y(a)}, so that P_a^T = sign[a] P_a."""
    return 1.0 - 2.0 * (_num_y(n) & 1)


# -- collection ---------------------------------------------------------------


def channel_outcome_probs(
    T: QuantumChannel, U_in: np.ndarray, b_in: np.ndarray, U_out: np.ndarray
) -> np.ndarray:
    """P(b_out | b_in, U_i, U_o) for stacks of draws, shape (m, 2^n)."""
    psi = U_in[np.arange(len(U_in)), b_in].conj()  # U_i^dagger |b_in>
    rho_in = psi[:, :, None] * psi[:, None, :].conj()
    out = apply_channel(rho_in, T)
    out = U_out @ out @ U_out.conj().transpose(0, 2, 1)
    return np.clip(np.einsum("bii->bi", out).real, 0.0, None)


def collect_channel_snapshots(
    T: QuantumChannel,
    spec_in: EnsembleSpec,
    spec_out: EnsembleSpec,
    shots: int,
    seed: int,
    threads: int = 1,
) -> ChannelSnapshotSet:
    """Simulate ``shots`` rounds; shot ``i`` draws b_in, U_i, U_o, then one outcome uniform."""
    n = spec_in.n
    if spec_out.n != n or T.n != n:
        raise ValueError("channel, input and output ensembles must act on the same qubits")
    if shots < 1:
        raise ValueError("shots must be at least 1")
    d = 1 << n

    def work(lo: int, hi: int) -> list[ChannelSnapshot]:
        rows = []
        for i in range(lo, hi):
            rng = shot_rng(seed, i)
            b_in = int(rng.integers(d))
            rows.append((b_in, sample(spec_in, rng), sample(spec_out, rng), rng.random()))
        U_in = realize_many([r[1] for r in rows], spec_in)
        U_out = realize_many([r[2] for r in rows], spec_out)
        probs = channel_outcome_probs(T, U_in, np.array([r[0] for r in rows]), U_out)
        return [ChannelSnapshot(r[0], r[1], r[2], sample_index(p, r[3])) for r, p in zip(rows, probs)]

    snaps = [s for part in _run_chunks(work, shots, threads) for s in part]
    return ChannelSnapshotSet(spec_in, spec_out, seed, snaps, T.tag)


def _leg_states(snaps: Sequence[ChannelSnapshot], spec_in: EnsembleSpec, spec_out: EnsembleSpec):
    ins, outs = [], []
    for lo, hi in _chunks(len(snaps)):
        part = snaps[lo:hi]
        idx = np.arange(len(part))
        U_in = realize_many([s.draw_in for s in part], spec_in)
        U_out = realize_many([s.draw_out for s in part], spec_out)
        ins.append(U_in[idx, np.array([s.b_in for s in part])].conj())
        outs.append(U_out[idx, np.array([s.b_out for s in part])].conj())
    return np.concatenate(ins), np.concatenate(outs)


def realize_channel_snapshot(
    cs: ChannelSnapshot, spec_in: EnsembleSpec | None = None, spec_out: EnsembleSpec | None = None
) -> np.ndarray:
    """Dense sigma_i (x) sigma_o on 2n qubits."""
    check_dense(2 * cs.n)
    psi_in, psi_out = _leg_states([cs], spec_in, spec_out)
    sigma_in = np.outer(psi_in[0], psi_in[0].conj()).T
    sigma_out = np.outer(psi_out[0], psi_out[0].conj())
    return np.kron(sigma_in, sigma_out)


# -- reconstruction and estimation --------------------------------------------


def channel_reconstruction(cw: ChannelWTable, floor: float | None = None) -> ChannelReconstruction:
    """Product inverse W_in[a]^-1 W_out[c]^-1; any failing leg makes its pairs non-invertible."""
    bad_in = bad_out = []
    try:
        inv_in = invert_W(cw.w_in, floor).inverse_coeffs
    except NonInvertibleError as err:
        bad_in = err.labels
    try:
        inv_out = invert_W(cw.w_out, floor).inverse_coeffs
    except NonInvertibleError as err:
        bad_out = err.labels
    if bad_in or bad_out:
        n = cw.n
        every = all_labels(n)
        pairs = [(a, c) for a in bad_in for c in every] + [(a, c) for a in every for c in bad_out if a not in bad_in]
        raise NonInvertibleError(
            [f"({a},{c})" for a, c in pairs],
            f"channel reconstruction is not invertible at {len(pairs)} label pair(s); "
            f"input legs {[str(a) for a in bad_in]}, output legs {[str(c) for c in bad_out]}",
        )
    return ChannelReconstruction(cw.n, inv_in, inv_out)


def channel_snapshot_values(
    snapshots: ChannelSnapshotSet, recon: ChannelReconstruction, rho: np.ndarray, O: Observable
) -> np.ndarray:
    """Per-snapshot estimates of Tr(T[rho] O).

    This is 2^n Tr(M^-1[sigma] rho^T (x) O), so that a trace-preserving
    channel with O = I gives 1 on average.
    """
    n = snapshots.n
    psi_in, psi_out = snapshots.states()
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (1 << n, 1 << n):
        raise ValueError("input state dimension does not match the snapshots")
    r = pauli_coefficients(rho).real
    in_idx = np.flatnonzero(np.abs(r) > 0)
    in_labels = [PauliLabel.from_index(n, int(i)) for i in in_idx]
    # Tr(P_a rho^T) sigma_i coefficient: the transpose signs cancel, leaving the prepared-state coefficient
    left = pure_pauli_expectations(psi_in, in_labels) @ (recon.inv_in[in_idx] * r[in_idx])
    out_labels = list(O.keys())
    coeffs = np.array([O[c] for c in out_labels], dtype=float)
    out_inv = np.array([recon.inv_out[c.index] for c in out_labels])
    right = pure_pauli_expectations(psi_out, out_labels) @ (out_inv * coeffs)
    return left * right


def estimate_channel_observable(
    snapshots: ChannelSnapshotSet,
    recon: ChannelReconstruction,
    rho: np.ndarray,
    O: Observable,
    strategy: str = "mean",
    batches: int | None = None,
) -> EstimateReport:
    if len(snapshots) == 0:
        raise ValueError("empty snapshot set")
    return aggregate(channel_snapshot_values(snapshots, recon, rho, O), strategy, batches)


def eigenvalue_snapshot_values(
    snapshots: ChannelSnapshotSet, recon: ChannelReconstruction, labels: Sequence[PauliLabel]
) -> np.ndarray:
    """Per-snapshot lambda_b estimates, shape (shots, len(labels)).

    The estimator of Tr(J P_b^T (x) P_b) equals W_in[b]^-1 W_out[b]^-1 times the
    prepared-state and output coefficients of P_b.
    """
    psi_in, psi_out = snapshots.states()
    idx = np.array([b.index for b in labels])
    scale = recon.inv_in[idx] * recon.inv_out[idx]
    return pure_pauli_expectations(psi_in, labels) * pure_pauli_expectations(psi_out, labels) * scale


def estimate_pauli_eigenvalues(
    snapshots: ChannelSnapshotSet,
    recon: ChannelReconstruction,
    labels: Sequence[PauliLabel] | None = None,
    strategy: str = "mean",
    batches: int | None = None,
) -> PauliChannelSpectrum:
    n = snapshots.n
    labels = tuple(all_labels(n) if labels is None else labels)
    if len(snapshots) == 0:
        raise ValueError("empty snapshot set")
    vals = eigenvalue_snapshot_values(snapshots, recon, labels)
    reports = [aggregate(vals[:, k], strategy, batches) for k in range(len(labels))]
    return PauliChannelSpectrum(
        n, labels, np.array([r.value for r in reports]), np.array([r.stderr for r in reports])
    )


def pauli_eigenvalues(probs: np.ndarray) -> np.ndarray:
    """lambda_b = sum_a p_a (-1)^<a,b> for a Pauli channel with error probabilities p."""
    return inverse_symplectic_fourier(probs)


# -- norms and bounds ---------------------------------------------------------


def channel_shadow_norm(cw: ChannelWTable, rho: np.ndarray, a: PauliLabel, floor: float = EXACT_FLOOR) -> float:
    """W_out[a]^-1 4^-n sum_{a_i} W_in[a_i]^-1 |Tr(rho P_{a_i})|^2.

    This is E[raw^2] for the unscaled estimator Tr(M^-1[sigma] rho^T (x) P_a).
    """
    n = cw.n
    r = pauli_coefficients(np.asarray(rho, dtype=complex)).real
    w_rho = r * r
    idx = np.flatnonzero(w_rho > 0)
    bad = [PauliLabel.from_index(n, int(i)) for i in idx if cw.w_in.values[i] <= floor]
    if cw.w_out[a] <= floor:
        bad.append(a)
    if bad:
        raise NonInvertibleError(bad)
    return float(np.sum(w_rho[idx] / cw.w_in.values[idx]) / 4**n / cw.w_out[a])


def pauli_channel_sample_bound(
    cw: ChannelWTable, eps: float, delta: float, exclude_identity: bool = False, floor: float = EXACT_FLOOR
) -> int:
    """ceil((n ln 2 + ln(1/delta)) / eps^2 * max_b W_out[b]^-1 W_in[b]^-1), constant 1."""
    if not 0 < eps < 1 or not 0 < delta < 1:
        raise ValueError("eps and delta must lie in (0, 1)")
    recon = channel_reconstruction(cw, floor)
    prod = recon.inv_in * recon.inv_out
    if exclude_identity:
        prod = prod[1:]
    worst = float(prod.max())
    return math.ceil(round((cw.n * math.log(2) + math.log(1 / delta)) / eps**2 * worst, 9))


# -- exact (enumerated) checks -------------------------------------------------


def choi_from_enumeration(
    T: QuantumChannel, spec_in: EnsembleSpec, spec_out: EnsembleSpec, recon: ChannelReconstruction
) -> np.ndarray:
    """sum over (b_in, U_i, U_o, b_out) of P * M^-1[sigma_i (x) sigma_o]; equals J(T) when unbiased."""
    n = spec_in.n
    d = 1 << n
    check_dense(2 * n)
    mats_in, p_in = enumerated_unitaries(spec_in)
    mats_out, p_out = enumerated_unitaries(spec_out)
    sign = transpose_signs(n)
    # output-leg coefficients for every (U_o, b_out): (m_out, d, 4^n)
    t_out = pure_pauli_expectations(mats_out.conj().reshape(len(mats_out) * d, d)).reshape(len(mats_out), d, -1)
    total = np.zeros((4**n, 4**n))
    for b_in in range(d):
        for lo, hi in _chunks(len(mats_in), max(1, CHUNK // d)):
            U_in = mats_in[lo:hi]
            psi = U_in[:, b_in].conj()
            t_in = pure_pauli_expectations(psi) * sign  # coefficients of sigma_i = prepared^T
            rho_in = psi[:, :, None] * psi[:, None, :].conj()
            out = apply_channel(rho_in, T)  # (m_in, d, d)
            # P(b_out | ...) = <b_out| U_o T(.) U_o^dagger |b_out> for every U_o
            probs = np.einsum("obi,mij,obj->mob", mats_out, out, mats_out.conj()).real
            weighted = np.einsum("m,o,mob,obc->mc", p_in[lo:hi], p_out, probs, t_out)
            total += t_in.T @ weighted / d
    coeffs = total * recon.coefficients
    return from_pauli_coefficients(coeffs.ravel(), 2 * n)
