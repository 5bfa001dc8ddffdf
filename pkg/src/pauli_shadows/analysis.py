"""Shadow norms, sample-complexity bounds, entanglement features and support-resolved maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .engine import (
    CHUNK,
    EXACT_FLOOR,
    EstimateReport,
    NonInvertibleError,
    Observable,
    ReconstructionMap,
    WTable,
    aggregate,
    collect_snapshots,
    per_snapshot_values,
    shot_rng,
)
from .ensembles import EnsembleSpec, NotEnumerableError, enumerated_unitaries, realize_many, sample
from .pauli import PauliLabel, check_dense, check_mask, subset_moebius_sum, support_masks
from .sim import QuantumChannel, num_qubits, pauli_coefficients, partial_trace, pure_purities

IMAG_TOL = 1e-10


# -- observables --------------------------------------------------------------


def observable_from_matrix(H: np.ndarray, tol: float = IMAG_TOL) -> dict[PauliLabel, float]:
    """Project a Hermitian matrix onto real Pauli coefficients O = sum_a o_a P_a."""
    H = np.asarray(H, dtype=complex)
    n = num_qubits(H.shape[0])
    c = pauli_coefficients(H) / (1 << n)
    if np.max(np.abs(c.imag), initial=0.0) > tol:
        raise ValueError("matrix is not Hermitian within tolerance")
    return {PauliLabel.from_index(n, int(i)): float(c.real[i]) for i in np.flatnonzero(c.real)}


def observable_weights(O: Observable, n: int) -> np.ndarray:
    """W_O[a] = |Tr(O P_a)|^2 = (2^n o_a)^2 over all labels."""
    out = np.zeros(4**n)
    for a, c in O.items():
        if a.n != n:
            raise ValueError(f"observable label {a} has {a.n} qubits, expected {n}")
        out[a.index] += c
    return (out * (1 << n)) ** 2


def traceless_part(O: Observable) -> dict[PauliLabel, float]:
    return {a: c for a, c in O.items() if not a.is_identity()}


# -- noiseless and noisy shadow norms -----------------------------------------


def _require(w: WTable, idx: np.ndarray, floor: float) -> None:
    bad = idx[w.values[idx] <= floor]
    if bad.size:
        raise NonInvertibleError([PauliLabel.from_index(w.n, int(i)) for i in bad])


def shadow_norm_pauli(w: WTable, a: PauliLabel, floor: float = EXACT_FLOOR) -> float:
    """||P_a||^2 = 1 / W[a]."""
    _require(w, np.array([a.index]), floor)
    return 1.0 / w[a]


def average_shadow_norm(w: WTable, O: Observable, floor: float = EXACT_FLOOR) -> float:
    """4^-n sum_a W_O[a] / W[a], skipping labels where W_O[a] = 0."""
    wo = observable_weights(O, w.n)
    idx = np.flatnonzero(wo)
    _require(w, idx, floor)
    return float(np.sum(wo[idx] / w.values[idx]) / 4**w.n)


def noisy_shadow_norm_pauli(w_noisy: WTable, w_u: WTable, a: PauliLabel, floor: float = EXACT_FLOOR) -> float:
    """||P_a||^2 under noise = W^u[a] / W_Lambda[a]^2."""
    _require(w_noisy, np.array([a.index]), floor)
    return w_u[a] / w_noisy[a] ** 2


def noisy_average_shadow_norm(w_noisy: WTable, w_u: WTable, O: Observable, floor: float = EXACT_FLOOR) -> float:
    """4^-n sum_a W^u[a] W_O[a] / W_Lambda[a]^2."""
    n = w_noisy.n
    wo = observable_weights(O, n)
    idx = np.flatnonzero(wo)
    _require(w_noisy, idx, floor)
    return float(np.sum(w_u.values[idx] * wo[idx] / w_noisy.values[idx] ** 2) / 4**n)


def empirical_shadow_norm(
    spec: EnsembleSpec,
    recon: ReconstructionMap,
    O: Observable,
    rho: np.ndarray,
    samples: int,
    seed: int,
    noise: QuantumChannel | None = None,
) -> EstimateReport:
    """Monte Carlo E[o_hat^2] under P(U, b) (optionally with noise before measurement)."""
    snaps = collect_snapshots(rho, spec, samples, seed, noise)
    values = per_snapshot_values(snaps.states(), recon, O)
    return aggregate(values * values)


def sample_complexity_bound(max_sq_norm: float, N: int, eps: float, delta: float) -> int:
    """ceil(ln(N / delta) / eps^2 * max_sq_norm), with the leading constant set to 1."""
    if not 0 < eps < 1 or not 0 < delta < 1:
        raise ValueError("eps and delta must lie in (0, 1)")
    if N < 1 or max_sq_norm < 0:
        raise ValueError("need N >= 1 and a nonnegative norm")
    # rounding guards against ceil(300.00000000000006) = 301
    return math.ceil(round(math.log(N / delta) / eps**2 * max_sq_norm, 9))


# -- entanglement features and support sums -----------------------------------


def _mask_key(mask: int) -> str:
    return str(mask)


@dataclass(frozen=True)
class EntanglementFeatureTable:
    """E[A] = average Renyi-2 purity of the snapshot states on qubit subset A."""

    n: int
    values: Mapping[int, float]
    stderr: Mapping[int, float] | None = None

    def __getitem__(self, A: int) -> float:
        return self.values[A]

    def to_dict(self) -> dict:
        out = {"n": self.n, "values": {_mask_key(A): v for A, v in sorted(self.values.items())}}
        if self.stderr is not None:
            out["stderr"] = {_mask_key(A): v for A, v in sorted(self.stderr.items())}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> EntanglementFeatureTable:
        stderr = data.get("stderr")
        return cls(
            int(data["n"]),
            {int(k): float(v) for k, v in data["values"].items()},
            None if stderr is None else {int(k): float(v) for k, v in stderr.items()},
        )


def _purity_table(psi: np.ndarray, n: int) -> np.ndarray:
    """(states, 2^n) array of purities on every subset."""
    out = np.empty((len(psi), 1 << n))
    for A in range(1 << n):
        out[:, A] = pure_purities(psi, A)
    return out


def entanglement_features(
    spec: EnsembleSpec,
    mode: str = "exact",
    samples: int = 10_000,
    seed: int = 0,
) -> EntanglementFeatureTable:
    """E[A] with the outcome b averaged uniformly, by enumeration or Monte Carlo."""
    n = spec.n
    check_dense(n)
    d = 1 << n
    if mode == "exact":
        if not spec.enumerable():
            raise NotEnumerableError(f"ensemble {spec.name} on {n} qubits is not enumerable")
        mats, probs = enumerated_unitaries(spec)
        total = np.zeros(d)
        for lo in range(0, len(mats), CHUNK):
            U = mats[lo : lo + CHUNK]
            per = _purity_table(U.conj().reshape(len(U) * d, d), n).reshape(len(U), d, d).mean(axis=1)
            total += probs[lo : lo + CHUNK] @ per
        total[0] = 1.0
        return EntanglementFeatureTable(n, {A: float(total[A]) for A in range(d)})
    if mode == "monte_carlo":
        if samples < 2:
            raise ValueError("need at least two samples")
        draws = [sample(spec, shot_rng(seed, i)) for i in range(samples)]
        per = []
        for lo in range(0, samples, CHUNK):
            U = realize_many(draws[lo : lo + CHUNK], spec)
            per.append(_purity_table(U.conj().reshape(len(U) * d, d), n).reshape(len(U), d, d).mean(axis=1))
        per = np.concatenate(per)
        mean = per.mean(axis=0)
        mean[0] = 1.0
        err = per.std(axis=0, ddof=1) / math.sqrt(samples)
        return EntanglementFeatureTable(n, {A: float(mean[A]) for A in range(d)}, {A: float(err[A]) for A in range(d)})
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class SupportWTable:
    """W summed (``w_sum``) and averaged (``w_bar``) over labels of each support."""

    n: int
    w_bar: Mapping[int, float]
    w_sum: Mapping[int, float]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "w_bar": {_mask_key(S): v for S, v in sorted(self.w_bar.items())},
            "w_sum": {_mask_key(S): v for S, v in sorted(self.w_sum.items())},
        }


def w_support_sums(w: WTable) -> SupportWTable:
    n = w.n
    supp = support_masks(n)
    sums = np.bincount(supp, weights=w.values, minlength=1 << n)
    w_sum = {S: float(sums[S]) for S in range(1 << n)}
    w_bar = {S: float(sums[S] / 3 ** S.bit_count()) for S in range(1 << n)}
    return SupportWTable(n, w_bar, w_sum)


def w_from_entanglement_features(ef: EntanglementFeatureTable) -> dict[int, float]:
    """W[S] = (-1)^|S| sum_{A subset S} (-2)^|A| E[A]."""
    out = {}
    for S in range(1 << ef.n):
        total = subset_moebius_sum(lambda A: (-2.0) ** A.bit_count() * ef[A], S, signed=False)
        out[S] = (-1) ** S.bit_count() * total
    return out


def support_table_from_sums(n: int, w_sum: Mapping[int, float]) -> SupportWTable:
    return SupportWTable(n, {S: w_sum[S] / 3 ** S.bit_count() for S in w_sum}, dict(w_sum))


@dataclass(frozen=True)
class FlatnessReport:
    passed: bool
    max_spread: float
    spreads: Mapping[int, float]


def flatness_check(w: WTable, tol: float = 1e-10) -> FlatnessReport:
    """Spread max - min of W over the labels of each support set."""
    supp = support_masks(w.n)
    spreads = {}
    for S in range(1 << w.n):
        vals = w.values[supp == S]
        spreads[S] = float(vals.max() - vals.min())
    worst = max(spreads.values())
    return FlatnessReport(worst <= tol, worst, spreads)


# -- r_S representation of the reconstruction map -----------------------------


@dataclass(frozen=True)
class RCoefficients:
    n: int
    values: Mapping[int, float]

    def __getitem__(self, S: int) -> float:
        return self.values[S]

    def to_dict(self) -> dict:
        return {"n": self.n, "values": {_mask_key(S): v for S, v in sorted(self.values.items())}}


def r_coefficients(sw: SupportWTable, floor: float = EXACT_FLOOR) -> RCoefficients:
    """r_S = sum_{A subset S} (-1)^{|S|-|A|} / W_bar[A^c]."""
    n = sw.n
    full = (1 << n) - 1
    bad = [S for S in range(1 << n) if sw.w_bar[S] <= floor]
    if bad:
        raise NonInvertibleError([f"support {S}" for S in bad])
    inv = {A: 1.0 / sw.w_bar[full ^ A] for A in range(1 << n)}
    return RCoefficients(n, {S: subset_moebius_sum(inv, S) for S in range(1 << n)})


def r_from_entanglement_features(ef: EntanglementFeatureTable, floor: float = EXACT_FLOOR) -> RCoefficients:
    """r_S = (-1)^{n+|S|} sum_{A subset S} 3^|A^c| / [sum_{B subset A^c} (-2)^|B| E[B]]."""
    n = ef.n
    full = (1 << n) - 1
    for A in range(1 << n):
        if A not in ef.values:
            raise KeyError(f"entanglement feature table is missing subset {A}")
    inner = {}
    for A in range(1 << n):
        comp = full ^ A
        s = subset_moebius_sum(lambda B: (-2.0) ** B.bit_count() * ef[B], comp, signed=False)
        # s = (-1)^|A^c| W[A^c] has sign (-1)^|A^c|, so the floor applies to |s|
        if abs(s) <= floor:
            raise NonInvertibleError([f"support {comp}"])
        inner[A] = 3.0 ** comp.bit_count() / s
    values = {}
    for S in range(1 << n):
        values[S] = (-1) ** (n + S.bit_count()) * subset_moebius_sum(inner, S, signed=False)
    return RCoefficients(n, values)


def erase(rho: np.ndarray, S: int, n: int) -> np.ndarray:
    """D^S[rho]: trace out the qubits in S and replace them by I/2 each."""
    check_mask(n, S)
    keep = ((1 << n) - 1) ^ S
    red = partial_trace(rho, keep, n)
    k = keep.bit_count()
    kept_axes = [i for i in range(n) if keep >> (n - 1 - i) & 1]
    operands = [red.reshape((2,) * (2 * k)), kept_axes + [n + i for i in kept_axes]]
    half_eye = np.eye(2) / 2
    for i in range(n):
        if S >> (n - 1 - i) & 1:
            operands += [half_eye, [i, n + i]]
    out = np.einsum(*operands, list(range(2 * n)))
    return out.reshape(1 << n, 1 << n)


def apply_rs_map(rc: RCoefficients, sigma: np.ndarray) -> np.ndarray:
    """sum_S r_S D^S[sigma]."""
    n = rc.n
    check_dense(n)
    sigma = np.asarray(sigma, dtype=complex)
    out = np.zeros_like(sigma)
    for S in range(1 << n):
        out += rc[S] * erase(sigma, S, n)
    return out


def avg_shadow_norm_locally_scrambled(sw: SupportWTable, O: Observable, floor: float = EXACT_FLOOR) -> float:
    """4^-n sum_S W_O[S] / W_bar[S], with W_O[S] summed over labels of support S."""
    n = sw.n
    wo = np.bincount(support_masks(n), weights=observable_weights(O, n), minlength=1 << n)
    total = 0.0
    bad = []
    for S in range(1 << n):
        if wo[S] == 0:
            continue
        if sw.w_bar[S] <= floor:
            bad.append(f"support {S}")
            continue
        total += wo[S] / sw.w_bar[S]
    if bad:
        raise NonInvertibleError(bad)
    return total / 4**n


def local_clifford_r(n: int) -> dict[int, float]:
    """Closed form r_S = 3^{n-|S|} (-2)^|S| for the local Clifford ensemble."""
    return {S: 3.0 ** (n - S.bit_count()) * (-2.0) ** S.bit_count() for S in range(1 << n)}

