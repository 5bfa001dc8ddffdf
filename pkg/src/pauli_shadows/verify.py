"""Named self-check suites run by ``pauli-shadows verify`` (all at n <= 2)."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analysis, channel, engine
from .ensembles import (
    GLOBAL_CLIFFORD,
    LOCAL_CLIFFORD,
    PAULI_GROUP,
    EnsembleSpec,
    check_pauli_invariance,
    realize,
    sample,
)
from .pauli import (
    PhasedPauli,
    all_labels,
    dense_matrix,
    inverse_symplectic_fourier,
    pauli_compose,
    symplectic_fourier,
)
from .sim import (
    amplitude_damping_channel,
    bit_flip_channel,
    choi_state,
    depolarizing_channel,
    identity_channel,
    pauli_channel,
    random_density_matrix,
)

TOL = 1e-10


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_error: float
    seconds: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "max_error": self.max_error,
            "seconds": round(self.seconds, 3),
            "detail": self.detail,
        }


def _enumerable_specs(max_n: int = 2) -> list[EnsembleSpec]:
    return [EnsembleSpec(n, kind) for n in range(1, max_n + 1) for kind in (PAULI_GROUP, LOCAL_CLIFFORD, GLOBAL_CLIFFORD)]


def _invertible_specs() -> list[EnsembleSpec]:
    return [s for s in _enumerable_specs() if s.kind != PAULI_GROUP]


def check_pauli_compose() -> float:
    worst = 0.0
    for a in all_labels(2):
        for b in all_labels(2):
            prod = pauli_compose(PhasedPauli(a), PhasedPauli(b))
            worst = max(worst, np.abs(dense_matrix(prod) - dense_matrix(a) @ dense_matrix(b)).max())
    return float(worst)


def check_fourier_roundtrip() -> float:
    f = np.random.default_rng(0).normal(size=16)
    return float(np.abs(inverse_symplectic_fourier(symplectic_fourier(f)) - f).max())


def check_w_known() -> float:
    worst = 0.0
    for spec in _enumerable_specs():
        exact = engine.compute_W_exact(spec)
        worst = max(worst, np.abs(exact.values - engine.analytic_W(spec).values).max())
    return float(worst)


def check_channel_identity() -> float:
    worst = 0.0
    for spec in _invertible_specs():
        w = engine.compute_W_exact(spec)
        recon = engine.invert_W(w)
        coeffs = np.random.default_rng(1).normal(size=4**spec.n)
        worst = max(worst, np.abs(recon.apply_coefficients(coeffs * w.values) - coeffs).max())
    return float(worst)


def check_unbiasedness() -> float:
    rng = np.random.default_rng(2)
    worst = 0.0
    for spec in _invertible_specs():
        recon = engine.invert_W(engine.compute_W_exact(spec))
        for _ in range(3):
            rho = random_density_matrix(spec.n, rng)
            worst = max(worst, np.abs(engine.exact_reconstruction(rho, spec, recon) - rho).max())
    return float(worst)


def check_noisy_unbiasedness() -> float:
    rng = np.random.default_rng(3)
    worst = 0.0
    for spec in _invertible_specs():
        for noise in (depolarizing_channel(0.3, spec.n), bit_flip_channel(0.2, spec.n, 0)):
            recon = engine.invert_W(engine.compute_W_noisy(spec, noise))
            rho = random_density_matrix(spec.n, rng)
            worst = max(worst, np.abs(engine.exact_reconstruction(rho, spec, recon, noise) - rho).max())
    return float(worst)


def check_depolarizing_scaling() -> float:
    worst = 0.0
    for spec in _enumerable_specs():
        w = engine.compute_W_exact(spec).values
        for p in (0.1, 0.3, 0.7):
            expected = (1 - p) * w
            expected[0] = w[0]
            got = engine.compute_W_noisy(spec, depolarizing_channel(p, spec.n)).values
            worst = max(worst, np.abs(got - expected).max())
    return float(worst)


def check_wu_unital() -> float:
    worst = 0.0
    for spec in _enumerable_specs():
        w = engine.compute_W_exact(spec).values
        for noise in (depolarizing_channel(0.4, spec.n), bit_flip_channel(0.25, spec.n, 0)):
            worst = max(worst, np.abs(engine.compute_W_u(spec, noise).values - w).max())
    return float(worst)


def check_pauli_invariance_exact() -> float:
    worst = 0.0
    for spec in _enumerable_specs():
        worst = max(worst, check_pauli_invariance(spec, "exact").max_deviation)
    return float(worst)


def check_ef_w_dual_path() -> float:
    worst = 0.0
    for spec in _enumerable_specs():
        direct = analysis.w_support_sums(engine.compute_W_exact(spec)).w_sum
        via_ef = analysis.w_from_entanglement_features(analysis.entanglement_features(spec))
        worst = max(worst, max(abs(direct[S] - via_ef[S]) for S in direct))
    return float(worst)


def check_rs_map_dual_path() -> float:
    worst = 0.0
    for spec in _invertible_specs():
        w = engine.compute_W_exact(spec)
        recon = engine.invert_W(w)
        rc = analysis.r_coefficients(analysis.w_support_sums(w))
        for a in all_labels(spec.n):
            P = dense_matrix(a)
            worst = max(worst, np.abs(analysis.apply_rs_map(rc, P) - recon[a] * P).max())
        if spec.kind == LOCAL_CLIFFORD:
            closed = analysis.local_clifford_r(spec.n)
            worst = max(worst, max(abs(rc[S] - closed[S]) for S in closed))
    return float(worst)


def check_ef_r_dual_path() -> float:
    worst = 0.0
    for spec in _invertible_specs():
        ef = analysis.entanglement_features(spec)
        direct = analysis.r_coefficients(analysis.w_support_sums(engine.compute_W_exact(spec)))
        via_ef = analysis.r_from_entanglement_features(ef)
        worst = max(worst, max(abs(direct[S] - via_ef[S]) for S in direct.values))
    return float(worst)


def check_flatness() -> float:
    worst = 0.0
    for spec in _invertible_specs():
        worst = max(worst, analysis.flatness_check(engine.compute_W_exact(spec)).max_spread)
    return float(worst)


def _channels_n1() -> list:
    probs = np.random.default_rng(4).dirichlet(np.ones(4))
    return [identity_channel(1), depolarizing_channel(0.3, 1), pauli_channel(probs, 1), amplitude_damping_channel(0.3, 1)]


def check_choi_unbiasedness() -> float:
    worst = 0.0
    for kind in (LOCAL_CLIFFORD, GLOBAL_CLIFFORD):
        spec = EnsembleSpec(1, kind)
        w = engine.compute_W_exact(spec)
        recon = channel.channel_reconstruction(channel.ChannelWTable(w, w))
        for T in _channels_n1():
            worst = max(worst, np.abs(channel.choi_from_enumeration(T, spec, spec, recon) - choi_state(T)).max())
    return float(worst)


def check_choi_normalization() -> float:
    rng = np.random.default_rng(5)
    spec = EnsembleSpec(1, LOCAL_CLIFFORD)
    worst = 0.0
    for T in _channels_n1():
        J = choi_state(T)
        for _ in range(10):
            Ui, Uo = realize(sample(spec, rng)), realize(sample(spec, rng))
            b_in = int(rng.integers(2))
            direct = channel.channel_outcome_probs(T, Ui[None], np.array([b_in]), Uo[None])[0]
            psi = Ui[b_in].conj()
            sigma_in = np.outer(psi, psi.conj()).T
            for b_out in range(2):
                phi = Uo[b_out].conj()
                via_choi = 2 * np.trace(np.kron(sigma_in, np.outer(phi, phi.conj())) @ J).real
                worst = max(worst, abs(via_choi - direct[b_out]))
            worst = max(worst, abs(direct.sum() - 1.0))
    return float(worst)


CHECKS: dict[str, Callable[[], float]] = {
    "pauli_compose_matrix": check_pauli_compose,
    "symplectic_fourier_roundtrip": check_fourier_roundtrip,
    "w_exact_known_ensembles": check_w_known,
    "shadow_channel_identity": check_channel_identity,
    "unbiasedness_exact": check_unbiasedness,
    "noisy_unbiasedness_exact": check_noisy_unbiasedness,
    "depolarizing_w_scaling": check_depolarizing_scaling,
    "unital_wu_equals_w": check_wu_unital,
    "pauli_invariance_exact": check_pauli_invariance_exact,
    "entanglement_feature_w_dual_path": check_ef_w_dual_path,
    "support_flatness": check_flatness,
    "rs_map_dual_path": check_rs_map_dual_path,
    "r_from_entanglement_features_dual_path": check_ef_r_dual_path,
    "choi_unbiasedness": check_choi_unbiasedness,
    "choi_probability_normalization": check_choi_normalization,
}


def run_checks(name_filter: str | None = None, tol: float = TOL) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS.items():
        if name_filter and name_filter.lower() not in name:
            continue
        start = time.perf_counter()
        try:
            err = fn()
            results.append(CheckResult(name, bool(err <= tol), err, time.perf_counter() - start))
        except Exception as exc:  # a crashing check is a failing check
            results.append(CheckResult(name, False, float("inf"), time.perf_counter() - start, repr(exc)))
    return results
