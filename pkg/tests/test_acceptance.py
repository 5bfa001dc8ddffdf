"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary lists all ten
verdicts.  Tolerances are the required ones and are never loosened here.
"""

import time

import numpy as np
import oracles

from pauli_shadows import analysis, channel, engine
from pauli_shadows.cli import main as cli_main
from pauli_shadows.ensembles import GLOBAL_CLIFFORD, LOCAL_CLIFFORD, PAULI_GROUP, EnsembleSpec
from pauli_shadows.io import read_snapshot_file, write_channel_snapshots, write_snapshots
from pauli_shadows.pauli import PauliLabel, all_labels, parse_observable
from pauli_shadows.sim import (
    basis_state,
    density,
    depolarizing_channel,
    identity_channel,
    maximally_mixed,
    pauli_channel,
    random_density_matrix,
)

GROUPS = {
    LOCAL_CLIFFORD: oracles.local_clifford_group,
    GLOBAL_CLIFFORD: oracles.clifford_group,
    PAULI_GROUP: oracles.pauli_group,
}


def _label_strings(n):
    return [str(a) for a in all_labels(n)]


class TestCriterion01KnownW:
    def test_known_ensemble_w_values(self, report):
        start = time.perf_counter()
        worst = 0.0
        for n in (1, 2):
            for kind in (LOCAL_CLIFFORD, GLOBAL_CLIFFORD):
                w = engine.compute_W_exact(EnsembleSpec(n, kind))
                oracle = oracles.w_table(GROUPS[kind](n))
                for i, s in enumerate(_label_strings(n)):
                    if kind == LOCAL_CLIFFORD:
                        closed = 3.0 ** -oracles.support_size(s)
                    else:
                        closed = 1.0 if i == 0 else 1.0 / (2**n + 1)
                    worst = max(worst, abs(w.values[i] - oracle[s]), abs(w.values[i] - closed))
        elapsed = time.perf_counter() - start
        passed = worst <= 1e-10 and elapsed < 60
        report(1, passed, f"max |W - oracle| = {worst:.2e}, {elapsed:.1f} s")
        assert passed


class TestCriterion02Unbiasedness:
    def test_exact_reconstruction_and_pauli_rejection(self, report):
        rng = np.random.default_rng(20)
        worst = 0.0
        specs = [EnsembleSpec(n, k) for n in (1, 2) for k in (LOCAL_CLIFFORD, GLOBAL_CLIFFORD)]
        for i in range(20):
            spec = specs[i % len(specs)]
            recon = engine.invert_W(engine.compute_W_exact(spec))
            rho = random_density_matrix(spec.n, rng)
            worst = max(worst, np.abs(engine.exact_reconstruction(rho, spec, recon) - rho).max())
        rejected = []
        for n in (1, 2):
            try:
                engine.invert_W(engine.compute_W_exact(EnsembleSpec(n, PAULI_GROUP)))
            except engine.NonInvertibleError as err:
                rejected.append(len(err.labels) == 4**n - 2**n)
        passed = worst <= 1e-10 and rejected == [True, True]
        report(2, passed, f"20 states, max |rho_hat - rho| = {worst:.2e}; Pauli group rejected: {rejected}")
        assert passed


class TestCriterion03Noisy:
    def test_depolarized_w_and_noisy_reconstruction(self, report):
        rng = np.random.default_rng(30)
        w_err = rec_err = 0.0
        for n in (1, 2):
            for kind in (LOCAL_CLIFFORD, GLOBAL_CLIFFORD):
                spec = EnsembleSpec(n, kind)
                clean = oracles.w_table(GROUPS[kind](n))
                for p in (0.1, 0.3, 0.7):
                    noise = depolarizing_channel(p, n)
                    w = engine.compute_W_noisy(spec, noise)
                    for i, s in enumerate(_label_strings(n)):
                        expected = clean[s] * (1.0 if i == 0 else 1 - p)
                        w_err = max(w_err, abs(w.values[i] - expected))
                    rho = random_density_matrix(n, rng)
                    rho_hat = engine.exact_reconstruction(rho, spec, engine.invert_W(w), noise)
                    rec_err = max(rec_err, np.abs(rho_hat - rho).max())
        passed = w_err <= 1e-10 and rec_err <= 1e-10
        report(3, passed, f"max W error {w_err:.2e}, max reconstruction error {rec_err:.2e}")
        assert passed


class TestCriterion04DualPaths:
    def test_entanglement_features_match_direct_w(self, report):
        worst = oracle_err = 0.0
        for n in (1, 2):
            for kind in (PAULI_GROUP, LOCAL_CLIFFORD, GLOBAL_CLIFFORD):
                spec = EnsembleSpec(n, kind)
                direct = analysis.w_support_sums(engine.compute_W_exact(spec)).w_sum
                ef = analysis.entanglement_features(spec)
                via_ef = analysis.w_from_entanglement_features(ef)
                worst = max(worst, max(abs(direct[S] - via_ef[S]) for S in range(1 << n)))
                group = GROUPS[kind](n)
                for A in range(1 << n):
                    qubits = [q for q in range(n) if A >> q & 1]
                    purities = [
                        oracles.renyi2_purity(U.conj().T[:, b], qubits, n) for U in group for b in range(1 << n)
                    ]
                    oracle_err = max(oracle_err, abs(ef[A] - np.mean(purities)))
        passed = worst <= 1e-10 and oracle_err <= 1e-10
        report(4, passed, f"max |W_sum direct - via features| = {worst:.2e}, features vs oracle {oracle_err:.2e}")
        assert passed


class TestCriterion05RsMap:
    def test_rs_map_matches_diagonal_map(self, report):
        worst = closed_err = 0.0
        for n in (1, 2):
            for kind in (LOCAL_CLIFFORD, GLOBAL_CLIFFORD):
                w = engine.compute_W_exact(EnsembleSpec(n, kind))
                rc = analysis.r_coefficients(analysis.w_support_sums(w))
                for i, s in enumerate(_label_strings(n)):
                    P = oracles.pauli_matrix(s)
                    worst = max(worst, np.abs(analysis.apply_rs_map(rc, P) - P / w.values[i]).max())
                if kind == LOCAL_CLIFFORD:
                    for S in range(1 << n):
                        k = S.bit_count()
                        closed_err = max(closed_err, abs(rc[S] - 3.0 ** (n - k) * (-2.0) ** k))
        passed = worst <= 1e-10 and closed_err <= 1e-10
        report(5, passed, f"max map error {worst:.2e}, closed-form r_S error {closed_err:.2e}")
        assert passed


def _z_score(rep, closed):
    return abs(rep.value - closed) / rep.stderr


class TestCriterion06NormsMonteCarlo:
    SAMPLES = 100_000

    def test_empirical_norms_match_closed_forms(self, report):
        rng = np.random.default_rng(60)
        p = 0.2
        rows = []
        for kind, label in ((LOCAL_CLIFFORD, "ZX"), (GLOBAL_CLIFFORD, "XY")):
            spec = EnsembleSpec(2, kind)
            w = engine.compute_W_exact(spec)
            recon = engine.invert_W(w)
            P = {PauliLabel.from_string(label): 1.0}
            O = parse_observable("ZI + 0.5*XX")
            rho = random_density_matrix(2, rng)
            rows.append((f"{kind} single", analysis.empirical_shadow_norm(spec, recon, P, rho, self.SAMPLES, 1),
                         analysis.shadow_norm_pauli(w, PauliLabel.from_string(label))))
            rows.append((f"{kind} average", analysis.empirical_shadow_norm(spec, recon, O, maximally_mixed(2), self.SAMPLES, 2),
                         analysis.average_shadow_norm(w, O)))
            noise = depolarizing_channel(p, 2)
            w_n = engine.compute_W_noisy(spec, noise)
            w_u = engine.compute_W_u(spec, noise)
            recon_n = engine.invert_W(w_n)
            rows.append((f"{kind} noisy single",
                         analysis.empirical_shadow_norm(spec, recon_n, P, rho, self.SAMPLES, 3, noise),
                         analysis.noisy_shadow_norm_pauli(w_n, w_u, PauliLabel.from_string(label))))
            rows.append((f"{kind} noisy average",
                         analysis.empirical_shadow_norm(spec, recon_n, O, maximally_mixed(2), self.SAMPLES, 4, noise),
                         analysis.noisy_average_shadow_norm(w_n, w_u, O)))
            ratio = analysis.noisy_average_shadow_norm(w_n, w_u, O) / analysis.average_shadow_norm(w, O)
            inflation_ok = abs(ratio * (1 - p) ** 2 - 1) <= 1e-12
            rows.append((f"{kind} inflation", None, inflation_ok))
        z = [(name, _z_score(rep, closed)) for name, rep, closed in rows if rep is not None]
        worst = max(v for _, v in z)
        inflation = all(ok for _, rep, ok in rows if rep is None)
        passed = worst <= 5 and inflation
        report(6, passed, f"worst |z| = {worst:.2f} over {len(z)} cases; (1-p)^-2 inflation exact: {inflation}")
        assert passed


class TestCriterion07Choi:
    def test_choi_unbiased_and_normalized(self, report):
        rng = np.random.default_rng(70)
        probs = rng.dirichlet(np.ones(4))
        prob_dict = {str(PauliLabel.from_index(1, i)): float(probs[i]) for i in range(4)}
        cases = [
            (identity_channel(1), [np.eye(2)]),
            (depolarizing_channel(0.3, 1), oracles.depolarizing_kraus(0.3, 1)),
            (pauli_channel(probs, 1), oracles.pauli_channel_kraus(prob_dict)),
        ]
        choi_err = 0.0
        for kind in (LOCAL_CLIFFORD, GLOBAL_CLIFFORD):
            spec = EnsembleSpec(1, kind)
            w = engine.compute_W_exact(spec)
            recon = channel.channel_reconstruction(channel.ChannelWTable(w, w))
            for T, kraus in cases:
                J = channel.choi_from_enumeration(T, spec, spec, recon)
                choi_err = max(choi_err, np.abs(J - oracles.choi(kraus, 1)).max())
        norm_err = 0.0
        group = oracles.clifford_group(1)
        for T, _ in cases:
            idx_in = rng.integers(len(group), size=50)
            idx_out = rng.integers(len(group), size=50)
            U_in = np.array([group[i] for i in idx_in])
            U_out = np.array([group[i] for i in idx_out])
            P = channel.channel_outcome_probs(T, U_in, rng.integers(2, size=50), U_out)
            norm_err = max(norm_err, np.abs(P.sum(axis=1) - 1).max())
        passed = choi_err <= 1e-10 and norm_err <= 1e-12
        report(7, passed, f"max |J_hat - J| = {choi_err:.2e}, max |sum P - 1| = {norm_err:.2e}")
        assert passed


class TestCriterion08PauliChannelEndToEnd:
    SHOTS = 200_000

    def test_random_pauli_channel_eigenvalues(self, report):
        start = time.perf_counter()
        n = 2
        probs = np.random.default_rng(80).dirichlet(np.ones(16))
        T = pauli_channel(probs, n)
        spec = EnsembleSpec(n, LOCAL_CLIFFORD)
        snaps = channel.collect_channel_snapshots(T, spec, spec, self.SHOTS, seed=81, threads=1)
        w = engine.compute_W_exact(spec)
        recon = channel.channel_reconstruction(channel.ChannelWTable(w, w))
        spectrum = channel.estimate_pauli_eigenvalues(snaps, recon)
        elapsed = time.perf_counter() - start
        oracle = oracles.pauli_channel_eigenvalues({s: float(probs[i]) for i, s in enumerate(_label_strings(n))})
        z = [
            abs(spectrum.lambdas[i] - oracle[s]) / spectrum.stderr[i]
            for i, s in enumerate(_label_strings(n))
            if i > 0
        ]
        identity_exact = spectrum.lambdas[0] == 1.0
        passed = max(z) <= 5 and identity_exact and elapsed < 300
        report(8, passed, f"worst |z| = {max(z):.2f}, lambda_0 = {float(spectrum.lambdas[0])!r}, {elapsed:.1f} s")
        assert passed


class TestCriterion09StatisticalSanity:
    TRIALS = 100

    def test_bound_achieves_confidence(self, report):
        spec = EnsembleSpec(2, LOCAL_CLIFFORD)
        w = engine.compute_W_exact(spec)
        recon = engine.invert_W(w)
        labels = ["ZI", "IZ", "ZZ"]
        worst_norm = max(analysis.shadow_norm_pauli(w, PauliLabel.from_string(s)) for s in labels)
        shots = analysis.sample_complexity_bound(worst_norm, len(labels), eps=0.1, delta=0.05)
        rho = density(basis_state(2, 0))
        successes = 0
        for trial in range(self.TRIALS):
            snaps = engine.collect_snapshots(rho, spec, shots, seed=9000 + trial)
            errors = [
                abs(engine.estimate_observable(snaps, recon, {PauliLabel.from_string(s): 1.0}).value - 1.0)
                for s in labels
            ]
            successes += max(errors) <= 0.1
        passed = successes >= 95
        report(9, passed, f"{successes}/{self.TRIALS} trials within eps at {shots} shots")
        assert passed


class TestCriterion10Determinism:
    def test_thread_independence_and_round_trip(self, report, tmp_path):
        rho = random_density_matrix(2, np.random.default_rng(100))
        spec = EnsembleSpec(2, LOCAL_CLIFFORD)
        recon = engine.invert_W(engine.compute_W_exact(spec))
        O = parse_observable("0.5*ZI + 1.5*XX - YZ")
        files, values = [], []
        for threads in (1, 3, 8):
            snaps = engine.collect_snapshots(rho, spec, 10_000, seed=5, threads=threads)
            path = tmp_path / f"s{threads}.jsonl"
            write_snapshots(path, snaps)
            files.append(path.read_bytes())
            values.append(engine.estimate_observable(snaps, recon, O).value)
        _, loaded = read_snapshot_file(tmp_path / "s1.jsonl")
        loaded_value = engine.estimate_observable(loaded, recon, O).value
        api_ok = len(set(files)) == 1 and len(set(values)) == 1 and loaded_value == values[0]

        T = depolarizing_channel(0.2, 1)
        cspec = EnsembleSpec(1, LOCAL_CLIFFORD)
        cw = engine.compute_W_exact(cspec)
        crecon = channel.channel_reconstruction(channel.ChannelWTable(cw, cw))
        chan = [channel.collect_channel_snapshots(T, cspec, cspec, 5_000, seed=6, threads=t) for t in (1, 4)]
        write_channel_snapshots(tmp_path / "c.jsonl", chan[0])
        _, cloaded = read_snapshot_file(tmp_path / "c.jsonl")
        lam = [channel.estimate_pauli_eigenvalues(c, crecon).lambdas for c in (*chan, cloaded)]
        channel_ok = all(np.array_equal(lam[0], x) for x in lam[1:])

        outputs = []
        for threads in ("1", "4"):
            snap_path = tmp_path / f"cli{threads}.jsonl"
            est_path = tmp_path / f"est{threads}.json"
            assert cli_main(["collect", "--n", "2", "--state", "ghz", "--shots", "3000", "--seed", "11",
                             "--threads", threads, "--out", str(snap_path)]) == 0
            assert cli_main(["estimate", "--snapshots", str(snap_path), "--observable", "ZZ",
                             "--out", str(est_path)]) == 0
            est = est_path.read_text().replace(str(snap_path), "SNAPSHOTS")
            outputs.append((snap_path.read_bytes(), est))
        cli_ok = outputs[0] == outputs[1]
        passed = api_ok and channel_ok and cli_ok
        report(10, passed, f"library {api_ok}, channel {channel_ok}, command line {cli_ok}")
        assert passed
