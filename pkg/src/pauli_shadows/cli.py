"""Command-line interface.

Exit codes: 0 success, 1 verification failure, 2 usage or input error,
3 a W coefficient (or channel coefficient pair) that cannot be inverted.

A ``--config FILE`` holds ``key = value`` lines (``#`` starts a comment) whose
keys are long flag names; flags given on the command line take precedence.
List-valued keys such as ``observable`` separate entries with ``;``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io as _io
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis, channel, engine
from .ensembles import EnsembleSpec, NotEnumerableError
from .io import (
    CHANNEL_SNAPSHOTS,
    dump_json,
    read_snapshot_file,
    read_wtable,
    tool_version,
    write_channel_snapshots,
    write_snapshots,
)
from .pauli import DenseLimitError, PauliLabel, all_labels, format_observable, parse_observable
from .sim import (
    QuantumChannel,
    amplitude_damping_channel,
    basis_state,
    bit_flip_channel,
    density,
    depolarizing_channel,
    ghz_state,
    identity_channel,
    maximally_mixed,
    pauli_channel,
    random_density_matrix,
    random_pure_state,
)
from .verify import CHECKS, run_checks

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_NONINVERTIBLE = 3

PROG = "pauli-shadows"


class UsageError(ValueError):
    pass


# -- small grammars -----------------------------------------------------------


def parse_channel(text: str | None, n: int) -> QuantumChannel | None:
    """``identity``, ``depolarizing:p``, ``bitflip:p[@q]``, ``amplitude-damping:g[@q]``,
    ``pauli:p0,p1,...`` (canonical order) or ``random-pauli:SEED``."""
    if text is None or text.strip().lower() in ("", "none"):
        return None
    text = text.strip()
    name, _, arg = text.partition(":")
    name = name.lower().replace("_", "-")
    value, _, qubit = arg.partition("@")
    q = int(qubit) if qubit else 0
    if name == "identity":
        ch = identity_channel(n)
    elif name == "depolarizing":
        ch = depolarizing_channel(float(value), n)
    elif name in ("bitflip", "bit-flip"):
        ch = bit_flip_channel(float(value), n, q)
    elif name == "amplitude-damping":
        ch = amplitude_damping_channel(float(value), n, q)
    elif name == "pauli":
        ch = pauli_channel(np.array([float(v) for v in arg.split(",")]), n)
    elif name == "random-pauli":
        probs = np.random.default_rng(int(arg or 0)).dirichlet(np.ones(4**n))
        ch = pauli_channel(probs, n)
    else:
        raise UsageError(f"unknown channel {text!r}")
    return dataclasses.replace(ch, name=text)


def parse_state(text: str, n: int) -> np.ndarray:
    """``zero``, ``basis:0101``, ``ghz``, ``mixed``, ``random:SEED`` or ``random-pure:SEED``."""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    if name == "zero":
        return density(basis_state(n, 0))
    if name == "basis":
        if len(arg) != n or set(arg) - {"0", "1"}:
            raise UsageError(f"basis state {arg!r} is not a {n}-bit string")
        return density(basis_state(n, arg))
    if name == "ghz":
        return density(ghz_state(n))
    if name == "mixed":
        return maximally_mixed(n)
    if name == "random":
        return random_density_matrix(n, np.random.default_rng(int(arg or 0)))
    if name == "random-pure":
        return density(random_pure_state(n, np.random.default_rng(int(arg or 0))))
    raise UsageError(f"unknown state {text!r}")


def parse_strategy(text: str) -> tuple[str, int | None]:
    name, _, k = text.strip().lower().replace("_", "-").partition(":")
    if name == "mean" and not k:
        return "mean", None
    if name == "median-of-means":
        return "median_of_means", int(k) if k else None
    raise UsageError(f"unknown strategy {text!r}; use mean or median-of-means[:K]")


def parse_labels(text: str, n: int) -> list[PauliLabel]:
    if text.strip().lower() == "all":
        return all_labels(n)
    labels = [PauliLabel.from_string(t) for t in text.split(",") if t.strip()]
    for a in labels:
        if a.n != n:
            raise UsageError(f"label {a} has {a.n} qubits, expected {n}")
    return labels


def load_config(path: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


# -- output helpers -----------------------------------------------------------


def _config_record(args: argparse.Namespace) -> dict:
    skip = {"func", "config", "out", "threads", "timestamp", "csv"}
    rec = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        rec[key] = value
    return rec


def _meta(args: argparse.Namespace, seed, spec) -> dict:
    return {"seed": seed, "spec": spec, "config": _config_record(args), "tool_version": tool_version()}


def _emit(obj: dict, out: str | None) -> None:
    text = dump_json(obj)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _created(args) -> str | None:
    if getattr(args, "timestamp", False):
        return datetime.now(timezone.utc).isoformat(timespec="seconds")
    return None


def _observables(args, n: int) -> list[dict[PauliLabel, float]]:
    return [parse_observable(text, n) for text in (args.observable or [])]


def _float_or_none(x: float) -> float | None:
    return None if not np.isfinite(x) else float(x)


# -- subcommands --------------------------------------------------------------


def _build_wtable(args, spec: EnsembleSpec, noise: QuantumChannel | None) -> engine.WTable:
    if args.exact and not spec.enumerable():
        raise NotEnumerableError(f"--exact needs an enumerable ensemble; {spec.name} on {spec.n} qubits is not")
    exact = args.exact or (spec.enumerable() and args.samples is None)
    if noise is not None:
        if not exact:
            raise UsageError("noisy W tables need an enumerable ensemble")
        return engine.compute_W_u(spec, noise) if args.unital_part else engine.compute_W_noisy(spec, noise)
    if args.unital_part:
        raise UsageError("--unital-part needs --noise")
    if exact:
        return engine.compute_W_exact(spec)
    return engine.estimate_W_monte_carlo(spec, args.samples or 10_000, args.seed, args.b_mode, args.threads)


def cmd_wtable(args) -> int:
    spec = EnsembleSpec.parse(args.ensemble, args.n)
    noise = parse_channel(args.noise, args.n)
    w = _build_wtable(args, spec, noise)
    payload = w.to_dict()
    payload.update(_meta(args, args.seed, spec.to_dict()))
    payload["labels"] = [str(a) for a in all_labels(args.n)]
    status = EXIT_OK
    if args.invert:
        try:
            payload["inverse"] = engine.invert_W(w).inverse_coeffs.tolist()
        except engine.NonInvertibleError as err:
            payload["non_invertible"] = [str(a) for a in err.labels]
            print(f"error: {err}", file=sys.stderr)
            status = EXIT_NONINVERTIBLE
    _emit(payload, args.out)
    return status


def cmd_collect(args) -> int:
    spec = EnsembleSpec.parse(args.ensemble, args.n)
    rho = parse_state(args.state, args.n)
    noise = parse_channel(args.noise, args.n)
    snaps = engine.collect_snapshots(rho, spec, args.shots, args.seed, noise, args.threads)
    extra = {"state": args.state, "spec_hash": engine.spec_hash(spec, snaps.noise)}
    if args.out:
        write_snapshots(args.out, snaps, _created(args), extra)
    else:
        from .io import snapshot_lines

        sys.stdout.writelines(snapshot_lines(snaps, _created(args), extra))
    return EXIT_OK


def _default_wtable(spec: EnsembleSpec, noise_tag: str | None) -> engine.WTable:
    if not spec.enumerable():
        raise UsageError(f"ensemble {spec.name} is not enumerable; pass a W table file")
    noise = parse_channel(noise_tag, spec.n)
    return engine.compute_W_exact(spec) if noise is None else engine.compute_W_noisy(spec, noise)


def cmd_estimate(args) -> int:
    header, snaps = read_snapshot_file(args.snapshots)
    if header.get("type") == CHANNEL_SNAPSHOTS:
        return cmd_channel_estimate(args, loaded=(header, snaps))
    if args.wtable:
        w = read_wtable(args.wtable)
        expected = engine.spec_hash(snaps.spec, snaps.noise)
        if w.n != snaps.n or w.spec_hash != expected:
            raise UsageError("snapshot file and W table describe different ensembles or noise")
        if w.provenance == "exact_unital_part":
            raise UsageError(f"{args.wtable} holds W^u, not a W table")
    else:
        w = _default_wtable(snaps.spec, snaps.noise)
    recon = engine.invert_W(w)
    observables = _observables(args, snaps.n)
    if not observables:
        raise UsageError("give at least one --observable")
    strategy, k = parse_strategy(args.strategy)
    if strategy == "median_of_means" and k is None:
        k = engine.default_batches(len(observables))
    rows = []
    worst = 0.0
    for O in observables:
        rep = engine.estimate_observable(snaps, recon, O, strategy, k)
        centered = analysis.traceless_part(O)
        norm = analysis.average_shadow_norm(w, centered) if centered else 0.0
        worst = max(worst, norm)
        rows.append({"observable": format_observable(O), **rep.to_dict(), "sq_norm": norm})
    payload = {
        "estimates": rows,
        "eps": args.eps,
        "delta": args.delta,
        "max_sq_norm": worst,
        "sample_complexity_bound": analysis.sample_complexity_bound(worst, len(observables), args.eps, args.delta),
        "shots": len(snaps),
    }
    payload.update(_meta(args, snaps.seed, snaps.spec.to_dict()))
    _emit(payload, args.out)
    return EXIT_OK


def cmd_channel_collect(args) -> int:
    T = parse_channel(args.channel, args.n)
    if T is None:
        raise UsageError("--channel is required")
    spec_in = EnsembleSpec.parse(args.ensemble_in, args.n)
    spec_out = EnsembleSpec.parse(args.ensemble_out, args.n)
    snaps = channel.collect_channel_snapshots(T, spec_in, spec_out, args.shots, args.seed, args.threads)
    if args.out:
        write_channel_snapshots(args.out, snaps, _created(args))
    else:
        from .io import channel_snapshot_lines

        sys.stdout.writelines(channel_snapshot_lines(snaps, _created(args)))
    return EXIT_OK


def _leg_table(path: str | None, spec: EnsembleSpec) -> engine.WTable:
    if path:
        w = read_wtable(path)
        if w.n != spec.n or w.spec_hash != engine.spec_hash(spec):
            raise UsageError(f"W table {path} does not match ensemble {spec.name}")
        return w
    return _default_wtable(spec, None)


def cmd_channel_estimate(args, loaded=None) -> int:
    header, snaps = loaded or read_snapshot_file(args.snapshots)
    if header.get("type") != CHANNEL_SNAPSHOTS:
        raise UsageError(f"{args.snapshots} is not a channel snapshot file")
    n = snaps.n
    cw = channel.ChannelWTable(
        _leg_table(args.wtable_in, snaps.spec_in),
        _leg_table(args.wtable_out, snaps.spec_out),
    )
    recon = channel.channel_reconstruction(cw)
    strategy, k = parse_strategy(args.strategy)
    payload: dict = {"shots": len(snaps), "channel_tag": snaps.channel_tag}
    labels_text = args.eigenvalues
    observables = _observables(args, n)
    if labels_text is None and not observables:
        labels_text = "all"
    if labels_text is not None:
        labels = parse_labels(labels_text, n)
        kk = k if strategy == "mean" or k is not None else engine.default_batches(len(labels))
        spectrum = channel.estimate_pauli_eigenvalues(snaps, recon, labels, strategy, kk)
        payload.update(spectrum.to_dict())
        payload["eps"], payload["delta"] = args.eps, args.delta
        payload["sample_complexity_bound"] = channel.pauli_channel_sample_bound(
            cw, args.eps, args.delta, args.exclude_identity
        )
    if observables:
        rho = parse_state(args.state, n)
        kk = k if strategy == "mean" or k is not None else engine.default_batches(len(observables))
        rows = []
        for O in observables:
            rep = channel.estimate_channel_observable(snaps, recon, rho, O, strategy, kk)
            rows.append({"observable": format_observable(O), **rep.to_dict()})
        payload["estimates"] = rows
        payload["state"] = args.state
    payload.update(_meta(args, snaps.seed, {"in": snaps.spec_in.to_dict(), "out": snaps.spec_out.to_dict()}))
    _emit(payload, args.out)
    return EXIT_OK


def cmd_norms(args) -> int:
    spec = EnsembleSpec.parse(args.ensemble, args.n)
    noise = parse_channel(args.noise, args.n)
    labels = all_labels(args.n)
    if noise is None:
        args.unital_part = False
        w = _build_wtable(args, spec, None)
        norms = np.array([1.0 / v if v > engine.EXACT_FLOOR else np.inf for v in w.values])
        w_u = None
    else:
        args.unital_part = False
        w = _build_wtable(args, spec, noise)
        w_u = engine.compute_W_u(spec, noise)
        norms = np.array(
            [wu / v**2 if v > engine.EXACT_FLOOR else np.inf for v, wu in zip(w.values, w_u.values)]
        )
    rows = [
        {"label": str(a), "W": float(w.values[i]), "shadow_norm": _float_or_none(norms[i])}
        for i, a in enumerate(labels)
    ]
    obs_rows = []
    for O in _observables(args, args.n):
        centered = analysis.traceless_part(O) or O
        try:
            if w_u is None:
                value = analysis.average_shadow_norm(w, centered)
            else:
                value = analysis.noisy_average_shadow_norm(w, w_u, centered)
        except engine.NonInvertibleError:
            value = None
        obs_rows.append({"observable": format_observable(O), "average_shadow_norm": value})
    payload = {"n": args.n, "labels": rows, "observables": obs_rows, "noise": None if noise is None else noise.tag}
    payload.update(_meta(args, args.seed, spec.to_dict()))
    _emit(payload, args.out)
    if args.csv:
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["label", "W", "shadow_norm"])
        for r in rows:
            writer.writerow([r["label"], repr(r["W"]), "inf" if r["shadow_norm"] is None else repr(r["shadow_norm"])])
        Path(args.csv).write_text(buf.getvalue(), encoding="utf-8")
    return EXIT_OK


def cmd_entfeat(args) -> int:
    spec = EnsembleSpec.parse(args.ensemble, args.n)
    if args.exact and not spec.enumerable():
        raise NotEnumerableError(f"--exact needs an enumerable ensemble; {spec.name} is not")
    exact = args.exact or (spec.enumerable() and args.samples is None)
    mode = "exact" if exact else "monte_carlo"
    ef = analysis.entanglement_features(spec, mode, args.samples or 10_000, args.seed)
    w_sum = analysis.w_from_entanglement_features(ef)
    payload = ef.to_dict()
    payload["mode"] = mode
    payload["w_support_sum"] = {str(S): v for S, v in sorted(w_sum.items())}
    try:
        payload["r"] = analysis.r_from_entanglement_features(ef).to_dict()["values"]
    except engine.NonInvertibleError as err:
        payload["r"] = None
        payload["non_invertible"] = [str(x) for x in err.labels]
    payload.update(_meta(args, args.seed, spec.to_dict()))
    _emit(payload, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.list:
        sys.stdout.write("\n".join(CHECKS) + "\n")
        return EXIT_OK
    results = run_checks(args.filter)
    if not results:
        raise UsageError(f"no check matches filter {args.filter!r}")
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  max_error={r.max_error:.3e}  {r.detail}", file=sys.stderr)
    payload = {
        "passed": all(r.passed for r in results),
        "results": [r.to_dict() for r in results],
        "seed": None,
        "spec": None,
        "filter": args.filter,
        "tool_version": tool_version(),
    }
    _emit(payload, args.out)
    return EXIT_OK if payload["passed"] else EXIT_VERIFY


# -- parser -------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, n_required: bool = True, shots: bool = False) -> None:
    p.add_argument("--config", help="key = value file; command-line flags override it")
    if n_required:
        p.add_argument("--n", type=int, help="number of qubits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    if shots:
        p.add_argument("--shots", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Simulate randomized measurements and estimate quantities from the snapshots.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("wtable", help="compute or estimate the W table of an ensemble")
    _common(p)
    p.add_argument("--ensemble", default="local-clifford")
    p.add_argument("--exact", action="store_true", help="full enumeration (enumerable ensembles only)")
    p.add_argument("--samples", type=int, help="Monte Carlo unitary samples")
    p.add_argument("--b-mode", default="exact_average", choices=["exact_average", "sampled"])
    p.add_argument("--noise", help="noise channel before measurement, e.g. depolarizing:0.1")
    p.add_argument("--unital-part", action="store_true", help="with --noise, output W^u instead of W")
    p.add_argument("--invert", action="store_true", help="also invert; exit 3 if impossible")
    p.set_defaults(func=cmd_wtable)

    p = sub.add_parser("collect", help="simulate the measurement protocol and write snapshots")
    _common(p, shots=True)
    p.add_argument("--ensemble", default="local-clifford")
    p.add_argument("--state", default="zero", help="zero | basis:BITS | ghz | mixed | random:SEED | random-pure:SEED")
    p.add_argument("--noise")
    p.add_argument("--timestamp", action="store_true", help="record creation time in the header")
    p.set_defaults(func=cmd_collect)

    for name, help_text in (("estimate", "estimate observables from a snapshot file"),
                            ("channel-estimate", "estimate Pauli eigenvalues or channel observables")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config")
        p.add_argument("--snapshots", help="snapshot file")
        p.add_argument("--observable", action="append", help="e.g. '0.5*ZI + 1.5*XX'; repeatable")
        p.add_argument("--strategy", default="mean", help="mean | median-of-means[:K]")
        p.add_argument("--eps", type=float, default=0.1)
        p.add_argument("--delta", type=float, default=0.05)
        p.add_argument("--out")
        p.add_argument("--state", default="zero", help="input state for channel observables")
        p.add_argument("--wtable-in", help="input-leg W table for channel snapshots")
        p.add_argument("--wtable-out", help="output-leg W table for channel snapshots")
        p.add_argument("--eigenvalues", help="channel snapshots: comma-separated labels or 'all'")
        p.add_argument("--exclude-identity", action="store_true", help="bound maximises over b != 0 only")
        if name == "estimate":
            p.add_argument("--wtable", help="W table file (default: exact table for the snapshot ensemble)")
            p.set_defaults(func=cmd_estimate)
        else:
            p.set_defaults(func=cmd_channel_estimate)

    p = sub.add_parser("channel-collect", help="simulate shadow process tomography of a channel")
    _common(p, shots=True)
    p.add_argument("--channel", default="identity")
    p.add_argument("--ensemble-in", default="local-clifford")
    p.add_argument("--ensemble-out", default="local-clifford")
    p.add_argument("--timestamp", action="store_true")
    p.set_defaults(func=cmd_channel_collect)

    p = sub.add_parser("norms", help="per-label shadow norms and average norms of observables")
    _common(p)
    p.add_argument("--ensemble", default="local-clifford")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--samples", type=int)
    p.add_argument("--b-mode", default="exact_average", choices=["exact_average", "sampled"])
    p.add_argument("--noise")
    p.add_argument("--observable", action="append")
    p.add_argument("--csv", help="also write label,W,shadow_norm rows here")
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("entfeat", help="entanglement features and derived support tables")
    _common(p)
    p.add_argument("--ensemble", default="local-clifford")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_entfeat)

    p = sub.add_parser("verify", help="run the built-in invariant checks")
    p.add_argument("--config")
    p.add_argument("--filter", help="run only checks whose name contains this text")
    p.add_argument("--list", action="store_true", help="list check names and exit")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


_REQUIRED = {
    "wtable": ("n",),
    "collect": ("n", "shots"),
    "estimate": ("snapshots",),
    "channel-estimate": ("snapshots",),
    "channel-collect": ("n", "shots"),
    "norms": ("n",),
    "entfeat": ("n",),
}


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _apply_config(parser, args: argparse.Namespace, argv: list[str]) -> None:
    cfg = load_config(args.config)
    sp = _subparser(parser, args.command)
    by_dest = {a.dest: a for a in sp._actions if a.dest not in ("help", "config", "func")}
    for key, value in cfg.items():
        action = by_dest.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        given = any(arg == opt or arg.startswith(opt + "=") for arg in argv for opt in action.option_strings)
        if given:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects true or false")
            setattr(args, key, value.lower() in ("true", "1", "yes"))
        elif isinstance(action, argparse._AppendAction):
            setattr(args, key, [v.strip() for v in value.split(";") if v.strip()])
        else:
            try:
                converted = action.type(value) if action.type else value
            except ValueError:
                raise UsageError(f"config key {key!r}: bad value {value!r}") from None
            if action.choices is not None and converted not in action.choices:
                raise UsageError(f"config key {key!r}: {value!r} not in {list(action.choices)}")
            setattr(args, key, converted)


def _resolve_paths(args: argparse.Namespace) -> None:
    for key in ("snapshots", "wtable", "wtable_in", "wtable_out", "out", "csv"):
        value = getattr(args, key, None)
        if value:
            setattr(args, key, str(Path(value).expanduser().resolve()))


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        if getattr(args, "config", None):
            _apply_config(parser, args, argv)
        for key in _REQUIRED.get(args.command, ()):
            if getattr(args, key, None) is None:
                raise UsageError(f"--{key.replace('_', '-')} is required")
        if getattr(args, "n", None) is not None and args.n < 1:
            raise UsageError("--n must be at least 1")
        if getattr(args, "shots", None) is not None and args.shots < 1:
            raise UsageError("--shots must be at least 1")
        _resolve_paths(args)
        return args.func(args)
    except engine.NonInvertibleError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONINVERTIBLE
    except (UsageError, NotEnumerableError, DenseLimitError, ValueError, KeyError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
