"""Line-delimited JSON snapshot files and JSON tables."""

from __future__ import annotations

import json
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from .channel import ChannelSnapshot, ChannelSnapshotSet
from .engine import Snapshot, SnapshotSet, WTable
from .ensembles import EnsembleSpec, UnitaryDraw
from .sim import bits_to_int

SNAPSHOTS = "snapshots"
CHANNEL_SNAPSHOTS = "channel_snapshots"


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0.0.0"


def _line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True) + "\n"


def dump_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj: dict) -> None:
    Path(path).write_text(dump_json(obj), encoding="utf-8")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def snapshot_lines(snaps: SnapshotSet, created: str | None = None, extra: dict | None = None) -> list[str]:
    header = {
        "type": SNAPSHOTS,
        "n": snaps.n,
        "ensemble": snaps.spec.to_dict(),
        "seed": snaps.seed,
        "noise": snaps.noise,
        "created": created,
        "tool_version": tool_version(),
    }
    header.update(extra or {})
    lines = [_line(header)]
    lines += [_line({"draw": s.draw.to_dict(), "b": s.bits}) for s in snaps.snapshots]
    return lines


def write_snapshots(path: str | Path, snaps: SnapshotSet, created: str | None = None, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(snapshot_lines(snaps, created, extra))


def channel_snapshot_lines(snaps: ChannelSnapshotSet, created: str | None = None, extra: dict | None = None) -> list[str]:
    header = {
        "type": CHANNEL_SNAPSHOTS,
        "n": snaps.n,
        "spec_in": snaps.spec_in.to_dict(),
        "spec_out": snaps.spec_out.to_dict(),
        "seed": snaps.seed,
        "channel_tag": snaps.channel_tag,
        "created": created,
        "tool_version": tool_version(),
    }
    header.update(extra or {})
    return [_line(header)] + [_line(s.to_dict()) for s in snaps.snapshots]


def write_channel_snapshots(
    path: str | Path, snaps: ChannelSnapshotSet, created: str | None = None, extra: dict | None = None
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(channel_snapshot_lines(snaps, created, extra))


def read_header(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.strip():
        raise ValueError(f"{path}: empty snapshot file")
    return json.loads(first)


def read_snapshot_file(path: str | Path) -> tuple[dict, SnapshotSet | ChannelSnapshotSet]:
    """Load either kind of snapshot file; returns (header, set)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty snapshot file")
    header = json.loads(lines[0])
    n = int(header["n"])
    kind = header.get("type", SNAPSHOTS)
    records = [json.loads(ln) for ln in lines[1:]]
    if kind == SNAPSHOTS:
        spec = EnsembleSpec.from_dict(header["ensemble"])
        snaps = []
        for i, rec in enumerate(records):
            if len(rec["b"]) != n:
                raise ValueError(f"{path}: record {i} has outcome length {len(rec['b'])}, expected {n}")
            snaps.append(Snapshot(UnitaryDraw.from_dict(rec["draw"], n), bits_to_int(rec["b"])))
        return header, SnapshotSet(spec, header["seed"], snaps, header.get("noise"))
    if kind == CHANNEL_SNAPSHOTS:
        spec_in = EnsembleSpec.from_dict(header["spec_in"])
        spec_out = EnsembleSpec.from_dict(header["spec_out"])
        snaps = [
            ChannelSnapshot(
                bits_to_int(rec["b_in"]),
                UnitaryDraw.from_dict(rec["draw_in"], n),
                UnitaryDraw.from_dict(rec["draw_out"], n),
                bits_to_int(rec["b_out"]),
            )
            for rec in records
        ]
        return header, ChannelSnapshotSet(spec_in, spec_out, header["seed"], snaps, header.get("channel_tag"))
    raise ValueError(f"{path}: unknown snapshot file type {kind!r}")


def read_wtable(path: str | Path) -> WTable:
    return WTable.from_dict(read_json(path))


