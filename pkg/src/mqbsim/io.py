"""Output artifacts: commented-header CSV tables and binary state snapshots.

CSV files start with ``#``-prefixed metadata lines (tool version, config
hash, optional timestamp) followed by a plain header row and the body.
Numbers are written with ``repr``-exact formatting so identical runs give
byte-identical bodies.

Snapshot layout (all little-endian)::

    8 bytes   magic b"MQBSNAP1"
    uint32    d
    uint32    N
    uint32*N  truncations n_1..n_N
    uint32    number of snapshots K
    K times:  float64 t_fs, then dim complex amplitudes as (float64 re, float64 im)

Amplitudes follow the qudit-first, mode-ascending tensor order.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .operators import SpaceLayout

SNAPSHOT_MAGIC = b"MQBSNAP1"


class SnapshotFormatError(ValueError):
    pass


def config_hash(config: dict) -> str:
    """sha256 of the config serialized as canonical JSON."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, columns, rows, config: dict | None = None, timestamps: bool = False,
              extra_meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# mqbsim {__version__}\n")
        if config is not None:
            fh.write(f"# config_sha256 {config_hash(config)}\n")
        for k, v in (extra_meta or {}).items():
            fh.write(f"# {k} {v}\n")
        if timestamps:
            fh.write(f"# created {_dt.datetime.now(_dt.timezone.utc).isoformat()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path):
    """(metadata lines, column names, float array) of a file from ``write_csv``."""
    meta, lines = [], []
    with open(path) as fh:
        for line in fh:
            (meta if line.startswith("#") else lines).append(line.rstrip("\n"))
    columns = lines[0].split(",")
    body = [[float(v) for v in ln.split(",")] for ln in lines[1:] if ln]
    return meta, columns, np.array(body).reshape(len(body), len(columns))


def trajectory_table(traj, open_system: bool = False):
    """Columns and rows of the trajectory CSV.

    ``leakage`` is the largest top-level population over modes; ``fidelity``
    is NaN when no reference was run.
    """
    d, N = traj.d, traj.n_modes
    cols = (["time_fs"] + [f"pop_{n}" for n in range(d)] + [f"q_{j + 1}" for j in range(N)]
            + [f"p_{j + 1}" for j in range(N)] + ["fidelity", "leakage"])
    if open_system:
        cols += ["purity", "trace_error"]
    rows = []
    for i, t in enumerate(traj.times):
        fid = traj.fidelity[i] if traj.fidelity is not None else float("nan")
        row = [t, *traj.populations[i], *traj.q_expect[i], *traj.p_expect[i], fid,
               traj.leakage[i].max()]
        if open_system:
            row += [traj.extra["purity"][i], traj.extra["trace_error"][i]]
        rows.append(row)
    return cols, rows


def write_snapshots(path, snapshots: dict, layout: SpaceLayout) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack(f"<{2 + layout.n_modes}I", layout.d, layout.n_modes,
                             *layout.truncations))
        fh.write(struct.pack("<I", len(snapshots)))
        for t in sorted(snapshots):
            psi = np.asarray(snapshots[t], dtype="<c16").ravel()
            if psi.size != layout.dim:
                raise SnapshotFormatError(f"snapshot at t={t} has {psi.size} amplitudes, "
                                          f"layout needs {layout.dim}")
            fh.write(struct.pack("<d", float(t)))
            fh.write(psi.tobytes())
    return path


def read_snapshots(path):
    """Return (layout, {t_fs: state}) from a snapshot file."""
    data = Path(path).read_bytes()
    if data[:8] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError("not a snapshot file (bad magic)")
    off = 8
    d, N = struct.unpack_from("<2I", data, off)
    off += 8
    truncs = struct.unpack_from(f"<{N}I", data, off)
    off += 4 * N
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    layout = SpaceLayout(d, tuple(truncs))
    out = {}
    for _ in range(count):
        (t,) = struct.unpack_from("<d", data, off)
        off += 8
        nbytes = 16 * layout.dim
        if off + nbytes > len(data):
            raise SnapshotFormatError("truncated snapshot file")
        out[t] = np.frombuffer(data, dtype="<c16", count=layout.dim, offset=off).copy()
        off += nbytes
    if off != len(data):
        raise SnapshotFormatError(f"{len(data) - off} trailing bytes in snapshot file")
    return layout, out
