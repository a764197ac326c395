"""Trace CSV files, drop-event CSV files and run manifests.

Trace CSV: a ``# source=<name>`` comment line, then the header
``t,[k,]W_1..W_n,q,x,phase``. ``phase`` holds the per-sender phase codes
joined by ``/`` (``CA``, ``DDN``, ``RNS``, ``RT``). Floats are written with
``repr`` so a file read back reproduces the trace exactly.

Drop CSV: header ``t,sender`` with 1-based sender numbers, matching the
``W_i`` column names.

Manifest JSON: ``{"version", "command", "config", "outputs", "sha256"}``;
``config`` is a full config-file object, so :func:`replay` can rerun it.
"""

from __future__ import annotations

import csv
import hashlib
import json
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import from_dict, to_dict
from .core import NetworkConfig, Phase, RedParams, Source, Trace, phase_codes


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_trace(path, trace: Trace) -> None:
    n = trace.n_senders
    header = ["t"] + (["k"] if trace.k is not None else [])
    header += [f"W_{i + 1}" for i in range(n)] + ["q", "x", "phase"]
    with open(path, "w", newline="") as f:
        f.write(f"# source={trace.source.value}\n")
        w = csv.writer(f)
        w.writerow(header)
        for i in range(len(trace)):
            row = [repr(float(trace.t[i]))]
            if trace.k is not None:
                row.append(int(trace.k[i]))
            row += [repr(float(v)) for v in trace.W[i]]
            row += [repr(float(trace.q[i])), repr(float(trace.x[i]))]
            row.append(phase_codes(trace.phase[i]))
            w.writerow(row)


def write_drops(path, trace: Trace) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "sender"])
        for t, j in trace.drop_events:
            w.writerow([repr(t), j + 1])


def read_trace(path, drops_path=None) -> Trace:
    """Load a trace written by :func:`write_trace` (plus optional drops)."""
    with open(path, newline="") as f:
        first = f.readline()
        if not first.startswith("# source="):
            raise ValueError(f"{path}: missing '# source=' header line")
        source = Source(first.strip().split("=", 1)[1])
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    cols = {name: i for i, name in enumerate(header)}
    w_cols = [cols[h] for h in header if h.startswith("W_")]
    num = lambda name: np.array([float(r[cols[name]]) for r in body])  # noqa: E731
    W = np.array([[float(r[c]) for c in w_cols] for r in body]).reshape(len(body), len(w_cols))
    phase = np.array(
        [[Phase.from_short(p) for p in r[cols["phase"]].split("/")] for r in body],
        dtype=np.int8,
    ).reshape(W.shape)
    trace = Trace(
        source=source,
        t=num("t"),
        W=W,
        q=num("q"),
        x=num("x"),
        phase=phase,
        k=np.array([int(r[cols["k"]]) for r in body]) if "k" in cols else None,
    )
    if drops_path is not None:
        with open(drops_path, newline="") as f:
            drows = list(csv.reader(f))[1:]
        trace.drop_t = np.array([float(r[0]) for r in drows])
        trace.drop_sender = np.array([int(r[1]) - 1 for r in drows], dtype=int)
    return trace


def trace_digest(trace: Trace) -> str:
    """SHA-256 over the raw bytes of every trace array."""
    h = hashlib.sha256()
    for arr in (trace.t, trace.W, trace.q, trace.x, trace.phase, trace.drop_t,
                trace.drop_sender):
        h.update(np.ascontiguousarray(arr).tobytes())
    if trace.k is not None:
        h.update(np.ascontiguousarray(trace.k).tobytes())
    return h.hexdigest()


def write_manifest(path, command: str, cfg: NetworkConfig, red: RedParams, run,
                   trace: Trace, outputs: dict) -> dict:
    manifest = {
        "version": code_version(),
        "command": command,
        "config": to_dict(cfg, red, run),
        "outputs": {k: str(v) for k, v in outputs.items()},
        "sha256": trace_digest(trace),
    }
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def replay(manifest: dict) -> tuple[Trace, bool]:
    """Rerun the configuration recorded in ``manifest``; returns the trace
    and whether its digest matches the recorded one."""
    from .runner import execute

    cfg, red, run = from_dict(manifest["config"])
    trace = execute(cfg, red, run)
    return trace, trace_digest(trace) == manifest["sha256"]
