"""On-disk run artifacts: CSV/JSON writers with deterministic bytes.

All floats serialize with 17 significant digits (exact round-trip for 64-bit
values), all text files use UTF-8 with LF endings, and every artifact is
written atomically (temp file + rename). Re-running a command with the same
resolved configuration reproduces each file byte for byte.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

LOSS_CURVE_HEADER = "E,total,residual_term,penalty_term,norm_estimate,mu_used,steps_run,stop_reason"
FAILED_MARKER = "FAILED"


def fmt_float(x: float) -> str:
    """17 significant digits; parses back to the identical 64-bit value."""
    return f"{float(x):.17g}"


def canonical_json(obj) -> str:
    """Deterministic JSON: fixed key order as built, floats via fmt_float."""
    out: list[str] = []
    _emit(obj, out, 0)
    return "".join(out) + "\n"


def _emit(obj, out: list, indent: int):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}  {json.dumps(str(k))}: ")
            _emit(v, out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad + "  ")
            _emit(v, out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj))
    else:
        out.append(json.dumps(obj))


def write_atomic(path, data):
    """Write bytes or text atomically in the target directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, mode, **({} if isinstance(data, bytes) else {"newline": "\n"})) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_failed_marker(outdir, message: str):
    write_atomic(Path(outdir) / FAILED_MARKER, message.rstrip() + "\n")


def clear_failed_marker(outdir):
    marker = Path(outdir) / FAILED_MARKER
    if marker.exists():
        marker.unlink()


# --- loss curve ---

def loss_curve_csv(curve) -> str:
    lines = [LOSS_CURVE_HEADER]
    for e in curve.entries:
        bd = e.breakdown
        lines.append(",".join([
            fmt_float(e.E), fmt_float(bd.total), fmt_float(bd.residual_term),
            fmt_float(bd.penalty_term), fmt_float(bd.norm_estimate), fmt_float(bd.mu_used),
            str(e.steps_run), e.stop_reason,
        ]))
    return "\n".join(lines) + "\n"


def read_loss_curve_csv(path):
    """Rows of the loss curve as dicts with parsed floats."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or lines[0] != LOSS_CURVE_HEADER:
        raise ValueError(f"{path} does not carry the expected loss-curve header")
    keys = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        row = dict(zip(keys, parts))
        for k in ("E", "total", "residual_term", "penalty_term", "norm_estimate", "mu_used"):
            row[k] = float(row[k])
        row["steps_run"] = int(row["steps_run"])
        rows.append(row)
    return rows


# --- eigenvalue estimates ---

def eigenvalues_json(estimates, snapshot_paths, scan_cfg) -> str:
    doc = {
        "window": [scan_cfg.e_lo, scan_cfg.e_hi],
        "grid_count": scan_cfg.grid_count,
        "threshold": scan_cfg.threshold,
        "estimates": [
            {
                "E_hat": est.E_hat,
                "loss_at_min": est.loss_at_min,
                "grid_resolution": est.grid_resolution,
                "refinement_level": est.refinement_level,
                "snapshot": snap,
                "unbracketed": est.unbracketed,
            }
            for est, snap in zip(estimates, snapshot_paths)
        ],
    }
    return canonical_json(doc)


def read_eigenvalues_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --- oracle outputs ---

def oracle_json(spectrum) -> str:
    return canonical_json({
        "eigenvalues": list(spectrum.eigenvalues),
        "provenance": spectrum.provenance,
        "domain": spectrum.domain,
        "potential": spectrum.potential,
        "grid_n": spectrum.grid_n,
    })


def upper_bound_csv(pairs) -> str:
    lines = ["E,upper_bound"]
    lines += [f"{fmt_float(e)},{fmt_float(u)}" for e, u in pairs]
    return "\n".join(lines) + "\n"


# --- eigenfunction lattice export ---

def eigenfunction_csv(coords, values) -> str:
    d = coords.shape[1]
    header = ",".join([f"x{i + 1}" for i in range(d)] + ["u"])
    lines = [header]
    for row, u in zip(coords, values):
        lines.append(",".join([fmt_float(c) for c in row] + [fmt_float(u)]))
    return "\n".join(lines) + "\n"


# --- snapshots ---

def snapshot_relpath(ref: str) -> str:
    return f"snapshots/params_{ref}.bin"


def write_snapshots(outdir, store, refs) -> dict:
    """Persist the given snapshot refs; returns {ref: relative path}."""
    rels = {}
    for ref in refs:
        rel = snapshot_relpath(ref)
        write_atomic(Path(outdir) / rel, store.blob(ref))
        rels[ref] = rel
    return rels


def snapshot_manifest_json(curve, ref_paths) -> str:
    return canonical_json({
        "entries": [
            {"E": e.E, "snapshot": ref_paths[e.params_ref]}
            for e in curve.entries
        ],
    })
