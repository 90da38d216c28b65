"""File formats: trace CSV + manifest, frame-set CSV, PGM, PBM, PLY, diagnostics."""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .basis import MaskSchedule, MeasurementBasis
from .sensing import Trace

__all__ = [
    "TRACE_FORMAT",
    "write_trace_csv",
    "read_trace_csv",
    "write_manifest",
    "read_manifest",
    "write_trace_set",
    "read_trace_set",
    "schedule_from_manifest",
    "write_frame_set_csv",
    "read_frame_set_csv",
    "write_pgm",
    "read_pgm",
    "write_pbm",
    "write_ply",
    "read_ply",
    "write_diagnostics_csv",
    "pixel_to_metric",
]

TRACE_FORMAT = "cslidar-traces 1"
MANIFEST_NAME = "manifest.json"


def write_trace_csv(path, trace: Trace) -> None:
    """``bin_index,time_ns,count[,total]``; time is the bin start."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_total = trace.total is not None
        w.writerow(["bin_index", "time_ns", "count"] + (["total"] if has_total else []))
        t_ns = (trace.gate_delay + np.arange(len(trace.counts)) * trace.bin_width) * 1e9
        for j, c in enumerate(trace.counts):
            row = [j, f"{t_ns[j]:.6g}", int(c)]
            if has_total:
                row.append(int(trace.total[j]))
            w.writerow(row)


def read_trace_csv(path, mask_id=0, bin_width=None, n_pulses=1, gate_delay=0.0) -> Trace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["bin_index", "time_ns", "count"]:
        raise ValueError(f"{path}: not a trace CSV (bad header)")
    has_total = len(rows[0]) > 3 and rows[0][3] == "total"
    body = rows[1:]
    counts = np.array([int(r[2]) for r in body], dtype=np.int64)
    total = np.array([int(r[3]) for r in body], dtype=np.int64) if has_total else None
    if bin_width is None:
        times = [float(r[1]) for r in body[:2]]
        bin_width = (times[1] - times[0]) * 1e-9 if len(times) == 2 else 1e-9
    return Trace(counts, bin_width, n_pulses, mask_id, gate_delay, total)


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, np.generic):
        return v.item()
    return v


def write_manifest(path, data: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=1, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("format") != TRACE_FORMAT:
        raise ValueError(f"{path}: unsupported manifest format {data.get('format')!r}")
    return data


def write_trace_set(directory, traces, schedule: MaskSchedule, meta: dict) -> Path:
    """One CSV per mask plus ``manifest.json`` listing masks, seeds and configs."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    masks = []
    for i, tr in enumerate(traces):
        name = f"mask_{i:05d}.csv"
        write_trace_csv(d / name, tr)
        masks.append({"index": i, "row": tr.mask_id, "file": name})
    b = schedule.basis
    manifest = dict(meta)
    manifest.update({
        "format": TRACE_FORMAT,
        "basis": {"kind": b.kind, "n": b.n, "permutation_seed": b.permutation_seed},
        "repeats": schedule.repeats,
        "mask_rng": "numpy SeedSequence(entropy=seed, spawn_key=(index, 0 positive | 1 negative))",
        "masks": masks,
    })
    write_manifest(d / MANIFEST_NAME, manifest)
    return d / MANIFEST_NAME


def schedule_from_manifest(manifest: dict) -> MaskSchedule:
    b = manifest["basis"]
    basis = MeasurementBasis(int(b["n"]), b["kind"], int(b["permutation_seed"]))
    rows = tuple(int(m["row"]) for m in manifest["masks"])
    return MaskSchedule(basis, rows, int(manifest["repeats"]))


def read_trace_set(directory):
    """Returns ``(manifest, schedule, traces)``."""
    d = Path(directory)
    mpath = d / MANIFEST_NAME
    if not mpath.exists():
        raise FileNotFoundError(f"{d}: no {MANIFEST_NAME}")
    manifest = read_manifest(mpath)
    schedule = schedule_from_manifest(manifest)
    cfg = manifest.get("config", {})
    bw = float(cfg.get("bin_width_ns", 1.0)) * 1e-9
    gate = float(cfg.get("gate_delay_ns", 0.0)) * 1e-9
    traces = [read_trace_csv(d / m["file"], int(m["row"]), bw, schedule.repeats, gate)
              for m in manifest["masks"]]
    return manifest, schedule, traces


def write_frame_set_csv(path, frame_set) -> None:
    """Header of depth-bin centers (m), then one row per mask."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(d)) for d in frame_set.depth_bins])
        for row in frame_set.measurements:
            w.writerow([repr(float(v)) for v in row])


def read_frame_set_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    depths = np.array([float(v) for v in rows[0]])
    meas = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(depths))
    return depths, meas


def write_pgm(path, image, maxval: int = 65535) -> float:
    """16-bit binary PGM (P5).  Negatives clip to 0, the max maps to `maxval`.

    Returns the scale applied (counts per image unit).
    """
    img = np.clip(np.asarray(image, dtype=float), 0, None)
    peak = float(img.max()) if img.size else 0.0
    scale = maxval / peak if peak > 0 else 0.0
    data = np.rint(img * scale).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(data.tobytes())
    return scale


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if head is None:
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in head.groups())
    dtype = np.dtype(">u2" if maxval > 255 else "u1")
    data = raw[head.end():head.end() + w * h * dtype.itemsize]
    return np.frombuffer(data, dtype=dtype).reshape(h, w)


def write_pbm(path, mask) -> None:
    """Plain PBM (P1) of a binary mask; 1 = mirror toward the detector."""
    m = np.asarray(mask).astype(np.uint8)
    h, w = m.shape
    lines = [f"P1\n{w} {h}"] + [" ".join(str(int(v)) for v in r) for r in m]
    Path(path).write_text("\n".join(lines) + "\n")


def pixel_to_metric(points, width: int, height: int, fov_rad: float) -> np.ndarray:
    """Pixel-indexed points to metric ``(x, y, z, intensity)``.

    Pixels subtend ``fov_rad / width`` radians; y points up.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 4)
    col, row, depth, inten = p.T
    x = (col + 0.5 - width / 2) * (fov_rad / width) * depth
    y = -(row + 0.5 - height / 2) * (fov_rad / height) * depth
    return np.column_stack([x, y, depth, inten])


def write_ply(path, points_metric) -> None:
    """ASCII PLY 1.0 with float x, y, z (m) and intensity."""
    p = np.asarray(points_metric, dtype=float).reshape(-1, 4)
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(p)}\n"
        "property float x\nproperty float y\nproperty float z\nproperty float intensity\n"
        "end_header\n"
    )
    body = "".join(f"{x:.6f} {y:.6f} {z:.6f} {i:.6g}\n" for x, y, z, i in p)
    Path(path).write_text(header + body)


def read_ply(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "ply":
        raise ValueError(f"{path}: not a PLY file")
    end = lines.index("end_header")
    n = next(int(ln.split()[2]) for ln in lines[:end] if ln.startswith("element vertex"))
    rows = [list(map(float, ln.split())) for ln in lines[end + 1:end + 1 + n]]
    return np.array(rows, dtype=float).reshape(n, 4)


def write_diagnostics_csv(path, reconstruction) -> None:
    """Objective value per iteration, one block per frame."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "depth_m", "iteration", "objective"])
        if reconstruction is None:
            return
        for b, hist in enumerate(reconstruction.objective_histories):
            d = float(reconstruction.depth_bins[b])
            for k, v in enumerate(hist):
                w.writerow([b, f"{d:.4f}", k, repr(float(v))])
