"""File formats: point clouds, binary model files, run configs, CSV reports.

Cloud text formats round-trip exactly (floats are written with shortest
round-trip precision); the model container is a little-endian flat binary
whose write/read cycle reproduces the extractor bit for bit. Every CSV
writer here has a matching reader.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .features import (
    FeatureExtractor,
    HopConfig,
    HopModel,
    RetainedChannel,
    SaabKernel,
)
from .geometry import PointCloud

__all__ = [
    "CLOUD_FORMATS",
    "CloudFile",
    "RunConfig",
    "load_cloud",
    "write_cloud",
    "save_model",
    "load_model",
    "load_run_config",
    "parse_run_config",
    "write_report_csv",
    "read_report_csv",
    "write_histogram_csv",
    "read_histogram_csv",
    "write_registration_csv",
    "read_keyvalue_csv",
    "write_saliency_csv",
    "read_saliency_csv",
]

CLOUD_FORMATS = ("xyz-text", "ply-ascii", "off-vertices", "csv")

_SUFFIX_FORMAT = {
    ".xyz": "xyz-text",
    ".txt": "xyz-text",
    ".ply": "ply-ascii",
    ".off": "off-vertices",
    ".csv": "csv",
}

MODEL_MAGIC = b"SPA1"
MODEL_VERSION = 1


@dataclass(frozen=True)
class CloudFile:
    """A point-cloud file reference with an optional explicit format and label."""

    path: str
    format: str = None
    label: str = None


def _infer_format(path: str) -> str:
    suffix = Path(path).suffix.lower()
    fmt = _SUFFIX_FORMAT.get(suffix)
    if fmt is None:
        raise DataFormatError(
            f"{path}: cannot infer cloud format from suffix {suffix!r}; "
            f"pass one of {CLOUD_FORMATS}"
        )
    return fmt


def _parse_floats(text: str, count: int, path: str, line_no: int) -> list:
    parts = text.split()
    if len(parts) < count:
        raise DataFormatError(
            f"{path}:{line_no}: expected {count} numeric fields, found {len(parts)}"
        )
    try:
        return [float(p) for p in parts[:count]]
    except ValueError as exc:
        raise DataFormatError(f"{path}:{line_no}: {exc}") from None


def _load_xyz(lines, path: str) -> list:
    pts = []
    for i, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        pts.append(_parse_floats(text, 3, path, i))
    return pts


def _load_csv(lines, path: str) -> list:
    rows = list(csv.reader(lines))
    if not rows or [c.strip() for c in rows[0][:3]] != ["x", "y", "z"]:
        raise DataFormatError(f"{path}:1: csv clouds must start with an 'x,y,z' header")
    pts = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        pts.append(_parse_floats(" ".join(row[:3]), 3, path, i))
    return pts


def _load_ply(lines, path: str) -> list:
    if not lines or lines[0].strip() != "ply":
        raise DataFormatError(f"{path}:1: not a ply file (missing 'ply' magic line)")
    n_vertices = None
    props = []
    in_vertex_element = False
    body_start = None
    for i, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if text == "end_header":
            body_start = i + 1
            break
        if text.startswith("format"):
            if "ascii" not in text:
                raise DataFormatError(f"{path}:{i}: only ascii ply is supported")
        elif text.startswith("element"):
            parts = text.split()
            in_vertex_element = len(parts) == 3 and parts[1] == "vertex"
            if in_vertex_element:
                try:
                    n_vertices = int(parts[2])
                except ValueError:
                    raise DataFormatError(f"{path}:{i}: bad vertex count {parts[2]!r}") from None
        elif text.startswith("property") and in_vertex_element:
            props.append(text.split()[-1])
    if body_start is None:
        raise DataFormatError(f"{path}: header never ends (missing 'end_header')")
    if n_vertices is None:
        raise DataFormatError(f"{path}: header declares no vertex element")
    try:
        cols = [props.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise DataFormatError(f"{path}: vertex element lacks x/y/z properties") from None

    pts = []
    body = lines[body_start - 1:]
    for i, raw in enumerate(body[:n_vertices], start=body_start):
        parts = raw.split()
        if len(parts) < len(props):
            raise DataFormatError(
                f"{path}:{i}: vertex row has {len(parts)} fields, header promises {len(props)}"
            )
        try:
            pts.append([float(parts[c]) for c in cols])
        except ValueError as exc:
            raise DataFormatError(f"{path}:{i}: {exc}") from None
    if len(pts) < n_vertices:
        raise DataFormatError(
            f"{path}: file ends after {len(pts)} vertices, header promises {n_vertices}"
        )
    return pts


def _load_off(lines, path: str) -> list:
    if not lines:
        raise DataFormatError(f"{path}:1: empty file")
    first = lines[0].strip()
    if not first.startswith("OFF"):
        raise DataFormatError(f"{path}:1: not an OFF file (missing magic)")
    rest = first[3:].strip()
    if rest:
        counts_text, counts_line, body_at = rest, 1, 1
    else:
        if len(lines) < 2:
            raise DataFormatError(f"{path}:2: missing OFF count line")
        counts_text, counts_line, body_at = lines[1].strip(), 2, 2
    parts = counts_text.split()
    if len(parts) < 3:
        raise DataFormatError(f"{path}:{counts_line}: OFF counts need 3 fields")
    try:
        n_vertices = int(parts[0])
    except ValueError:
        raise DataFormatError(f"{path}:{counts_line}: bad vertex count {parts[0]!r}") from None

    pts = []
    for i, raw in enumerate(lines[body_at:], start=body_at + 1):
        if len(pts) == n_vertices:
            break
        text = raw.strip()
        if not text:
            continue
        pts.append(_parse_floats(text, 3, path, i))
    if len(pts) < n_vertices:
        raise DataFormatError(
            f"{path}: file ends after {len(pts)} vertices, header promises {n_vertices}"
        )
    return pts


_LOADERS = {
    "xyz-text": _load_xyz,
    "csv": _load_csv,
    "ply-ascii": _load_ply,
    "off-vertices": _load_off,
}


def load_cloud(file, subsample_to: int = None, format: str = None) -> PointCloud:
    """Parse a cloud file; optionally keep only the first `subsample_to` points."""
    if isinstance(file, CloudFile):
        path, fmt = file.path, format or file.format
    else:
        path, fmt = str(file), format
    fmt = fmt or _infer_format(path)
    if fmt not in CLOUD_FORMATS:
        raise DataFormatError(f"unknown cloud format {fmt!r}; choose from {CLOUD_FORMATS}")
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    pts = _LOADERS[fmt](lines, path)
    if not pts:
        raise DataFormatError(f"{path}: no points found")
    if subsample_to is not None:
        if len(pts) < subsample_to:
            raise DataFormatError(
                f"{path}: has {len(pts)} points, fewer than subsample_to={subsample_to}"
            )
        pts = pts[:subsample_to]
    try:
        return PointCloud(np.asarray(pts, dtype=np.float64))
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def _fmt(x: float) -> str:
    return repr(float(x))


def write_cloud(cloud: PointCloud, path, format: str = None):
    """Write a cloud in any supported text format (exact float round-trip)."""
    fmt = format or _infer_format(str(path))
    if fmt not in CLOUD_FORMATS:
        raise DataFormatError(f"unknown cloud format {fmt!r}; choose from {CLOUD_FORMATS}")
    rows = [" ".join(_fmt(v) for v in p) for p in cloud.points]
    if fmt == "xyz-text":
        text = "\n".join(rows) + "\n"
    elif fmt == "csv":
        text = "x,y,z\n" + "\n".join(",".join(_fmt(v) for v in p) for p in cloud.points) + "\n"
    elif fmt == "ply-ascii":
        header = (
            "ply\nformat ascii 1.0\n"
            f"element vertex {cloud.n}\n"
            "property double x\nproperty double y\nproperty double z\n"
            "end_header\n"
        )
        text = header + "\n".join(rows) + "\n"
    else:
        text = f"OFF\n{cloud.n} 0 0\n" + "\n".join(rows) + "\n"
    Path(path).write_text(text)


class _Reader:
    """Cursor over model bytes that names the failing section on shortage."""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, section: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DataFormatError(
                f"{self.path}: payload shorter than header promises "
                f"(reading {section}: need {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, section: str) -> int:
        return struct.unpack("<I", self.take(4, section))[0]

    def f64(self, section: str) -> float:
        return struct.unpack("<d", self.take(8, section))[0]

    def f64s(self, count: int, section: str) -> np.ndarray:
        raw = self.take(8 * count, section)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def save_model(extractor: FeatureExtractor, path):
    """Serialize the extractor to the flat little-endian container."""
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<I", MODEL_VERSION)
    cfg = extractor.config
    out += struct.pack("<4I", *cfg.neighbors_per_hop)
    out += struct.pack("<4I", *cfg.points_per_hop)
    out += struct.pack("<d", cfg.energy_threshold)
    out += struct.pack("<I", extractor.feature_dim)
    for hop in extractor.hops:
        out += struct.pack("<I", len(hop.kernels))
        for k in hop.kernels:
            out += struct.pack(
                "<III", k.input_dim, k.ac_kernels.shape[0], k.energies.shape[0]
            )
            out += np.ascontiguousarray(k.mean, dtype="<f8").tobytes()
            out += np.ascontiguousarray(k.ac_kernels, dtype="<f8").tobytes()
            out += np.ascontiguousarray(k.energies, dtype="<f8").tobytes()
        out += struct.pack("<I", len(hop.retained))
        for rc in hop.retained:
            out += struct.pack("<I", rc.flat_channel)
            out += struct.pack("<d", rc.cum_energy)
    Path(path).write_bytes(bytes(out))


def load_model(path) -> FeatureExtractor:
    """Read a model container back; bit-exact inverse of save_model."""
    path = str(path)
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    r = _Reader(data, path)
    magic = r.take(4, "magic")
    if magic != MODEL_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    version = r.u32("version")
    if version != MODEL_VERSION:
        raise DataFormatError(f"{path}: unknown model version {version}")
    neighbors = tuple(r.u32("hop config neighbors") for _ in range(4))
    points = tuple(r.u32("hop config points") for _ in range(4))
    threshold = r.f64("hop config threshold")
    try:
        config = HopConfig(neighbors, threshold, points)
    except ValueError as exc:
        raise DataFormatError(f"{path}: invalid hop config: {exc}") from None
    feature_dim = r.u32("feature_dim")

    hops = []
    for h in range(4):
        n_kernels = r.u32(f"hop {h + 1} kernel count")
        kernels = []
        for ki in range(n_kernels):
            where = f"hop {h + 1} kernel {ki}"
            d = r.u32(f"{where} input_dim")
            n_ac = r.u32(f"{where} ac count")
            n_energy = r.u32(f"{where} energy count")
            mean = r.f64s(d, f"{where} mean")
            ac = r.f64s(n_ac * d, f"{where} ac kernels").reshape(n_ac, d)
            energies = r.f64s(n_energy, f"{where} energies")
            try:
                kernels.append(SaabKernel(mean, ac, energies))
            except ValueError as exc:
                raise DataFormatError(f"{path}: {where}: {exc}") from None
        n_ret = r.u32(f"hop {h + 1} retained count")
        retained = []
        for ri in range(n_ret):
            flat = r.u32(f"hop {h + 1} retained channel {ri}")
            cum = r.f64(f"hop {h + 1} retained energy {ri}")
            retained.append(RetainedChannel(flat, cum))
        try:
            hops.append(HopModel(tuple(kernels), tuple(retained)))
        except ValueError as exc:
            raise DataFormatError(f"{path}: hop {h + 1}: {exc}") from None
    if r.pos != len(data):
        raise DataFormatError(f"{path}: {len(data) - r.pos} trailing bytes after payload")
    try:
        extractor = FeatureExtractor(config, tuple(hops))
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if extractor.feature_dim != feature_dim:
        raise DataFormatError(
            f"{path}: header feature_dim {feature_dim} does not match "
            f"payload retained channels {extractor.feature_dim}"
        )
    return extractor


@dataclass(frozen=True)
class RunConfig:
    """Every tunable with its default; parsed from key=value text."""

    neighbors_per_hop: tuple = (32, 8, 8, 8)
    points_per_hop: tuple = (1024, 768, 512, 384)
    energy_threshold: float = 0.0001
    m_salient: int = 32
    iterations: int = 10
    icp_iterations: int = 50
    saliency_k: int = 32
    pool_fraction: float = 0.25
    seed: int = 0
    noise_variance: float = 0.0
    noise_seed: int = 0
    subsample_to: int = 0
    match_all_source: bool = False
    data_dir: str = ""
    model_path: str = ""
    out_path: str = ""

    def hop_config(self) -> HopConfig:
        return HopConfig(self.neighbors_per_hop, self.energy_threshold, self.points_per_hop)


def _parse_config_value(key: str, text: str, default, path: str, line_no: int):
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"bad boolean {text!r}")
            return lowered in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(v.strip()) for v in text.split(","))
        return text
    except ValueError as exc:
        raise DataFormatError(f"{path}:{line_no}: key {key!r}: {exc}") from None


def parse_run_config(text: str, path: str = "<config>") -> RunConfig:
    """Parse key=value lines; '#' starts a comment; unknown keys are rejected."""
    defaults = {f.name: getattr(RunConfig(), f.name) for f in fields(RunConfig)}
    values = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{i}: expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in defaults:
            raise DataFormatError(
                f"{path}:{i}: unknown key {key!r}; known keys: {', '.join(sorted(defaults))}"
            )
        values[key] = _parse_config_value(key, val, defaults[key], path, i)
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def load_run_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    return parse_run_config(text, str(path))


REPORT_HEADER = [
    "method", "max_angle_deg", "mse_r", "rmse_r", "mae_r",
    "mse_t", "rmse_t", "mae_t", "n_samples", "n_excluded",
]


def write_report_csv(rows, path):
    """One CSV row per (method, angle) with the six metrics and sample counts."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for row in rows:
            rep = row.report
            metrics = (
                ["nan"] * 6
                if rep is None
                else [_fmt(v) for v in (rep.mse_r, rep.rmse_r, rep.mae_r,
                                        rep.mse_t, rep.rmse_t, rep.mae_t)]
            )
            w.writerow([row.method, _fmt(row.max_angle_deg), *metrics,
                        row.n_samples, row.n_excluded])


def read_report_csv(path):
    """Rows back as dicts with typed fields."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != REPORT_HEADER:
        raise DataFormatError(f"{path}:1: expected report header {','.join(REPORT_HEADER)}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(REPORT_HEADER):
            raise DataFormatError(f"{path}:{i}: expected {len(REPORT_HEADER)} fields")
        try:
            out.append({
                "method": row[0],
                "max_angle_deg": float(row[1]),
                "mse_r": float(row[2]),
                "rmse_r": float(row[3]),
                "mae_r": float(row[4]),
                "mse_t": float(row[5]),
                "rmse_t": float(row[6]),
                "mae_t": float(row[7]),
                "n_samples": int(row[8]),
                "n_excluded": int(row[9]),
            })
        except ValueError as exc:
            raise DataFormatError(f"{path}:{i}: {exc}") from None
    return out


HISTOGRAM_HEADER = ["bin_lower_deg", "count"]


def write_histogram_csv(hist, path):
    """Bin rows plus two trailing threshold-fraction rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTOGRAM_HEADER)
        for lower, count in hist.bins:
            w.writerow([_fmt(lower), count])
        w.writerow(["frac_below_1deg", _fmt(hist.frac_below_1deg)])
        w.writerow(["frac_below_5deg", _fmt(hist.frac_below_5deg)])


def read_histogram_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != HISTOGRAM_HEADER:
        raise DataFormatError(f"{path}:1: expected histogram header")
    bins = []
    fracs = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise DataFormatError(f"{path}:{i}: expected 2 fields")
        try:
            if row[0].startswith("frac_"):
                fracs[row[0]] = float(row[1])
            else:
                bins.append((float(row[0]), int(row[1])))
        except ValueError as exc:
            raise DataFormatError(f"{path}:{i}: {exc}") from None
    return {"bins": bins, **fracs}


def write_registration_csv(result, estimate, euler, path):
    """Key,value rows: rotation matrix, Euler angles, translation, residual trail."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for i in range(3):
            for j in range(3):
                w.writerow([f"rotation_{i}{j}", _fmt(estimate.rotation[i, j])])
        w.writerow(["euler_rx_deg", _fmt(euler.rx)])
        w.writerow(["euler_ry_deg", _fmt(euler.ry)])
        w.writerow(["euler_rz_deg", _fmt(euler.rz)])
        for axis, v in zip("xyz", estimate.translation):
            w.writerow([f"translation_{axis}", _fmt(v)])
        w.writerow(["iterations_run", result.iterations_run])
        w.writerow(["converged", str(result.converged).lower()])
        w.writerow(["flagged", str(result.flagged).lower()])
        w.writerow(["flag_reason", result.flag_reason])
        for i, rec in enumerate(result.per_iteration, start=1):
            w.writerow([f"residual_rmse_{i}", _fmt(rec.residual_rmse)])


def read_keyvalue_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["key", "value"]:
        raise DataFormatError(f"{path}:1: expected 'key,value' header")
    out = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise DataFormatError(f"{path}:{i}: expected 2 fields")
        out[row[0]] = row[1]
    return out


SALIENCY_HEADER = ["index", "x", "y", "z", "lambda"]


def write_saliency_csv(cloud: PointCloud, salient, path):
    """One row per selected point: index, coordinates, curvature energy."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SALIENCY_HEADER)
        for idx, lam in zip(salient.indices, salient.lambdas):
            p = cloud.points[idx]
            w.writerow([int(idx), _fmt(p[0]), _fmt(p[1]), _fmt(p[2]), _fmt(lam)])


def read_saliency_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SALIENCY_HEADER:
        raise DataFormatError(f"{path}:1: expected saliency header")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 5:
            raise DataFormatError(f"{path}:{i}: expected 5 fields")
        try:
            out.append({
                "index": int(row[0]),
                "x": float(row[1]),
                "y": float(row[2]),
                "z": float(row[3]),
                "lambda": float(row[4]),
            })
        except ValueError as exc:
            raise DataFormatError(f"{path}:{i}: {exc}") from None
    return out
