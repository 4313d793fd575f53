"""Weight persistence: a JSON manifest plus one raw little-endian float64 blob per layer."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .ann import AnalogNetwork
from .coding import ExponentRange, LaVariant
from .ef_neuron import EfConfig
from .errors import ConfigError
from .layers import op_from_record
from .runtime import SnnLayer, SnnNetwork

MANIFEST = "manifest.json"
FORMAT_VERSION = 1
_LE_F64 = np.dtype("<f8")


def _range_str(r):
    return None if r is None else str(r)


def _range(s):
    return None if s is None else ExponentRange.parse(s)


def _op_record(op, blob):
    rec = {"kind": op.kind, "in_shape": list(op.in_shape), "weight_shape": list(op.weight.shape),
           "blob": blob}
    if op.kind == "conv2d":
        rec.update(stride=op.stride, padding=op.padding)
    elif op.kind == "avgpool":
        rec["size"] = op.size
    return rec


def _write_blob(path: Path, array):
    path.write_bytes(np.ascontiguousarray(array, dtype=_LE_F64).tobytes())


def _read_blob(path: Path, shape):
    raw = path.read_bytes()
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise ConfigError(f"{path.name}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=_LE_F64).reshape(shape).astype(np.float64)


def _load_ops(directory: Path, records):
    ops = []
    for rec in records:
        w = _read_blob(directory / rec["blob"], tuple(rec["weight_shape"]))
        ops.append(op_from_record(rec["kind"], w, tuple(rec["in_shape"]), rec.get("stride", 1),
                                  rec.get("padding", 0), rec.get("size", 0)))
    return ops


def _read_manifest(directory: Path, kind: str):
    path = directory / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {directory}")
    manifest = json.loads(path.read_text())
    if manifest.get("type") != kind:
        raise ConfigError(f"{directory} holds a {manifest.get('type')!r} bundle, expected {kind!r}")
    return manifest


def save_ann(net: AnalogNetwork, directory, extra=None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    layers = []
    for i, (op, r, v) in enumerate(zip(net.ops, net.ranges, net.variants)):
        blob = f"layer{i}.f64"
        _write_blob(d / blob, op.weight)
        rec = _op_record(op, blob)
        rec.update(range=_range_str(r), la_variant=v.value)
        layers.append(rec)
    manifest = {
        "type": "ann", "format_version": FORMAT_VERSION,
        "input_shape": list(net.input_shape), "input_range": _range_str(net.input_range),
        "input_variant": net.input_variant.value, "mode": net.mode,
        "layers": layers, "meta": net.meta,
    }
    if extra:
        manifest.update(extra)
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return d


def load_ann(directory) -> AnalogNetwork:
    d = Path(directory)
    m = _read_manifest(d, "ann")
    ops = _load_ops(d, m["layers"])
    return AnalogNetwork(tuple(m["input_shape"]), ops, [_range(l["range"]) for l in m["layers"]],
                         [LaVariant.parse(l["la_variant"]) for l in m["layers"]],
                         _range(m["input_range"]), LaVariant.parse(m["input_variant"]),
                         m["mode"], meta=m.get("meta", {}))


def save_snn(net: SnnNetwork, directory, extra=None) -> Path:
    """Stores the pre-scaled weights together with each layer's window configuration."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    layers = []
    for i, layer in enumerate(net.layers):
        blob = f"snn_layer{i}.f64"
        _write_blob(d / blob, layer.op.weight)
        rec = _op_record(layer.op, blob)
        rec.update(input_range=str(layer.cfg.input_range), output_range=str(layer.cfg.output_range),
                   variant=layer.cfg.variant.value)
        layers.append(rec)
    manifest = {
        "type": "snn", "format_version": FORMAT_VERSION,
        "input_shape": list(net.input_shape), "input_range": str(net.input_range),
        "input_variant": net.input_variant.value, "layers": layers, "meta": net.meta,
    }
    if extra:
        manifest.update(extra)
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return d


def load_snn(directory) -> SnnNetwork:
    d = Path(directory)
    m = _read_manifest(d, "snn")
    ops = _load_ops(d, m["layers"])
    layers = [SnnLayer(op, EfConfig(_range(l["input_range"]), _range(l["output_range"]),
                                    LaVariant.parse(l["variant"])))
              for op, l in zip(ops, m["layers"])]
    return SnnNetwork(tuple(m["input_shape"]), _range(m["input_range"]), layers,
                      LaVariant.parse(m["input_variant"]), m.get("meta", {}))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_csv(path, header, rows, comments=None):
    """CSV with optional leading ``# key=value`` metadata lines."""
    with open(path, "w", newline="") as fh:
        for k, v in (comments or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def read_csv(path):
    """Returns ``(metadata, rows)`` where rows are dicts of strings."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("# "):
                k, _, v = line[2:].rstrip("\n").partition("=")
                meta[k] = v
            else:
                lines.append(line)
    return meta, list(csv.DictReader(lines))


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (ExponentRange, LaVariant, Path)):
        return str(o.value if isinstance(o, LaVariant) else o)
    raise TypeError(f"{type(o).__name__} is not JSON serializable")
