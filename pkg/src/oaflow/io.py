"""File formats: JSON sidecars next to raw little-endian arrays.

* volume: ``<name>.vol.json`` + ``<name>.vol.raw`` (f32, depth-fastest)
* labels: ``<name>.lbl.json`` + ``<name>.lbl.raw`` (u8, depth-fastest)
* distance / score matrix: ``<path>.json`` + ``<path>`` (f32, row-major)
* dictionary: ``<path>`` JSON manifest + ``<path>.blob`` (f64, row-major)
* metrics report: a single JSON document

``name`` may be given with or without the ``.vol`` / ``.lbl`` suffixes.
"""
import json
from pathlib import Path

import numpy as np

from .clustering import PrototypeDictionary
from .errors import ConfigError, InvalidDimensionError
from .features import LabeledVolume, Volume
from .pipeline import MetricsReport


def _stem(path, kind):
    p = str(path)
    for suffix in (f".{kind}.json", f".{kind}.raw", f".{kind}"):
        if p.endswith(suffix):
            return p[: -len(suffix)]
    return p


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_raw(path, dtype, count):
    try:
        arr = np.fromfile(path, dtype=dtype)
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file {path}") from exc
    if arr.size != count:
        raise InvalidDimensionError(f"{path} holds {arr.size} values, header announces {count}")
    return arr


def write_volume(name, vol: Volume):
    stem = _stem(name, "vol")
    header = {"dims": list(vol.dims), "dtype": "f32", "layout": "depth-fastest"}
    if vol.spacing is not None:
        header["spacing_um"] = [float(s) for s in vol.spacing]
    _write_json(stem + ".vol.json", header)
    vol.flat().astype("<f4").tofile(stem + ".vol.raw")
    return stem


def read_volume(name) -> Volume:
    stem = _stem(name, "vol")
    h = _read_json(stem + ".vol.json")
    if h.get("dtype") != "f32" or h.get("layout") != "depth-fastest":
        raise ConfigError(f"unsupported volume encoding {h.get('dtype')}/{h.get('layout')}")
    dims = tuple(int(v) for v in h["dims"])
    data = _read_raw(stem + ".vol.raw", "<f4", int(np.prod(dims)))
    return Volume(data.astype(float).reshape(dims, order="F"), h.get("spacing_um"))


def write_labels(name, lab: LabeledVolume):
    stem = _stem(name, "lbl")
    if lab.c > 256:
        raise ConfigError("u8 label files hold at most 256 labels")
    _write_json(stem + ".lbl.json", {"dims": list(lab.dims), "c": int(lab.c), "dtype": "u8"})
    lab.flat().astype(np.uint8).tofile(stem + ".lbl.raw")
    return stem


def read_labels(name) -> LabeledVolume:
    stem = _stem(name, "lbl")
    h = _read_json(stem + ".lbl.json")
    if h.get("dtype") != "u8":
        raise ConfigError(f"unsupported label dtype {h.get('dtype')}")
    dims = tuple(int(v) for v in h["dims"])
    flat = _read_raw(stem + ".lbl.raw", np.uint8, int(np.prod(dims)))
    return LabeledVolume.from_flat(flat.astype(np.int64), dims, int(h["c"]))


def write_matrix(path, M):
    """Write an ``(n, c)`` float matrix with its sidecar ``<path>.json``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InvalidDimensionError("matrix must be 2-D")
    _write_json(str(path) + ".json", {"n": M.shape[0], "c": M.shape[1], "dtype": "f32"})
    M.astype("<f4").tofile(str(path))


def read_matrix(path):
    h = _read_json(str(path) + ".json")
    if h.get("dtype") != "f32":
        raise ConfigError(f"unsupported matrix dtype {h.get('dtype')}")
    n, c = int(h["n"]), int(h["c"])
    return _read_raw(str(path), "<f4", n * c).astype(float).reshape(n, c)


def write_dictionary(path, dictionary: PrototypeDictionary):
    path = Path(path)
    blob = path.with_name(path.name + ".blob")
    manifest = {
        "layer_count": dictionary.layer_count,
        "dims": dictionary.dim,
        "K": dictionary.sizes,
        "dtype": "f64",
        "blob": blob.name,
    }
    _write_json(path, manifest)
    np.concatenate([P.reshape(-1) for P in dictionary.prototypes]).astype("<f8").tofile(blob)


def read_dictionary(path) -> PrototypeDictionary:
    path = Path(path)
    m = _read_json(path)
    d, sizes = int(m["dims"]), [int(k) for k in m["K"]]
    if len(sizes) != int(m["layer_count"]):
        raise ConfigError("dictionary manifest: K list does not match layer_count")
    flat = _read_raw(path.with_name(m.get("blob", path.name + ".blob")), "<f8", sum(sizes) * d * d)
    protos, start = [], 0
    for k in sizes:
        protos.append(flat[start:start + k * d * d].reshape(k, d, d))
        start += k * d * d
    return PrototypeDictionary(protos)


def write_report(path, report: MetricsReport):
    _write_json(path, report.to_dict())


def read_report(path) -> MetricsReport:
    return MetricsReport.from_dict(_read_json(path))
