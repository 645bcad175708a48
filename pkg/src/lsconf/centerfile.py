"""LSC1 center files: a float32 binary payload plus a key = value sidecar.

Binary layout (little-endian)::

    b"LSC1" | u32 n_dim | u32 n_vectors | n_vectors * n_dim float32, row-major

The sidecar (``<path>.meta``) carries family, rank, projection, seed,
interpolation_level, positive_only, permutation and radii.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .rootsys import (
    CenterConfiguration,
    CenterMatrix,
    Family,
    Projection,
    ROOT_FAMILIES,
    build_configuration,
    check_provenance,
)

MAGIC = b"LSC1"
_HEADER = struct.Struct("<4sII")


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def write_payload(path, vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors)
    if vectors.ndim != 2:
        raise ValueError("vectors must be 2-D")
    n_vectors, n_dim = vectors.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n_dim, n_vectors))
        fh.write(np.ascontiguousarray(vectors, dtype="<f4").tobytes())


def read_payload(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: truncated LSC1 header")
    magic, n_dim, n_vectors = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * n_dim * n_vectors
    if len(data) != expected:
        raise ParseError(f"{path}: payload is {len(data)} bytes, header implies {expected}")
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return arr.reshape(n_vectors, n_dim).copy()


def _fmt_list(values) -> str:
    return ",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(int(v)) for v in values)


def write_meta(path, meta: dict) -> None:
    lines = []
    for key, value in meta.items():
        if value is None:
            value = ""
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple, np.ndarray)):
            value = _fmt_list(value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_meta(path) -> dict:
    meta = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"{path}:{lineno}: expected 'key = value'")
        meta[key.strip()] = value.strip()
    return meta


def _opt_int(text: str | None) -> int | None:
    return None if not text else int(text)


def _int_list(text: str | None) -> np.ndarray | None:
    return None if not text else np.array([int(t) for t in text.split(",")], dtype=np.int64)


def _float_list(text: str | None) -> np.ndarray | None:
    return None if not text else np.array([float(t) for t in text.split(",")])


def save_centers(path, C: CenterMatrix) -> None:
    """Write ``C`` as an LSC1 payload and its provenance sidecar."""
    cfg = C.config
    meta = {
        "format": "LSC1",
        "family": C.source,
        "n_classes": C.n_classes,
        "n_dim": C.n_dim,
        "rank": cfg.rank if cfg is not None else None,
        "projection": cfg.projection.value if cfg is not None else Projection.NONE.value,
        "seed": cfg.seed if cfg is not None else None,
        "interpolation_level": cfg.interpolation_level if cfg is not None else 0,
        "positive_only": bool(cfg.positive_only) if cfg is not None else False,
        "permutation": cfg.permutation if cfg is not None else None,
        "radii": C.radii,
    }
    write_payload(path, C.centers)
    write_meta(meta_path(path), meta)


def rebuild_configuration(meta: dict) -> CenterConfiguration | None:
    """Regenerate a root configuration from sidecar fields, or None for other families."""
    family = Family(meta.get("family", "Custom"))
    if family not in ROOT_FAMILIES or not meta.get("rank"):
        return None
    cfg = build_configuration(
        family,
        int(meta["rank"]),
        projection=meta.get("projection", "None"),
        seed=_opt_int(meta.get("seed")),
        interpolation=int(meta.get("interpolation_level") or 0),
        positive_only=meta.get("positive_only") == "true",
    )
    stored = _int_list(meta.get("permutation"))
    if stored is not None and not np.array_equal(stored, cfg.permutation):
        raise ParseError("sidecar permutation does not match its seed")
    return cfg


def load_centers(path) -> CenterMatrix:
    """Read an LSC1 file; root families get their configuration rebuilt and checked."""
    vectors = read_payload(path)
    mp = meta_path(path)
    meta = read_meta(mp) if mp.exists() else {}
    radii = _float_list(meta.get("radii"))
    try:
        cfg = rebuild_configuration(meta)
    except ValueError as exc:
        raise ParseError(f"{mp}: {exc}") from exc
    source = meta.get("family", Family.CUSTOM.value)
    if cfg is None:
        family = Family(source) if source in Family._value2member_map_ else Family.CUSTOM
        cfg = CenterConfiguration.from_vectors(vectors, family=family)
        return CenterMatrix(vectors, config=cfg, radii=radii, source=source)
    C = CenterMatrix(vectors, config=cfg, radii=radii, source=source, validate=False)
    check_provenance(cfg, CenterMatrix(vectors, validate=False))
    return C
