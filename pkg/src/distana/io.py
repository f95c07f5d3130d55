"""File formats: WAVD sequences, P2 graymaps, key=value configs, run manifests.

WAVD layout (little-endian)::

    b"WAVD" | u16 version | u32 T | u32 H | u32 W | T*H*W x f32, [t][i][j] order
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

WAVD_MAGIC = b"WAVD"
WAVD_VERSION = 1
_HEADER = struct.Struct("<4sHIII")


class FormatError(ValueError):
    pass


def wavd_bytes(seq) -> bytes:
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 3:
        raise FormatError(f"WAVD holds T x H x W sequences, got shape {arr.shape}")
    T, H, W = arr.shape
    return _HEADER.pack(WAVD_MAGIC, WAVD_VERSION, T, H, W) + arr.astype("<f4").tobytes()


def parse_wavd(raw: bytes) -> np.ndarray:
    if len(raw) < _HEADER.size:
        raise FormatError("truncated WAVD header")
    magic, version, T, H, W = _HEADER.unpack_from(raw)
    if magic != WAVD_MAGIC:
        raise FormatError(f"bad WAVD magic {magic!r}")
    if version != WAVD_VERSION:
        raise FormatError(f"unsupported WAVD version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 4 * T * H * W:
        raise FormatError(f"WAVD body holds {len(body)} bytes, expected {4 * T * H * W}")
    return np.frombuffer(body, dtype="<f4").reshape(T, H, W).astype(np.float64)


def write_wavd(path, seq) -> None:
    Path(path).write_bytes(wavd_bytes(seq))


def read_wavd(path) -> np.ndarray:
    return parse_wavd(Path(path).read_bytes())


def read_wavd_dir(path) -> np.ndarray:
    """Stack every ``*.wavd`` file of a directory in name order."""
    files = sorted(Path(path).glob("*.wavd"))
    if not files:
        raise FormatError(f"no .wavd files in {path}")
    return np.stack([read_wavd(f) for f in files])


def pgm_text(frame, lo: float = -1.0, hi: float = 1.0, maxval: int = 255) -> str:
    """ASCII ("P2") graymap of a 2-D field, values clipped to ``[lo, hi]``."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 2:
        raise FormatError(f"graymap needs a 2-D frame, got {f.shape}")
    g = np.rint((np.clip(f, lo, hi) - lo) / (hi - lo) * maxval).astype(int)
    lines = [f"P2\n{f.shape[1]} {f.shape[0]}\n{maxval}"]
    lines += [" ".join(str(v) for v in row) for row in g]
    return "\n".join(lines) + "\n"


def parse_pgm(text: str) -> np.ndarray:
    tokens = [t for line in text.splitlines() if not line.startswith("#") for t in line.split()]
    if not tokens or tokens[0] != "P2":
        raise FormatError("not an ASCII P2 graymap")
    w, h, _ = int(tokens[1]), int(tokens[2]), int(tokens[3])
    vals = np.array(tokens[4:], dtype=int)
    if vals.size != w * h:
        raise FormatError(f"graymap holds {vals.size} values, expected {w * h}")
    return vals.reshape(h, w)


def frame_strip(panels, gap: int = 1, fill: float = 0.0) -> np.ndarray:
    """Place equally sized 2-D panels side by side separated by ``gap`` columns."""
    panels = [np.asarray(p, dtype=np.float64) for p in panels]
    H = panels[0].shape[0]
    spacer = np.full((H, gap), fill)
    parts = []
    for k, p in enumerate(panels):
        if k:
            parts.append(spacer)
        parts.append(p)
    return np.hstack(parts)


def read_kv(path) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv(path, values: dict) -> None:
    Path(path).write_text("".join(f"{k}={values[k]}\n" for k in sorted(values)))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command: str, config: dict, inputs=(), version: str = "") -> Path:
    """Write ``manifest.json`` describing a run directory.

    Output digests cover every file present except the manifest itself and
    the lock file.
    """
    out_dir = Path(out_dir)
    outputs = {
        p.relative_to(out_dir).as_posix(): sha256_file(p)
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and p.name not in ("manifest.json", ".lock")
    }
    input_digests = {}
    for item in inputs:
        item = Path(item)
        files = sorted(item.rglob("*")) if item.is_dir() else [item]
        for f in files:
            if f.is_file() and f.name not in ("manifest.json", ".lock"):
                input_digests[str(f)] = sha256_file(f)
    manifest = {
        "command": command,
        "config": config,
        "tool_version": version,
        "inputs": input_digests,
        "outputs": outputs,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_csv(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)
