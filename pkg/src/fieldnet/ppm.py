"""Binary PPM (P6, maxval 255) I/O for frames, clips, and field streams.

A clip on disk is a directory of zero-padded numbered files
(``000000.ppm``, ``000001.ppm``, ...) read in lexicographic order.  A field
stream adds a ``manifest.json`` recording each field's parity and source
frame index.
"""

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .fields import ClipStream, Field, Frame

MANIFEST_NAME = "manifest.json"


def to_uint8(pixels):
    """[0,1] float -> uint8 via round(v*255), clamped."""
    return np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(raw):
    return raw.astype(np.float32) / np.float32(255.0)


def _read_header_token(f):
    # skip whitespace and '#' comments between header tokens
    token = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise DataError("truncated PPM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_ppm(path):
    """Read a P6 PPM into a [3,H,W] float32 array in [0,1]."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic != b"P6":
            raise DataError(f"{path}: not a P6 PPM (magic {magic!r})")
        width = int(_read_header_token(f))
        height = int(_read_header_token(f))
        maxval = int(_read_header_token(f))
        if maxval != 255:
            raise DataError(f"{path}: unsupported maxval {maxval}, need 255")
        raw = f.read(width * height * 3)
    if len(raw) != width * height * 3:
        raise DataError(f"{path}: truncated pixel data")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return from_uint8(img.transpose(2, 0, 1))


def write_ppm(path, pixels):
    """Write a [3,H,W] array in [0,1] as P6 with maxval 255."""
    img = to_uint8(pixels).transpose(1, 2, 0)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def frame_name(i):
    return f"{i:06d}.ppm"


def list_ppm_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    files = sorted(directory.glob("*.ppm"))
    if not files:
        raise DataError(f"{directory}: no frames (*.ppm) found")
    return files


def read_clip(directory):
    """Read a directory of PPM frames as a progressive clip."""
    frames = []
    for p in list_ppm_files(directory):
        try:
            frames.append(Frame(read_ppm(p)))
        except Exception as e:
            raise DataError(f"{p}: {e}") from e
    return frames


def write_clip(directory, frames):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        pixels = frame.pixels if isinstance(frame, Frame) else frame
        write_ppm(directory / frame_name(i), pixels)


def write_field_stream(directory, stream):
    """Write a field stream's PPMs plus the parity/source manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (fld, src) in enumerate(zip(stream.fields, stream.source_index)):
        name = frame_name(i)
        write_ppm(directory / name, fld.pixels)
        entries.append({"file": name, "parity": fld.parity, "source_index": src})
    manifest = {
        "width": stream.fields[0].width,
        "field_height": stream.fields[0].height,
        "fields": entries,
    }
    with open(directory / MANIFEST_NAME, "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")


def read_field_stream(directory):
    """Read a field stream written by write_field_stream."""
    directory = Path(directory)
    mpath = directory / MANIFEST_NAME
    if not mpath.is_file():
        raise DataError(f"{directory}: missing {MANIFEST_NAME}")
    with open(mpath) as f:
        manifest = json.load(f)
    fields, sources = [], []
    for entry in manifest["fields"]:
        pixels = read_ppm(directory / entry["file"])
        fields.append(Field(entry["parity"], pixels))
        sources.append(int(entry["source_index"]))
    if not fields:
        raise DataError(f"{directory}: manifest lists no fields")
    return ClipStream(fields=fields, source_index=sources)
