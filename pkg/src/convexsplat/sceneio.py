"""Disk formats: camera JSON, PLY point clouds, PNG images, checkpoints.

Images are sRGB on disk and linear float inside the pipeline; conversion
happens only here.  Checkpoints are a small versioned binary container of
the raw primitive parameters at 32- or 16-bit precision.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
from PIL import Image

from .model import SH_COEFFS, Camera, Scene, SmoothConvex
from .validation import check_image, check_rotation

CHECKPOINT_MAGIC = b"3DCS"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIIII4d")

CAMERA_FIELDS = ("fx", "fy", "cx", "cy", "width", "height", "R", "t", "image")


class PlyParseError(ValueError):
    pass


class CheckpointFormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# sRGB <-> linear

def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)


def load_png(path) -> np.ndarray:
    """8-bit sRGB PNG to linear float (H, W, 3)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(arr)


def save_png(path, image: np.ndarray):
    """Linear float image in [0, 1] to 8-bit sRGB PNG."""
    srgb = linear_to_srgb(image)
    data = np.round(srgb * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


# --------------------------------------------------------------------------
# Cameras

def camera_to_json(cam: Camera) -> dict:
    entry = {
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "width": cam.width, "height": cam.height,
        "R": [float(v) for v in cam.R.ravel()],
        "t": [float(v) for v in cam.t],
        "image": cam.image_name,
    }
    if cam.z_near != 0.01:
        entry["z_near"] = cam.z_near
    if cam.ortho:
        entry["ortho"] = True
    return entry


def camera_from_json(entry: dict) -> Camera:
    missing = [key for key in CAMERA_FIELDS if key not in entry]
    if missing:
        raise ValueError(f"camera entry missing fields: {', '.join(missing)}")
    rot = np.asarray(entry["R"], dtype=np.float64)
    if rot.size != 9:
        raise ValueError(f"camera R must have 9 entries, got {rot.size}")
    rot = rot.reshape(3, 3)
    check_rotation(rot)
    cam = Camera(
        fx=float(entry["fx"]), fy=float(entry["fy"]),
        cx=float(entry["cx"]), cy=float(entry["cy"]),
        width=int(entry["width"]), height=int(entry["height"]),
        R=rot, t=np.asarray(entry["t"], dtype=np.float64),
        z_near=float(entry.get("z_near", 0.01)),
        ortho=bool(entry.get("ortho", False)),
        image_name=str(entry["image"]),
    )
    if cam.width < 1 or cam.height < 1:
        raise ValueError(f"camera image size {cam.width}x{cam.height} invalid")
    return cam


def save_cameras(path, cameras, points_file=None, train=None, test=None):
    doc = {"cameras": [camera_to_json(c) for c in cameras]}
    if points_file is not None:
        doc["points"] = str(points_file)
    if train is not None:
        doc["train"] = [int(i) for i in train]
    if test is not None:
        doc["test"] = [int(i) for i in test]
    Path(path).write_text(json.dumps(doc, indent=1))


def load_cameras(path) -> list:
    doc = json.loads(Path(path).read_text())
    return [camera_from_json(entry) for entry in doc.get("cameras", [])]


# --------------------------------------------------------------------------
# PLY point clouds (x, y, z, red, green, blue)

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_ply(path):
    """Read positions and colors; returns (points (N, 3), colors (N, 3) in [0, 1]).

    Handles ascii and binary_little_endian files whose first element is the
    vertex list; colors may be 8-bit integers or floats.
    """
    raw = Path(path).read_bytes()
    lines = []
    offset = 0
    while True:
        end = raw.find(b"\n", offset)
        if end < 0:
            raise PlyParseError(f"{path}: no end_header found")
        line = raw[offset:end].decode("ascii", errors="replace").strip()
        offset = end + 1
        lines.append(line)
        if line == "end_header":
            break

    if not lines or lines[0] != "ply":
        raise PlyParseError(f"{path}: not a PLY file (missing 'ply' magic)")

    fmt = None
    count = None
    props = []
    in_vertex = False
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            if parts[1] == "vertex":
                in_vertex = True
                count = int(parts[2])
            else:
                if count is None:
                    raise PlyParseError(
                        f"{path}:{lineno}: element '{parts[1]}' precedes vertex data"
                    )
                in_vertex = False
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise PlyParseError(f"{path}:{lineno}: list property in vertex element")
            if parts[1] not in _PLY_TYPES:
                raise PlyParseError(f"{path}:{lineno}: unknown type '{parts[1]}'")
            props.append((parts[2], _PLY_TYPES[parts[1]]))
        elif parts[0] == "end_header":
            break

    if fmt not in ("ascii", "binary_little_endian"):
        raise PlyParseError(f"{path}: unsupported format '{fmt}'")
    if count is None:
        raise PlyParseError(f"{path}: no vertex element")
    names = [name for name, _ in props]
    for needed in ("x", "y", "z", "red", "green", "blue"):
        if needed not in names:
            raise PlyParseError(f"{path}: missing vertex property '{needed}'")

    if fmt == "ascii":
        rows = []
        text = raw[offset:].decode("ascii", errors="replace").splitlines()
        for k in range(count):
            if k >= len(text):
                raise PlyParseError(f"{path}: expected {count} vertices, file ends at {k}")
            parts = text[k].split()
            if len(parts) < len(props):
                raise PlyParseError(
                    f"{path}: vertex line {k + 1} has {len(parts)} values, "
                    f"expected {len(props)}"
                )
            rows.append([float(v) for v in parts[:len(props)]])
        table = {name: np.array([row[i] for row in rows])
                 for i, (name, _) in enumerate(props)}
        int_color = props[names.index("red")][1].startswith(("i", "u"))
    else:
        dtype = np.dtype([(name, "<" + typ) for name, typ in props])
        need = count * dtype.itemsize
        if len(raw) - offset < need:
            raise PlyParseError(
                f"{path}: binary payload truncated at byte {len(raw)} "
                f"(need {offset + need})"
            )
        data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        table = {name: data[name].astype(np.float64) for name in names}
        int_color = dtype["red"].kind in "iu"

    points = np.stack([table["x"], table["y"], table["z"]], axis=1)
    colors = np.stack([table["red"], table["green"], table["blue"]], axis=1)
    if int_color:
        colors = colors / 255.0
    return points, np.clip(colors, 0.0, 1.0)


def write_ply(path, points: np.ndarray, colors: np.ndarray):
    """Binary little-endian PLY with float positions and 8-bit colors."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {points.shape[0]}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    dtype = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                      ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    data = np.empty(points.shape[0], dtype=dtype)
    data["x"], data["y"], data["z"] = points[:, 0], points[:, 1], points[:, 2]
    quant = np.round(np.clip(colors, 0.0, 1.0) * 255.0).astype(np.uint8)
    data["red"], data["green"], data["blue"] = quant[:, 0], quant[:, 1], quant[:, 2]
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(data.tobytes())


# --------------------------------------------------------------------------
# Checkpoints

def _params_per_primitive(num_points: int) -> int:
    return 3 * num_points + 3 + 3 * SH_COEFFS + 1


def save_checkpoint(path, scene: Scene, precision: int = 32):
    """Raw parameters at 32- or 16-bit; layout per primitive:
    points | raw_delta raw_sigma raw_opacity | sh | raw_mask."""
    if precision not in (16, 32):
        raise ValueError(f"precision must be 16 or 32, got {precision}")
    if not scene.primitives:
        raise ValueError("refusing to save an empty scene")
    num_points = scene.primitives[0].num_points
    rows = np.empty((len(scene.primitives), _params_per_primitive(num_points)))
    for i, conv in enumerate(scene.primitives):
        if conv.num_points != num_points:
            raise ValueError("all primitives in a checkpoint must share K")
        rows[i] = np.concatenate([
            conv.points.ravel(),
            [conv.raw_delta, conv.raw_sigma, conv.raw_opacity],
            conv.sh.ravel(),
            [conv.raw_mask],
        ])
    header = _HEADER.pack(
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION, precision,
        len(scene.primitives), num_points, 3,
        float(scene.background[0]), float(scene.background[1]),
        float(scene.background[2]), float(scene.scene_extent),
    )
    payload = rows.astype("<f4" if precision == 32 else "<f2").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_checkpoint(path) -> Scene:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointFormatError(f"{path}: file too small for header")
    magic, version, precision, count, num_points, _sh_degree, b0, b1, b2, extent = \
        _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            f"{path}: unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )
    if precision not in (16, 32):
        raise CheckpointFormatError(f"{path}: bad precision {precision}")
    per = _params_per_primitive(num_points)
    dtype = "<f4" if precision == 32 else "<f2"
    expected = _HEADER.size + count * per * np.dtype(dtype).itemsize
    if len(raw) != expected:
        raise CheckpointFormatError(
            f"{path}: payload is {len(raw)} bytes, expected {expected}"
        )
    rows = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size) \
        .astype(np.float64).reshape(count, per)
    primitives = []
    for row in rows:
        k3 = 3 * num_points
        primitives.append(SmoothConvex(
            points=row[:k3].reshape(num_points, 3).copy(),
            raw_delta=float(row[k3]),
            raw_sigma=float(row[k3 + 1]),
            raw_opacity=float(row[k3 + 2]),
            sh=row[k3 + 3:k3 + 3 + 3 * SH_COEFFS].reshape(SH_COEFFS, 3).copy(),
            raw_mask=float(row[-1]),
        ))
    return Scene(primitives=primitives, background=np.array([b0, b1, b2]),
                 scene_extent=float(extent))


# --------------------------------------------------------------------------
# Bundles: a directory with cameras.json, images/ and optionally points.ply

@dataclass
class SceneBundle:
    cameras: list
    images: list                 # linear float arrays, aligned with cameras
    points: np.ndarray = None
    colors: np.ndarray = None
    train_indices: list = dataclass_field(default_factory=list)
    test_indices: list = dataclass_field(default_factory=list)

    def views(self, indices=None) -> list:
        idx = range(len(self.cameras)) if indices is None else indices
        return [(self.cameras[i], self.images[i]) for i in idx]


def load_bundle(directory, load_images: bool = True) -> SceneBundle:
    directory = Path(directory)
    doc = json.loads((directory / "cameras.json").read_text())
    cameras = [camera_from_json(entry) for entry in doc.get("cameras", [])]
    images = []
    if load_images:
        for cam in cameras:
            img = load_png(directory / cam.image_name)
            check_image(img, cam)
            images.append(img)
    else:
        images = [None] * len(cameras)
    points = colors = None
    if "points" in doc:
        points, colors = read_ply(directory / doc["points"])
    train = [int(i) for i in doc.get("train", range(len(cameras)))]
    test = [int(i) for i in doc.get("test", [])]
    return SceneBundle(cameras, images, points, colors, train, test)
