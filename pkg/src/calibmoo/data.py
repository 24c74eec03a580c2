"""Sensor-data I/O, scene manifests and synthetic scenes with known extrinsics.

File formats
------------
* Point cloud: KITTI velodyne ``.bin``, little-endian float32 ``(x, y, z, r)``
  per point.
* Calibration: text lines ``KEY: v1 v2 ...``; intrinsics are read from a 3x4
  projection row (default key ``P2``), extrinsics from ``Tr_velo_to_cam``.
* Image: binary PGM (``P5``, maxval 255). Overlays are written as binary PPM.
* Manifest: JSON naming the three files plus transforms and thresholds.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .features import (
    DEFAULT_DEPTH_GAP,
    DEFAULT_EDGE_THRESHOLD,
    DEFAULT_INTENSITY_THRESHOLD,
    GrayImage,
    extract_image_edges,
    extract_intensity_points,
)
from .geometry import CameraIntrinsics, PointCloud, RigidTransform
from .problem import CalibrationScene, correction_transform


class DataError(Exception):
    """Base class for input-data problems."""


class MalformedFileError(DataError):
    def __init__(self, path, message: str, offset: int | None = None, line: int | None = None,
                 index: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if index is not None:
            where.append(f"point {index}")
        loc = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{path}: {message}{loc}")
        self.path = str(path)
        self.offset = offset
        self.line = line
        self.index = index


class MissingFieldError(DataError):
    def __init__(self, path, key: str):
        super().__init__(f"{path}: missing required key {key!r}")
        self.path = str(path)
        self.key = key


# --------------------------------------------------------------------------- clouds

_POINT_DTYPE = np.dtype("<f4")


def load_pointcloud_kitti(path) -> PointCloud:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % 16:
        whole = len(raw) - len(raw) % 16
        raise MalformedFileError(path, f"size {len(raw)} is not a multiple of 16 bytes", offset=whole)
    arr = np.frombuffer(raw, dtype=_POINT_DTYPE).reshape(-1, 4).astype(np.float64)
    bad = np.flatnonzero(~np.all(np.isfinite(arr), axis=1))
    if bad.size:
        raise MalformedFileError(path, "non-finite value", index=int(bad[0]), offset=int(bad[0]) * 16)
    return PointCloud(arr[:, :3], np.clip(arr[:, 3], 0.0, 1.0))


def save_pointcloud_kitti(path, cloud: PointCloud) -> None:
    arr = np.column_stack((cloud.points, cloud.intensities)).astype(_POINT_DTYPE)
    Path(path).write_bytes(arr.tobytes())


# --------------------------------------------------------------------------- calibration

def _parse_calib_lines(path: Path) -> dict[str, tuple[int, list[str]]]:
    entries = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise MalformedFileError(path, f"expected 'KEY: values', got {line.strip()!r}", line=lineno)
        entries[key.strip()] = (lineno, rest.split())
    return entries


def _floats(path, key, lineno, tokens, count) -> np.ndarray:
    if len(tokens) != count:
        raise MalformedFileError(path, f"{key} has {len(tokens)} values, expected {count}", line=lineno)
    try:
        vals = np.array([float(t) for t in tokens])
    except ValueError as e:
        raise MalformedFileError(path, f"{key}: {e}", line=lineno) from None
    if not np.all(np.isfinite(vals)):
        raise MalformedFileError(path, f"{key} contains non-finite values", line=lineno)
    return vals


def load_calibration(
    path, projection_key: str = "P2", extrinsic_key: str = "Tr_velo_to_cam"
) -> tuple[CameraIntrinsics, RigidTransform | None]:
    """Intrinsics from a 3x4 projection row and, if present, the LiDAR-to-camera transform."""
    path = Path(path)
    entries = _parse_calib_lines(path)
    if projection_key not in entries:
        raise MissingFieldError(path, projection_key)
    lineno, tokens = entries[projection_key]
    p = _floats(path, projection_key, lineno, tokens, 12).reshape(3, 4)
    try:
        k = CameraIntrinsics(fx=p[0, 0], fy=p[1, 1], u0=p[0, 2], v0=p[1, 2])
    except ValueError as e:
        raise MalformedFileError(path, f"{projection_key}: {e}", line=lineno) from None
    transform = None
    if extrinsic_key in entries:
        lineno, tokens = entries[extrinsic_key]
        m = _floats(path, extrinsic_key, lineno, tokens, 12).reshape(3, 4)
        transform = RigidTransform.from_matrix(m)
    return k, transform


def _fmt(v: float) -> str:
    return repr(float(v))


def save_calibration(path, k: CameraIntrinsics, transform: RigidTransform | None = None,
                     projection_key: str = "P2", extrinsic_key: str = "Tr_velo_to_cam") -> None:
    lines = [f"{projection_key}: " + " ".join(_fmt(v) for v in k.projection_matrix().ravel())]
    if transform is not None:
        lines.append(f"{extrinsic_key}: " + " ".join(_fmt(v) for v in transform.matrix()[:3].ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------- images

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_pnm_header(path, raw: bytes, magic: bytes):
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PNM_TOKEN.match(raw, pos)
        if not m:
            raise MalformedFileError(path, "truncated header", offset=pos)
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != magic:
        raise MalformedFileError(path, f"unsupported magic {tokens[0][:8]!r}, expected {magic!r}", offset=0)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MalformedFileError(path, "non-integer header field", offset=pos) from None
    if width <= 0 or height <= 0:
        raise MalformedFileError(path, f"invalid size {width}x{height}", offset=pos)
    if maxval != 255:
        raise MalformedFileError(path, f"maxval {maxval} unsupported, expected 255", offset=pos)
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise MalformedFileError(path, "missing whitespace after header", offset=pos)
    return width, height, pos + 1


def load_image_pgm(path) -> GrayImage:
    path = Path(path)
    raw = path.read_bytes()
    width, height, start = _read_pnm_header(path, raw, b"P5")
    need = width * height
    if len(raw) - start < need:
        raise MalformedFileError(path, f"payload has {len(raw) - start} bytes, expected {need}", offset=len(raw))
    data = np.frombuffer(raw, dtype=np.uint8, count=need, offset=start)
    return GrayImage(width, height, data)


def save_image_pgm(path, img: GrayImage) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode()
    Path(path).write_bytes(header + np.ascontiguousarray(img.data, dtype=np.uint8).tobytes())


def save_image_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def load_image_ppm(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    width, height, start = _read_pnm_header(path, raw, b"P6")
    need = width * height * 3
    if len(raw) - start < need:
        raise MalformedFileError(path, f"payload has {len(raw) - start} bytes, expected {need}", offset=len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=start).reshape(height, width, 3)


# --------------------------------------------------------------------------- manifests

def transform_to_json(t: RigidTransform) -> dict:
    return {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}


def transform_from_json(d: dict) -> RigidTransform:
    m = np.eye(4)
    m[:3, :3] = np.asarray(d["rotation"], dtype=np.float64)
    m[:3, 3] = np.asarray(d["translation"], dtype=np.float64)
    return RigidTransform.from_matrix(m)


@dataclass
class SceneManifest:
    cloud: str
    image: str
    calib: str
    projection_key: str = "P2"
    extrinsic_key: str = "Tr_velo_to_cam"
    nominal: dict | None = None
    ground_truth: dict | None = None
    perturbation: list | None = None
    thresholds: dict = field(default_factory=lambda: {
        "edge": DEFAULT_EDGE_THRESHOLD,
        "depth_gap": DEFAULT_DEPTH_GAP,
        "intensity": DEFAULT_INTENSITY_THRESHOLD,
    })
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def load_manifest(path) -> SceneManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise MalformedFileError(path, f"invalid JSON: {e.msg}", line=e.lineno) from None
    for key in ("cloud", "image", "calib"):
        if key not in raw:
            raise MissingFieldError(path, key)
    known = set(SceneManifest.__dataclass_fields__)
    return SceneManifest(**{k: v for k, v in raw.items() if k in known})


def load_scene(manifest_path) -> tuple[CalibrationScene, SceneManifest]:
    """Parse a manifest and every file it names into a scene."""
    manifest_path = Path(manifest_path)
    m = load_manifest(manifest_path)
    base = manifest_path.parent
    for key in ("cloud", "image", "calib"):
        if not (base / getattr(m, key)).is_file():
            raise DataError(f"{manifest_path}: {key} file {base / getattr(m, key)} does not exist")
    cloud = load_pointcloud_kitti(base / m.cloud)
    image = load_image_pgm(base / m.image)
    k, calib_t = load_calibration(base / m.calib, m.projection_key, m.extrinsic_key)
    th = m.thresholds
    gt_truth = transform_from_json(m.ground_truth) if m.ground_truth else calib_t
    if m.nominal:
        nominal = transform_from_json(m.nominal)
    else:
        nominal = calib_t or RigidTransform.identity()
    scene = CalibrationScene(
        cloud=cloud,
        image=image,
        intrinsics=k,
        gt_edges=extract_image_edges(image, th.get("edge", DEFAULT_EDGE_THRESHOLD)),
        gt_intensity=extract_intensity_points(image, th.get("intensity", DEFAULT_INTENSITY_THRESHOLD)),
        nominal=nominal,
        ground_truth=gt_truth,
    )
    return scene, m


# --------------------------------------------------------------------------- decalibration

def decalibrate(true: RigidTransform, magnitudes: tuple[float, float], seed: int) -> tuple[RigidTransform, np.ndarray]:
    """Perturb ``true`` by a seeded correction of the given magnitudes.

    ``magnitudes`` is ``(rotation_degrees, translation_metres)``. The rotation
    angles and the translation each point in a random direction scaled so the
    largest component equals the magnitude, which puts the perturbation on the
    surface of the box ``[-m, m]^3``. Returns ``(perturbed, perturbation)``
    where ``perturbation`` is the 6-vector ``[x, y, z, yaw, pitch, roll]``
    (radians) whose correction transform maps ``perturbed`` back onto ``true``.
    """
    rot_deg, trans_m = magnitudes
    if rot_deg < 0 or trans_m < 0:
        raise ValueError("magnitudes must be non-negative")
    rng = np.random.default_rng(seed)
    trans = rng.normal(size=3)
    rot = rng.normal(size=3)
    trans *= trans_m / np.abs(trans).max()
    rot *= math.radians(rot_deg) / np.abs(rot).max()
    pert = np.concatenate([trans, rot])
    perturbed = correction_transform(pert).inverse().compose(true)
    return perturbed, pert


# --------------------------------------------------------------------------- synthetic scenes

@dataclass(frozen=True)
class Panel:
    """Flat panel facing the camera: a rectangle in the plane ``z = center[2]``.

    ``half_size`` is (half-width, half-height) in metres and ``angle_deg`` spins
    the rectangle within its plane, so its borders cross the scan rings.
    """

    center: tuple[float, float, float]
    half_size: tuple[float, float]
    angle_deg: float
    luminance: int
    reflectance: float


@dataclass(frozen=True)
class SceneLayout:
    panels: tuple[Panel, ...]
    wall_depth: float | None = 18.0
    wall_luminance: int = 60
    wall_reflectance: float = 0.2
    background_luminance: int = 0
    rings: int = 64
    elevation_deg: tuple[float, float] = (-17.0, 17.0)
    azimuth_deg: tuple[float, float] = (-40.0, 40.0)
    azimuth_step_deg: float = 0.08
    range_noise: float = 0.003
    image_size: tuple[int, int] = (800, 300)


# neighbouring surfaces differ by >= 35 grey levels so every silhouette clears
# the Sobel threshold; only the narrow strip reaches the intensity threshold
LAYOUTS = {
    "default": SceneLayout(
        panels=(
            Panel((-1.3, 0.15, 3.0), (0.35, 0.35), 30.0, 110, 0.45),
            Panel((1.2, -0.2, 4.0), (0.4, 0.3), -25.0, 150, 0.4),
            Panel((-2.6, -0.1, 6.5), (0.6, 0.6), 40.0, 170, 0.5),
            Panel((0.3, 0.4, 7.5), (0.06, 0.7), -30.0, 250, 0.95),
            Panel((2.8, 0.3, 9.0), (0.7, 0.9), 15.0, 95, 0.3),
            Panel((-0.8, -0.3, 11.0), (1.0, 0.6), 55.0, 130, 0.35),
            Panel((5.5, 0.0, 13.0), (0.9, 1.4), -20.0, 195, 0.6),
        ),
    ),
    "wall": SceneLayout(
        panels=(Panel((0.0, 0.0, 10.0), (3.0, 1.5), 0.0, 200, 0.6),),
        wall_depth=None,
    ),
}

DEFAULT_INTRINSICS = CameraIntrinsics(fx=500.0, fy=500.0, u0=400.0, v0=150.0)
DEFAULT_TRUE_EXTRINSICS = correction_transform(
    [0.01, -0.005, 0.0, math.radians(0.6), math.radians(-0.8), math.radians(0.4)]
)


def _ray_hits(origin, dirs, layout: SceneLayout) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit distance and surface id per ray; id -1 = miss, 0 = wall, k = panel k."""
    n = dirs.shape[0]
    best = np.full(n, np.inf)
    ident = np.full(n, -1, dtype=np.intp)
    with np.errstate(divide="ignore", invalid="ignore"):
        if layout.wall_depth is not None:
            t = (layout.wall_depth - origin[2]) / dirs[:, 2]
            hit = (t > 0) & (t < best)
            best[hit] = t[hit]
            ident[hit] = 0
        for k, panel in enumerate(layout.panels, start=1):
            cx, cy, cz = panel.center
            t = (cz - origin[2]) / dirs[:, 2]
            px = origin[0] + t * dirs[:, 0] - cx
            py = origin[1] + t * dirs[:, 1] - cy
            a = math.radians(panel.angle_deg)
            ca, sa = math.cos(a), math.sin(a)
            lx = ca * px + sa * py
            ly = -sa * px + ca * py
            hw, hh = panel.half_size
            hit = (t > 0) & (t < best) & (np.abs(lx) <= hw) & (np.abs(ly) <= hh)
            best[hit] = t[hit]
            ident[hit] = k
    return best, ident


def render_image(layout: SceneLayout, k: CameraIntrinsics) -> GrayImage:
    """Ray-cast the layout through every pixel centre from the camera origin."""
    width, height = layout.image_size
    vv, uu = np.mgrid[0:height, 0:width].astype(np.float64)
    dirs = np.column_stack((((uu - k.u0) / k.fx).ravel(), ((vv - k.v0) / k.fy).ravel(), np.ones(uu.size)))
    _, ident = _ray_hits(np.zeros(3), dirs, layout)
    lum = np.array([layout.background_luminance, layout.wall_luminance] + [p.luminance for p in layout.panels])
    return GrayImage(width, height, lum[ident + 1].reshape(height, width))


def simulate_scan(layout: SceneLayout, true: RigidTransform, rng: np.random.Generator) -> PointCloud:
    """Ring-by-ring LiDAR sweep from the sensor pose implied by ``true``.

    Points are returned in the LiDAR frame and in scan order (ring-major,
    azimuth ascending).
    """
    elev = np.radians(np.linspace(*layout.elevation_deg, layout.rings))[::-1]
    lo, hi = layout.azimuth_deg
    az = np.radians(np.arange(lo, hi + 1e-9, layout.azimuth_step_deg))
    e, a = np.meshgrid(elev, az, indexing="ij")
    d_lidar = np.column_stack(((np.cos(e) * np.sin(a)).ravel(), (-np.sin(e)).ravel(), (np.cos(e) * np.cos(a)).ravel()))
    origin = true.translation
    d_cam = d_lidar @ true.rotation.T
    dist, ident = _ray_hits(origin, d_cam, layout)
    hit = ident >= 0
    dist = dist[hit] + rng.normal(0.0, layout.range_noise, size=int(hit.sum()))
    pts = d_lidar[hit] * dist[:, None]
    refl_table = np.array([layout.wall_reflectance] + [p.reflectance for p in layout.panels])
    refl = np.clip(refl_table[ident[hit]] + rng.normal(0.0, 0.02, size=pts.shape[0]), 0.0, 1.0)
    # float32 storage precision, so a scene reloaded from disk is identical
    return PointCloud(pts.astype(np.float32), refl.astype(np.float32))


def generate_synthetic_scene(
    seed: int,
    layout: SceneLayout | str = "default",
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    true_extrinsics: RigidTransform = DEFAULT_TRUE_EXTRINSICS,
    nominal: RigidTransform | None = None,
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
    intensity_threshold: float = DEFAULT_INTENSITY_THRESHOLD,
) -> CalibrationScene:
    """Panel scene whose image edges coincide with its depth discontinuities.

    ``nominal`` is the starting extrinsic the optimiser corrects (defaults to
    the truth itself).
    """
    if isinstance(layout, str):
        layout = LAYOUTS[layout]
    rng = np.random.default_rng(seed)
    image = render_image(layout, intrinsics)
    if not np.any(image.data != layout.background_luminance):
        raise ValueError("no surface of the layout is inside the camera frustum")
    cloud = simulate_scan(layout, true_extrinsics, rng)
    return CalibrationScene(
        cloud=cloud,
        image=image,
        intrinsics=intrinsics,
        gt_edges=extract_image_edges(image, edge_threshold),
        gt_intensity=extract_intensity_points(image, intensity_threshold),
        nominal=true_extrinsics if nominal is None else nominal,
        ground_truth=true_extrinsics,
    )


def write_scene(out_dir, scene: CalibrationScene, perturbation=None, extra: dict | None = None,
                thresholds: dict | None = None) -> Path:
    """Write cloud/image/calib plus ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_pointcloud_kitti(out / "cloud.bin", scene.cloud)
    save_image_pgm(out / "image.pgm", scene.image)
    save_calibration(out / "calib.txt", scene.intrinsics, scene.ground_truth)
    manifest = SceneManifest(
        cloud="cloud.bin",
        image="image.pgm",
        calib="calib.txt",
        nominal=transform_to_json(scene.nominal),
        ground_truth=transform_to_json(scene.ground_truth) if scene.ground_truth else None,
        perturbation=None if perturbation is None else [float(v) for v in perturbation],
        extra=extra or {},
    )
    if thresholds:
        manifest.thresholds.update(thresholds)
    path = out / "manifest.json"
    path.write_text(manifest.to_json())
    return path
