"""Radiance-field sources: dense voxel grids and analytic test scenes.

Every field answers batched point/direction queries with (colors, densities).
Stored color is view-independent; the direction argument is accepted so a
view-dependent backend can slot in later.  Queries outside a grid's bounding
box are empty space (black, zero density), never an error.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class FieldError(ValueError):
    """Malformed field file or inconsistent field data."""


@dataclass(frozen=True)
class RadianceSample:
    """Color in [0,1]^3 plus non-negative extinction density (1/world-length)."""

    color: np.ndarray
    density: float

    def __post_init__(self):
        c = np.asarray(self.color, dtype=np.float64).reshape(3)
        object.__setattr__(self, "color", c)
        object.__setattr__(self, "density", float(self.density))


class RadianceField:
    """Base class: batched queries, immutable after construction."""

    view_dependent = False

    def query(self, points: np.ndarray, dirs: np.ndarray | None = None):
        """Return (colors (n,3), densities (n,)) at world points."""
        raise NotImplementedError


def query_field(field_obj: RadianceField, p, d=None) -> RadianceSample:
    """Single-point convenience wrapper."""
    pts = np.asarray(p, dtype=np.float64).reshape(1, 3)
    dirs = None if d is None else np.asarray(d, dtype=np.float64).reshape(1, 3)
    colors, densities = field_obj.query(pts, dirs)
    return RadianceSample(color=colors[0], density=float(densities[0]))


# ---------------------------------------------------------------------------
# Dense voxel grid


class GridField(RadianceField):
    """Dense voxel grid over an axis-aligned box, trilinearly interpolated.

    Node i along an axis with n nodes sits at min + i * extent / (n - 1),
    so nodes lie on the boundary.  Arrays are indexed [ix, iy, iz].
    """

    def __init__(self, bbox_min, bbox_max, densities: np.ndarray, colors: np.ndarray):
        self.bbox_min = np.asarray(bbox_min, dtype=np.float64).reshape(3)
        self.bbox_max = np.asarray(bbox_max, dtype=np.float64).reshape(3)
        if not np.all(self.bbox_min < self.bbox_max):
            raise FieldError("bbox: bbox_min must be < bbox_max componentwise")
        densities = np.asarray(densities, dtype=np.float32)
        colors = np.asarray(colors, dtype=np.float32)
        if densities.ndim != 3 or np.any(np.array(densities.shape) < 2):
            raise FieldError(f"dims: density grid must be at least 2x2x2, got {densities.shape}")
        if colors.shape != densities.shape + (3,):
            raise FieldError(
                f"colors: expected shape {densities.shape + (3,)}, got {colors.shape}"
            )
        if not np.all(np.isfinite(densities)):
            raise FieldError("densities: non-finite values")
        if not np.all(np.isfinite(colors)):
            raise FieldError("colors: non-finite values")
        self.dims = densities.shape
        self.densities = densities
        self.colors = colors
        for arr in (self.bbox_min, self.bbox_max, self.densities, self.colors):
            arr.flags.writeable = False

    def query(self, points, dirs=None):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = pts.shape[0]
        colors = np.zeros((n, 3))
        densities = np.zeros(n)
        inside = np.all(pts >= self.bbox_min, axis=-1) & np.all(pts <= self.bbox_max, axis=-1)
        if not inside.any():
            return colors, densities
        p = pts[inside]
        dims = np.array(self.dims)
        t = (p - self.bbox_min) / (self.bbox_max - self.bbox_min) * (dims - 1)
        i0 = np.clip(np.floor(t).astype(np.int64), 0, dims - 2)
        f = t - i0
        dens = 0.0
        cols = 0.0
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = (
                        (f[:, 0] if dx else 1.0 - f[:, 0])
                        * (f[:, 1] if dy else 1.0 - f[:, 1])
                        * (f[:, 2] if dz else 1.0 - f[:, 2])
                    )
                    ix, iy, iz = i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz
                    dens = dens + w * self.densities[ix, iy, iz]
                    cols = cols + w[:, None] * self.colors[ix, iy, iz]
        densities[inside] = dens
        colors[inside] = cols
        return colors, densities


GRID_ENCODING = "f32le"


def save_grid_field(field_obj: GridField, path) -> None:
    """Write the header+payload grid format (see load_grid_field)."""
    header = {
        "dims": list(field_obj.dims),
        "bbox_min": field_obj.bbox_min.tolist(),
        "bbox_max": field_obj.bbox_max.tolist(),
        "encoding": GRID_ENCODING,
    }
    # payload is x-fastest: node index = ix + nx*(iy + ny*iz)
    dens = np.asarray(field_obj.densities, dtype="<f4").transpose(2, 1, 0).ravel()
    cols = np.asarray(field_obj.colors, dtype="<f4").transpose(2, 1, 0, 3).reshape(-1, 3)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(dens.tobytes())
        fh.write(cols.astype("<f4").tobytes())


def load_grid_field(path) -> GridField:
    """Read a grid file: one JSON header line, then f32le density and RGB
    payloads in x-fastest node order."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FieldError("header: missing newline after JSON header")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FieldError(f"header: malformed JSON ({e})") from e
    for key in ("dims", "bbox_min", "bbox_max", "encoding"):
        if key not in header:
            raise FieldError(f"header: missing field {key!r}")
    if header["encoding"] != GRID_ENCODING:
        raise FieldError(f"encoding: unsupported {header['encoding']!r}")
    dims = header["dims"]
    if len(dims) != 3 or any((not isinstance(d, int)) or d < 2 for d in dims):
        raise FieldError(f"dims: need three integers >= 2, got {dims}")
    nx, ny, nz = dims
    count = nx * ny * nz
    payload = raw[nl + 1:]
    expected = 4 * count * 4
    if len(payload) != expected:
        raise FieldError(
            f"payload: expected {expected} bytes for dims {dims}, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4")
    dens = data[:count].reshape((nz, ny, nx)).transpose(2, 1, 0)
    cols = data[count:].reshape((nz, ny, nx, 3)).transpose(2, 1, 0, 3)
    try:
        return GridField(header["bbox_min"], header["bbox_max"], dens, cols)
    except FieldError:
        raise


def convert_voxel_list(text_path, out_path) -> GridField:
    """Build a grid file from a plain-text voxel list.

    Line 1: ``nx ny nz xmin ymin zmin xmax ymax zmax``.  Then nx*ny*nz lines
    of ``density r g b`` in x-fastest node order.
    """
    with open(text_path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise FieldError("voxel list: empty file")
    head = lines[0].split()
    if len(head) != 9:
        raise FieldError("voxel list: header needs 'nx ny nz xmin ymin zmin xmax ymax zmax'")
    try:
        nx, ny, nz = (int(v) for v in head[:3])
        bounds = [float(v) for v in head[3:]]
    except ValueError as e:
        raise FieldError(f"voxel list: bad header ({e})") from e
    count = nx * ny * nz
    if len(lines) - 1 != count:
        raise FieldError(f"voxel list: expected {count} voxel lines, got {len(lines) - 1}")
    vals = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    if vals.shape != (count, 4):
        raise FieldError("voxel list: each voxel line needs 'density r g b'")
    dens = vals[:, 0].reshape((nz, ny, nx)).transpose(2, 1, 0)
    cols = vals[:, 1:].reshape((nz, ny, nx, 3)).transpose(2, 1, 0, 3)
    grid = GridField(bounds[:3], bounds[3:], dens, cols)
    save_grid_field(grid, out_path)
    return grid


# ---------------------------------------------------------------------------
# Analytic fields


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    color: tuple = (1.0, 1.0, 1.0)
    density: float = 5.0


class AnalyticField(RadianceField):
    """Closed-form scenes for oracle tests: density is exactly zero outside
    the shapes and the configured constant inside."""

    kind = "analytic"

    def spheres(self) -> list[Sphere]:
        return []


class SphereField(AnalyticField):
    kind = "sphere"

    def __init__(self, center, radius, color=(1.0, 1.0, 1.0), density=5.0):
        self.sphere = Sphere(tuple(center), float(radius), tuple(color), float(density))

    def spheres(self):
        return [self.sphere]

    def query(self, points, dirs=None):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        s = self.sphere
        inside = np.linalg.norm(pts - np.array(s.center), axis=-1) <= s.radius
        colors = np.where(inside[:, None], np.array(s.color), 0.0)
        densities = np.where(inside, s.density, 0.0)
        return colors, densities


class BoxField(AnalyticField):
    kind = "box"

    def __init__(self, bbox_min, bbox_max, color=(1.0, 1.0, 1.0), density=5.0):
        self.bbox_min = np.asarray(bbox_min, dtype=np.float64)
        self.bbox_max = np.asarray(bbox_max, dtype=np.float64)
        self.color = np.asarray(color, dtype=np.float64)
        self.density = float(density)

    def query(self, points, dirs=None):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        inside = np.all(pts >= self.bbox_min, axis=-1) & np.all(pts <= self.bbox_max, axis=-1)
        colors = np.where(inside[:, None], self.color, 0.0)
        densities = np.where(inside, self.density, 0.0)
        return colors, densities


class TwoSpheresField(AnalyticField):
    kind = "two-spheres"

    def __init__(self, sphere_a: Sphere, sphere_b: Sphere):
        self._spheres = [sphere_a, sphere_b]

    def spheres(self):
        return list(self._spheres)

    def query(self, points, dirs=None):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        colors = np.zeros((pts.shape[0], 3))
        densities = np.zeros(pts.shape[0])
        for s in self._spheres:
            inside = np.linalg.norm(pts - np.array(s.center), axis=-1) <= s.radius
            colors[inside] = np.array(s.color)
            densities[inside] = s.density
        return colors, densities


class CheckerFloorSphereField(AnalyticField):
    """A thin checkerboard slab plus one sphere above it."""

    kind = "checker-floor-plus-sphere"

    def __init__(self, sphere: Sphere, floor_z=(-0.1, 0.0), tile=0.5,
                 color_a=(0.9, 0.9, 0.9), color_b=(0.2, 0.2, 0.2), floor_density=20.0):
        self.sphere = sphere
        self.floor_z = (float(floor_z[0]), float(floor_z[1]))
        self.tile = float(tile)
        self.color_a = np.asarray(color_a, dtype=np.float64)
        self.color_b = np.asarray(color_b, dtype=np.float64)
        self.floor_density = float(floor_density)

    def spheres(self):
        return [self.sphere]

    def query(self, points, dirs=None):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        colors = np.zeros((pts.shape[0], 3))
        densities = np.zeros(pts.shape[0])
        in_floor = (pts[:, 2] >= self.floor_z[0]) & (pts[:, 2] <= self.floor_z[1])
        parity = (
            np.floor(pts[:, 0] / self.tile).astype(np.int64)
            + np.floor(pts[:, 1] / self.tile).astype(np.int64)
        ) % 2
        colors[in_floor] = np.where(parity[in_floor, None] == 0, self.color_a, self.color_b)
        densities[in_floor] = self.floor_density
        s = self.sphere
        in_sphere = np.linalg.norm(pts - np.array(s.center), axis=-1) <= s.radius
        colors[in_sphere] = np.array(s.color)
        densities[in_sphere] = s.density
        return colors, densities


def analytic_field_from_dict(spec: dict) -> AnalyticField:
    """Build an analytic field from a scene description dict."""
    kind = spec.get("kind")
    if kind == "sphere":
        return SphereField(
            spec["center"], spec["radius"],
            spec.get("color", (1.0, 1.0, 1.0)), spec.get("density", 5.0),
        )
    if kind == "box":
        return BoxField(
            spec["bbox_min"], spec["bbox_max"],
            spec.get("color", (1.0, 1.0, 1.0)), spec.get("density", 5.0),
        )
    if kind == "two-spheres":
        def mk(d):
            return Sphere(tuple(d["center"]), float(d["radius"]),
                          tuple(d.get("color", (1.0, 1.0, 1.0))), float(d.get("density", 5.0)))
        return TwoSpheresField(mk(spec["spheres"][0]), mk(spec["spheres"][1]))
    if kind == "checker-floor-plus-sphere":
        s = spec["sphere"]
        return CheckerFloorSphereField(
            Sphere(tuple(s["center"]), float(s["radius"]),
                   tuple(s.get("color", (1.0, 1.0, 1.0))), float(s.get("density", 5.0))),
            floor_z=spec.get("floor_z", (-0.1, 0.0)),
            tile=spec.get("tile", 0.5),
            floor_density=spec.get("floor_density", 20.0),
        )
    raise FieldError(f"unknown analytic field kind {kind!r}")


def load_scene(path) -> RadianceField:
    """Load a scene: '.json' analytic description or binary grid file."""
    p = str(path)
    if p.endswith(".json"):
        with open(p, "r", encoding="utf-8") as fh:
            try:
                spec = json.load(fh)
            except json.JSONDecodeError as e:
                raise FieldError(f"scene JSON: {e}") from e
        return analytic_field_from_dict(spec)
    return load_grid_field(p)
