"""Pinhole cameras, stratified ray sampling, and emission-absorption
volume integration over a (deformed) field, plus image IO and metrics.

Single stratified pass, no coarse/fine hierarchy: fields here are cheap
grids or closed forms.  Renders are deterministic for a fixed seed and
independent of chunking or worker count.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage


class RenderError(ValueError):
    """Invalid camera, settings, or image arguments."""


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: camera-to-world pose (x right, y up, looking down -z),
    horizontal field of view in radians, and pixel resolution."""

    pose: np.ndarray
    fov_x: float
    width: int
    height: int

    def __post_init__(self):
        pose = np.asarray(self.pose, dtype=np.float64)
        if pose.shape != (4, 4):
            raise RenderError(f"pose must be 4x4, got {pose.shape}")
        r = pose[:3, :3]
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-8:
            raise RenderError("pose rotation block is not orthonormal")
        if not 0.0 < self.fov_x < np.pi:
            raise RenderError(f"fov_x must be in (0, pi), got {self.fov_x}")
        if self.width < 1 or self.height < 1:
            raise RenderError("resolution must be positive")
        pose = pose.copy()
        pose.flags.writeable = False
        object.__setattr__(self, "pose", pose)

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0), fov_x=np.pi / 4,
                width=200, height=200) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        upv = np.cross(right, fwd)
        pose = np.eye(4)
        pose[:3, 0] = right
        pose[:3, 1] = upv
        pose[:3, 2] = -fwd
        pose[:3, 3] = eye
        return cls(pose=pose, fov_x=fov_x, width=width, height=height)

    def to_dict(self) -> dict:
        return {
            "fov_x": self.fov_x,
            "width": self.width,
            "height": self.height,
            "transform": self.pose.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            pose=np.asarray(d["transform"], dtype=np.float64).reshape(4, 4),
            fov_x=float(d["fov_x"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


def load_cameras(path) -> list[Camera]:
    """Load one camera JSON or a transforms.json-style multi-frame file."""
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    if "frames" in d:
        fov = float(d["fov_x"])
        width = int(d["width"])
        height = int(d["height"])
        return [
            Camera(
                pose=np.asarray(f["transform_matrix"], dtype=np.float64).reshape(4, 4),
                fov_x=fov, width=width, height=height,
            )
            for f in d["frames"]
        ]
    return [Camera.from_dict(d)]


@dataclass(frozen=True)
class RenderSettings:
    samples_per_ray: int = 128
    near: float = 0.05
    far: float = 10.0
    background: tuple = (1.0, 1.0, 1.0)
    stratified_jitter: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_ray < 2:
            raise RenderError("samples_per_ray must be >= 2")
        if not 0.0 < self.near < self.far:
            raise RenderError("need 0 < near < far")

    def to_dict(self) -> dict:
        return {
            "samples_per_ray": self.samples_per_ray,
            "near": self.near,
            "far": self.far,
            "background": list(self.background),
            "stratified_jitter": self.stratified_jitter,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RenderSettings":
        return cls(
            samples_per_ray=int(d.get("samples_per_ray", 128)),
            near=float(d.get("near", 0.05)),
            far=float(d.get("far", 10.0)),
            background=tuple(d.get("background", (1.0, 1.0, 1.0))),
            stratified_jitter=bool(d.get("stratified_jitter", True)),
            seed=int(d.get("seed", 0)),
        )


@dataclass
class Image:
    """Float RGB rows in [0,1], top-left origin."""

    data: np.ndarray

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def save_png(self, path) -> None:
        arr = np.clip(self.data, 0.0, 1.0)
        PILImage.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path, format="PNG")

    def save_raw(self, path) -> None:
        np.asarray(self.data, dtype="<f4").tofile(path)

    @classmethod
    def load_raw(cls, path, width: int, height: int) -> "Image":
        data = np.fromfile(path, dtype="<f4").reshape(height, width, 3)
        return cls(data.astype(np.float64))


def generate_ray(camera: Camera, px: float, py: float):
    """Ray through pixel (px, py) measured from the top-left pixel corner
    grid; pass x+0.5, y+0.5 for pixel centers.  Returns (origin, unit dir)."""
    origins, dirs = generate_rays(camera, np.array([[px, py]]))
    return origins[0], dirs[0]


def generate_rays(camera: Camera, pixels: np.ndarray):
    pix = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    focal = (camera.width / 2.0) / np.tan(camera.fov_x / 2.0)
    x = (pix[:, 0] - camera.width / 2.0) / focal
    y = -(pix[:, 1] - camera.height / 2.0) / focal
    d_cam = np.stack([x, y, -np.ones_like(x)], axis=-1)
    d_world = d_cam @ camera.pose[:3, :3].T
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.pose[:3, 3], d_world.shape)
    return origins, d_world


def _sample_depths(settings: RenderSettings, n_rays: int, jitter: np.ndarray | None):
    n = settings.samples_per_ray
    edges = np.linspace(settings.near, settings.far, n + 1)
    lower = edges[:-1]
    width = edges[1:] - edges[:-1]
    if jitter is None:
        frac = np.full((n_rays, n), 0.5)
    else:
        frac = jitter
    t = lower + frac * width
    deltas = np.empty_like(t)
    deltas[:, :-1] = t[:, 1:] - t[:, :-1]
    deltas[:, -1] = settings.far - t[:, -1]
    return t, deltas


def integrate_rays(field_query, origins: np.ndarray, dirs: np.ndarray,
                   settings: RenderSettings, jitter: np.ndarray | None = None,
                   return_transmittance: bool = False):
    """Emission-absorption compositing along each ray.

    field_query(points (n,3), dirs (n,3)) -> (colors, densities).
    Returns (rgb (n,3), alpha (n,)); with return_transmittance also the
    per-sample weights and final transmittance for conservation checks.
    """
    origins = np.atleast_2d(origins)
    dirs = np.atleast_2d(dirs)
    n_rays = origins.shape[0]
    t, deltas = _sample_depths(settings, n_rays, jitter)
    n = settings.samples_per_ray
    pts = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    sample_dirs = np.broadcast_to(dirs[:, None, :], pts.shape).reshape(-1, 3)
    colors, densities = field_query(pts.reshape(-1, 3), sample_dirs)
    colors = colors.reshape(n_rays, n, 3)
    densities = densities.reshape(n_rays, n)

    alpha = 1.0 - np.exp(-densities * deltas)
    one_minus = 1.0 - alpha
    trans = np.cumprod(one_minus, axis=-1)
    t_incl = np.empty_like(trans)  # transmittance arriving at sample i
    t_incl[:, 0] = 1.0
    t_incl[:, 1:] = trans[:, :-1]
    weights = t_incl * alpha
    t_final = trans[:, -1]
    rgb = np.einsum("rs,rsc->rc", weights, colors) + t_final[:, None] * np.asarray(settings.background)
    total_alpha = 1.0 - t_final
    if return_transmittance:
        return rgb, total_alpha, weights, t_final
    return rgb, total_alpha


def integrate_ray(field_query, origin, direction, settings: RenderSettings):
    """Single-ray convenience wrapper (midpoint sampling, no jitter)."""
    rgb, alpha = integrate_rays(
        field_query, np.asarray(origin)[None], np.asarray(direction)[None],
        settings, jitter=None,
    )
    return rgb[0], float(alpha[0])


def _worker_count() -> int:
    env = os.environ.get("CAGEWARP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def render(field_query, camera: Camera, settings: RenderSettings,
           cancel=None, row_chunk: int = 32) -> Image | None:
    """Render the full image; returns None if cancel.is_set() fires between
    chunks.  Deterministic for fixed inputs and seed regardless of the
    worker count (jitter is drawn for the whole image up front)."""
    w, h = camera.width, camera.height
    ys, xs = np.mgrid[0:h, 0:w]
    pixels = np.stack([xs.ravel() + 0.5, ys.ravel() + 0.5], axis=-1)
    origins, dirs = generate_rays(camera, pixels)
    if settings.stratified_jitter:
        rng = np.random.default_rng(settings.seed)
        jitter = rng.random((h * w, settings.samples_per_ray))
    else:
        jitter = None

    out = np.empty((h * w, 3))
    chunks = [
        (s, min(s + row_chunk * w, h * w))
        for s in range(0, h * w, row_chunk * w)
    ]

    def run(span):
        s, e = span
        j = None if jitter is None else jitter[s:e]
        rgb, _ = integrate_rays(field_query, origins[s:e], dirs[s:e], settings, jitter=j)
        return s, e, rgb

    workers = _worker_count()
    if workers <= 1 or len(chunks) <= 1:
        for span in chunks:
            if cancel is not None and cancel.is_set():
                return None
            s, e, rgb = run(span)
            out[s:e] = rgb
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for s, e, rgb in pool.map(run, chunks):
                if cancel is not None and cancel.is_set():
                    return None
                out[s:e] = rgb
    return Image(out.reshape(h, w, 3))


def image_metrics(a: Image, b: Image) -> dict:
    if a.data.shape != b.data.shape:
        raise RenderError(
            f"image dimension mismatch: {a.data.shape} vs {b.data.shape}"
        )
    diff = np.abs(a.data - b.data)
    return {"mean_abs_diff": float(diff.mean()), "max_abs_diff": float(diff.max())}


def discontinuity_energy(field_query, faces, eps: float,
                         probes_per_face: int = 256, seed: int = 0) -> float:
    """Mean field jump across cage faces at separation 2*eps.

    ``faces`` is a list of (cage, face_index); probes are stratified over
    each face's bilinear parametrization and offset along the face normal.
    The field sample is the (r, g, b, density) 4-vector.
    """
    from .cage import FACES

    if eps <= 0.0:
        raise RenderError("eps must be positive")
    rng = np.random.default_rng(seed)
    side = int(np.sqrt(probes_per_face))
    gaps = []
    for cage, face_index in faces:
        _axis, _side, (c00, c10, c01, c11) = FACES[face_index]
        v = cage.vertices
        p00, e1, e2 = v[c00], v[c10] - v[c00], v[c01] - v[c00]
        e3 = v[c11] - v[c10] - v[c01] + p00
        ga, gb = np.meshgrid(
            (np.arange(side) + rng.random(side)) / side,
            (np.arange(side) + rng.random(side)) / side,
            indexing="ij",
        )
        a = ga.ravel()
        b = gb.ravel()
        pts = p00 + a[:, None] * e1 + b[:, None] * e2 + (a * b)[:, None] * e3
        ta = e1 + b[:, None] * e3
        tb = e2 + a[:, None] * e3
        normals = np.cross(ta, tb)
        normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
        dirs = np.broadcast_to(normals, pts.shape)
        c_hi, d_hi = field_query(pts + eps * normals, dirs)
        c_lo, d_lo = field_query(pts - eps * normals, dirs)
        gap = np.abs(np.concatenate([c_hi - c_lo, (d_hi - d_lo)[:, None]], axis=-1))
        gaps.append(gap.mean())
    return float(np.mean(gaps))
