"""Deformed-field evaluation: region classification, transformed-to-canonical
mappings, warp-grid baking, and multi-edit composition.

Space around an edit splits into four regions: outside the outer cage,
the shell between outer and inner cages, the canonical inner region vacated
by the edit, and the deformed inner region.  Discrete adjustment remaps only
the deformed inner region and fills the vacated one (empty for move/delete,
original for copy); continuous adjustment additionally warps the shell so the
field stays continuous across both cage surfaces.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .cage import (
    CagePair,
    HexCage,
    TransformParams,
    apply_homogeneous,
    build_transform,
    cage_center,
    contains_batch,
    deform_cage,
    inverse_trilinear_batch,
    ray_surface_exit,
    transform_cage,
    trilinear_point,
)

log = logging.getLogger(__name__)

MAX_EDIT_STACK = 32


class WarpError(ValueError):
    """Invalid edit specification or composition."""


class RegionLabel(IntEnum):
    OUTSIDE_OUTER = 0
    SHELL = 1
    CANONICAL_INNER_ONLY = 2
    DEFORMED_INNER = 3


class AdjustmentMode(str, Enum):
    """Discrete move/delete, discrete copy, or continuous shell blending."""

    DISCRETE_EMPTY = "discrete-empty"
    DISCRETE_COPY = "discrete-copy"
    CONTINUOUS = "continuous"

    @property
    def is_discrete(self) -> bool:
        return self is not AdjustmentMode.CONTINUOUS

    @property
    def keeps_original(self) -> bool:
        """Whether the vacated canonical region keeps the original field."""
        return self is AdjustmentMode.DISCRETE_COPY


# ---------------------------------------------------------------------------
# Edit provenance


@dataclass(frozen=True)
class TransformAction:
    params: TransformParams

    def to_dict(self) -> dict:
        return {"kind": "transform", **self.params.to_dict()}


@dataclass(frozen=True)
class DeformAction:
    handle: str  # "corner" | "edge"
    index: int
    delta: tuple

    def to_dict(self) -> dict:
        return {
            "kind": "deform",
            "handle": self.handle,
            "index": self.index,
            "delta": list(self.delta),
        }


def action_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "transform":
        return TransformAction(TransformParams.from_dict(d))
    if kind == "deform":
        return DeformAction(d["handle"], int(d["index"]), tuple(float(v) for v in d["delta"]))
    raise WarpError(f"unknown action kind {kind!r}")


def apply_action(cage: HexCage, action) -> HexCage:
    if isinstance(action, TransformAction):
        return transform_cage(cage, action.params)
    if isinstance(action, DeformAction):
        return deform_cage(cage, action.handle, action.index, action.delta)
    raise WarpError(f"unknown action {action!r}")


@dataclass(frozen=True)
class EditSpec:
    """One edit: cage pair, adjustment mode, and the manipulation log that
    produced inner_deformed from inner_canonical."""

    pair: CagePair
    mode: AdjustmentMode
    provenance: tuple = ()

    @classmethod
    def from_setting(cls, outer: HexCage, inner: HexCage,
                     mode: AdjustmentMode = AdjustmentMode.CONTINUOUS) -> "EditSpec":
        return cls(pair=CagePair.from_setting(outer, inner), mode=mode)

    def apply(self, action) -> "EditSpec":
        deformed = apply_action(self.pair.inner_deformed, action)
        pair = self.pair.with_deformed(deformed)
        return EditSpec(pair=pair, mode=self.mode, provenance=self.provenance + (action,))

    def with_mode(self, mode: AdjustmentMode) -> "EditSpec":
        return EditSpec(pair=self.pair, mode=mode, provenance=self.provenance)

    @property
    def is_identity(self) -> bool:
        return np.array_equal(
            self.pair.inner_deformed.vertices, self.pair.inner_canonical.vertices
        )

    def to_dict(self) -> dict:
        return {
            "outer": self.pair.outer.vertices.tolist(),
            "inner": self.pair.inner_canonical.vertices.tolist(),
            "mode": self.mode.value,
            "provenance": [a.to_dict() for a in self.provenance],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EditSpec":
        edit = cls.from_setting(
            HexCage(np.asarray(d["outer"], dtype=np.float64)),
            HexCage(np.asarray(d["inner"], dtype=np.float64)),
            AdjustmentMode(d.get("mode", "continuous")),
        )
        for a in d.get("provenance", []):
            edit = edit.apply(action_from_dict(a))
        return edit


# ---------------------------------------------------------------------------
# Region classification


def classify_batch(pair: CagePair, points: np.ndarray) -> np.ndarray:
    """RegionLabel per point; the deformed inner region wins overlaps."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    labels = np.full(pts.shape[0], RegionLabel.OUTSIDE_OUTER.value, dtype=np.uint8)
    in_def = contains_batch(pair.inner_deformed, pts)
    labels[in_def] = RegionLabel.DEFORMED_INNER.value
    rest = ~in_def
    if rest.any():
        in_can = np.zeros_like(rest)
        in_can[rest] = contains_batch(pair.inner_canonical, pts[rest])
        labels[in_can] = RegionLabel.CANONICAL_INNER_ONLY.value
        rest &= ~in_can
    if rest.any():
        in_out = np.zeros_like(rest)
        in_out[rest] = contains_batch(pair.outer, pts[rest])
        labels[in_out] = RegionLabel.SHELL.value
    return labels


def classify(pair: CagePair, p) -> RegionLabel:
    return RegionLabel(classify_batch(pair, np.asarray(p, dtype=np.float64))[0])


# ---------------------------------------------------------------------------
# Point mappings


class EditMapping:
    """Transformed-to-canonical point maps for one edit.

    Pure-transform provenance inverts the composed matrix exactly; any
    corner/edge drag switches to the trilinear route through the cage pair.
    """

    def __init__(self, edit: EditSpec):
        self.edit = edit
        self.pair = edit.pair
        self._affine_inv = self._compose_affine_inverse()

    def _compose_affine_inverse(self):
        if not all(isinstance(a, TransformAction) for a in self.edit.provenance):
            return None
        m_total = np.eye(4)
        cage = self.pair.inner_canonical
        for action in self.edit.provenance:
            c = cage_center(cage)
            to_c = np.eye(4)
            to_c[:3, 3] = -c
            from_c = np.eye(4)
            from_c[:3, 3] = c
            m_total = from_c @ build_transform(action.params) @ to_c @ m_total
            cage = transform_cage(cage, action.params)
        return np.linalg.inv(m_total)

    @property
    def affine_inverse(self):
        return self._affine_inv

    def inner_to_canonical(self, points: np.ndarray) -> np.ndarray:
        """Map points in the deformed inner region back to canonical space."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[0] == 0:
            return pts.copy()
        if self._affine_inv is not None:
            return apply_homogeneous(self._affine_inv, pts)
        uvw, _, converged = inverse_trilinear_batch(self.pair.inner_deformed, pts)
        out = trilinear_point(self.pair.inner_canonical, np.clip(uvw, 0.0, 1.0))
        if not converged.all():
            bad = ~converged
            log.warning("inner mapping: %d points fell back to identity", int(bad.sum()))
            out[bad] = pts[bad]
        return out

    def shell_to_canonical(self, points: np.ndarray) -> np.ndarray:
        """Center-ray displacement blend between the inner mapping and the
        identity at the outer surface."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[0] == 0:
            return pts.copy()
        c = cage_center(self.pair.inner_deformed)
        rel = pts - c
        dist = np.linalg.norm(rel, axis=-1)
        safe = np.maximum(dist, 1e-300)
        dirs = rel / safe[:, None]
        s_in = ray_surface_exit(self.pair.inner_deformed, c, dirs)
        s_out = ray_surface_exit(self.pair.outer, c, dirs)
        span = np.maximum(s_out - s_in, 1e-300)
        t = np.clip((dist - s_in) / span, 0.0, 1.0)
        q_in = c + s_in[:, None] * dirs
        disp = self.inner_to_canonical(q_in) - q_in
        # Hermite falloff: full displacement at the inner surface, zero at the
        # outer surface, half at the segment midpoint, and zero radial slope at
        # both ends so the composed map stays C1 across the cage surfaces
        weight = 1.0 - t * t * (3.0 - 2.0 * t)
        return pts + weight[:, None] * disp

    def map_points(self, points: np.ndarray, labels: np.ndarray | None = None) -> np.ndarray:
        """Continuous-adjustment canonical coordinates for arbitrary points.

        The shell blend covers everything inside the outer cage but outside
        the deformed inner cage (including the vacated canonical region), so
        the map is continuous across the deformed-cage surface; outside the
        outer cage it is the identity."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if labels is None:
            labels = classify_batch(self.pair, pts)
        out = pts.copy()
        inner = labels == RegionLabel.DEFORMED_INNER.value
        shell = (labels == RegionLabel.SHELL.value) | (
            labels == RegionLabel.CANONICAL_INNER_ONLY.value
        )
        if inner.any():
            out[inner] = self.inner_to_canonical(pts[inner])
        if shell.any():
            out[shell] = self.shell_to_canonical(pts[shell])
        return out


def warp_directions(map_fn, points: np.ndarray, dirs: np.ndarray, step: float) -> np.ndarray:
    """Push unit directions through the Jacobian of a point map.

    The Jacobian is taken by central finite differences with the given step;
    degenerate results fall back to the input direction.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    jd = np.zeros_like(d)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = step
        col = (map_fn(pts + offset) - map_fn(pts - offset)) / (2.0 * step)
        jd += col * d[:, axis:axis + 1]
    norm = np.linalg.norm(jd, axis=-1)
    degenerate = norm < 1e-9
    if degenerate.any():
        log.warning("direction warp: %d degenerate Jacobians, keeping input", int(degenerate.sum()))
        jd[degenerate] = d[degenerate]
        norm[degenerate] = np.linalg.norm(jd[degenerate], axis=-1)
    return jd / np.maximum(norm, 1e-300)[:, None]


def affine_warp_directions(affine_inv: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Exact direction mapping for pure-transform edits."""
    d = np.atleast_2d(np.asarray(dirs, dtype=np.float64)) @ affine_inv[:3, :3].T
    norm = np.linalg.norm(d, axis=-1)
    bad = norm < 1e-9
    if bad.any():
        d[bad] = np.atleast_2d(np.asarray(dirs, dtype=np.float64))[bad]
        norm[bad] = np.linalg.norm(d[bad], axis=-1)
    return d / np.maximum(norm, 1e-300)[:, None]


# ---------------------------------------------------------------------------
# Warp grid baking


@dataclass
class WarpGrid:
    """Baked lattice of canonical coordinates over the edit's adjustment
    region.  Nodes outside the outer cage (and vacated-region nodes) store
    the identity; the fill rule is applied at query time."""

    bbox_min: np.ndarray
    bbox_max: np.ndarray
    canonical: np.ndarray  # (nx, ny, nz, 3) float32
    labels: np.ndarray  # (nx, ny, nz) uint8
    mode: AdjustmentMode
    resolution: int

    @property
    def dims(self):
        return self.labels.shape

    @property
    def voxel_size(self) -> float:
        dims = np.array(self.dims)
        return float(np.max((self.bbox_max - self.bbox_min) / (dims - 1)))

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear lookup of canonical coordinates; identity outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = pts.copy()
        inside = np.all(pts >= self.bbox_min, axis=-1) & np.all(pts <= self.bbox_max, axis=-1)
        if not inside.any():
            return out
        p = pts[inside]
        dims = np.array(self.dims)
        t = (p - self.bbox_min) / (self.bbox_max - self.bbox_min) * (dims - 1)
        i0 = np.clip(np.floor(t).astype(np.int64), 0, dims - 2)
        f = t - i0
        acc = 0.0
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = (
                        (f[:, 0] if dx else 1.0 - f[:, 0])
                        * (f[:, 1] if dy else 1.0 - f[:, 1])
                        * (f[:, 2] if dz else 1.0 - f[:, 2])
                    )
                    acc = acc + w[:, None] * self.canonical[
                        i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz
                    ]
        out[inside] = acc
        return out


def bake_region(edit: EditSpec) -> tuple[np.ndarray, np.ndarray]:
    """Discrete edits only touch the two inner regions; continuous edits
    touch the whole outer cage."""
    if edit.mode.is_discrete:
        verts = np.vstack([
            edit.pair.inner_canonical.vertices,
            edit.pair.inner_deformed.vertices,
        ])
    else:
        verts = edit.pair.outer.vertices
    return verts.min(axis=0), verts.max(axis=0)


def bake_warp_grid(edit: EditSpec, resolution: int, chunk_nodes: int = 2_000_000) -> WarpGrid:
    """Label every lattice node and bake its canonical coordinates.

    ``resolution`` counts nodes along the longest axis; the other axes keep
    the voxels cubic.  Baking is deterministic for fixed inputs.
    """
    if resolution < 2:
        raise WarpError(f"resolution must be >= 2, got {resolution}")
    mn, mx = bake_region(edit)
    extent = mx - mn
    voxel = float(np.max(extent)) / (resolution - 1)
    dims = tuple(max(2, int(round(e / voxel)) + 1) for e in extent)
    mapping = EditMapping(edit)

    axes = [np.linspace(mn[a], mx[a], dims[a]) for a in range(3)]
    canonical = np.empty(dims + (3,), dtype=np.float32)
    labels = np.empty(dims, dtype=np.uint8)

    nodes_per_slab = dims[1] * dims[2]
    slab_x = max(1, chunk_nodes // max(nodes_per_slab, 1))
    for x0 in range(0, dims[0], slab_x):
        x1 = min(x0 + slab_x, dims[0])
        gx, gy, gz = np.meshgrid(axes[0][x0:x1], axes[1], axes[2], indexing="ij")
        pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
        lab = classify_batch(edit.pair, pts)
        # bake the full continuous map regardless of mode: discrete queries
        # only sample the inner region, and shell/vacated values there keep
        # interpolation accurate right up to the deformed-cage surface
        can = mapping.map_points(pts, lab)
        shape = (x1 - x0, dims[1], dims[2])
        labels[x0:x1] = lab.reshape(shape)
        canonical[x0:x1] = can.reshape(shape + (3,)).astype(np.float32)

    return WarpGrid(
        bbox_min=mn, bbox_max=mx, canonical=canonical, labels=labels,
        mode=edit.mode, resolution=resolution,
    )


def save_warp_grid(grid: WarpGrid, path) -> None:
    """Diagnostics export: JSON header line, then per-node records of three
    f32le canonical coordinates plus one label byte, x-fastest order."""
    import json

    header = {
        "dims": list(grid.dims),
        "bbox_min": grid.bbox_min.tolist(),
        "bbox_max": grid.bbox_max.tolist(),
        "encoding": "f32le+label",
        "mode": grid.mode.value,
        "resolution": grid.resolution,
    }
    rec = np.dtype([("canonical", "<f4", (3,)), ("label", "u1")])
    data = np.empty(int(np.prod(grid.dims)), dtype=rec)
    data["canonical"] = grid.canonical.transpose(2, 1, 0, 3).reshape(-1, 3)
    data["label"] = grid.labels.transpose(2, 1, 0).ravel()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(data.tobytes())


# ---------------------------------------------------------------------------
# Deformed-field queries


def query_deformed_batch(field, edit: EditSpec, points: np.ndarray,
                         dirs: np.ndarray | None = None,
                         grid: WarpGrid | None = None):
    """Evaluate the deformed field at many points.

    Membership always uses exact cage tests; a baked grid only replaces the
    canonical-coordinate computation (pass grid=None for the exact path).
    Returns (colors, densities).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if edit.is_identity:
        # vacated region is empty and every mapping is the identity
        return field.query(pts, dirs)
    labels = classify_batch(edit.pair, pts)
    mapping = EditMapping(edit)

    canonical = pts.copy()
    inner = labels == RegionLabel.DEFORMED_INNER.value
    shell = labels == RegionLabel.SHELL.value
    vacated = labels == RegionLabel.CANONICAL_INNER_ONLY.value

    shell_mapped = (shell | vacated) if not edit.mode.is_discrete else np.zeros_like(shell)
    if grid is not None:
        mapped = inner | shell_mapped
        if mapped.any():
            canonical[mapped] = grid.sample(pts[mapped])
    else:
        if inner.any():
            canonical[inner] = mapping.inner_to_canonical(pts[inner])
        if shell_mapped.any():
            canonical[shell_mapped] = mapping.shell_to_canonical(pts[shell_mapped])

    query_dirs = dirs
    if dirs is not None and field.view_dependent:
        d = np.atleast_2d(np.asarray(dirs, dtype=np.float64)).copy()
        warped = inner | shell_mapped
        if warped.any():
            if mapping.affine_inverse is not None and not shell.any():
                d[warped] = affine_warp_directions(mapping.affine_inverse, d[warped])
            else:
                step = 0.5 * grid.voxel_size if grid is not None else 1e-4 * edit.pair.outer.diameter
                map_fn = grid.sample if grid is not None else mapping.map_points
                d[warped] = warp_directions(map_fn, pts[warped], d[warped], step)
        query_dirs = d

    colors, densities = field.query(canonical, query_dirs)
    if edit.mode.is_discrete and not edit.mode.keeps_original and vacated.any():
        colors = colors.copy()
        densities = densities.copy()
        colors[vacated] = 0.0
        densities[vacated] = 0.0
    return colors, densities


def compose_edits(stack, points: np.ndarray, dirs: np.ndarray | None = None,
                  grids=None):
    """Map points through an edit stack, newest edit first.

    Returns (canonical points, canonical dirs or None, emptied mask).  A
    discrete move/delete edit whose vacated region swallows a point empties
    it and short-circuits older edits; copy semantics simply leave the point
    unmapped at that stage.
    """
    stack = list(stack)
    if len(stack) > MAX_EDIT_STACK:
        raise WarpError(f"edit stack depth {len(stack)} exceeds maximum {MAX_EDIT_STACK}")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64)).copy()
    d = None if dirs is None else np.atleast_2d(np.asarray(dirs, dtype=np.float64)).copy()
    emptied = np.zeros(pts.shape[0], dtype=bool)
    if grids is None:
        grids = [None] * len(stack)

    for edit, grid in zip(reversed(stack), reversed(list(grids))):
        if edit.is_identity:
            continue
        alive = ~emptied
        if not alive.any():
            break
        labels = np.full(pts.shape[0], RegionLabel.OUTSIDE_OUTER.value, dtype=np.uint8)
        labels[alive] = classify_batch(edit.pair, pts[alive])
        mapping = EditMapping(edit)
        inner = alive & (labels == RegionLabel.DEFORMED_INNER.value)
        shell = alive & (labels == RegionLabel.SHELL.value)
        vacated = alive & (labels == RegionLabel.CANONICAL_INNER_ONLY.value)
        shell_mapped = (shell | vacated) if not edit.mode.is_discrete else np.zeros_like(shell)
        mapped = inner | shell_mapped
        if mapped.any():
            if d is not None:
                step = 0.5 * grid.voxel_size if grid is not None else 1e-4 * edit.pair.outer.diameter
                map_fn = grid.sample if grid is not None else mapping.map_points
                d[mapped] = warp_directions(map_fn, pts[mapped], d[mapped], step)
            if grid is not None:
                pts[mapped] = grid.sample(pts[mapped])
            else:
                if inner.any():
                    pts[inner] = mapping.inner_to_canonical(pts[inner])
                if shell_mapped.any():
                    pts[shell_mapped] = mapping.shell_to_canonical(pts[shell_mapped])
        if edit.mode.is_discrete and not edit.mode.keeps_original:
            emptied |= vacated
    return pts, d, emptied


def query_stack_batch(field, stack, points: np.ndarray,
                      dirs: np.ndarray | None = None, grids=None):
    """Evaluate the field under a whole committed edit stack."""
    stack = list(stack)
    if not stack:
        return field.query(np.atleast_2d(np.asarray(points, dtype=np.float64)), dirs)
    use_dirs = dirs if field.view_dependent else None
    pts, d, emptied = compose_edits(stack, points, use_dirs, grids)
    colors, densities = field.query(pts, d if d is not None else dirs)
    if emptied.any():
        colors = colors.copy()
        densities = densities.copy()
        colors[emptied] = 0.0
        densities[emptied] = 0.0
    return colors, densities
