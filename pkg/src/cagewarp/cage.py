"""Hexahedral cage geometry.

A cage is an 8-cornered hexahedron whose interior is parametrized by the
trilinear map from the unit cube [0,1]^3.  Corner index ``i + 2j + 4k``
corresponds to parameter coordinates ``(u,v,w) = (i,j,k)``.  This module
provides construction and validity checks, whole-cage transforms
(translate / rotate / scale about the cage center), corner and edge drags,
forward and inverse trilinear maps, inside tests, and ray-vs-surface
intersection for the shell interpolation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

# (u,v,w) bit pattern of each corner, index = i + 2j + 4k.
CORNER_UVW = np.array(
    [[i, j, k] for k in (0, 1) for j in (0, 1) for i in (0, 1)], dtype=np.float64
)

# 12 edges as corner-index pairs: four u-edges, four v-edges, four w-edges.
EDGES = (
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
)

NUM_CORNERS = 8
NUM_EDGES = 12


class CageError(ValueError):
    """Invalid cage geometry or parameters."""


class DegenerateCageError(CageError):
    """The trilinear map folds over (non-positive Jacobian)."""


class ContainmentError(CageError):
    """Inner cage vertices escape the outer cage."""

    def __init__(self, message: str, vertex_indices: list[int]):
        super().__init__(message)
        self.vertex_indices = vertex_indices


def _face_corner_indices(axis: int, side: int) -> tuple[int, int, int, int]:
    other = [a for a in range(3) if a != axis]
    idx = []
    for b2 in (0, 1):
        for b1 in (0, 1):
            uvw = [0, 0, 0]
            uvw[axis] = side
            uvw[other[0]] = b1
            uvw[other[1]] = b2
        # order: P00, P10, P01, P11 in (b1, b2) parameters
            idx.append(uvw[0] + 2 * uvw[1] + 4 * uvw[2])
    return tuple(idx)


# 6 faces: (axis held fixed, side 0/1, corner indices P00,P10,P01,P11).
FACES = tuple(
    (axis, side, _face_corner_indices(axis, side))
    for axis in range(3)
    for side in (0, 1)
)


def trilinear_weights(uvw: np.ndarray) -> np.ndarray:
    """Blend weights of the 8 corners at parameter coordinates uvw (...,3)."""
    uvw = np.asarray(uvw, dtype=np.float64)
    u, v, w = uvw[..., 0], uvw[..., 1], uvw[..., 2]
    cu = CORNER_UVW[:, 0]
    cv = CORNER_UVW[:, 1]
    cw = CORNER_UVW[:, 2]
    # weight_c = prod over axes of (t if bit else 1-t)
    wu = u[..., None] * cu + (1.0 - u[..., None]) * (1.0 - cu)
    wv = v[..., None] * cv + (1.0 - v[..., None]) * (1.0 - cv)
    ww = w[..., None] * cw + (1.0 - w[..., None]) * (1.0 - cw)
    return wu * wv * ww


@dataclass(frozen=True)
class HexCage:
    """Eight world-space corners in fixed (i + 2j + 4k) order."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64)
        if verts.shape != (8, 3):
            raise CageError(f"cage needs 8 xyz vertices, got shape {verts.shape}")
        if not np.all(np.isfinite(verts)):
            raise CageError("cage vertices must be finite")
        verts = verts.copy()
        verts.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        dets = _corner_center_jacobian_dets(verts)
        if np.any(dets <= 0.0):
            raise DegenerateCageError(
                f"cage folds over: Jacobian determinants {dets.tolist()}"
            )

    @classmethod
    def from_aabb(cls, bbox_min, bbox_max) -> "HexCage":
        mn = np.asarray(bbox_min, dtype=np.float64)
        mx = np.asarray(bbox_max, dtype=np.float64)
        return cls(mn + CORNER_UVW * (mx - mn))

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diameter(self) -> float:
        mn, mx = self.bbox
        return float(np.linalg.norm(mx - mn))

    def as_aabb(self, rel_tol: float = 1e-12):
        """Return (min, max) if this cage is an axis-aligned box, else None."""
        mn, mx = self.bbox
        expected = mn + CORNER_UVW * (mx - mn)
        scale = max(float(np.max(mx - mn)), 1e-300)
        if np.max(np.abs(self.vertices - expected)) <= rel_tol * scale:
            return mn, mx
        return None


def cage_center(cage: HexCage) -> np.ndarray:
    """Arithmetic mean of the 8 corners."""
    return cage.vertices.mean(axis=0)


def trilinear_point(cage: HexCage, uvw: np.ndarray) -> np.ndarray:
    """Map parameter coordinates (...,3) to world space."""
    return trilinear_weights(uvw) @ cage.vertices


def trilinear_jacobian(cage: HexCage, uvw: np.ndarray) -> np.ndarray:
    """Jacobian d(world)/d(uvw) at parameter coordinates, shape (...,3,3)."""
    uvw = np.asarray(uvw, dtype=np.float64)
    u, v, w = uvw[..., 0], uvw[..., 1], uvw[..., 2]
    cu = CORNER_UVW[:, 0]
    cv = CORNER_UVW[:, 1]
    cw = CORNER_UVW[:, 2]
    wu = u[..., None] * cu + (1.0 - u[..., None]) * (1.0 - cu)
    wv = v[..., None] * cv + (1.0 - v[..., None]) * (1.0 - cv)
    ww = w[..., None] * cw + (1.0 - w[..., None]) * (1.0 - cw)
    du = (2.0 * cu - 1.0) * wv * ww
    dv = wu * (2.0 * cv - 1.0) * ww
    dw = wu * wv * (2.0 * cw - 1.0)
    cols = [d @ cage.vertices for d in (du, dv, dw)]
    return np.stack(cols, axis=-1)


def _corner_center_jacobian_dets(verts: np.ndarray) -> np.ndarray:
    probes = np.vstack([CORNER_UVW, [[0.5, 0.5, 0.5]]])
    cage = object.__new__(HexCage)
    object.__setattr__(cage, "vertices", verts)
    J = trilinear_jacobian(cage, probes)
    return np.linalg.det(J)


def _det3(J: np.ndarray) -> np.ndarray:
    a = J[..., 0, 0] * (J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1])
    b = J[..., 0, 1] * (J[..., 1, 0] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 0])
    c = J[..., 0, 2] * (J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0])
    return a - b + c


def _solve3(J: np.ndarray, r: np.ndarray, det: np.ndarray) -> np.ndarray:
    """Solve J x = r for batches of 3x3 systems via the adjugate."""
    adj = np.empty_like(J)
    adj[..., 0, 0] = J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1]
    adj[..., 0, 1] = J[..., 0, 2] * J[..., 2, 1] - J[..., 0, 1] * J[..., 2, 2]
    adj[..., 0, 2] = J[..., 0, 1] * J[..., 1, 2] - J[..., 0, 2] * J[..., 1, 1]
    adj[..., 1, 0] = J[..., 1, 2] * J[..., 2, 0] - J[..., 1, 0] * J[..., 2, 2]
    adj[..., 1, 1] = J[..., 0, 0] * J[..., 2, 2] - J[..., 0, 2] * J[..., 2, 0]
    adj[..., 1, 2] = J[..., 0, 2] * J[..., 1, 0] - J[..., 0, 0] * J[..., 1, 2]
    adj[..., 2, 0] = J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0]
    adj[..., 2, 1] = J[..., 0, 1] * J[..., 2, 0] - J[..., 0, 0] * J[..., 2, 1]
    adj[..., 2, 2] = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    safe = np.where(np.abs(det) < 1e-300, np.copysign(1e-300, det), det)
    return np.einsum("...ij,...j->...i", adj, r) / safe[..., None]


MAX_NEWTON_ITERS = 20
UVW_TOL = 1e-9


def inverse_trilinear_batch(cage: HexCage, points: np.ndarray):
    """Invert the trilinear map for many points at once.

    Returns (uvw, inside, converged): uvw is unclamped; inside means the
    Newton iterate converged into [0,1]^3 within tolerance 1e-9.
    Non-convergence is treated as outside (conservative).
    """
    points = np.asarray(points, dtype=np.float64)
    squeeze = points.ndim == 1
    pts = np.atleast_2d(points)
    n = pts.shape[0]
    diam = max(cage.diameter, 1e-300)

    aabb = cage.as_aabb()
    if aabb is not None:
        mn, mx = aabb
        uvw = (pts - mn) / (mx - mn)
        converged = np.ones(n, dtype=bool)
    else:
        mn, mx = cage.bbox
        uvw = (pts - mn) / np.maximum(mx - mn, 1e-300)
        vol_scale = diam ** 3
        active = np.ones(n, dtype=bool)
        res_tol = 1e-12 * diam
        for _ in range(MAX_NEWTON_ITERS):
            if not active.any():
                break
            cur = uvw[active]
            r = trilinear_point(cage, cur) - pts[active]
            err = np.linalg.norm(r, axis=-1)
            still = err > res_tol
            if not still.any():
                active[active] = False
                break
            idx = np.flatnonzero(active)[still]
            cur = uvw[idx]
            r = r[still]
            J = trilinear_jacobian(cage, cur)
            det = _det3(J)
            step = _solve3(J, r, det)
            damp = np.where(np.abs(det) < 1e-12 * vol_scale, 0.5, 1.0)
            uvw[idx] = cur - damp[:, None] * step
            done = np.flatnonzero(active)[~still]
            active[done] = False
        resid = np.linalg.norm(trilinear_point(cage, uvw) - pts, axis=-1)
        converged = resid <= 1e-7 * diam
        if not converged.all():
            log.debug("inverse_trilinear: %d/%d points did not converge",
                      int((~converged).sum()), n)

    inside = converged & np.all(uvw >= -UVW_TOL, axis=-1) & np.all(uvw <= 1.0 + UVW_TOL, axis=-1)
    if squeeze:
        return uvw[0], bool(inside[0]), bool(converged[0])
    return uvw, inside, converged


def inverse_trilinear(cage: HexCage, p: np.ndarray):
    """Scalar-point inverse: returns uvw clipped to [0,1]^3, or None if outside."""
    uvw, inside, _ = inverse_trilinear_batch(cage, np.asarray(p, dtype=np.float64))
    if not inside:
        return None
    return np.clip(uvw, 0.0, 1.0)


def contains_batch(cage: HexCage, points: np.ndarray) -> np.ndarray:
    """Vectorized inside test with an exact bounding-box prefilter."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    mn, mx = cage.bbox
    candidate = np.all(points >= mn, axis=-1) & np.all(points <= mx, axis=-1)
    out = np.zeros(points.shape[0], dtype=bool)
    if candidate.any():
        _, inside, _ = inverse_trilinear_batch(cage, points[candidate])
        out[candidate] = inside
    return out


def contains(cage: HexCage, p) -> bool:
    return bool(contains_batch(cage, np.asarray(p, dtype=np.float64))[0])


# ---------------------------------------------------------------------------
# Whole-cage transforms


@dataclass(frozen=True)
class TransformParams:
    """Translation (world units), per-axis rotation (radians, applied in
    x-then-y-then-z matrix order), and strictly positive per-axis scale."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        for name in ("translation", "rotation", "scale"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(3).copy()
            if not np.all(np.isfinite(arr)):
                raise CageError(f"{name} must be finite")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.scale <= 0.0):
            raise CageError(f"scale must be strictly positive, got {self.scale.tolist()}")

    @classmethod
    def identity(cls) -> "TransformParams":
        return cls()

    def to_dict(self) -> dict:
        return {
            "translation": self.translation.tolist(),
            "rotation": self.rotation.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformParams":
        return cls(
            translation=d.get("translation", (0.0, 0.0, 0.0)),
            rotation=d.get("rotation", (0.0, 0.0, 0.0)),
            scale=d.get("scale", (1.0, 1.0, 1.0)),
        )


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    m = np.eye(4)
    m[1, 1], m[1, 2], m[2, 1], m[2, 2] = c, -s, s, c
    return m


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    m = np.eye(4)
    m[0, 0], m[0, 2], m[2, 0], m[2, 2] = c, s, -s, c
    return m


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    m = np.eye(4)
    m[0, 0], m[0, 1], m[1, 0], m[1, 1] = c, -s, s, c
    return m


def build_transform(params: TransformParams) -> np.ndarray:
    """Homogeneous 4x4 product: translate @ rotX @ rotY @ rotZ @ scale.

    Rotations are right-handed counterclockwise about each axis.
    """
    t = np.eye(4)
    t[:3, 3] = params.translation
    s = np.diag([*params.scale, 1.0])
    ax, ay, az = params.rotation
    return t @ _rot_x(ax) @ _rot_y(ay) @ _rot_z(az) @ s


def apply_homogeneous(m: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points @ m[:3, :3].T + m[:3, 3]


def transform_cage(cage: HexCage, params: TransformParams) -> HexCage:
    """Apply the transform about the cage center; rejects degenerate results."""
    c = cage_center(cage)
    m = build_transform(params)
    verts = c + apply_homogeneous(m, cage.vertices - c)
    return HexCage(verts)


def deform_cage(cage: HexCage, handle: str, index: int, delta) -> HexCage:
    """Drag one corner (handle='corner', index 0-7) or one edge
    (handle='edge', index 0-11; both endpoints move rigidly) by delta."""
    delta = np.asarray(delta, dtype=np.float64).reshape(3)
    verts = cage.vertices.copy()
    if handle == "corner":
        if not 0 <= index < NUM_CORNERS:
            raise CageError(f"corner index {index} out of range")
        verts[index] += delta
    elif handle == "edge":
        if not 0 <= index < NUM_EDGES:
            raise CageError(f"edge index {index} out of range")
        a, b = EDGES[index]
        verts[a] += delta
        verts[b] += delta
    else:
        raise CageError(f"unknown handle kind {handle!r}")
    return HexCage(verts)


# ---------------------------------------------------------------------------
# Cage pairs


STRICT_INSIDE_TOL = 1e-9


def _strictly_inside(outer: HexCage, points: np.ndarray) -> np.ndarray:
    uvw, inside, _ = inverse_trilinear_batch(outer, points)
    strict = np.all(uvw > STRICT_INSIDE_TOL, axis=-1) & np.all(uvw < 1.0 - STRICT_INSIDE_TOL, axis=-1)
    return inside & strict


@dataclass(frozen=True)
class CagePair:
    """Outer adjustment cage plus canonical and deformed inner cages."""

    outer: HexCage
    inner_canonical: HexCage
    inner_deformed: HexCage

    def __post_init__(self):
        for name in ("inner_canonical", "inner_deformed"):
            inner: HexCage = getattr(self, name)
            ok = _strictly_inside(self.outer, inner.vertices)
            if not ok.all():
                bad = np.flatnonzero(~ok).tolist()
                raise ContainmentError(
                    f"{name} vertices {bad} are not strictly inside the outer cage", bad
                )

    @classmethod
    def from_setting(cls, outer: HexCage, inner: HexCage) -> "CagePair":
        return cls(outer=outer, inner_canonical=inner, inner_deformed=inner)

    def with_deformed(self, deformed: HexCage) -> "CagePair":
        return CagePair(self.outer, self.inner_canonical, deformed)


def cage_pair_to_dict(pair: CagePair) -> dict:
    return {
        "outer": pair.outer.vertices.tolist(),
        "inner": pair.inner_canonical.vertices.tolist(),
    }


def cage_pair_from_dict(d: dict) -> CagePair:
    try:
        outer = HexCage(np.asarray(d["outer"], dtype=np.float64))
        inner = HexCage(np.asarray(d["inner"], dtype=np.float64))
    except KeyError as e:
        raise CageError(f"cage JSON missing key {e}") from e
    return CagePair.from_setting(outer, inner)


# ---------------------------------------------------------------------------
# Ray vs cage surface


def ray_surface_exit(cage: HexCage, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Distance along each unit ray from origin to the cage surface.

    Faces are bilinear patches; each ray/patch intersection reduces to a
    quadratic after eliminating the ray parameter.  The cage must be
    star-shaped about origin so exactly one exit exists; the farthest valid
    hit is returned.  Rays that miss every patch numerically fall back to
    bisection on the inside test.
    """
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = dirs.shape[0]
    verts = cage.vertices
    diam = max(cage.diameter, 1e-300)
    best = np.full(n, np.nan)

    # per-ray component pair orthogonal-ish to the dominant direction axis
    kmax = np.argmax(np.abs(dirs), axis=-1)
    others = np.array([[1, 2], [0, 2], [0, 1]])
    i1 = others[kmax, 0]
    i2 = others[kmax, 1]
    rows = np.arange(n)

    tol_ab = 1e-6
    s_min = 1e-9 * diam

    for _axis, _side, (c00, c10, c01, c11) in FACES:
        p00 = verts[c00]
        e1 = verts[c10] - p00
        e2 = verts[c01] - p00
        e3 = verts[c11] - verts[c10] - verts[c01] + p00
        m = p00 - origin
        A = np.cross(np.broadcast_to(e1, dirs.shape), dirs)
        B = np.cross(np.broadcast_to(e2, dirs.shape), dirs)
        C = np.cross(np.broadcast_to(e3, dirs.shape), dirs)
        D = np.cross(np.broadcast_to(m, dirs.shape), dirs)
        A1, A2 = A[rows, i1], A[rows, i2]
        B1, B2 = B[rows, i1], B[rows, i2]
        C1, C2 = C[rows, i1], C[rows, i2]
        D1, D2 = D[rows, i1], D[rows, i2]

        # quadratic in b: qa b^2 + qb b + qc = 0
        qa = B1 * C2 - B2 * C1
        qb = D1 * C2 + B1 * A2 - D2 * C1 - B2 * A1
        qc = D1 * A2 - D2 * A1
        scale = np.maximum.reduce([np.abs(qa), np.abs(qb), np.abs(qc), np.full(n, 1e-300)])
        lin = np.abs(qa) <= 1e-14 * scale
        disc = qb * qb - 4.0 * qa * qc
        sq = np.sqrt(np.maximum(disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            qsign = np.where(qb >= 0.0, 1.0, -1.0)
            qterm = -0.5 * (qb + qsign * sq)
            b_quad1 = qterm / qa
            b_quad2 = qc / qterm
            b_lin = -qc / qb
        roots = [
            np.where(lin, b_lin, b_quad1),
            np.where(lin, np.nan, b_quad2),
        ]
        valid_any = (lin & (np.abs(qb) > 1e-14 * scale)) | (~lin & (disc >= 0.0))
        for b in roots:
            with np.errstate(divide="ignore", invalid="ignore"):
                den1 = A1 + b * C1
                den2 = A2 + b * C2
                use1 = np.abs(den1) >= np.abs(den2)
                a = np.where(
                    use1,
                    -(D1 + b * B1) / den1,
                    -(D2 + b * B2) / den2,
                )
            hit = (
                valid_any
                & np.isfinite(a)
                & np.isfinite(b)
                & (a >= -tol_ab) & (a <= 1.0 + tol_ab)
                & (b >= -tol_ab) & (b <= 1.0 + tol_ab)
            )
            if not hit.any():
                continue
            with np.errstate(invalid="ignore"):
                pt = (
                    p00
                    + a[:, None] * e1
                    + b[:, None] * e2
                    + (a * b)[:, None] * e3
                )
                s = np.einsum("ij,ij->i", pt - origin, dirs)
                off_ray = np.linalg.norm(np.cross(pt - origin, dirs), axis=-1)
            hit &= (s > s_min) & (off_ray <= 1e-9 * diam)
            better = hit & (np.isnan(best) | (s > best))
            best[better] = s[better]

    missed = np.isnan(best)
    if missed.any():
        log.debug("ray_surface_exit: bisection fallback for %d rays", int(missed.sum()))
        best[missed] = _bisect_exit(cage, origin, dirs[missed], diam)
    return best


def _bisect_exit(cage: HexCage, origin: np.ndarray, dirs: np.ndarray, diam: float) -> np.ndarray:
    lo = np.zeros(dirs.shape[0])
    hi = np.full(dirs.shape[0], 4.0 * diam)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside = contains_batch(cage, origin + mid[:, None] * dirs)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)
