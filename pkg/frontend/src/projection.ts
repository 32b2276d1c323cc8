/**
 * projection.ts — Pinhole camera math for the 2D cage overlay.
 *
 * The viewer never renders volumes client-side; it only projects cage
 * vertices into the pixel grid of the server's camera so the wireframe
 * and drag handles can be drawn on top of streamed frames.  Conventions
 * match the render service: camera-to-world pose with x right, y up,
 * looking down -z; horizontal field of view; square pixels.
 */
import { add, cross, normalize, scale, sub } from "./geometry.js";
import type { Vec3 } from "./protocol.js";

export interface CameraSpec {
  /** Row-major 4x4 camera-to-world matrix, flattened. */
  transform: number[];
  fov_x: number;
  width: number;
  height: number;
}

/** Build a camera-to-world pose looking from eye toward target. */
export function lookAt(
  eye: Vec3,
  target: Vec3,
  opts: { up?: Vec3; fovX?: number; width?: number; height?: number } = {},
): CameraSpec {
  const up = opts.up ?? [0, 0, 1];
  const fwd = normalize(sub(target, eye));
  const right = normalize(cross(fwd, up));
  const upv = cross(right, fwd);
  const back = scale(fwd, -1);
  const transform = [
    right[0], upv[0], back[0], eye[0],
    right[1], upv[1], back[1], eye[1],
    right[2], upv[2], back[2], eye[2],
    0, 0, 0, 1,
  ];
  return {
    transform,
    fov_x: opts.fovX ?? Math.PI / 4,
    width: opts.width ?? 200,
    height: opts.height ?? 200,
  };
}

export interface ProjectedPoint {
  x: number;
  y: number;
  /** Distance along the view axis; points with depth <= 0 are behind the camera. */
  depth: number;
}

/**
 * Project a world point into pixel coordinates (origin top-left, y down).
 * The pose's rotation block is orthonormal, so world-to-camera is its
 * transpose applied to the eye-relative position.
 */
export function projectPoint(camera: CameraSpec, p: Vec3): ProjectedPoint {
  const m = camera.transform;
  const rel: Vec3 = [p[0] - m[3], p[1] - m[7], p[2] - m[11]];
  const xc = m[0] * rel[0] + m[4] * rel[1] + m[8] * rel[2];
  const yc = m[1] * rel[0] + m[5] * rel[1] + m[9] * rel[2];
  const zc = m[2] * rel[0] + m[6] * rel[1] + m[10] * rel[2];
  const focal = camera.width / 2 / Math.tan(camera.fov_x / 2);
  const depth = -zc;
  return {
    x: camera.width / 2 + (focal * xc) / depth,
    y: camera.height / 2 - (focal * yc) / depth,
    depth,
  };
}

/** Camera-frame right and up axes in world space (for drag-plane math). */
export function cameraAxes(camera: CameraSpec): { right: Vec3; up: Vec3; back: Vec3 } {
  const m = camera.transform;
  return {
    right: [m[0], m[4], m[8]],
    up: [m[1], m[5], m[9]],
    back: [m[2], m[6], m[10]],
  };
}

/**
 * Convert a screen-space pixel delta into a world-space displacement of a
 * point at the given handle position: motion stays in the plane through
 * the handle perpendicular to the view axis, so a dragged handle tracks
 * the cursor exactly at its own depth.
 */
export function screenDeltaToWorld(
  camera: CameraSpec,
  handle: Vec3,
  dxPixels: number,
  dyPixels: number,
): Vec3 {
  const { right, up } = cameraAxes(camera);
  const depth = projectPoint(camera, handle).depth;
  if (depth <= 0) throw new Error("handle is behind the camera");
  const focal = camera.width / 2 / Math.tan(camera.fov_x / 2);
  const worldPerPixel = depth / focal;
  return add(
    scale(right, dxPixels * worldPerPixel),
    scale(up, -dyPixels * worldPerPixel),
  );
}
