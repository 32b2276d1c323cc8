/**
 * geometry.ts — Client-side cage math.
 *
 * Mirrors the server's hexahedral cage conventions: eight corners in
 * x-fastest binary order (index = i + 2j + 4k), twelve edges, and the
 * same manipulation semantics (whole-cage transform about the center,
 * corner/edge drags) so the overlay can show the deformed cage without
 * waiting for a server round-trip.
 */
import type { CageVertices, ManipulateAction, Vec3 } from "./protocol.js";

/** Edge endpoint pairs: x-aligned, then y-aligned, then z-aligned. */
export const EDGES: ReadonlyArray<readonly [number, number]> = [
  [0, 1], [2, 3], [4, 5], [6, 7],
  [0, 2], [1, 3], [4, 6], [5, 7],
  [0, 4], [1, 5], [2, 6], [3, 7],
];

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.sqrt(dot(a, a));
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  if (n === 0) throw new Error("cannot normalize zero vector");
  return scale(a, 1 / n);
}

/** Axis-aligned box corners in binary order. */
export function cageFromAabb(lo: Vec3, hi: Vec3): CageVertices {
  const verts: Vec3[] = [];
  for (let k = 0; k < 2; k++) {
    for (let j = 0; j < 2; j++) {
      for (let i = 0; i < 2; i++) {
        verts.push([
          i ? hi[0] : lo[0],
          j ? hi[1] : lo[1],
          k ? hi[2] : lo[2],
        ]);
      }
    }
  }
  return verts as CageVertices;
}

export function cageCenter(verts: CageVertices): Vec3 {
  let c: Vec3 = [0, 0, 0];
  for (const v of verts) c = add(c, v);
  return scale(c, 1 / 8);
}

type Mat3 = [Vec3, Vec3, Vec3];

function matVec(m: Mat3, v: Vec3): Vec3 {
  return [dot(m[0], v), dot(m[1], v), dot(m[2], v)];
}

function matMul(a: Mat3, b: Mat3): Mat3 {
  const r: Mat3 = [[0, 0, 0], [0, 0, 0], [0, 0, 0]];
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    }
  }
  return r;
}

function rotX(a: number): Mat3 {
  const c = Math.cos(a), s = Math.sin(a);
  return [[1, 0, 0], [0, c, -s], [0, s, c]];
}

function rotY(a: number): Mat3 {
  const c = Math.cos(a), s = Math.sin(a);
  return [[c, 0, s], [0, 1, 0], [-s, 0, c]];
}

function rotZ(a: number): Mat3 {
  const c = Math.cos(a), s = Math.sin(a);
  return [[c, -s, 0], [s, c, 0], [0, 0, 1]];
}

/**
 * Apply one manipulation to a cage, matching the server: transforms act
 * about the cage center in T·Rx·Ry·Rz·S order; deform drags move one
 * corner or both endpoints of one edge rigidly.
 */
export function applyAction(verts: CageVertices, action: ManipulateAction): CageVertices {
  if (action.kind === "transform") {
    const c = cageCenter(verts);
    const rot = matMul(rotX(action.rotation[0]),
                       matMul(rotY(action.rotation[1]), rotZ(action.rotation[2])));
    return verts.map((v) => {
      const local = sub(v, c);
      const scaled: Vec3 = [
        local[0] * action.scale[0],
        local[1] * action.scale[1],
        local[2] * action.scale[2],
      ];
      return add(add(c, matVec(rot, scaled)), action.translation);
    }) as CageVertices;
  }
  const out = verts.map((v) => [...v] as Vec3) as CageVertices;
  if (action.handle === "corner") {
    if (action.index < 0 || action.index >= 8) {
      throw new Error(`corner index ${action.index} out of range`);
    }
    out[action.index] = add(out[action.index], action.delta);
  } else {
    if (action.index < 0 || action.index >= EDGES.length) {
      throw new Error(`edge index ${action.index} out of range`);
    }
    const [a, b] = EDGES[action.index];
    out[a] = add(out[a], action.delta);
    out[b] = add(out[b], action.delta);
  }
  return out;
}

export function applyActions(verts: CageVertices, actions: ManipulateAction[]): CageVertices {
  return actions.reduce(applyAction, verts);
}
