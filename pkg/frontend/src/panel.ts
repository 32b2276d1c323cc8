/**
 * panel.ts — Transform panel field validation.
 *
 * The panel holds nine text fields (translation, rotation in degrees,
 * scale).  Validation happens client-side: non-numeric input or a
 * non-positive scale produces field-level errors and no command is
 * built, matching the server's own invariants so a well-formed panel
 * submission is never rejected for shape reasons.
 */
import type { TransformAction, Vec3 } from "./protocol.js";

export interface TransformFields {
  translation: [string, string, string];
  rotationDegrees: [string, string, string];
  scale: [string, string, string];
}

export const IDENTITY_FIELDS: TransformFields = {
  translation: ["0", "0", "0"],
  rotationDegrees: ["0", "0", "0"],
  scale: ["1", "1", "1"],
};

export type PanelResult =
  | { ok: true; action: TransformAction }
  | { ok: false; errors: string[] };

function parseTriple(name: string, raw: [string, string, string], errors: string[]): Vec3 {
  const out: number[] = [];
  for (let axis = 0; axis < 3; axis++) {
    const text = raw[axis].trim();
    const value = text === "" ? NaN : Number(text);
    if (!Number.isFinite(value)) {
      errors.push(`${name}.${"xyz"[axis]}: not a number`);
      out.push(NaN);
    } else {
      out.push(value);
    }
  }
  return out as unknown as Vec3;
}

/** Validate the panel; only a fully valid panel yields a manipulate action. */
export function buildTransformAction(fields: TransformFields): PanelResult {
  const errors: string[] = [];
  const translation = parseTriple("translation", fields.translation, errors);
  const degrees = parseTriple("rotation", fields.rotationDegrees, errors);
  const scale = parseTriple("scale", fields.scale, errors);
  for (let axis = 0; axis < 3; axis++) {
    if (Number.isFinite(scale[axis]) && scale[axis] <= 0) {
      errors.push(`scale.${"xyz"[axis]}: must be strictly positive`);
    }
  }
  if (errors.length > 0) return { ok: false, errors };
  const rotation = degrees.map((d) => (d * Math.PI) / 180) as unknown as Vec3;
  return {
    ok: true,
    action: { kind: "transform", translation, rotation, scale },
  };
}
