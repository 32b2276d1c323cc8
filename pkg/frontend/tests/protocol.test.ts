import { describe, expect, it } from "vitest";

import {
  ackSchema,
  frameSchema,
  parseServerMessage,
  sessionStateSchema,
} from "../src/protocol.js";
import { buildTransformAction, IDENTITY_FIELDS } from "../src/panel.js";

describe("server message parsing", () => {
  it("accepts a well-formed ack", () => {
    const msg = parseServerMessage(JSON.stringify({
      kind: "ack", id: 3, ok: true, result: { revision: 7 },
    }));
    expect(msg.kind).toBe("ack");
  });

  it("accepts an error ack carrying escaping vertex indices", () => {
    const ack = ackSchema.parse({
      kind: "ack", id: 4, ok: false,
      error: { type: "ContainmentError", message: "escaped", vertex_indices: [1, 3] },
    });
    expect(ack.error?.vertex_indices).toEqual([1, 3]);
  });

  it("accepts both frame encodings", () => {
    for (const encoding of ["png-base64", "raw-f32le"] as const) {
      const frame = frameSchema.parse({
        kind: "frame", request_id: 1, revision: 2,
        width: 8, height: 8, encoding, payload: "AAAA",
      });
      expect(frame.encoding).toBe(encoding);
    }
  });

  it("rejects unknown kinds and malformed frames", () => {
    expect(() => parseServerMessage(JSON.stringify({ kind: "mystery" }))).toThrow();
    expect(() => frameSchema.parse({
      kind: "frame", request_id: 1, revision: 2, width: 0, height: 8,
      encoding: "png-base64", payload: "",
    })).toThrow();
  });

  it("parses a full get_state result including provenance", () => {
    const cage = Array.from({ length: 8 }, (_, i) => [i, i, i]);
    const state = sessionStateSchema.parse({
      phase: "editing", scene: "scene.json", revision: 5, stack_depth: 1,
      staged_cages: null,
      live_edit: {
        outer: cage, inner: cage, mode: "continuous",
        provenance: [
          { kind: "transform", translation: [0.1, 0, 0], rotation: [0, 0, 0], scale: [1, 1, 1] },
          { kind: "deform", handle: "edge", index: 2, delta: [0, 0.1, 0] },
        ],
      },
      mode: "continuous",
    });
    expect(state.live_edit?.provenance).toHaveLength(2);
  });
});

describe("transform panel validation", () => {
  it("identity fields build an identity transform", () => {
    const result = buildTransformAction(IDENTITY_FIELDS);
    expect(result.ok).toBe(true);
    if (result.ok) {
      expect(result.action.translation).toEqual([0, 0, 0]);
      expect(result.action.rotation).toEqual([0, 0, 0]);
      expect(result.action.scale).toEqual([1, 1, 1]);
    }
  });

  it("converts rotation degrees to radians", () => {
    const result = buildTransformAction({
      ...IDENTITY_FIELDS, rotationDegrees: ["0", "0", "90"],
    });
    expect(result.ok).toBe(true);
    if (result.ok) expect(result.action.rotation[2]).toBeCloseTo(Math.PI / 2, 12);
  });

  it("non-numeric input yields errors and no action", () => {
    const result = buildTransformAction({
      ...IDENTITY_FIELDS, translation: ["0.1", "oops", ""],
    });
    expect(result.ok).toBe(false);
    if (!result.ok) {
      expect(result.errors).toContain("translation.y: not a number");
      expect(result.errors).toContain("translation.z: not a number");
    }
  });

  it("zero or negative scale is rejected client-side", () => {
    const result = buildTransformAction({
      ...IDENTITY_FIELDS, scale: ["0", "1", "1"],
    });
    expect(result.ok).toBe(false);
    if (!result.ok) expect(result.errors[0]).toMatch(/strictly positive/);
  });
});
