/**
 * protocol.ts — Wire protocol for the cagewarp editing service.
 *
 * Messages are single-line JSON frames over a persistent WebSocket.
 * A versioned hello gates compatibility; every command carries a strictly
 * increasing id and is acked in order; frames carry the session revision
 * so stale renders are identifiable client-side.
 */
import { z } from "zod";

export const PROTOCOL_VERSION = 1;

const vec3 = z.tuple([z.number(), z.number(), z.number()]);
export type Vec3 = z.infer<typeof vec3>;

/** Eight cage corners in x-fastest binary order: index = i + 2j + 4k. */
export const cageVertices = z.array(vec3).length(8);
export type CageVertices = z.infer<typeof cageVertices>;

export const helloReplySchema = z.object({
  kind: z.literal("hello"),
  protocol: z.number().int(),
  server: z.string(),
});
export type HelloReply = z.infer<typeof helloReplySchema>;

export const serverErrorSchema = z.object({
  kind: z.literal("error"),
  reason: z.string(),
});

export const errorInfoSchema = z.object({
  type: z.string(),
  message: z.string(),
  vertex_indices: z.array(z.number().int()).nullish(),
});
export type ErrorInfo = z.infer<typeof errorInfoSchema>;

export const ackSchema = z.object({
  kind: z.literal("ack"),
  id: z.number().int(),
  ok: z.boolean(),
  result: z.unknown().nullish(),
  error: errorInfoSchema.nullish(),
});
export type Ack = z.infer<typeof ackSchema>;

export const frameSchema = z.object({
  kind: z.literal("frame"),
  request_id: z.number().int(),
  revision: z.number().int(),
  width: z.number().int().positive(),
  height: z.number().int().positive(),
  encoding: z.enum(["png-base64", "raw-f32le"]),
  payload: z.string(),
});
export type FrameMessage = z.infer<typeof frameSchema>;

/** Anything the server may push after the handshake. */
export const serverMessageSchema = z.discriminatedUnion("kind", [
  ackSchema,
  frameSchema,
  serverErrorSchema,
]);
export type ServerMessage = z.infer<typeof serverMessageSchema>;

export const COMMAND_KINDS = [
  "load_scene", "set_cages", "begin_edit", "manipulate", "set_mode",
  "commit", "undo", "render_request", "get_state", "bake_status",
] as const;
export type CommandKind = (typeof COMMAND_KINDS)[number];

export interface CommandMessage {
  id: number;
  kind: CommandKind;
  payload?: Record<string, unknown>;
}

export const adjustmentModes = ["discrete-empty", "discrete-copy", "continuous"] as const;
export type AdjustmentMode = (typeof adjustmentModes)[number];

/** Whole-cage transform about the cage center (translate, rotate x/y/z, scale). */
export const transformActionSchema = z.object({
  kind: z.literal("transform"),
  translation: vec3.default([0, 0, 0]),
  rotation: vec3.default([0, 0, 0]),
  scale: vec3.default([1, 1, 1]),
});
export type TransformAction = z.infer<typeof transformActionSchema>;

/** Drag one corner, or one edge (both endpoints move rigidly), by delta. */
export const deformActionSchema = z.object({
  kind: z.literal("deform"),
  handle: z.enum(["corner", "edge"]),
  index: z.number().int().nonnegative(),
  delta: vec3,
});
export type DeformAction = z.infer<typeof deformActionSchema>;

export const actionSchema = z.discriminatedUnion("kind", [
  transformActionSchema,
  deformActionSchema,
]);
export type ManipulateAction = z.infer<typeof actionSchema>;

/** Shape of the get_state result the client relies on for resync. */
export const sessionStateSchema = z.object({
  phase: z.string(),
  scene: z.string().nullish(),
  revision: z.number().int(),
  stack_depth: z.number().int(),
  staged_cages: z
    .object({ outer: cageVertices, inner: cageVertices })
    .nullish(),
  live_edit: z
    .object({
      outer: cageVertices,
      inner: cageVertices,
      mode: z.enum(adjustmentModes),
      provenance: z.array(actionSchema),
    })
    .nullish(),
  mode: z.enum(adjustmentModes).nullish(),
});
export type SessionState = z.infer<typeof sessionStateSchema>;

export function parseServerMessage(raw: string): ServerMessage {
  return serverMessageSchema.parse(JSON.parse(raw));
}
