/**
 * drag.ts — Cage handle dragging with rate-limited live updates.
 *
 * While the pointer moves, incremental deform commands stream to the
 * server at no more than MAX_UPDATES_PER_SECOND so previews stay live
 * without flooding the session.  On release, one final command tops the
 * streamed increments up to the exact cumulative delta, so the committed
 * cage position never depends on throttle timing.  A drag that never
 * moves the cursor sends nothing.
 */
import type { Ack } from "./protocol.js";
import type { SessionClient } from "./client.js";
import { sub } from "./geometry.js";
import { CameraSpec, screenDeltaToWorld } from "./projection.js";
import type { Vec3 } from "./protocol.js";

export const MAX_UPDATES_PER_SECOND = 30;

export interface DragHandle {
  /** Corner/edge drags deform the cage; a cage drag translates it rigidly. */
  kind: "corner" | "edge" | "cage";
  index: number;
  /** World position of the handle when the drag starts (fixes the drag depth). */
  position: Vec3;
}

const ZERO: Vec3 = [0, 0, 0];

function isZero(v: Vec3): boolean {
  return v[0] === 0 && v[1] === 0 && v[2] === 0;
}

export class DragController {
  private active = false;
  private startX = 0;
  private startY = 0;
  private sentTotal: Vec3 = ZERO;
  private currentTotal: Vec3 = ZERO;
  private lastSendTime = -Infinity;
  /** Acks of every command sent during the current/most recent drag. */
  readonly sent: Promise<Ack>[] = [];

  constructor(
    private client: SessionClient,
    private camera: CameraSpec,
    private handle: DragHandle,
    private now: () => number = () => Date.now(),
  ) {}

  pointerDown(px: number, py: number): void {
    this.active = true;
    this.startX = px;
    this.startY = py;
    this.sentTotal = ZERO;
    this.currentTotal = ZERO;
    this.lastSendTime = -Infinity;
    this.sent.length = 0;
  }

  pointerMove(px: number, py: number): void {
    if (!this.active) return;
    this.currentTotal = screenDeltaToWorld(
      this.camera, this.handle.position, px - this.startX, py - this.startY,
    );
    const interval = 1000 / MAX_UPDATES_PER_SECOND;
    if (this.now() - this.lastSendTime >= interval) {
      this.flush();
      this.lastSendTime = this.now();
    }
  }

  /** Release: send whatever remains so the server lands on the exact total. */
  pointerUp(px: number, py: number): void {
    if (!this.active) return;
    this.active = false;
    this.currentTotal = screenDeltaToWorld(
      this.camera, this.handle.position, px - this.startX, py - this.startY,
    );
    this.flush();
  }

  private flush(): void {
    const increment = sub(this.currentTotal, this.sentTotal);
    if (isZero(increment)) return;
    this.sentTotal = this.currentTotal;
    this.sent.push(this.client.manipulate(
      this.handle.kind === "cage"
        ? {
            kind: "transform",
            translation: increment,
            rotation: [0, 0, 0],
            scale: [1, 1, 1],
          }
        : {
            kind: "deform",
            handle: this.handle.kind,
            index: this.handle.index,
            delta: increment,
          },
    ));
  }
}
