/**
 * viewer.ts — Browser entry point.
 *
 * Wires the session client, drag controller, and transform panel to the
 * DOM: a canvas shows streamed frames (decoded from png-base64), a
 * second canvas on top draws the cage wireframe and handle gizmos using
 * the same camera parameters the server rendered with.  No field math
 * runs client-side; every pixel comes from a FrameMessage.
 *
 * Configuration via URL query parameters:
 *   ?server=ws://host:port  — service address (default: same host)
 *   ?scene=path.json        — scene to load on connect
 */
import { SessionClient, ViewerState } from "./client.js";
import { DragController, DragHandle } from "./drag.js";
import { EDGES, add, scale as vscale } from "./geometry.js";
import { CameraSpec, lookAt, projectPoint } from "./projection.js";
import { buildTransformAction, IDENTITY_FIELDS, TransformFields } from "./panel.js";
import type { AdjustmentMode, CageVertices, Vec3 } from "./protocol.js";

export interface OrbitParams {
  azimuth: number;
  elevation: number;
  distance: number;
  target: Vec3;
}

export function orbitCamera(orbit: OrbitParams, width: number, height: number): CameraSpec {
  const ce = Math.cos(orbit.elevation);
  const eye: Vec3 = add(orbit.target, vscale([
    ce * Math.cos(orbit.azimuth),
    ce * Math.sin(orbit.azimuth),
    Math.sin(orbit.elevation),
  ], orbit.distance));
  return lookAt(eye, orbit.target, { width, height });
}

const HANDLE_RADIUS_PX = 6;

/** Pick the nearest corner/edge gizmo within the hit radius, if any. */
export function pickHandle(
  camera: CameraSpec,
  cage: CageVertices,
  px: number,
  py: number,
): DragHandle | null {
  let best: DragHandle | null = null;
  let bestDist = HANDLE_RADIUS_PX;
  const hit = (kind: "corner" | "edge", index: number, position: Vec3) => {
    const proj = projectPoint(camera, position);
    if (proj.depth <= 0) return;
    const d = Math.hypot(proj.x - px, proj.y - py);
    if (d <= bestDist) {
      bestDist = d;
      best = { kind, index, position };
    }
  };
  cage.forEach((v, i) => hit("corner", i, v));
  EDGES.forEach(([a, b], i) => hit("edge", i, vscale(add(cage[a], cage[b]), 0.5)));
  return best;
}

function drawCage(
  ctx: CanvasRenderingContext2D,
  camera: CameraSpec,
  cage: CageVertices,
  color: string,
  dashed: boolean,
): void {
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.setLineDash(dashed ? [4, 4] : []);
  const pts = cage.map((v) => projectPoint(camera, v));
  ctx.beginPath();
  for (const [a, b] of EDGES) {
    if (pts[a].depth <= 0 || pts[b].depth <= 0) continue;
    ctx.moveTo(pts[a].x, pts[a].y);
    ctx.lineTo(pts[b].x, pts[b].y);
  }
  ctx.stroke();
  ctx.setLineDash([]);
  for (const p of pts) {
    if (p.depth <= 0) continue;
    ctx.beginPath();
    ctx.arc(p.x, p.y, 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}

export class Viewer {
  private camera: CameraSpec;
  private drag: DragController | null = null;
  private orbit: OrbitParams = {
    azimuth: -Math.PI / 2, elevation: 0.3, distance: 3, target: [0, 0, 0],
  };
  private renderPending = false;

  constructor(
    private client: SessionClient,
    frameCanvas: HTMLCanvasElement,
    private overlayCanvas: HTMLCanvasElement,
    private banner: HTMLElement,
  ) {
    this.camera = orbitCamera(this.orbit, frameCanvas.width, frameCanvas.height);
    client.onFrame = (frame) => {
      if (frame.encoding !== "png-base64") return;
      const img = new Image();
      img.onload = () => {
        frameCanvas.getContext("2d")?.drawImage(img, 0, 0, frameCanvas.width, frameCanvas.height);
      };
      img.src = `data:image/png;base64,${frame.payload}`;
      this.renderPending = false;
    };
    client.onStateChange = (state) => this.drawOverlay(state);
    overlayCanvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    overlayCanvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    overlayCanvas.addEventListener("pointerup", (e) => this.onPointerUp(e));
  }

  /** Connect, sync, load the configured scene, and request the first frame. */
  async start(params: URLSearchParams): Promise<void> {
    try {
      await this.client.connect();
      await this.client.resync();
    } catch (err) {
      this.banner.textContent = `connection failed: ${err}`;
      return;
    }
    this.banner.textContent = "";
    const scene = params.get("scene");
    if (scene !== null && this.client.state.phase === "Idle") {
      const ack = await this.client.loadScene(scene);
      if (!ack.ok) {
        this.banner.textContent = `load failed: ${ack.error?.message}`;
        return;
      }
    }
    this.refresh(true);
  }

  refresh(preview = false): void {
    if (this.renderPending && preview) return;
    this.renderPending = true;
    void this.client.requestRender(
      this.camera as unknown as Record<string, unknown>,
      { preview },
    );
  }

  async applyPanel(fields: TransformFields = IDENTITY_FIELDS): Promise<string[]> {
    const result = buildTransformAction(fields);
    if (!result.ok) return result.errors;
    const ack = await this.client.manipulate(result.action);
    if (!ack.ok) return [ack.error?.message ?? "rejected"];
    this.refresh();
    return [];
  }

  async switchMode(mode: AdjustmentMode): Promise<void> {
    const ack = await this.client.setMode(mode);
    if (ack.ok) this.refresh();
  }

  private onPointerDown(e: PointerEvent): void {
    const cage = this.client.state.innerDeformed;
    if (cage === null) return;
    const handle = pickHandle(this.camera, cage, e.offsetX, e.offsetY);
    if (handle === null) return;
    this.drag = new DragController(this.client, this.camera, handle);
    this.drag.pointerDown(e.offsetX, e.offsetY);
    this.overlayCanvas.setPointerCapture(e.pointerId);
  }

  private onPointerMove(e: PointerEvent): void {
    this.drag?.pointerMove(e.offsetX, e.offsetY);
  }

  private async onPointerUp(e: PointerEvent): Promise<void> {
    const drag = this.drag;
    if (drag === null) return;
    this.drag = null;
    drag.pointerUp(e.offsetX, e.offsetY);
    const acks = await Promise.all(drag.sent);
    const rejected = acks.find((a) => !a.ok);
    if (rejected !== undefined) {
      // gizmo snapped back by the client's rollback; surface the reason
      this.banner.textContent = rejected.error?.message ?? "manipulation rejected";
    } else {
      this.banner.textContent = "";
    }
    this.refresh();
  }

  private drawOverlay(state: ViewerState): void {
    const ctx = this.overlayCanvas.getContext("2d");
    if (ctx === null) return;
    ctx.clearRect(0, 0, this.overlayCanvas.width, this.overlayCanvas.height);
    if (state.outer !== null) drawCage(ctx, this.camera, state.outer, "#4a90d9", false);
    if (state.inner !== null) drawCage(ctx, this.camera, state.inner, "#999999", true);
    if (state.innerDeformed !== null) {
      drawCage(ctx, this.camera, state.innerDeformed, "#e07a3f", false);
    }
  }
}

/** Bootstraps the viewer when loaded as the page entry module. */
export function main(): void {
  const params = new URLSearchParams(window.location.search);
  const server = params.get("server")
    ?? `ws://${window.location.host}`;
  const client = new SessionClient(
    () => new WebSocket(`${server}/session`) as unknown as
      import("./client.js").WireSocket,
  );
  const frameCanvas = document.getElementById("frame") as HTMLCanvasElement;
  const overlayCanvas = document.getElementById("overlay") as HTMLCanvasElement;
  const banner = document.getElementById("banner") as HTMLElement;
  const viewer = new Viewer(client, frameCanvas, overlayCanvas, banner);
  void viewer.start(params);
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", main);
  } else if (document.getElementById("frame") !== null) {
    main();
  }
}
