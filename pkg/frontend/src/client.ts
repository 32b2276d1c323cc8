/**
 * client.ts — WebSocket session client for the cagewarp editing service.
 *
 * Responsibilities:
 *  - versioned hello handshake before any command;
 *  - strictly increasing command ids, one pending ack per id;
 *  - optimistic cage manipulation: the local deformed cage updates
 *    immediately and rolls back to the last server-acked state if the
 *    server rejects the command (e.g. a containment violation);
 *  - frames applied in revision order — a frame older than the newest
 *    one already shown is discarded, never displayed;
 *  - resync after reconnect by replaying get_state into local state.
 *
 * The socket is injected so tests can drive the client with a scripted
 * transport and the browser/node entry points can supply a real one.
 */
import { applyActions } from "./geometry.js";
import {
  Ack,
  AdjustmentMode,
  CageVertices,
  CommandKind,
  FrameMessage,
  HelloReply,
  ManipulateAction,
  PROTOCOL_VERSION,
  SessionState,
  helloReplySchema,
  parseServerMessage,
  serverErrorSchema,
  sessionStateSchema,
} from "./protocol.js";

/** Minimal socket surface shared by browser WebSocket, `ws`, and mocks. */
export interface WireSocket {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((err: unknown) => void) | null;
}

export type SocketFactory = () => WireSocket;

/** Everything the overlay and panels need to draw one consistent picture. */
export interface ViewerState {
  connected: boolean;
  phase: string;
  revision: number;
  mode: AdjustmentMode | null;
  outer: CageVertices | null;
  inner: CageVertices | null;
  /** Inner cage after all acked + optimistic manipulations. */
  innerDeformed: CageVertices | null;
  stackDepth: number;
}

interface Pending {
  resolve: (ack: Ack) => void;
  reject: (err: Error) => void;
}

export class ProtocolError extends Error {}

export class SessionClient {
  private socket: WireSocket | null = null;
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private ackedActions: ManipulateAction[] = [];
  private lastFrameRevision = -1;

  state: ViewerState = {
    connected: false,
    phase: "Idle",
    revision: 0,
    mode: null,
    outer: null,
    inner: null,
    innerDeformed: null,
    stackDepth: 0,
  };

  onFrame: ((frame: FrameMessage) => void) | null = null;
  onStateChange: ((state: ViewerState) => void) | null = null;

  constructor(private factory: SocketFactory) {}

  /** Open the socket and complete the hello handshake. */
  async connect(): Promise<HelloReply> {
    const socket = this.factory();
    this.socket = socket;
    const reply = await new Promise<HelloReply>((resolve, reject) => {
      socket.onerror = (err) => reject(new ProtocolError(`socket error: ${err}`));
      socket.onopen = () => {
        socket.send(JSON.stringify({ kind: "hello", protocol: PROTOCOL_VERSION }));
      };
      socket.onmessage = (event) => {
        let parsed: unknown;
        try {
          parsed = JSON.parse(String(event.data));
        } catch (err) {
          reject(new ProtocolError(`unparseable hello reply: ${err}`));
          return;
        }
        const refused = serverErrorSchema.safeParse(parsed);
        if (refused.success) {
          reject(new ProtocolError(`server refused session: ${refused.data.reason}`));
          return;
        }
        const hello = helloReplySchema.safeParse(parsed);
        if (!hello.success) {
          reject(new ProtocolError("expected hello reply"));
          return;
        }
        resolve(hello.data);
      };
    });
    socket.onmessage = (event) => this.handleMessage(String(event.data));
    socket.onclose = () => this.markDisconnected();
    socket.onerror = () => this.markDisconnected();
    this.setState({ connected: true });
    return reply;
  }

  close(): void {
    this.socket?.close();
    this.markDisconnected();
  }

  /**
   * Reopen the socket and pull authoritative state from the server.
   * The server is the source of truth for cage state, so local caches
   * are rebuilt from get_state rather than trusted across connections.
   */
  async reconnect(): Promise<void> {
    this.pending.forEach((p) => p.reject(new ProtocolError("connection replaced")));
    this.pending.clear();
    await this.connect();
    await this.resync();
  }

  /** Send one command; resolves with the server's ack (ok or not). */
  send(kind: CommandKind, payload: Record<string, unknown> = {}): Promise<Ack> {
    if (this.socket === null || !this.state.connected) {
      return Promise.reject(new ProtocolError("not connected"));
    }
    const id = this.nextId++;
    const promise = new Promise<Ack>((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
    });
    this.socket.send(JSON.stringify({ id, kind, payload }));
    return promise;
  }

  async loadScene(path: string): Promise<Ack> {
    return this.send("load_scene", { path });
  }

  async setCages(outer: CageVertices, inner: CageVertices): Promise<Ack> {
    const ack = await this.send("set_cages", { outer, inner });
    if (ack.ok) {
      this.ackedActions = [];
      this.setState({
        phase: "SettingCages",
        outer,
        inner,
        innerDeformed: inner,
      });
    }
    return ack;
  }

  async beginEdit(mode: AdjustmentMode = "continuous"): Promise<Ack> {
    const ack = await this.send("begin_edit", { mode });
    if (ack.ok) this.setState({ phase: "Editing", mode });
    return ack;
  }

  async setMode(mode: AdjustmentMode): Promise<Ack> {
    const ack = await this.send("set_mode", { mode });
    if (ack.ok) this.setState({ mode });
    return ack;
  }

  /**
   * Apply a manipulation optimistically: the local deformed cage moves
   * right away, and snaps back to the last acked shape on rejection.
   */
  async manipulate(action: ManipulateAction): Promise<Ack> {
    if (this.state.inner === null) {
      throw new ProtocolError("no cages set");
    }
    const optimistic = applyActions(this.state.inner, [...this.ackedActions, action]);
    this.setState({ innerDeformed: optimistic });
    const ack = await this.send("manipulate", action as unknown as Record<string, unknown>);
    if (ack.ok) {
      this.ackedActions.push(action);
    } else {
      this.setState({
        innerDeformed: applyActions(this.state.inner, this.ackedActions),
      });
    }
    return ack;
  }

  async commit(): Promise<Ack> {
    const ack = await this.send("commit");
    if (ack.ok) {
      this.ackedActions = [];
      this.setState({ phase: "SettingCages", mode: null });
    }
    return ack;
  }

  /** Ask for a frame; it arrives later through onFrame. */
  requestRender(
    camera: Record<string, unknown>,
    opts: {
      preview?: boolean;
      samples?: number;
      warpResolution?: number;
      encoding?: "png-base64" | "raw-f32le";
    } = {},
  ): Promise<Ack> {
    const payload: Record<string, unknown> = { camera };
    if (opts.preview !== undefined) payload.preview = opts.preview;
    if (opts.samples !== undefined) payload.samples = opts.samples;
    if (opts.warpResolution !== undefined) payload.warp_resolution = opts.warpResolution;
    if (opts.encoding !== undefined) payload.encoding = opts.encoding;
    return this.send("render_request", payload);
  }

  /** Pull server state and rebuild the local caches from it. */
  async resync(): Promise<SessionState> {
    const ack = await this.send("get_state");
    if (!ack.ok) throw new ProtocolError(`get_state rejected: ${ack.error?.message}`);
    const state = sessionStateSchema.parse(ack.result);
    const cages = state.live_edit ?? state.staged_cages ?? null;
    const provenance = state.live_edit?.provenance ?? [];
    this.ackedActions = [...provenance];
    this.setState({
      phase: state.phase,
      revision: state.revision,
      mode: state.mode ?? null,
      stackDepth: state.stack_depth,
      outer: cages?.outer ?? null,
      inner: cages?.inner ?? null,
      innerDeformed: cages ? applyActions(cages.inner, this.ackedActions) : null,
    });
    return state;
  }

  private handleMessage(raw: string): void {
    let message;
    try {
      message = parseServerMessage(raw);
    } catch (err) {
      throw new ProtocolError(`malformed server message: ${err}`);
    }
    if (message.kind === "ack") {
      const waiter = this.pending.get(message.id);
      if (waiter !== undefined) {
        this.pending.delete(message.id);
        if (message.ok && typeof message.result === "object" && message.result !== null) {
          const revision = (message.result as { revision?: number }).revision;
          if (typeof revision === "number" && revision > this.state.revision) {
            this.setState({ revision });
          }
        }
        waiter.resolve(message);
      }
      return;
    }
    if (message.kind === "frame") {
      // revision order: never show a frame older than one already shown
      if (message.revision < this.lastFrameRevision) return;
      this.lastFrameRevision = message.revision;
      this.onFrame?.(message);
      return;
    }
    throw new ProtocolError(`server error: ${message.reason}`);
  }

  private markDisconnected(): void {
    if (this.state.connected) this.setState({ connected: false });
  }

  private setState(changes: Partial<ViewerState>): void {
    this.state = { ...this.state, ...changes };
    this.onStateChange?.(this.state);
  }
}
