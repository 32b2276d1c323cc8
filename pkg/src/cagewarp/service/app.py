"""FastAPI service wrapping the editing engine.

One editing session per WebSocket connection.  Commands execute strictly in
order; rendering is offloaded to a worker thread and a newer render_request
cancels the in-flight one (latest request wins).
"""
from __future__ import annotations

import asyncio
import base64
import io
import json
import logging
import threading

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import ValidationError

from .. import PROTOCOL_VERSION, __version__
from ..cage import CageError, ContainmentError
from ..fields import FieldError
from ..render import Camera, RenderSettings, render
from ..session import Session, SessionError
from ..warp import WarpError
from .models import Ack, CommandMessage, ErrorInfo, FrameMessage, Hello, HelloReply, RenderRequestPayload

log = logging.getLogger(__name__)

PREVIEW_WARP_RESOLUTION = 64
PREVIEW_SCALE = 4


def _error_info(exc: Exception) -> ErrorInfo:
    info = ErrorInfo(type=type(exc).__name__, message=str(exc))
    if isinstance(exc, ContainmentError):
        info.vertex_indices = exc.vertex_indices
    return info


class ConnectionState:
    """Per-connection bookkeeping for command ordering and render cancellation."""

    def __init__(self, session: Session):
        self.session = session
        self.last_id: int | None = None
        self.render_task: asyncio.Task | None = None
        self.cancel_event: threading.Event | None = None
        self.send_lock = asyncio.Lock()


def create_app(scene_root: str = ".") -> FastAPI:
    app = FastAPI(title="cagewarp", version=__version__)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/protocol")
    def protocol():
        return {"protocol": PROTOCOL_VERSION}

    @app.websocket("/session")
    async def session_socket(ws: WebSocket):
        await ws.accept()
        # versioned hello gates compatibility
        try:
            hello = Hello.model_validate_json(await ws.receive_text())
        except (ValidationError, json.JSONDecodeError):
            await ws.send_text(json.dumps({"kind": "error", "reason": "bad hello"}))
            await ws.close(code=1002, reason="bad hello")
            return
        if hello.protocol != PROTOCOL_VERSION:
            await ws.send_text(json.dumps({
                "kind": "error",
                "reason": f"protocol-version-mismatch: server={PROTOCOL_VERSION}",
            }))
            await ws.close(code=1002, reason="protocol-version-mismatch")
            return
        await ws.send_text(HelloReply().model_dump_json())

        conn = ConnectionState(Session(scene_root=scene_root))
        try:
            while True:
                raw = await ws.receive_text()
                await _handle_frame(ws, conn, raw)
        except WebSocketDisconnect:
            pass
        finally:
            if conn.cancel_event is not None:
                conn.cancel_event.set()

    return app


async def _send(ws: WebSocket, conn: ConnectionState, model) -> None:
    async with conn.send_lock:
        await ws.send_text(model.model_dump_json())


async def _handle_frame(ws: WebSocket, conn: ConnectionState, raw: str) -> None:
    try:
        msg = CommandMessage.model_validate_json(raw)
    except (ValidationError, json.JSONDecodeError) as e:
        await _send(ws, conn, Ack(
            id=-1, ok=False,
            error=ErrorInfo(type="protocol", message=f"malformed command: {e}"),
        ))
        return

    if conn.last_id is not None and msg.id <= conn.last_id:
        await _send(ws, conn, Ack(
            id=msg.id, ok=False,
            error=ErrorInfo(type="protocol",
                            message=f"command id {msg.id} not greater than {conn.last_id}"),
        ))
        return
    conn.last_id = msg.id

    if msg.kind == "render_request":
        await _start_render(ws, conn, msg)
        return
    if msg.kind == "bake_status":
        await _send(ws, conn, Ack(id=msg.id, ok=True, result={
            "baked_grids": len(conn.session._grid_cache),
            "revision": conn.session.state.revision,
        }))
        return

    try:
        result = conn.session.execute(msg.kind, msg.payload)
    except (SessionError, CageError, WarpError, FieldError, FileNotFoundError, KeyError, ValueError) as e:
        await _send(ws, conn, Ack(id=msg.id, ok=False, error=_error_info(e)))
        return
    await _send(ws, conn, Ack(id=msg.id, ok=True, result=result))


async def _start_render(ws: WebSocket, conn: ConnectionState, msg: CommandMessage) -> None:
    try:
        payload = RenderRequestPayload.model_validate(msg.payload)
        camera = Camera.from_dict(payload.camera)
        if payload.preview:
            camera = Camera(
                pose=camera.pose, fov_x=camera.fov_x,
                width=max(1, camera.width // PREVIEW_SCALE),
                height=max(1, camera.height // PREVIEW_SCALE),
            )
        session = conn.session
        base = session.state.settings
        settings = RenderSettings(
            samples_per_ray=payload.samples or base.samples_per_ray,
            near=base.near, far=base.far, background=base.background,
            stratified_jitter=base.stratified_jitter, seed=base.seed,
        )
        resolution = None if payload.exact else (
            payload.warp_resolution or PREVIEW_WARP_RESOLUTION
        )
        query = session.field_query(resolution)
        revision = session.state.revision
    except (SessionError, CageError, WarpError, ValidationError, ValueError) as e:
        await _send(ws, conn, Ack(id=msg.id, ok=False, error=_error_info(e)))
        return

    # latest request wins: cancel whatever render is still in flight
    if conn.cancel_event is not None:
        conn.cancel_event.set()
    cancel = threading.Event()
    conn.cancel_event = cancel
    await _send(ws, conn, Ack(id=msg.id, ok=True, result={"revision": revision}))

    loop = asyncio.get_running_loop()

    async def run():
        img = await loop.run_in_executor(None, lambda: render(query, camera, settings, cancel=cancel))
        if img is None or cancel.is_set():
            return
        if payload.encoding == "raw-f32le":
            data = np.asarray(img.data, dtype="<f4").tobytes()
        else:
            buf = io.BytesIO()
            img.save_png(buf)
            data = buf.getvalue()
        await _send(ws, conn, FrameMessage(
            request_id=msg.id, revision=revision,
            width=camera.width, height=camera.height,
            encoding=payload.encoding,
            payload=base64.b64encode(data).decode("ascii"),
        ))

    conn.render_task = asyncio.create_task(run())
