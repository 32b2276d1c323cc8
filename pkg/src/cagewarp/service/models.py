"""Wire protocol models for the editing service.

Messages travel as single-line JSON frames over a persistent WebSocket.
A versioned hello gates compatibility; every command is acked in order;
frames carry the session revision so stale renders are identifiable.
"""
from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

from .. import PROTOCOL_VERSION

COMMAND_KINDS = (
    "load_scene", "set_cages", "begin_edit", "manipulate", "set_mode",
    "commit", "undo", "render_request", "get_state", "bake_status",
)


class Hello(BaseModel):
    kind: Literal["hello"] = "hello"
    protocol: int = PROTOCOL_VERSION


class HelloReply(BaseModel):
    kind: Literal["hello"] = "hello"
    protocol: int = PROTOCOL_VERSION
    server: str = "cagewarp"


class CommandMessage(BaseModel):
    id: int
    kind: Literal[
        "load_scene", "set_cages", "begin_edit", "manipulate", "set_mode",
        "commit", "undo", "render_request", "get_state", "bake_status",
    ]
    payload: dict = Field(default_factory=dict)


class ErrorInfo(BaseModel):
    type: str
    message: str
    vertex_indices: Optional[list[int]] = None


class Ack(BaseModel):
    kind: Literal["ack"] = "ack"
    id: int
    ok: bool
    result: Optional[Any] = None
    error: Optional[ErrorInfo] = None


class RenderRequestPayload(BaseModel):
    camera: dict
    preview: bool = False
    warp_resolution: Optional[int] = None
    samples: Optional[int] = None
    exact: bool = False
    encoding: Literal["png-base64", "raw-f32le"] = "png-base64"


class FrameMessage(BaseModel):
    kind: Literal["frame"] = "frame"
    request_id: int
    revision: int
    width: int
    height: int
    encoding: Literal["png-base64", "raw-f32le"] = "png-base64"
    payload: str
