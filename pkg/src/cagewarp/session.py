"""Interactive editing session: cage-setting and manipulation phases,
preview/commit/undo, the committed edit stack, and headless save/replay.

All updates are transactional: a command either produces a fully validated
new state or raises, leaving the session untouched.  Every accepted command
is appended to the command log so a session can be replayed bit-identically.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import warp
from .cage import CagePair, HexCage
from .fields import RadianceField, load_scene
from .render import Camera, RenderSettings
from .warp import AdjustmentMode, EditSpec, WarpGrid, action_from_dict, bake_warp_grid


class SessionError(ValueError):
    """Rejected session command."""


class PhaseError(SessionError):
    """Command not allowed in the current phase."""


class Phase(str, Enum):
    IDLE = "Idle"
    SETTING_CAGES = "SettingCages"
    EDITING = "Editing"


@dataclass(frozen=True)
class SessionState:
    phase: Phase = Phase.IDLE
    scene_path: str | None = None
    committed: tuple = ()
    staged_pair: CagePair | None = None
    live_edit: EditSpec | None = None
    settings: RenderSettings = RenderSettings()
    cameras: tuple = ()  # (name, Camera) pairs
    revision: int = 0


STATE_COMMANDS = {
    "load_scene", "set_cages", "begin_edit", "manipulate",
    "set_mode", "commit", "undo",
}


class Session:
    """Single-writer editing session over one radiance field."""

    def __init__(self, scene_root: str | None = None):
        self.scene_root = scene_root
        self.state = SessionState()
        self.field: RadianceField | None = None
        self.command_log: list[dict] = []
        self._grid_cache: dict = {}

    # -- command execution --------------------------------------------------

    def execute(self, kind: str, payload: dict | None = None) -> dict:
        """Apply one command; returns a result dict.  Raises SessionError /
        CageError subclasses on rejection without mutating state."""
        payload = payload or {}
        handler = getattr(self, f"_cmd_{kind}", None)
        if handler is None:
            raise SessionError(f"unknown command kind {kind!r}")
        result = handler(payload)
        if kind in STATE_COMMANDS:
            self.command_log.append({"kind": kind, "payload": payload})
        return result

    def _bump(self, **changes) -> None:
        self.state = replace(self.state, revision=self.state.revision + 1, **changes)

    def _cmd_load_scene(self, payload: dict) -> dict:
        if self.state.phase is not Phase.IDLE:
            raise PhaseError("load_scene is only allowed in the Idle phase")
        path = payload.get("path")
        if not path:
            raise SessionError("load_scene needs a 'path'")
        full = path
        if self.scene_root is not None:
            import os.path

            full = os.path.join(self.scene_root, path)
        field = load_scene(full)
        cameras = tuple(
            (name, Camera.from_dict(c)) for name, c in payload.get("cameras", {}).items()
        )
        settings = self.state.settings
        if "settings" in payload:
            settings = RenderSettings.from_dict(payload["settings"])
        self.field = field
        self._bump(scene_path=path, cameras=cameras, settings=settings)
        return {"scene": path}

    def _cmd_set_cages(self, payload: dict) -> dict:
        if self.state.phase not in (Phase.IDLE, Phase.SETTING_CAGES):
            raise PhaseError(f"set_cages not allowed in phase {self.state.phase.value}")
        if self.field is None:
            raise SessionError("no scene loaded")
        try:
            outer = HexCage(np.asarray(payload["outer"], dtype=np.float64))
            inner = HexCage(np.asarray(payload["inner"], dtype=np.float64))
            pair = CagePair.from_setting(outer, inner)
        except KeyError as e:
            raise SessionError(f"set_cages payload missing {e}") from e
        self._bump(phase=Phase.SETTING_CAGES, staged_pair=pair)
        return {"staged": True}

    def _cmd_begin_edit(self, payload: dict) -> dict:
        if self.state.phase is not Phase.SETTING_CAGES:
            raise PhaseError(f"begin_edit not allowed in phase {self.state.phase.value}")
        mode = AdjustmentMode(payload.get("mode", "continuous"))
        pair = self.state.staged_pair
        edit = EditSpec(pair=pair, mode=mode)
        self._bump(phase=Phase.EDITING, live_edit=edit)
        return {"mode": mode.value}

    def _cmd_manipulate(self, payload: dict) -> dict:
        if self.state.phase is not Phase.EDITING:
            raise PhaseError(f"manipulate not allowed in phase {self.state.phase.value}")
        action = action_from_dict(payload)
        new_edit = self.state.live_edit.apply(action)  # raises on degeneracy/escape
        self._bump(live_edit=new_edit)
        return {"actions": len(new_edit.provenance)}

    def _cmd_set_mode(self, payload: dict) -> dict:
        if self.state.phase is not Phase.EDITING:
            raise PhaseError(f"set_mode not allowed in phase {self.state.phase.value}")
        mode = AdjustmentMode(payload["mode"])
        self._bump(live_edit=self.state.live_edit.with_mode(mode))
        return {"mode": mode.value}

    def _cmd_commit(self, payload: dict) -> dict:
        if self.state.phase is not Phase.EDITING:
            raise PhaseError(f"commit not allowed in phase {self.state.phase.value}")
        edit = self.state.live_edit
        self._bump(
            phase=Phase.SETTING_CAGES,
            committed=self.state.committed + (edit,),
            live_edit=None,
        )
        return {"stack_depth": len(self.state.committed)}

    def _cmd_undo(self, payload: dict) -> dict:
        if self.state.phase is Phase.EDITING:
            raise PhaseError("undo is not allowed mid-edit; commit or discard first")
        if not self.state.committed:
            raise SessionError("nothing to undo")
        self._bump(committed=self.state.committed[:-1])
        return {"stack_depth": len(self.state.committed)}

    def _cmd_get_state(self, payload: dict) -> dict:
        return self.describe()

    # -- queries ------------------------------------------------------------

    def describe(self) -> dict:
        st = self.state
        return {
            "phase": st.phase.value,
            "scene": st.scene_path,
            "revision": st.revision,
            "stack_depth": len(st.committed),
            "staged_cages": None if st.staged_pair is None else {
                "outer": st.staged_pair.outer.vertices.tolist(),
                "inner": st.staged_pair.inner_canonical.vertices.tolist(),
            },
            "live_edit": None if st.live_edit is None else st.live_edit.to_dict(),
            "mode": None if st.live_edit is None else st.live_edit.mode.value,
        }

    def active_stack(self) -> list[EditSpec]:
        stack = list(self.state.committed)
        if self.state.live_edit is not None:
            stack.append(self.state.live_edit)
        return stack

    def _grid_for(self, edit: EditSpec, resolution: int) -> WarpGrid:
        key = (id(edit), resolution)
        hit = self._grid_cache.get(key)
        if hit is None or hit[0] is not edit:
            hit = (edit, bake_warp_grid(edit, resolution))
            self._grid_cache[key] = hit
        return hit[1]

    def field_query(self, warp_resolution: int | None = None):
        """Field-query closure over the committed stack plus any live edit.

        warp_resolution=None uses exact per-sample mapping; an integer bakes
        (and caches) one warp grid per edit."""
        if self.field is None:
            raise SessionError("no scene loaded")
        field = self.field
        stack = self.active_stack()
        if not stack:
            return lambda pts, dirs=None: field.query(pts, dirs)
        grids = None
        if warp_resolution is not None:
            grids = [self._grid_for(e, warp_resolution) for e in stack]

        def query(pts, dirs=None):
            return warp.query_stack_batch(field, stack, pts, dirs, grids)

        return query

    # -- persistence --------------------------------------------------------

    def save_dict(self) -> dict:
        st = self.state
        return {
            "scene": st.scene_path,
            "phase": st.phase.value,
            "revision": st.revision,
            "settings": st.settings.to_dict(),
            "cameras": {name: cam.to_dict() for name, cam in st.cameras},
            "committed": [e.to_dict() for e in st.committed],
            "staged": None if st.staged_pair is None else {
                "outer": st.staged_pair.outer.vertices.tolist(),
                "inner": st.staged_pair.inner_canonical.vertices.tolist(),
            },
            "live_edit": None if st.live_edit is None else st.live_edit.to_dict(),
            "command_log": self.command_log,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.save_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def replay(cls, command_log: list[dict], scene_root: str | None = None) -> "Session":
        """Rebuild a session by re-running a recorded command log."""
        session = cls(scene_root=scene_root)
        for entry in command_log:
            session.execute(entry["kind"], entry.get("payload") or {})
        return session
