"""HTTP + WebSocket surface for the annotation engine.

REST covers session lifecycle, prompts, frame assets, and exports; the
event stream is a WebSocket replaying journal events from a client-supplied
cursor, so reconnecting clients never lose a conflict. Responses identify
frames and manifests by name only, never by server paths.
"""

from __future__ import annotations

import asyncio
import base64
import io
import uuid
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response, WebSocket, WebSocketDisconnect

from .backends import (
    GroundTruthOracleBackend,
    HttpBackend,
    ScriptedBackend,
    SegmentationBackend,
    StdioBackend,
    ThresholdBackend,
)
from .engine import EngineParams, Session, SessionStatus, start_session
from .errors import BackendError, EngineStateError, ManifestError
from .geometry import BBox, mask_to_bbox, rle_encode
from .manifest import load_manifest


@dataclass
class ApiConfig:
    data_root: Path
    backend_spec: str = "threshold"
    host: str = "127.0.0.1"
    port: int = 8765
    defaults: EngineParams = field(default_factory=EngineParams)

    def __post_init__(self):
        self.data_root = Path(self.data_root)
        if not self.data_root.is_dir():
            raise ValueError(f"data root {self.data_root} does not exist")


def parse_backend(spec: str) -> SegmentationBackend:
    """Backend factory from a spec string:
    oracle:<mask_dir> | scripted:<scenario.json>:<mask_dir> |
    threshold[:<level>] | http:<url> | stdio:<command...>"""
    kind, _, rest = spec.partition(":")
    if kind == "oracle":
        return GroundTruthOracleBackend.from_directory(rest)
    if kind == "scripted":
        scenario, _, mask_dir = rest.partition(":")
        return ScriptedBackend.from_scenario_file(
            GroundTruthOracleBackend.from_directory(mask_dir), scenario
        )
    if kind == "threshold":
        return ThresholdBackend(int(rest) if rest else 128)
    if kind == "http":
        return HttpBackend(rest if rest.startswith("http") else f"http:{rest}")
    if kind == "stdio":
        import shlex

        return StdioBackend(shlex.split(rest))
    raise ValueError(f"unknown backend spec {spec!r}")


def _boxes_from_payload(raw, what: str = "prompts") -> list[BBox]:
    try:
        return [BBox(int(b[0]), int(b[1]), int(b[2]), int(b[3])) for b in raw]
    except (TypeError, ValueError, IndexError) as exc:
        raise HTTPException(400, f"malformed {what}: {exc}") from exc


def create_app(config: ApiConfig) -> FastAPI:
    app = FastAPI(title="annoflow", version="0.1.0")
    backend = parse_backend(config.backend_spec)
    sessions: dict[str, Session] = {}
    client_tokens: dict[str, str] = {}
    session_dir = config.data_root / "sessions"
    session_dir.mkdir(parents=True, exist_ok=True)

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"no session {session_id}")
        return session

    @app.get("/api/health")
    def health():
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/api/sessions", status_code=201)
    def create_session(body: dict, response: Response):
        token = body.get("client_token")
        if token and token in client_tokens:
            response.status_code = 200
            return {"session_id": client_tokens[token], "created": False}
        manifest_ref = body.get("manifest")
        if not manifest_ref or "/" in str(manifest_ref) or str(manifest_ref).startswith("."):
            raise HTTPException(400, "manifest must name a directory under the data root")
        manifest_dir = config.data_root / str(manifest_ref)
        try:
            manifest = load_manifest(manifest_dir)
        except ManifestError as exc:
            raise HTTPException(400, f"bad manifest: {exc}") from exc
        prompts = _boxes_from_payload(body.get("initial_prompts", []), "initial prompts")
        params = (
            EngineParams.from_dict({**config.defaults.to_dict(), **body["params"]})
            if isinstance(body.get("params"), dict)
            else config.defaults
        )
        session_id = uuid.uuid4().hex
        try:
            session = start_session(
                manifest,
                params,
                backend,
                prompts,
                journal_path=session_dir / f"{session_id}.journal",
                session_id=session_id,
            )
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from exc
        sessions[session.id] = session
        if token:
            client_tokens[token] = session.id
        return {"session_id": session.id, "created": True}

    @app.get("/api/sessions/{session_id}")
    def session_info(session_id: str):
        session = get_session(session_id)
        info = session.stats()
        info["session_id"] = session.id
        info["manifest"] = session.manifest.name
        info["expected_count"] = session.expected_count
        if session.pending_conflict is not None:
            info["conflict"] = {
                "frame": session.pending_conflict.frame_index,
                "verdict": session.pending_conflict.verdict.to_dict(),
                "required_count": session.pending_conflict.required_count,
            }
        return info

    @app.post("/api/sessions/{session_id}/run")
    def run_session(session_id: str, body: dict | None = None):
        session = get_session(session_id)
        mode = (body or {}).get("mode", "auto")
        if session.status is SessionStatus.NEEDS_MANUAL:
            raise HTTPException(409, "session needs manual prompts")
        if session.status is SessionStatus.COMPLETED and mode == "step":
            return {"outcome": "completed", **session.stats()}
        try:
            if mode == "step":
                outcome = session.step()
                return {"outcome": outcome.value, **session.stats()}
            if mode == "auto":
                session.run_until_blocked()
                return session.stats()
        except BackendError as exc:
            raise HTTPException(502, f"backend error: {exc}") from exc
        except EngineStateError as exc:
            raise HTTPException(409, str(exc)) from exc
        raise HTTPException(400, f"unknown mode {mode!r}")

    @app.post("/api/sessions/{session_id}/prompts")
    def post_prompts(session_id: str, body: dict):
        session = get_session(session_id)
        frame = body.get("frame")
        boxes = _boxes_from_payload(body.get("boxes", []), "boxes")
        if frame is None:
            raise HTTPException(400, "missing frame")
        try:
            session.submit_manual_prompts(int(frame), boxes)
        except EngineStateError as exc:
            raise HTTPException(409, str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from exc
        except BackendError as exc:
            raise HTTPException(502, f"backend error: {exc}") from exc
        return session.stats()

    @app.get("/api/sessions/{session_id}/frames/{frame_index}")
    def frame_assets(session_id: str, frame_index: int):
        session = get_session(session_id)
        if frame_index < 0 or frame_index >= session.cursor:
            raise HTTPException(404, f"frame {frame_index} not processed yet")
        record = session.records[frame_index]
        payload = {
            "frame": frame_index,
            "name": session.manifest.frames[frame_index],
            "width": session.manifest.width,
            "height": session.manifest.height,
            "verdict": record.verdict.to_dict(),
            "recovery_attempted": record.recovery_attempted,
            "masks": [
                {
                    "instance_id": m.instance_id,
                    "source": m.source.value,
                    "rle": rle_encode(m.mask),
                    "area": m.mask.area,
                    "bbox": list(mask_to_bbox(m.mask).as_tuple()),
                }
                for m in record.masks
            ],
            "prompt_boxes_next": [list(b.as_tuple()) for b in record.prompt_boxes_next],
        }
        path = session.manifest.frame_path(frame_index)
        if path is not None and path.is_file():
            payload["image_b64"] = base64.b64encode(path.read_bytes()).decode()
        return payload

    @app.get("/api/sessions/{session_id}/export")
    def export(session_id: str, format: str = "mot"):
        session = get_session(session_id)
        if format == "mot":
            return Response(
                content=session.export_mot(),
                media_type="text/csv",
                headers={
                    "Content-Disposition": f'attachment; filename="{session.manifest.name}.mot.csv"'
                },
            )
        if format == "yolo":
            buf = io.BytesIO()
            with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
                for name, content in sorted(session.export_yolo().items()):
                    zf.writestr(name, content)
            return Response(
                content=buf.getvalue(),
                media_type="application/zip",
                headers={
                    "Content-Disposition": f'attachment; filename="{session.manifest.name}.yolo.zip"'
                },
            )
        raise HTTPException(400, f"unknown export format {format!r}")

    @app.websocket("/api/sessions/{session_id}/events")
    async def events(ws: WebSocket, session_id: str, cursor: int = 0):
        session = sessions.get(session_id)
        if session is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        next_seq = max(0, cursor)
        try:
            while True:
                batch = session.events_since(next_seq)
                for event in batch:
                    await ws.send_json(event)
                    next_seq = event["seq"] + 1
                if session.status is SessionStatus.COMPLETED and not batch:
                    # flush done; keep the socket open briefly for trailing reads
                    await asyncio.sleep(0.05)
                    if not session.events_since(next_seq):
                        await ws.send_json({"event": "stream_end", "seq": next_seq})
                        break
                await asyncio.sleep(0.05)
        except WebSocketDisconnect:
            return
        await ws.close()

    return app


def serve(config: ApiConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
