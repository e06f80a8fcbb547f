"""HTTP service for the web console: JSON endpoints over the MusicAgent
facade plus binary artifact downloads and optional static assets.
"""

from __future__ import annotations

import uuid
from pathlib import Path

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import (
    ArtifactNotFound,
    DecodeFailure,
    InvalidGraph,
    MusicAgentError,
    NoPlanFound,
    UnknownTool,
    UnsupportedModality,
)
from .gateway import MusicAgent


class ChatBody(BaseModel):
    session_id: str | None = None
    text: str


class AttributePatch(BaseModel):
    attributes: dict


def create_app(agent: MusicAgent, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="musicagent")
    app.state.agent = agent

    @app.exception_handler(MusicAgentError)
    async def _agent_error(_request, exc: MusicAgentError):
        status = 404 if isinstance(exc, (ArtifactNotFound, UnknownTool)) else 422
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/tasks")
    def get_tasks():
        return agent.tasks.to_json()

    @app.get("/tools")
    def get_tools():
        return agent.tools.to_json()

    @app.patch("/tools/{tool_id}/attributes")
    def patch_tool(tool_id: str, body: AttributePatch):
        tool = agent.update_tool_attributes(tool_id, body.attributes)
        return tool.to_json()

    @app.post("/chat")
    def chat(body: ChatBody):
        session_id = body.session_id or f"s-{uuid.uuid4().hex[:8]}"
        try:
            result = agent.chat(session_id, body.text)
        except (NoPlanFound, InvalidGraph) as exc:
            raise HTTPException(
                status_code=422,
                detail={"error": type(exc).__name__, "detail": str(exc)})
        return result.to_json()

    @app.post("/sessions/{session_id}/artifacts")
    async def upload(session_id: str, file: UploadFile = File(...),
                     modality: str = Form(...)):
        data = await file.read()
        try:
            artifact = agent.upload_artifact(session_id, data, modality)
        except (DecodeFailure, UnsupportedModality) as exc:
            raise HTTPException(
                status_code=422,
                detail={"error": type(exc).__name__, "detail": str(exc)})
        _, store = agent.session(session_id)
        return agent._artifact_view(store, artifact.id)

    @app.get("/artifacts/{artifact_id}")
    def get_artifact(artifact_id: str, session_id: str | None = None):
        artifact, store = agent.find_artifact(artifact_id, session_id)
        return Response(content=store.read_payload(artifact_id),
                        media_type=artifact.content_type)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return agent.session_view(session_id)

    @app.delete("/sessions/{session_id}/history")
    def delete_history(session_id: str):
        agent.clear_history(session_id)
        return {"session_id": session_id, "turns": 0}

    if static_dir and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(agent: MusicAgent, static_dir: str | Path | None = None):
    import uvicorn

    app = create_app(agent, static_dir=static_dir)
    server_cfg = agent.config.server
    uvicorn.run(app, host=server_cfg.host, port=server_cfg.port)
