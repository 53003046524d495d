"""HTTP wiring: completions (batch and streamed), files, artifacts, traces."""
from __future__ import annotations

import base64
import binascii
import json
import time
import uuid
from typing import Any, AsyncIterator, Optional

from fastapi import Depends, FastAPI, Request, Response, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse

from orion.model.types import (
    ContentPart,
    InvalidValue,
    Message,
    ModelId,
    PartKind,
    UnknownMode,
    parse_model_id,
)
from orion.planner import BackendUnavailable, InvalidPlan, NoApplicablePattern
from orion.service.config import ServiceConfig
from orion.service.controller import AgentController, AgentFailed, token_estimate
from orion.store import (
    ARTIFACT_PATH_PREFIX,
    BadSignature,
    EmptyPayload,
    Expired,
    MalformedUrl,
    NotFound,
    StorageFull,
)
from orion.structured import StructuredOutputFailure, UnsupportedResponseFormat, parse_response_format

STREAM_CHUNK_CHARS = 16


class ApiError(Exception):
    def __init__(self, status: int, message: str, type_: str, code: str) -> None:
        self.status = status
        self.message = message
        self.type = type_
        self.code = code
        super().__init__(message)


def _error_response(status: int, message: str, type_: str, code: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"message": message, "type": type_, "code": code}},
    )


def _bad_request(message: str, code: str = "bad_request") -> ApiError:
    return ApiError(400, message, "invalid_request_error", code)


def create_app(
    config: Optional[ServiceConfig] = None, controller: Optional[AgentController] = None
) -> FastAPI:
    config = config or ServiceConfig.from_env()
    controller = controller or AgentController(config)
    app = FastAPI(title="orion", docs_url=None, redoc_url=None)
    app.state.controller = controller

    async def require_auth(request: Request) -> None:
        if not config.api_keys:
            return
        header = request.headers.get("authorization", "")
        scheme, _, key = header.partition(" ")
        if scheme.lower() != "bearer" or key.strip() not in config.api_keys:
            raise ApiError(401, "missing or invalid API key", "authentication_error", "bad_api_key")

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError) -> JSONResponse:
        return _error_response(exc.status, exc.message, exc.type, exc.code)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError) -> JSONResponse:
        return _error_response(400, str(exc.errors()[:3]), "invalid_request_error", "malformed_body")

    @app.exception_handler(Exception)
    async def handle_internal(request: Request, exc: Exception) -> JSONResponse:
        return _error_response(500, f"{type(exc).__name__}: {exc}", "internal_error", "internal")

    # -- request parsing ----------------------------------------------------

    def _materialize_part(part: ContentPart) -> ContentPart:
        """Uploads embedded data-URI images into the store as file parts."""
        if part.kind is not PartKind.image_url or not part.url:
            return part
        url = part.url
        if url.startswith("data:"):
            head, _, payload = url.partition(",")
            if not payload or ";base64" not in head:
                raise _bad_request("image_url data URI must be base64", "bad_data_uri")
            mime = head[5:].split(";")[0] or "application/octet-stream"
            try:
                content = base64.b64decode(payload, validate=True)
            except (binascii.Error, ValueError) as exc:
                raise _bad_request(f"undecodable data URI: {exc}", "bad_data_uri")
            stored = controller.store.put(content, mime)
            return ContentPart.of_file(stored.id)
        if url.startswith(ARTIFACT_PATH_PREFIX):
            file_id = url[len(ARTIFACT_PATH_PREFIX) :].partition("?")[0]
            return ContentPart.of_file(file_id)
        raise _bad_request(f"unsupported image_url {url[:40]!r}; use a data URI or upload", "bad_url")

    def _parse_completion_body(body: Any) -> tuple[ModelId, list[Message], Any, bool, Optional[str]]:
        if not isinstance(body, dict):
            raise _bad_request("body must be a JSON object", "malformed_body")
        if "model" not in body or "messages" not in body:
            raise _bad_request("model and messages are required", "malformed_body")
        try:
            model = parse_model_id(body["model"])
        except UnknownMode as exc:
            raise _bad_request(str(exc), "unknown_mode")
        except InvalidValue as exc:
            raise _bad_request(str(exc), "malformed_body")
        raw_messages = body["messages"]
        if not isinstance(raw_messages, list) or not raw_messages:
            raise _bad_request("messages must be a non-empty list", "malformed_body")
        try:
            messages = [Message.from_json(m) for m in raw_messages]
        except (InvalidValue, KeyError, TypeError, ValueError) as exc:
            raise _bad_request(f"malformed message: {exc}", "malformed_body")
        messages = [
            Message.of(m.role, [_materialize_part(p) for p in m.parts]) for m in messages
        ]
        for m in messages:
            for fid in m.file_ids():
                if not controller.store.exists(fid):
                    raise ApiError(404, f"unknown file {fid}", "not_found_error", "unknown_file")
        return (
            model,
            messages,
            body.get("response_format"),
            bool(body.get("stream", False)),
            body.get("session_id"),
        )

    def _run_completion(body: Any):
        model, messages, response_format, stream, session_id = _parse_completion_body(body)
        try:
            schema = parse_response_format(response_format)
        except UnsupportedResponseFormat as exc:
            raise _bad_request(str(exc), "unsupported_response_format")
        try:
            outcome = controller.complete(
                model, messages, final_schema=schema, session_id=session_id
            )
        except NoApplicablePattern as exc:
            raise _bad_request(str(exc), "no_applicable_pattern")
        except (BackendUnavailable, InvalidPlan) as exc:
            raise ApiError(500, str(exc), "internal_error", "planner_error")
        except StructuredOutputFailure as exc:
            raise ApiError(422, str(exc), "invalid_request_error", "structured_output_failure")
        except NotFound as exc:
            raise ApiError(404, str(exc), "not_found_error", "unknown_file")
        except AgentFailed as exc:
            raise ApiError(
                500, f"agent failed: {exc} (trace {exc.trace_id})", "internal_error", "agent_failed"
            )
        prompt_chars = sum(len(m.text_content()) for m in messages)
        usage = {
            "prompt_tokens": token_estimate("x" * prompt_chars),
            "completion_tokens": token_estimate(outcome.content),
        }
        usage["total_tokens"] = usage["prompt_tokens"] + usage["completion_tokens"]
        return model, outcome, usage, stream

    def _completion_payload(model: ModelId, outcome, usage) -> dict:
        return {
            "id": "chatcmpl_" + uuid.uuid4().hex[:24],
            "object": "chat.completion",
            "created": int(time.time()),
            "model": model.render(),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": outcome.content},
                    "finish_reason": "stop",
                }
            ],
            "usage": usage,
            "trace_id": outcome.trace_id,
        }

    def _stream_events(model: ModelId, outcome, usage) -> list[str]:
        chunk_id = "chatcmpl_" + uuid.uuid4().hex[:24]
        created = int(time.time())

        def chunk(delta: dict, finish: Optional[str]) -> str:
            payload = {
                "id": chunk_id,
                "object": "chat.completion.chunk",
                "created": created,
                "model": model.render(),
                "choices": [{"index": 0, "delta": delta, "finish_reason": finish}],
            }
            return f"data: {json.dumps(payload)}\n\n"

        events = [chunk({"role": "assistant"}, None)]
        content = outcome.content
        for i in range(0, len(content), STREAM_CHUNK_CHARS):
            events.append(chunk({"content": content[i : i + STREAM_CHUNK_CHARS]}, None))
        events.append(chunk({}, "stop"))
        events.append("data: [DONE]\n\n")
        return events

    async def _completion_endpoint(request: Request) -> Response:
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise _bad_request("body is not valid JSON", "malformed_body")
        model, outcome, usage, stream = _run_completion(body)
        if not stream:
            return JSONResponse(_completion_payload(model, outcome, usage))

        async def gen() -> AsyncIterator[str]:
            for event in _stream_events(model, outcome, usage):
                yield event

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.post("/v1/agent/completions", dependencies=[Depends(require_auth)])
    async def agent_completions(request: Request) -> Response:
        return await _completion_endpoint(request)

    @app.post("/v1/openai/chat/completions", dependencies=[Depends(require_auth)])
    async def openai_completions(request: Request) -> Response:
        return await _completion_endpoint(request)

    # -- files and artifacts ------------------------------------------------

    @app.post("/v1/files", dependencies=[Depends(require_auth)])
    async def upload_file(file: UploadFile) -> JSONResponse:
        content = await file.read()
        if len(content) > config.max_upload_bytes:
            raise ApiError(
                413,
                f"file exceeds {config.max_upload_bytes} bytes",
                "invalid_request_error",
                "file_too_large",
            )
        mime = file.content_type or "application/octet-stream"
        if mime not in config.allowed_mimes:
            raise ApiError(
                415, f"content type {mime!r} not allowed", "invalid_request_error", "bad_content_type"
            )
        try:
            stored = controller.store.put(content, mime, name=file.filename or "")
        except EmptyPayload as exc:
            raise _bad_request(str(exc), "empty_file")
        except StorageFull as exc:
            raise ApiError(413, str(exc), "invalid_request_error", "storage_full")
        return JSONResponse(
            {
                "id": stored.id,
                "filename": stored.name,
                "bytes": stored.size,
                "created_at": stored.created_at,
            }
        )

    @app.get("/v1/files/{file_id}", dependencies=[Depends(require_auth)])
    async def get_file(file_id: str) -> Response:
        try:
            content, mime = controller.store.get(file_id)
        except NotFound as exc:
            raise ApiError(404, str(exc), "not_found_error", "unknown_file")
        return Response(content=content, media_type=mime)

    @app.get("/v1/artifacts/{artifact_id}")
    async def get_artifact(artifact_id: str, request: Request) -> Response:
        url = f"{ARTIFACT_PATH_PREFIX}{artifact_id}"
        if request.url.query:
            url += f"?{request.url.query}"
        try:
            verified = controller.store.verify(url)
            content, mime = controller.store.get(verified)
        except MalformedUrl as exc:
            raise _bad_request(str(exc), "malformed_url")
        except (BadSignature, Expired) as exc:
            raise ApiError(403, str(exc), "authorization_error", type(exc).__name__.lower())
        except NotFound as exc:
            raise ApiError(404, str(exc), "not_found_error", "unknown_artifact")
        return Response(content=content, media_type=mime)

    @app.get("/v1/traces/{trace_id}", dependencies=[Depends(require_auth)])
    async def get_trace(trace_id: str) -> JSONResponse:
        doc = controller.load_trace(trace_id)
        if doc is None:
            raise ApiError(404, f"no trace {trace_id}", "not_found_error", "unknown_trace")
        return JSONResponse(doc)

    @app.get("/healthz")
    async def healthz() -> JSONResponse:
        return JSONResponse({"status": "ok"})

    return app
