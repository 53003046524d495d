from __future__ import annotations

import base64
import hashlib
import hmac
import json

import pytest
from fastapi.testclient import TestClient

from canned import canned_bodies, completion_body, normalize_stream, upload_via_http
from conftest import FIREWORKS, FORM, STREET
from orion.model.types import Mode, ModelId, parse_model_id
from orion.service.app import create_app
from orion.service.config import ServiceConfig
from orion.service.controller import TierRouter, render_answer, token_estimate


def err(resp) -> dict:
    body = resp.json()
    assert set(body) == {"error"}
    assert set(body["error"]) == {"message", "type", "code"}
    return body["error"]


def ask(client, instruction: str, files=(), **extra):
    file_ids = [upload_via_http(client, p) for p in files]
    return client.post(
        "/v1/agent/completions", json=completion_body(instruction, file_ids, **extra)
    )


# -- plumbing ----------------------------------------------------------------


def test_healthz(service_client):
    assert service_client.get("/healthz").json() == {"status": "ok"}


def test_model_id_parsing():
    assert parse_model_id("orion/agent:fast") == ModelId("orion/agent", Mode.fast)
    assert parse_model_id("orion/agent").mode is Mode.auto
    assert parse_model_id("orion/agent:auto").render() == "orion/agent:auto"


def test_token_estimate_rounds_up():
    assert token_estimate("") == 0
    assert token_estimate("abcd") == 1
    assert token_estimate("abcde") == 2


def test_tier_router_decisions():
    rule, judge = object(), object()
    full = TierRouter(planners={"fast": rule, "pro": rule}, judges={"fast": judge, "pro": judge})
    fast_only = TierRouter(planners={"fast": rule}, judges={"fast": judge})
    auto, fast = ModelId("m", Mode.auto), ModelId("m", Mode.fast)
    assert full.route(fast, {"reflection_failures": 5}) == {
        "mode": "fast", "tier": "fast", "escalated": False, "fallback": False,
    }
    assert full.route(auto, {"reflection_failures": 0})["tier"] == "fast"
    assert full.route(auto, {"reflection_failures": 2}) == {
        "mode": "auto", "tier": "pro", "escalated": True, "fallback": False,
    }
    assert fast_only.route(auto, {"reflection_failures": 2}) == {
        "mode": "auto", "tier": "fast", "escalated": False, "fallback": True,
    }
    with pytest.raises(ValueError):
        TierRouter(planners={}, judges={})


def test_render_answer_basics():
    assert render_answer(None) == ""
    assert render_answer("hi") == "hi"
    assert render_answer(3) == "3"
    assert render_answer(True) == "true"
    assert render_answer({"start_ms": 3723000, "end_ms": 3730000}) == "01:02:03 to 01:02:10"
    assert render_answer({"detections": []}) == "No matches."
    assert render_answer({"zebra": 1}) == '{"zebra": 1}'


# -- files -------------------------------------------------------------------


def test_file_upload_round_trip(service_client):
    fid = upload_via_http(service_client, STREET)
    assert fid.startswith("file_")
    assert upload_via_http(service_client, STREET) == fid  # content-addressed
    got = service_client.get(f"/v1/files/{fid}")
    assert got.status_code == 200
    assert got.content == STREET.read_bytes()
    assert got.headers["content-type"].startswith("application/json")


def test_file_errors(service_client):
    missing = service_client.get("/v1/files/file_0000000000000000")
    assert missing.status_code == 404 and err(missing)["code"] == "unknown_file"

    bad_type = service_client.post(
        "/v1/files", files={"file": ("x.bin", b"\x00\x01", "application/x-msdownload")}
    )
    assert bad_type.status_code == 415 and err(bad_type)["code"] == "bad_content_type"

    empty = service_client.post(
        "/v1/files", files={"file": ("empty.json", b"", "application/json")}
    )
    assert empty.status_code == 400 and err(empty)["code"] == "empty_file"


def test_file_too_large(tmp_path):
    config = ServiceConfig(
        data_dir=tmp_path / "data", signing_key="test-signing-key", max_upload_bytes=64
    )
    with TestClient(create_app(config)) as client:
        resp = client.post(
            "/v1/files", files={"file": ("big.json", b"x" * 65, "application/json")}
        )
        assert resp.status_code == 413 and err(resp)["code"] == "file_too_large"


# -- auth --------------------------------------------------------------------


def test_bearer_auth_enforced_when_keys_configured(tmp_path):
    config = ServiceConfig(
        data_dir=tmp_path / "data", signing_key="test-signing-key", api_keys=("sk-test",)
    )
    with TestClient(create_app(config)) as client:
        assert client.get("/healthz").status_code == 200  # health stays open
        unauth = client.post("/v1/files", files={"file": ("a.json", b"{}", "application/json")})
        assert unauth.status_code == 401 and err(unauth)["code"] == "bad_api_key"
        wrong = client.post(
            "/v1/agent/completions",
            json={"model": "orion/agent", "messages": [{"role": "user", "content": "hi"}]},
            headers={"Authorization": "Bearer nope"},
        )
        assert wrong.status_code == 401
        client.headers["Authorization"] = "Bearer sk-test"
        fid = upload_via_http(client, STREET)
        resp = client.post(
            "/v1/agent/completions", json=completion_body("What is in this image?", [fid])
        )
        assert resp.status_code == 200

        # signed artifact links keep working without the API key
        rotate = client.post(
            "/v1/agent/completions",
            json=completion_body("Rotate this image 90 degrees counterclockwise.", [fid]),
        )
        url = rotate.json()["choices"][0]["message"]["content"].split(": ", 1)[1]
        del client.headers["Authorization"]
        assert client.get(url).status_code == 200


# -- completions: happy paths ------------------------------------------------


def test_caption_completion_payload_shape(service_client):
    resp = ask(service_client, "What is in this image?", files=(STREET,))
    assert resp.status_code == 200
    body = resp.json()
    assert body["object"] == "chat.completion"
    assert body["id"].startswith("chatcmpl_")
    assert body["model"] == "orion/agent:fast"
    (choice,) = body["choices"]
    assert choice["finish_reason"] == "stop"
    assert choice["message"] == {
        "role": "assistant",
        "content": (
            "A scene showing car, person, clock and traffic light. "
            "Tags: car, clock, person, traffic light"
        ),
    }
    usage = body["usage"]
    assert usage["total_tokens"] == usage["prompt_tokens"] + usage["completion_tokens"]
    assert usage["completion_tokens"] == token_estimate(choice["message"]["content"])

    trace = service_client.get(f"/v1/traces/{body['trace_id']}")
    assert trace.status_code == 200
    doc = trace.json()
    assert doc["status"] == "succeeded"
    assert doc["routing"] == {"mode": "fast", "tier": "fast", "escalated": False, "fallback": False}
    assert [n["tool"] for n in doc["plan"]["nodes"]] == ["caption"]
    assert doc["reflection"][-1]["action"] == "finalize"


def test_clock_pipeline_over_http(service_client):
    resp = ask(
        service_client,
        "Crop into the clock in the image and extract the time shown.",
        files=(STREET,),
    )
    assert resp.status_code == 200
    assert "10:09" in resp.json()["choices"][0]["message"]["content"]
    doc = service_client.get(f"/v1/traces/{resp.json()['trace_id']}").json()
    assert [n["tool"] for n in doc["plan"]["nodes"]] == ["detect", "crop", "ocr_image"]


def test_openai_alias_matches_agent_endpoint(service_client):
    fid = upload_via_http(service_client, STREET)
    body = completion_body("Read the text in the image", [fid])
    via_agent = service_client.post("/v1/agent/completions", json=body).json()
    via_alias = service_client.post("/v1/openai/chat/completions", json=body).json()
    assert (
        via_agent["choices"][0]["message"]["content"]
        == via_alias["choices"][0]["message"]["content"]
        == "10:09\nMAIN ST"
    )


def test_data_uri_image_part_materializes(service_client):
    data = base64.b64encode(STREET.read_bytes()).decode()
    body = {
        "model": "orion/agent:fast",
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": "What is in this image?"},
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:application/json;base64,{data}"},
                    },
                ],
            }
        ],
    }
    resp = service_client.post("/v1/agent/completions", json=body)
    assert resp.status_code == 200
    assert resp.json()["choices"][0]["message"]["content"].startswith("A scene showing car")


def test_session_turns_append_over_http(service_client):
    fid = upload_via_http(service_client, FORM)
    for instruction in (
        "Extract the fields from this form",
        "Which pages mention windscreen glass breakage?",
    ):
        resp = service_client.post(
            "/v1/agent/completions",
            json=completion_body(instruction, [fid], session_id="sess_http"),
        )
        assert resp.status_code == 200
    controller = service_client.app.state.controller
    session = controller.sessions.get("sess_http")
    assert len(session.turns) == 2
    assert session.turns[0].trace_ref.startswith("trace_")
    assert session.turns[1].assistant.text_content() == "Relevant pages: 2"


# -- completions: error envelopes --------------------------------------------


@pytest.mark.parametrize(
    "body, status, code",
    [
        ({"messages": [{"role": "user", "content": "hi"}]}, 400, "malformed_body"),
        ({"model": "orion/agent"}, 400, "malformed_body"),
        ({"model": "", "messages": [{"role": "user", "content": "hi"}]}, 400, "malformed_body"),
        ({"model": "orion/agent:warp", "messages": [{"role": "user", "content": "hi"}]}, 400, "unknown_mode"),
        ({"model": "orion/agent", "messages": []}, 400, "malformed_body"),
        ({"model": "orion/agent", "messages": [{"content": "hi"}]}, 400, "malformed_body"),
        (
            {"model": "orion/agent", "messages": [{"role": "user", "content": [{"type": "input_file", "file_id": "file_feedfacefeedface"}, {"type": "text", "text": "What is in this image?"}]}]},
            404,
            "unknown_file",
        ),
        (
            {"model": "orion/agent", "messages": [{"role": "user", "content": "Please do a backflip"}]},
            400,
            "no_applicable_pattern",
        ),
        (
            {
                "model": "orion/agent",
                "messages": [{"role": "user", "content": "hi"}],
                "response_format": {"type": "json_object"},
            },
            400,
            "unsupported_response_format",
        ),
        (
            {
                "model": "orion/agent",
                "messages": [
                    {
                        "role": "user",
                        "content": [
                            {"type": "text", "text": "What is in this image?"},
                            {"type": "image_url", "image_url": {"url": "https://elsewhere.example/cat.png"}},
                        ],
                    }
                ],
            },
            400,
            "bad_url",
        ),
        (
            {
                "model": "orion/agent",
                "messages": [
                    {
                        "role": "user",
                        "content": [
                            {"type": "text", "text": "What is in this image?"},
                            {"type": "image_url", "image_url": {"url": "data:image/png;base64,@@@"}},
                        ],
                    }
                ],
            },
            400,
            "bad_data_uri",
        ),
    ],
)
def test_completion_error_envelopes(service_client, body, status, code):
    resp = service_client.post("/v1/agent/completions", json=body)
    assert resp.status_code == status
    assert err(resp)["code"] == code


def test_non_json_body(service_client):
    resp = service_client.post(
        "/v1/agent/completions", content=b"not json", headers={"content-type": "application/json"}
    )
    assert resp.status_code == 400 and err(resp)["code"] == "malformed_body"


def test_domain_failure_escalates_then_surfaces_trace(service_client):
    resp = ask(
        service_client,
        "When does the banana parade happen in this video?",
        files=(FIREWORKS,),
        model="orion/agent",  # auto mode may escalate to the pro tier
    )
    assert resp.status_code == 500
    error = err(resp)
    assert error["code"] == "agent_failed"
    trace_id = error["message"].rsplit("trace ", 1)[1].rstrip(")")
    doc = service_client.get(f"/v1/traces/{trace_id}").json()
    assert doc["routing"] == {"mode": "auto", "tier": "pro", "escalated": True, "fallback": False}
    assert doc["status"] in ("failed", "budget_exhausted")
    assert any("no segment matches" in v["reason"] for v in doc["reflection"])


def test_unknown_trace_404(service_client):
    resp = service_client.get("/v1/traces/trace_doesnotexist")
    assert resp.status_code == 404 and err(resp)["code"] == "unknown_trace"


# -- structured outputs over HTTP --------------------------------------------


def test_structured_completion_conforms(service_client):
    schema = {
        "type": "object",
        "required": ["caption", "tags"],
        "properties": {
            "caption": {"type": "string"},
            "tags": {"type": "array", "items": {"type": "string"}},
        },
    }
    resp = ask(
        service_client,
        "What is in this image?",
        files=(STREET,),
        response_format={"type": "json_schema", "schema": schema},
    )
    assert resp.status_code == 200
    content = resp.json()["choices"][0]["message"]["content"]
    parsed = json.loads(content)
    assert parsed["caption"].startswith("A scene showing")
    assert parsed["tags"] == ["car", "clock", "person", "traffic light"]
    assert content == json.dumps(parsed, sort_keys=True)


def test_structured_completion_that_cannot_conform_is_422(service_client):
    schema = {"type": "object", "required": ["nonexistent_key"], "properties": {}}
    resp = ask(
        service_client,
        "What is in this image?",
        files=(STREET,),
        response_format={"type": "json_schema", "schema": schema},
    )
    assert resp.status_code == 422
    assert err(resp)["code"] == "structured_output_failure"


# -- artifact URLs -----------------------------------------------------------


def test_artifact_url_lifecycle(service_client):
    resp = ask(service_client, "Rotate this image 90 degrees counterclockwise.", files=(STREET,))
    content = resp.json()["choices"][0]["message"]["content"]
    assert content.startswith("Created image artifact file_")
    url = content.split(": ", 1)[1]

    fetched = service_client.get(url)
    assert fetched.status_code == 200
    rotated = json.loads(fetched.content)
    assert (rotated["width"], rotated["height"]) == (720, 1280)

    tampered = url[:-1] + ("0" if url[-1] != "0" else "1")
    resp = service_client.get(tampered)
    assert resp.status_code == 403 and err(resp)["code"] == "badsignature"

    bare = url.partition("?")[0]
    resp = service_client.get(bare)
    assert resp.status_code == 400 and err(resp)["code"] == "malformed_url"

    # a correctly signed but long-expired link is refused
    file_id = bare.rsplit("/", 1)[1]
    sig = hmac.new(b"test-signing-key", f"{file_id}|1".encode(), hashlib.sha256).hexdigest()
    resp = service_client.get(f"/v1/artifacts/{file_id}?expires=1&sig={sig}")
    assert resp.status_code == 403 and err(resp)["code"] == "expired"

    sig = hmac.new(b"test-signing-key", b"file_0000000000000000|9999999999", hashlib.sha256).hexdigest()
    resp = service_client.get(f"/v1/artifacts/file_0000000000000000?expires=9999999999&sig={sig}")
    assert resp.status_code == 404 and err(resp)["code"] == "unknown_artifact"


# -- streaming ---------------------------------------------------------------


def parse_sse(text: str) -> list:
    events = [e for e in text.split("\n\n") if e]
    assert all(e.startswith("data: ") for e in events)
    return [e[len("data: ") :] for e in events]


def test_stream_framing_and_equivalence(service_client):
    fid = upload_via_http(service_client, STREET)
    body = completion_body("What is in this image?", [fid])
    batch = service_client.post("/v1/agent/completions", json=body).json()
    expected = batch["choices"][0]["message"]["content"]

    resp = service_client.post("/v1/agent/completions", json={**body, "stream": True})
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("text/event-stream")
    events = parse_sse(resp.text)
    assert events[-1] == "[DONE]"
    chunks = [json.loads(e) for e in events[:-1]]
    assert all(c["object"] == "chat.completion.chunk" for c in chunks)
    assert len({c["id"] for c in chunks}) == 1
    assert chunks[0]["choices"][0]["delta"] == {"role": "assistant"}
    assert chunks[-1]["choices"][0] == {"index": 0, "delta": {}, "finish_reason": "stop"}
    deltas = [
        c["choices"][0]["delta"].get("content", "")
        for c in chunks[1:-1]
    ]
    assert all(len(d) <= 16 and d for d in deltas)
    assert "".join(deltas) == expected


def test_stream_matches_batch_for_all_canned_requests(service_client):
    for name, body in canned_bodies(service_client):
        batch = service_client.post("/v1/agent/completions", json=body)
        assert batch.status_code == 200, (name, batch.text)
        expected = batch.json()["choices"][0]["message"]["content"]
        stream = service_client.post("/v1/agent/completions", json={**body, "stream": True})
        events = parse_sse(stream.text)
        assert events[-1] == "[DONE]", name
        content = "".join(
            json.loads(e)["choices"][0]["delta"].get("content", "") for e in events[:-1]
        )
        assert normalize_stream(content) == normalize_stream(expected), name
