from __future__ import annotations

import json
from pathlib import Path

import pytest

from orion.service.config import ServiceConfig
from orion.service.controller import AgentController

FIXTURES_DIR = Path(__file__).resolve().parents[1] / "src" / "orion" / "data" / "fixtures"

STREET = FIXTURES_DIR / "street.scene.json"
FORM = FIXTURES_DIR / "form.doc.json"
FIREWORKS = FIXTURES_DIR / "fireworks.video.json"


@pytest.fixture
def street_doc() -> dict:
    return json.loads(STREET.read_text())


@pytest.fixture
def controller(tmp_path) -> AgentController:
    return AgentController(ServiceConfig(data_dir=tmp_path / "data", signing_key="test-signing-key"))


def upload_fixture(controller: AgentController, path: Path) -> str:
    stored = controller.store.put(path.read_bytes(), "application/json", name=path.name)
    return stored.id


@pytest.fixture
def service_client(tmp_path):
    from fastapi.testclient import TestClient

    from orion.service.app import create_app

    config = ServiceConfig(data_dir=tmp_path / "data", signing_key="test-signing-key")
    with TestClient(create_app(config)) as client:
        client.app_config = config
        yield client
