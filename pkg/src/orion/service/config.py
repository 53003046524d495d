"""Service configuration: env-driven defaults, JSON file, flag overrides."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

DEFAULT_ALLOWED_MIMES = (
    "application/json",
    "application/pdf",
    "image/jpeg",
    "image/png",
    "image/x-portable-graymap",
    "text/plain",
    "video/mp4",
)


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    api_keys: tuple[str, ...] = ()
    signing_key: Optional[str] = None
    catalog_path: Optional[Path] = None
    patterns_path: Optional[Path] = None
    max_parallel: int = 4
    node_timeout_ms: int = 30_000
    max_attempts: int = 2
    max_rounds: int = 3
    context_max_turns: int = 8
    context_max_chars: int = 16_000
    max_upload_bytes: int = 8 * 1024 * 1024
    allowed_mimes: tuple[str, ...] = DEFAULT_ALLOWED_MIMES
    host: str = "127.0.0.1"
    port: int = 8080

    @property
    def sessions_dir(self) -> Path:
        return self.data_dir / "sessions"

    @property
    def artifacts_dir(self) -> Path:
        return self.data_dir / "artifacts"

    @property
    def traces_dir(self) -> Path:
        return self.data_dir / "traces"

    @staticmethod
    def from_env() -> "ServiceConfig":
        data_dir = Path(
            os.environ.get("ORION_DATA_DIR") or Path(tempfile.gettempdir()) / "orion-data"
        )
        keys = tuple(
            k.strip() for k in os.environ.get("ORION_API_KEYS", "").split(",") if k.strip()
        )
        return ServiceConfig(
            data_dir=data_dir,
            api_keys=keys,
            signing_key=os.environ.get("ORION_SIGNING_KEY"),
        )

    @staticmethod
    def load(path: str | Path) -> "ServiceConfig":
        doc = json.loads(Path(path).read_text())
        base = ServiceConfig.from_env()
        fields = {}
        for key in (
            "max_parallel",
            "node_timeout_ms",
            "max_attempts",
            "max_rounds",
            "context_max_turns",
            "context_max_chars",
            "max_upload_bytes",
            "host",
            "port",
        ):
            if key in doc:
                fields[key] = doc[key]
        if "data_dir" in doc:
            fields["data_dir"] = Path(doc["data_dir"])
        if "catalog_path" in doc:
            fields["catalog_path"] = Path(doc["catalog_path"])
        if "patterns_path" in doc:
            fields["patterns_path"] = Path(doc["patterns_path"])
        if "allowed_mimes" in doc:
            fields["allowed_mimes"] = tuple(doc["allowed_mimes"])
        if "api_keys" in doc:
            fields["api_keys"] = tuple(doc["api_keys"])
        if "signing_key_env" in doc:
            fields["signing_key"] = os.environ.get(doc["signing_key_env"])
        return replace(base, **fields)
