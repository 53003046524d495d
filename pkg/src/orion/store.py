"""Content-addressed artifact storage with pre-signed, time-limited retrieval URLs.

Objects live at ``{root}/{first2 hex}/{sha256}`` with a ``{sha256}.meta`` JSON
sidecar. Ids are ``file_`` + the first 16 hex digits of the content hash, so
re-uploading identical bytes converges on one object. URLs carry an
``expires`` unix timestamp and an HMAC-SHA256 ``sig`` over ``id|expires``.
"""
from __future__ import annotations

import hmac
import hashlib
import json
import os
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional
from urllib.parse import parse_qs, urlsplit

from orion.errors import OrionError

DEFAULT_TTL_S = 3600
DEFAULT_MAX_BYTES = 64 * 1024 * 1024
ARTIFACT_PATH_PREFIX = "/v1/artifacts/"


class EmptyPayload(OrionError):
    pass


class StorageFull(OrionError):
    pass


class NotFound(OrionError):
    pass


class BadSignature(OrionError):
    pass


class Expired(OrionError):
    pass


class MalformedUrl(OrionError):
    pass


@dataclass(frozen=True)
class StoredFile:
    id: str
    sha256: str
    mime: str
    size: int
    name: str
    created_at: str


@dataclass(frozen=True)
class SignedUrl:
    url: str


def file_id_for(content: bytes) -> str:
    return "file_" + hashlib.sha256(content).hexdigest()[:16]


class ArtifactStore:
    """Filesystem store shared by user uploads and tool-produced artifacts."""

    def __init__(
        self,
        root: str | Path,
        signing_key: Optional[str] = None,
        max_bytes: int = DEFAULT_MAX_BYTES,
        default_ttl_s: int = DEFAULT_TTL_S,
        now_fn: Callable[[], float] = time.time,
    ) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        key = signing_key if signing_key is not None else os.environ.get("ORION_SIGNING_KEY", "")
        self._key = (key or "orion-dev-signing-key").encode()
        self.max_bytes = max_bytes
        self.default_ttl_s = default_ttl_s
        self.now_fn = now_fn
        # short id -> sha256, rebuilt from disk so restarts keep every object reachable
        self._index: dict[str, str] = {}
        self._load_index()

    def _load_index(self) -> None:
        for shard in self.root.iterdir() if self.root.exists() else []:
            if not shard.is_dir():
                continue
            for obj in shard.iterdir():
                if obj.suffix == ".meta":
                    continue
                digest = obj.name
                self._index["file_" + digest[:16]] = digest

    def _object_path(self, sha256: str) -> Path:
        return self.root / sha256[:2] / sha256

    def put(self, content: bytes, mime: str, name: str = "") -> StoredFile:
        """Persist ``content``; identical bytes always yield the same id."""
        if not content:
            raise EmptyPayload("refusing to store empty payload")
        if len(content) > self.max_bytes:
            raise StorageFull(f"payload of {len(content)} bytes exceeds {self.max_bytes}")
        if not mime:
            raise EmptyPayload("mime must be non-empty")
        digest = hashlib.sha256(content).hexdigest()
        fid = "file_" + digest[:16]
        path = self._object_path(digest)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            # write-to-temp + rename so concurrent writers of equal bytes converge
            tmp = path.with_suffix(f".tmp.{os.getpid()}")
            tmp.write_bytes(content)
            os.replace(tmp, path)
            meta = {
                "mime": mime,
                "name": name,
                "size": len(content),
                "created_at": datetime.now(timezone.utc).isoformat(),
            }
            meta_tmp = path.with_suffix(f".metatmp.{os.getpid()}")
            meta_tmp.write_text(json.dumps(meta, sort_keys=True))
            os.replace(meta_tmp, path.with_name(digest + ".meta"))
        self._index[fid] = digest
        meta = json.loads(path.with_name(digest + ".meta").read_text())
        return StoredFile(
            id=fid,
            sha256=digest,
            mime=meta["mime"],
            size=meta["size"],
            name=meta["name"],
            created_at=meta["created_at"],
        )

    def _resolve(self, file_id: str) -> str:
        digest = self._index.get(file_id)
        if digest is None or not self._object_path(digest).exists():
            raise NotFound(f"no stored object for {file_id!r}")
        return digest

    def get(self, file_id: str) -> tuple[bytes, str]:
        """Return (bytes, mime) exactly as stored."""
        digest = self._resolve(file_id)
        meta = json.loads(self._object_path(digest).with_name(digest + ".meta").read_text())
        return self._object_path(digest).read_bytes(), meta["mime"]

    def stat(self, file_id: str) -> StoredFile:
        digest = self._resolve(file_id)
        meta = json.loads(self._object_path(digest).with_name(digest + ".meta").read_text())
        return StoredFile(
            id=file_id,
            sha256=digest,
            mime=meta["mime"],
            size=meta["size"],
            name=meta["name"],
            created_at=meta["created_at"],
        )

    def exists(self, file_id: str) -> bool:
        try:
            self._resolve(file_id)
            return True
        except NotFound:
            return False

    def _sig(self, file_id: str, expires: int) -> str:
        return hmac.new(self._key, f"{file_id}|{expires}".encode(), hashlib.sha256).hexdigest()

    def sign(self, file_id: str, ttl_s: Optional[int] = None) -> SignedUrl:
        """Mint a URL that verifies until ``now + ttl_s``."""
        self._resolve(file_id)
        ttl = self.default_ttl_s if ttl_s is None else ttl_s
        expires = int(self.now_fn()) + ttl
        sig = self._sig(file_id, expires)
        return SignedUrl(url=f"{ARTIFACT_PATH_PREFIX}{file_id}?expires={expires}&sig={sig}")

    def verify(self, url: str) -> str:
        """Check path shape, signature, and expiry; return the artifact id."""
        split = urlsplit(url)
        if not split.path.startswith(ARTIFACT_PATH_PREFIX):
            raise MalformedUrl(f"unexpected path: {split.path!r}")
        file_id = split.path[len(ARTIFACT_PATH_PREFIX) :]
        query = parse_qs(split.query)
        try:
            expires = int(query["expires"][0])
            sig = query["sig"][0]
        except (KeyError, IndexError, ValueError) as exc:
            raise MalformedUrl(f"missing or malformed query: {exc}") from exc
        if not hmac.compare_digest(sig, self._sig(file_id, expires)):
            raise BadSignature(f"signature mismatch for {file_id}")
        if self.now_fn() >= expires:
            raise Expired(f"url for {file_id} expired at {expires}")
        return file_id

    def prune(self, older_than_s: float = 0.0) -> int:
        """Delete objects whose metadata timestamp is older than the cutoff; returns count."""
        cutoff = datetime.now(timezone.utc).timestamp() - older_than_s
        removed = 0
        for fid, digest in list(self._index.items()):
            path = self._object_path(digest)
            meta_path = path.with_name(digest + ".meta")
            try:
                created = datetime.fromisoformat(
                    json.loads(meta_path.read_text())["created_at"]
                ).timestamp()
            except (OSError, ValueError, KeyError):
                created = 0.0
            if created < cutoff:
                path.unlink(missing_ok=True)
                meta_path.unlink(missing_ok=True)
                self._index.pop(fid, None)
                removed += 1
        return removed
