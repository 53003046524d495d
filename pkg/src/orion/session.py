"""Durable multi-turn sessions with budgeted relevance retrieval.

Each session is an append-only JSON-lines file (one turn per line) plus an
index file mapping ids to paths, so a restarted process recovers every turn.
Retrieval is lexical overlap + a modality bonus + recency, deterministic for
a given session and instruction.
"""
from __future__ import annotations

import json
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from orion.errors import OrionError
from orion.model.types import Message

JACCARD_WEIGHT = 1.0
MODALITY_BONUS = 0.2

# instruction words that signal interest in a stored artifact modality
_MODALITY_WORDS = {
    "image": "image",
    "picture": "image",
    "photo": "image",
    "screenshot": "image",
    "video": "video",
    "clip": "video",
    "document": "document",
    "form": "document",
    "pdf": "document",
    "page": "document",
    "pages": "document",
    "audio": "audio",
    "mask": "mask",
}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class UnknownSession(OrionError):
    pass


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.casefold()))


@dataclass(frozen=True)
class ContextBudget:
    max_turns: int = 8
    max_chars: int = 16_000

    def __post_init__(self) -> None:
        if self.max_turns < 1 or self.max_chars < 1:
            raise ValueError("budget limits must be at least 1")


@dataclass(frozen=True)
class Turn:
    index: int
    user: Message
    assistant: Message
    trace_ref: Optional[str]
    at: float
    artifact_ids: tuple[str, ...] = ()

    @property
    def text(self) -> str:
        return self.user.text_content() + "\n" + self.assistant.text_content()

    @property
    def char_len(self) -> int:
        return len(self.user.text_content()) + len(self.assistant.text_content())

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "user": self.user.to_json(),
            "assistant": self.assistant.to_json(),
            "trace_ref": self.trace_ref,
            "at": self.at,
            "artifact_ids": list(self.artifact_ids),
        }

    @staticmethod
    def from_json(d: dict) -> "Turn":
        return Turn(
            index=int(d["index"]),
            user=Message.from_json(d["user"]),
            assistant=Message.from_json(d["assistant"]),
            trace_ref=d.get("trace_ref"),
            at=float(d["at"]),
            artifact_ids=tuple(d.get("artifact_ids", [])),
        )


@dataclass
class Session:
    id: str
    turns: list[Turn] = field(default_factory=list)
    created_at: float = 0.0


class SessionStore:
    def __init__(self, root: str | Path, now_fn: Callable[[], float] = time.time) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.json"
        self.now_fn = now_fn
        self._lock = threading.Lock()
        self._index: dict[str, dict] = {}
        if self.index_path.exists():
            self._index = json.loads(self.index_path.read_text())

    def _flush_index(self) -> None:
        self.index_path.write_text(json.dumps(self._index, sort_keys=True, indent=1))

    def _turns_path(self, session_id: str) -> Path:
        return self.root / self._index[session_id]["path"]

    def create(self, session_id: Optional[str] = None) -> Session:
        with self._lock:
            sid = session_id or ("sess_" + uuid.uuid4().hex[:12])
            if sid in self._index:
                return self.get(sid)
            created = self.now_fn()
            self._index[sid] = {"path": f"{sid}.jsonl", "created_at": created}
            (self.root / f"{sid}.jsonl").touch()
            self._flush_index()
            return Session(id=sid, created_at=created)

    def exists(self, session_id: str) -> bool:
        return session_id in self._index

    def get(self, session_id: str) -> Session:
        if session_id not in self._index:
            raise UnknownSession(f"no session {session_id!r}")
        turns = []
        with self._turns_path(session_id).open() as fh:
            for line in fh:
                line = line.strip()
                if line:
                    turns.append(Turn.from_json(json.loads(line)))
        return Session(
            id=session_id, turns=turns, created_at=self._index[session_id]["created_at"]
        )

    def append_turn(
        self,
        session_id: str,
        user: Message,
        assistant: Message,
        trace_ref: Optional[str] = None,
        artifact_ids: tuple[str, ...] = (),
    ) -> Turn:
        with self._lock:
            if session_id not in self._index:
                raise UnknownSession(f"no session {session_id!r}")
            path = self._turns_path(session_id)
            next_index = sum(1 for line in path.read_text().splitlines() if line.strip())
            turn = Turn(
                index=next_index,
                user=user,
                assistant=assistant,
                trace_ref=trace_ref,
                at=self.now_fn(),
                artifact_ids=tuple(artifact_ids),
            )
            with path.open("a") as fh:
                fh.write(json.dumps(turn.to_json(), sort_keys=True) + "\n")
            return turn

    def list_sessions(self) -> list[str]:
        return sorted(self._index)


def retrieve_context(
    session: Session,
    instruction: Message,
    budget: ContextBudget = ContextBudget(),
    modality_fn: Optional[Callable[[str], Optional[str]]] = None,
) -> list[Turn]:
    """Top-scoring turns under both budget limits, chronological, with the
    most recent turn always present."""
    if not session.turns:
        return []
    instr_text = instruction.text_content()
    instr_tokens = _tokens(instr_text)
    wanted_modalities = {
        _MODALITY_WORDS[w] for w in instr_tokens if w in _MODALITY_WORDS
    }
    latest = session.turns[-1].index

    def score(turn: Turn) -> float:
        turn_tokens = _tokens(turn.text)
        union = instr_tokens | turn_tokens
        jaccard = len(instr_tokens & turn_tokens) / len(union) if union else 0.0
        bonus = 0.0
        if wanted_modalities and modality_fn is not None:
            turn_modalities = {modality_fn(a) for a in turn.artifact_ids}
            if wanted_modalities & turn_modalities:
                bonus = MODALITY_BONUS
        recency = 1.0 / (1.0 + (latest - turn.index))
        return JACCARD_WEIGHT * jaccard + bonus + recency

    ranked = sorted(session.turns, key=lambda t: (-score(t), -t.index))
    newest = session.turns[-1]
    chosen = [newest]
    used_chars = newest.char_len
    for turn in ranked:
        if turn.index == newest.index:
            continue
        if len(chosen) >= budget.max_turns:
            break
        if used_chars + turn.char_len > budget.max_chars:
            continue
        chosen.append(turn)
        used_chars += turn.char_len
    return sorted(chosen, key=lambda t: t.index)
