"""Shared domain types: multimodal messages, normalized geometry, artifacts, model ids.

All types here are immutable values validated on construction; ``to_json``/
``from_json`` round-trip through plain JSON-compatible dicts.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

from orion.errors import OrionError

# tolerance absorbing float round-trip error on x+w <= 1 checks
EDGE_TOL = 1e-9

FILE_ID_RE = re.compile(r"^file_[0-9a-f]{16}$")


class InvalidValue(OrionError):
    """A domain type invariant was violated at construction."""


class UnknownMode(OrionError):
    pass


class Modality(str, Enum):
    image = "image"
    video = "video"
    document = "document"
    audio = "audio"
    text = "text"
    mask = "mask"


@dataclass(frozen=True)
class NormBBox:
    """Top-left + size bounding box in unitless fractions of image width/height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise InvalidValue(f"bbox.{name} out of [0,1]: {v}")
        if self.x + self.w > 1.0 + EDGE_TOL:
            raise InvalidValue(f"bbox x+w > 1: {self.x + self.w}")
        if self.y + self.h > 1.0 + EDGE_TOL:
            raise InvalidValue(f"bbox y+h > 1: {self.y + self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def center(self) -> "NormPoint":
        return NormPoint(self.x + self.w / 2.0, self.y + self.h / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def to_json(self) -> list:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_json(cls, v: Any) -> "NormBBox":
        if isinstance(v, Mapping):
            return cls(float(v["x"]), float(v["y"]), float(v["w"]), float(v["h"]))
        x, y, w, h = v
        return cls(float(x), float(y), float(w), float(h))


@dataclass(frozen=True)
class NormPoint:
    """A point in unitless fractions of image width/height."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise InvalidValue(f"point out of range: ({self.x}, {self.y})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)

    def to_json(self) -> list:
        return [self.x, self.y]

    @classmethod
    def from_json(cls, v: Any) -> "NormPoint":
        if isinstance(v, Mapping):
            return cls(float(v["x"]), float(v["y"]))
        x, y = v
        return cls(float(x), float(y))


@dataclass(frozen=True)
class TimeSegment:
    """A [start, end] window in integer milliseconds."""

    start_ms: int
    end_ms: int

    def __post_init__(self) -> None:
        if self.start_ms < 0 or self.end_ms < 0:
            raise InvalidValue("negative segment bound")
        if self.start_ms > self.end_ms:
            raise InvalidValue(f"segment start {self.start_ms} > end {self.end_ms}")

    def to_json(self) -> dict:
        return {"start_ms": self.start_ms, "end_ms": self.end_ms}

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "TimeSegment":
        return cls(int(d["start_ms"]), int(d["end_ms"]))


@dataclass(frozen=True)
class Detection:
    label: str
    bbox: NormBBox
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise InvalidValue(f"confidence out of [0,1]: {self.confidence}")

    def to_json(self) -> dict:
        return {"label": self.label, "bbox": self.bbox.to_json(), "confidence": self.confidence}

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "Detection":
        return cls(str(d["label"]), NormBBox.from_json(d["bbox"]), float(d["confidence"]))


@dataclass(frozen=True)
class ArtifactRef:
    """A stored multimodal output, addressed by id and retrievable via a signed URL."""

    id: str
    modality: Modality
    mime: str
    url: str
    meta: Mapping[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        # file_id mirrors id: artifacts live in the same store namespace as
        # uploads, so downstream tools can consume a ref as a file reference.
        return {
            "id": self.id,
            "file_id": self.id,
            "modality": self.modality.value,
            "mime": self.mime,
            "url": self.url,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "ArtifactRef":
        return cls(
            id=str(d.get("id") or d["file_id"]),
            modality=Modality(d["modality"]),
            mime=str(d["mime"]),
            url=str(d["url"]),
            meta=dict(d.get("meta", {})),
        )


@dataclass(frozen=True)
class MaskRef:
    """Reference to a single-channel 8-bit label raster of the given dimensions."""

    artifact: ArtifactRef
    width: int
    height: int
    num_labels: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidValue("mask dimensions must be >= 1")
        if self.num_labels < 1:
            raise InvalidValue("num_labels must be >= 1")

    def to_json(self) -> dict:
        return {
            "artifact": self.artifact.to_json(),
            "width": self.width,
            "height": self.height,
            "num_labels": self.num_labels,
        }


@dataclass(frozen=True)
class OutputSchema:
    """An object-rooted JSON-schema document."""

    root: Mapping[str, Any]

    def __post_init__(self) -> None:
        if not isinstance(self.root, Mapping) or self.root.get("type") != "object":
            raise InvalidValue("schema root must be a JSON object with type 'object'")

    @property
    def required(self) -> list[str]:
        return list(self.root.get("required", []))

    def property_schema(self, name: str) -> Optional[Mapping[str, Any]]:
        props = self.root.get("properties", {})
        return props.get(name) if isinstance(props, Mapping) else None

    def to_json(self) -> dict:
        return dict(self.root)


class Mode(str, Enum):
    auto = "auto"
    fast = "fast"


@dataclass(frozen=True)
class ModelId:
    family: str
    mode: Mode = Mode.auto

    def render(self) -> str:
        return f"{self.family}:{self.mode.value}"


def parse_model_id(s: str) -> ModelId:
    """Split ``family[:mode]`` at the last colon; missing mode defaults to auto."""
    if not s:
        raise InvalidValue("empty model id")
    if ":" not in s:
        return ModelId(family=s)
    family, _, mode = s.rpartition(":")
    if mode not in Mode.__members__:
        raise UnknownMode(f"unknown model mode: {mode!r}")
    return ModelId(family=family, mode=Mode(mode))


class PartKind(str, Enum):
    text = "text"
    image_url = "image_url"
    input_file = "input_file"
    artifact = "artifact"


class Detail(str, Enum):
    auto = "auto"
    low = "low"
    high = "high"


@dataclass(frozen=True)
class ContentPart:
    """One piece of a multimodal chat turn; exactly the active kind's fields are set."""

    kind: PartKind
    text: Optional[str] = None
    url: Optional[str] = None
    detail: Detail = Detail.auto
    file_id: Optional[str] = None
    artifact: Optional[ArtifactRef] = None

    def __post_init__(self) -> None:
        populated = {
            PartKind.text: self.text is not None,
            PartKind.image_url: self.url is not None,
            PartKind.input_file: self.file_id is not None,
            PartKind.artifact: self.artifact is not None,
        }
        if not populated[self.kind]:
            raise InvalidValue(f"part of kind {self.kind.value} missing its payload")
        for kind, present in populated.items():
            if kind is not self.kind and present:
                raise InvalidValue(
                    f"part of kind {self.kind.value} carries {kind.value} payload"
                )
        if self.kind is PartKind.input_file and not FILE_ID_RE.match(self.file_id or ""):
            raise InvalidValue(f"malformed file id: {self.file_id!r}")

    @classmethod
    def of_text(cls, text: str) -> "ContentPart":
        return cls(kind=PartKind.text, text=text)

    @classmethod
    def of_image_url(cls, url: str, detail: Detail = Detail.auto) -> "ContentPart":
        return cls(kind=PartKind.image_url, url=url, detail=detail)

    @classmethod
    def of_file(cls, file_id: str) -> "ContentPart":
        return cls(kind=PartKind.input_file, file_id=file_id)

    @classmethod
    def of_artifact(cls, artifact: ArtifactRef) -> "ContentPart":
        return cls(kind=PartKind.artifact, artifact=artifact)

    def to_json(self) -> dict:
        if self.kind is PartKind.text:
            return {"type": "text", "text": self.text}
        if self.kind is PartKind.image_url:
            return {"type": "image_url", "image_url": {"url": self.url, "detail": self.detail.value}}
        if self.kind is PartKind.input_file:
            return {"type": "input_file", "file_id": self.file_id}
        return {"type": "artifact", "artifact": self.artifact.to_json()}

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "ContentPart":
        kind = d.get("type")
        if kind == "text":
            return cls.of_text(str(d["text"]))
        if kind == "image_url":
            image_url = d.get("image_url")
            if isinstance(image_url, Mapping):
                return cls.of_image_url(
                    str(image_url["url"]), Detail(image_url.get("detail", "auto"))
                )
            return cls.of_image_url(str(image_url))
        if kind == "input_file":
            return cls.of_file(str(d["file_id"]))
        if kind == "artifact":
            return cls.of_artifact(ArtifactRef.from_json(d["artifact"]))
        raise InvalidValue(f"unknown content part type: {kind!r}")


class Role(str, Enum):
    system = "system"
    user = "user"
    assistant = "assistant"
    tool = "tool"


@dataclass(frozen=True)
class Message:
    role: Role
    parts: tuple[ContentPart, ...]

    def __post_init__(self) -> None:
        if not self.parts:
            raise InvalidValue("message parts must be non-empty")
        if self.role is Role.tool:
            if len(self.parts) != 1 or self.parts[0].kind not in (
                PartKind.artifact,
                PartKind.text,
            ):
                raise InvalidValue("tool message carries exactly one artifact or text part")

    @classmethod
    def of(cls, role: Role, parts: Sequence[ContentPart]) -> "Message":
        return cls(role=role, parts=tuple(parts))

    @classmethod
    def text(cls, role: Role, text: str) -> "Message":
        return cls(role=role, parts=(ContentPart.of_text(text),))

    def text_content(self) -> str:
        return "\n".join(p.text for p in self.parts if p.kind is PartKind.text and p.text)

    def file_ids(self) -> list[str]:
        return [p.file_id for p in self.parts if p.kind is PartKind.input_file and p.file_id]

    def to_json(self) -> dict:
        return {"role": self.role.value, "content": [p.to_json() for p in self.parts]}

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "Message":
        content = d["content"]
        if isinstance(content, str):
            parts: tuple[ContentPart, ...] = (ContentPart.of_text(content),)
        else:
            parts = tuple(ContentPart.from_json(p) for p in content)
        return cls(role=Role(d["role"]), parts=parts)
