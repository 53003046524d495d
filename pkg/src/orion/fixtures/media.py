"""Fixture file formats for the reference tool backends.

A fixture is a JSON document describing one piece of media well enough for
every tool in the toolbox to answer from it deterministically. Three kinds,
discriminated by ``kind``: image (scene), document (paged form), video
(timed segment track).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from orion.errors import OrionError
from orion.model.types import NormBBox, NormPoint, TimeSegment

UI_KINDS = ("button", "text_field", "link", "icon", "card")
BLOCK_TYPES = ("header", "paragraph", "table", "footnote", "figure")


class FixtureError(OrionError):
    pass


def _bbox(raw: Any, where: str) -> NormBBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise FixtureError(f"{where}: bbox must be [x, y, w, h]")
    try:
        return NormBBox(*(float(v) for v in raw))
    except Exception as exc:
        raise FixtureError(f"{where}: {exc}") from exc


def _point(raw: Any, where: str) -> NormPoint:
    if not isinstance(raw, list) or len(raw) != 2:
        raise FixtureError(f"{where}: point must be [x, y]")
    try:
        return NormPoint(float(raw[0]), float(raw[1]))
    except Exception as exc:
        raise FixtureError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class Word:
    text: str
    bbox: NormBBox
    confidence: float

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "bbox": list(self.bbox.as_tuple()),
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class TextBlock:
    text: str
    bbox: NormBBox
    words: tuple[Word, ...] = ()

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "bbox": list(self.bbox.as_tuple()),
            "words": [w.to_json() for w in self.words],
        }


@dataclass(frozen=True)
class SceneObject:
    label: str
    bbox: NormBBox
    confidence: float = 1.0
    points: tuple[NormPoint, ...] = ()
    attributes: dict[str, str] = field(default_factory=dict)
    text: Optional[str] = None

    def to_json(self) -> dict:
        d: dict[str, Any] = {
            "label": self.label,
            "bbox": list(self.bbox.as_tuple()),
            "confidence": self.confidence,
        }
        if self.points:
            d["points"] = [[p.x, p.y] for p in self.points]
        if self.attributes:
            d["attributes"] = dict(sorted(self.attributes.items()))
        if self.text is not None:
            d["text"] = self.text
        return d


@dataclass(frozen=True)
class UiElement:
    kind: str
    bbox: NormBBox
    text: Optional[str] = None

    def to_json(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "bbox": list(self.bbox.as_tuple())}
        if self.text is not None:
            d["text"] = self.text
        return d


@dataclass(frozen=True)
class SceneFixture:
    width: int
    height: int
    objects: tuple[SceneObject, ...] = ()
    text_blocks: tuple[TextBlock, ...] = ()
    ui_elements: tuple[UiElement, ...] = ()

    kind = "image"

    def to_json(self) -> dict:
        return {
            "kind": "image",
            "width": self.width,
            "height": self.height,
            "objects": [o.to_json() for o in self.objects],
            "text_blocks": [b.to_json() for b in self.text_blocks],
            "ui_elements": [e.to_json() for e in self.ui_elements],
        }

    @staticmethod
    def from_json(doc: dict) -> "SceneFixture":
        width, height = int(doc["width"]), int(doc["height"])
        if width < 1 or height < 1:
            raise FixtureError("scene dimensions must be at least 1x1")
        objects = []
        for i, o in enumerate(doc.get("objects", [])):
            where = f"objects[{i}]"
            conf = float(o.get("confidence", 1.0))
            if not 0.0 <= conf <= 1.0:
                raise FixtureError(f"{where}: confidence {conf} out of range")
            objects.append(
                SceneObject(
                    label=o["label"],
                    bbox=_bbox(o["bbox"], where),
                    confidence=conf,
                    points=tuple(_point(p, where) for p in o.get("points", [])),
                    attributes={str(k): str(v) for k, v in o.get("attributes", {}).items()},
                    text=o.get("text"),
                )
            )
        blocks = []
        for i, b in enumerate(doc.get("text_blocks", [])):
            where = f"text_blocks[{i}]"
            words = []
            for j, w in enumerate(b.get("words", [])):
                conf = float(w.get("confidence", 1.0))
                if not 0.0 <= conf <= 1.0:
                    raise FixtureError(f"{where}.words[{j}]: confidence out of range")
                words.append(
                    Word(text=w["text"], bbox=_bbox(w["bbox"], f"{where}.words[{j}]"), confidence=conf)
                )
            blocks.append(TextBlock(text=b["text"], bbox=_bbox(b["bbox"], where), words=tuple(words)))
        elements = []
        for i, e in enumerate(doc.get("ui_elements", [])):
            if e["kind"] not in UI_KINDS:
                raise FixtureError(f"ui_elements[{i}]: unknown kind {e['kind']!r}")
            elements.append(
                UiElement(kind=e["kind"], bbox=_bbox(e["bbox"], f"ui_elements[{i}]"), text=e.get("text"))
            )
        return SceneFixture(
            width=width,
            height=height,
            objects=tuple(objects),
            text_blocks=tuple(blocks),
            ui_elements=tuple(elements),
        )


@dataclass(frozen=True)
class DocBlock:
    type: str
    text: str
    bbox: NormBBox
    order: int

    def to_json(self) -> dict:
        return {
            "type": self.type,
            "text": self.text,
            "bbox": list(self.bbox.as_tuple()),
            "order": self.order,
        }


@dataclass(frozen=True)
class DocField:
    name: str
    value: str
    name_bbox: NormBBox
    value_bbox: NormBBox
    handwritten: bool = False

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "name_bbox": list(self.name_bbox.as_tuple()),
            "value_bbox": list(self.value_bbox.as_tuple()),
            "handwritten": self.handwritten,
        }


@dataclass(frozen=True)
class DocPage:
    blocks: tuple[DocBlock, ...] = ()
    fields: tuple[DocField, ...] = ()

    def to_json(self) -> dict:
        return {
            "blocks": [b.to_json() for b in self.blocks],
            "fields": [f.to_json() for f in self.fields],
        }


@dataclass(frozen=True)
class DocFixture:
    pages: tuple[DocPage, ...]

    kind = "document"

    def to_json(self) -> dict:
        return {"kind": "document", "pages": [p.to_json() for p in self.pages]}

    @staticmethod
    def from_json(doc: dict) -> "DocFixture":
        pages = []
        for pi, p in enumerate(doc["pages"]):
            blocks = []
            for bi, b in enumerate(p.get("blocks", [])):
                where = f"pages[{pi}].blocks[{bi}]"
                if b["type"] not in BLOCK_TYPES:
                    raise FixtureError(f"{where}: unknown block type {b['type']!r}")
                blocks.append(
                    DocBlock(
                        type=b["type"],
                        text=b["text"],
                        bbox=_bbox(b["bbox"], where),
                        order=int(b["order"]),
                    )
                )
            if sorted(b.order for b in blocks) != list(range(len(blocks))):
                raise FixtureError(f"pages[{pi}]: block orders must be a permutation of 0..n-1")
            fields = []
            for fi, f in enumerate(p.get("fields", [])):
                where = f"pages[{pi}].fields[{fi}]"
                fields.append(
                    DocField(
                        name=f["name"],
                        value=f["value"],
                        name_bbox=_bbox(f["name_bbox"], where),
                        value_bbox=_bbox(f["value_bbox"], where),
                        handwritten=bool(f.get("handwritten", False)),
                    )
                )
            pages.append(DocPage(blocks=tuple(blocks), fields=tuple(fields)))
        return DocFixture(pages=tuple(pages))


@dataclass(frozen=True)
class VideoSegment:
    seg: TimeSegment
    tags: tuple[str, ...]
    caption: str
    salience: float
    scene: Optional[SceneFixture] = None

    def to_json(self) -> dict:
        d: dict[str, Any] = {
            "start_ms": self.seg.start_ms,
            "end_ms": self.seg.end_ms,
            "tags": list(self.tags),
            "caption": self.caption,
            "salience": self.salience,
        }
        if self.scene is not None:
            d["scene"] = self.scene.to_json()
        return d


@dataclass(frozen=True)
class VideoFixture:
    duration_ms: int
    fps: float
    segments: tuple[VideoSegment, ...] = ()

    kind = "video"

    def to_json(self) -> dict:
        return {
            "kind": "video",
            "duration_ms": self.duration_ms,
            "fps": self.fps,
            "segments": [s.to_json() for s in self.segments],
        }

    @staticmethod
    def from_json(doc: dict) -> "VideoFixture":
        duration = int(doc["duration_ms"])
        if duration <= 0:
            raise FixtureError("duration_ms must be positive")
        segments = []
        for i, s in enumerate(doc.get("segments", [])):
            where = f"segments[{i}]"
            try:
                seg = TimeSegment(int(s["start_ms"]), int(s["end_ms"]))
            except Exception as exc:
                raise FixtureError(f"{where}: {exc}") from exc
            if seg.end_ms > duration:
                raise FixtureError(f"{where}: ends after the video ({seg.end_ms} > {duration})")
            salience = float(s.get("salience", 0.5))
            if not 0.0 <= salience <= 1.0:
                raise FixtureError(f"{where}: salience {salience} out of range")
            scene = SceneFixture.from_json(s["scene"]) if "scene" in s else None
            segments.append(
                VideoSegment(
                    seg=seg,
                    tags=tuple(s.get("tags", [])),
                    caption=s["caption"],
                    salience=salience,
                    scene=scene,
                )
            )
        return VideoFixture(
            duration_ms=duration, fps=float(doc.get("fps", 30.0)), segments=tuple(segments)
        )


Fixture = SceneFixture | DocFixture | VideoFixture

_KINDS: dict[str, Any] = {"image": SceneFixture, "document": DocFixture, "video": VideoFixture}


def parse_fixture(doc: Any) -> Fixture:
    if not isinstance(doc, dict):
        raise FixtureError("fixture must be a JSON object")
    kind = doc.get("kind")
    cls = _KINDS.get(kind)
    if cls is None:
        raise FixtureError(f"unknown fixture kind {kind!r}")
    try:
        return cls.from_json(doc)
    except FixtureError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FixtureError(f"malformed {kind} fixture: {exc!r}") from exc


def fixture_bytes(fx: Fixture, extra: Optional[dict] = None) -> bytes:
    """Canonical serialization; identical fixtures always encode identically."""
    doc = fx.to_json()
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def load_fixture(path: str | Path) -> Fixture:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FixtureError(f"{path.name}: not valid JSON ({exc})") from exc
    return parse_fixture(doc)
