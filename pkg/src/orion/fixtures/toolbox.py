"""Reference tool backends: pure functions of fixture content and parameters.

Every output is recomputable from the fixture file alone, so orchestration
tests can assert exact values. Media parameters arrive as {"file_id": ...}
references into the artifact store; tools that produce media write a new
fixture artifact and return its reference.
"""
from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from orion.fixtures import raster
from orion.fixtures.media import (
    DocBlock,
    DocField,
    DocFixture,
    DocPage,
    Fixture,
    SceneFixture,
    SceneObject,
    TextBlock,
    UiElement,
    VideoFixture,
    VideoSegment,
    Word,
    fixture_bytes,
    parse_fixture,
)
from orion.model.geometry import (
    DegenerateCrop,
    rebase_into_crop,
    rebase_point_into_crop,
    rotate90ccw_bbox,
    rotate90ccw_point,
)
from orion.model.types import (
    ArtifactRef,
    Modality,
    NormBBox,
    NormPoint,
    OutputSchema,
    TimeSegment,
)
from orion.registry import Category, CostHint, Tier, ToolDescriptor, ToolError, ToolRegistry
from orion.store import ArtifactStore

FIXTURE_MIME = "application/json"

# Query categories that select by label class instead of literal token match.
CATEGORY_LABELS = {
    "objects": None,  # matches everything
    "persons": {"person", "man", "woman", "boy", "girl", "child", "pedestrian"},
    "faces": {"face"},
    "logos": {"logo"},
    "landmarks": {"landmark"},
}


class NotAScene(ToolError):
    pass


class NotADocument(ToolError):
    pass


class NotAVideo(ToolError):
    pass


class PageOutOfRange(ToolError):
    pass


class NoMatch(ToolError):
    pass


class MissingRefs(ToolError):
    pass


class OutOfRange(ToolError):
    pass


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.casefold()))


def _matches(query_tokens: set[str], label: str) -> bool:
    return bool(query_tokens & _tokens(label))


def _select_objects(scene: SceneFixture, query: str) -> list[tuple[int, SceneObject]]:
    """Objects matching a query, in fixture order with original indices."""
    class_set = CATEGORY_LABELS.get(query, ...)
    if class_set is None:
        return list(enumerate(scene.objects))
    if class_set is not ...:
        return [(i, o) for i, o in enumerate(scene.objects) if _tokens(o.label) & class_set]
    qt = _tokens(query)
    return [(i, o) for i, o in enumerate(scene.objects) if _matches(qt, o.label)]


def _detection_json(obj: SceneObject) -> dict:
    return {
        "label": obj.label,
        "bbox": list(obj.bbox.as_tuple()),
        "confidence": obj.confidence,
    }


def _join_labels(labels: list[str]) -> str:
    if len(labels) == 1:
        return labels[0]
    return ", ".join(labels[:-1]) + " and " + labels[-1]


class FixtureToolbox:
    """The full reference catalog, backed by one artifact store."""

    def __init__(self, store: ArtifactStore) -> None:
        self.store = store

    # -- fixture plumbing ---------------------------------------------------

    def _resolve_id(self, param: Any) -> str:
        if isinstance(param, str):
            return param
        if isinstance(param, Mapping):
            for key in ("file_id", "id"):
                if isinstance(param.get(key), str):
                    return param[key]
        raise ToolError(f"cannot resolve a file reference from {param!r}")

    def _load(self, param: Any) -> Fixture:
        file_id = self._resolve_id(param)
        content, _ = self.store.get(file_id)
        try:
            doc = json.loads(content)
        except json.JSONDecodeError as exc:
            raise ToolError(f"{file_id} is not a fixture file ({exc})") from exc
        return parse_fixture(doc)

    def _scene(self, param: Any) -> SceneFixture:
        fx = self._load(param)
        if not isinstance(fx, SceneFixture):
            raise NotAScene(f"expected an image fixture, got {fx.kind}")
        return fx

    def _doc(self, param: Any) -> DocFixture:
        fx = self._load(param)
        if not isinstance(fx, DocFixture):
            raise NotADocument(f"expected a document fixture, got {fx.kind}")
        return fx

    def _video(self, param: Any) -> VideoFixture:
        fx = self._load(param)
        if not isinstance(fx, VideoFixture):
            raise NotAVideo(f"expected a video fixture, got {fx.kind}")
        return fx

    def _put_fixture(
        self, fx: Fixture, modality: Modality, extra: Optional[dict] = None, meta: Optional[dict] = None
    ) -> ArtifactRef:
        content = fixture_bytes(fx, extra=extra)
        stored = self.store.put(content, FIXTURE_MIME)
        return ArtifactRef(
            id=stored.id,
            modality=modality,
            mime=FIXTURE_MIME,
            url=self.store.sign(stored.id).url,
            meta=meta or {},
        )

    def _put_bytes(self, content: bytes, mime: str, modality: Modality, meta: Optional[dict] = None) -> ArtifactRef:
        stored = self.store.put(content, mime)
        return ArtifactRef(
            id=stored.id,
            modality=modality,
            mime=mime,
            url=self.store.sign(stored.id).url,
            meta=meta or {},
        )

    # -- image tools --------------------------------------------------------

    def caption(self, input: Mapping[str, Any]) -> dict:
        scene = self._scene(input["image"])
        if not scene.objects:
            return {"caption": "An empty scene.", "tags": []}
        by_area = sorted(
            enumerate(scene.objects), key=lambda io: (-io[1].bbox.area, io[0])
        )
        labels = [o.label for _, o in by_area]
        tags = sorted({o.label for o in scene.objects})
        return {"caption": f"A scene showing {_join_labels(labels)}.", "tags": tags}

    def vqa(self, input: Mapping[str, Any]) -> dict:
        scene = self._scene(input["image"])
        question = input["question"]
        ground = bool(input.get("ground", False))
        qt = _tokens(question)
        matched = [(i, o) for i, o in enumerate(scene.objects) if _matches(qt, o.label)]

        if not matched:
            out: dict[str, Any] = {"answer": "not present"}
            if ground:
                out["regions"] = []
            return out

        phrases = []
        for _, obj in matched:
            attr = next((v for k, v in sorted(obj.attributes.items()) if k.casefold() in qt), None)
            if attr is not None:
                phrases.append(attr)
            else:
                cx, cy = obj.bbox.center().as_tuple()
                phrases.append(f"The {obj.label} is near ({cx:.2f}, {cy:.2f}).")
        out = {"answer": " ".join(phrases)}
        if ground:
            out["regions"] = [_detection_json(o) for _, o in matched]
        return out

    def detect(self, input: Mapping[str, Any]) -> dict:
        scene = self._scene(input["image"])
        matched = _select_objects(scene, input["query"])
        ordered = sorted(matched, key=lambda io: (-io[1].confidence, io[1].label, io[0]))
        return {"detections": [_detection_json(o) for _, o in ordered]}

    def segment(self, input: Mapping[str, Any]) -> tuple[dict, tuple[ArtifactRef, ...]]:
        scene = self._scene(input["image"])
        mode = input.get("mode", "instance")
        matched = _select_objects(scene, input["query"])

        classes: list[dict] = []
        label_ids: list[int] = []
        if mode == "semantic":
            by_class: dict[str, int] = {}
            for _, obj in matched:
                if obj.label not in by_class:
                    by_class[obj.label] = len(by_class) + 1
                    classes.append({"label_id": by_class[obj.label], "class": obj.label})
                label_ids.append(by_class[obj.label])
        else:
            for n, (_, obj) in enumerate(matched, start=1):
                classes.append({"label_id": n, "class": obj.label})
                label_ids.append(n)

        pixels = bytearray(scene.width * scene.height)
        for (_, obj), label_id in zip(matched, label_ids):
            bounds = raster.px_bounds(obj.bbox.as_tuple(), scene.width, scene.height)
            raster.fill_rect(pixels, scene.width, scene.height, bounds, label_id)

        num_labels = (max(label_ids) + 1) if label_ids else 1
        pgm = raster.write_pgm(scene.width, scene.height, bytes(pixels))
        ref = self._put_bytes(
            pgm,
            "image/x-portable-graymap",
            Modality.mask,
            meta={"width": scene.width, "height": scene.height},
        )
        mask = {
            "artifact": ref.to_json(),
            "width": scene.width,
            "height": scene.height,
            "num_labels": num_labels,
        }
        return {"mask": mask, "classes": classes}, (ref,)

    def point(self, input: Mapping[str, Any]) -> dict:
        scene = self._scene(input["image"])
        matched = _select_objects(scene, input["query"])
        points: list[dict] = []
        for _, obj in matched:
            if obj.points:
                points.extend({"x": p.x, "y": p.y} for p in obj.points)
            else:
                cx, cy = obj.bbox.center().as_tuple()
                points.append({"x": cx, "y": cy})
        return {"points": points, "count": len(matched)}

    def ocr_image(self, input: Mapping[str, Any]) -> dict:
        scene = self._scene(input["image"])
        text = "\n".join(b.text for b in scene.text_blocks)
        words = [w.to_json() for b in scene.text_blocks for w in b.words]
        return {"text": text, "words": words}

    def ui_parse(self, input: Mapping[str, Any]) -> dict:
        scene = self._scene(input["image"])
        exclude = set(input.get("exclude", []))
        elements = [e.to_json() for e in scene.ui_elements if e.kind not in exclude]
        return {"elements": elements}

    def crop(self, input: Mapping[str, Any]) -> tuple[dict, tuple[ArtifactRef, ...]]:
        scene = self._scene(input["image"])
        raw = input["bbox"]
        if not isinstance(raw, list) or len(raw) != 4:
            raise ToolError("bbox must be [x, y, w, h]")
        window = NormBBox(*(float(v) for v in raw))
        win = window.as_tuple()

        new_w = int(window.w * scene.width + 0.5)
        new_h = int(window.h * scene.height + 0.5)
        if new_w < 1 or new_h < 1:
            raise DegenerateCrop(f"crop window {win} collapses below one pixel")

        objects = []
        for obj in scene.objects:
            bbox = rebase_into_crop(obj.bbox, window)
            if bbox is None:
                continue
            points = tuple(
                p for p in (rebase_point_into_crop(pt, window) for pt in obj.points) if p is not None
            )
            objects.append(
                SceneObject(
                    label=obj.label,
                    bbox=bbox,
                    confidence=obj.confidence,
                    points=points,
                    attributes=dict(obj.attributes),
                    text=obj.text,
                )
            )
        blocks = []
        for block in scene.text_blocks:
            bbox = rebase_into_crop(block.bbox, window)
            if bbox is None:
                continue
            words = []
            for word in block.words:
                wb = rebase_into_crop(word.bbox, window)
                if wb is not None:
                    words.append(Word(text=word.text, bbox=wb, confidence=word.confidence))
            blocks.append(TextBlock(text=block.text, bbox=bbox, words=tuple(words)))
        elements = []
        for el in scene.ui_elements:
            bbox = rebase_into_crop(el.bbox, window)
            if bbox is not None:
                elements.append(UiElement(kind=el.kind, bbox=bbox, text=el.text))

        cropped = SceneFixture(
            width=new_w,
            height=new_h,
            objects=tuple(objects),
            text_blocks=tuple(blocks),
            ui_elements=tuple(elements),
        )
        ref = self._put_fixture(cropped, Modality.image, meta={"width": new_w, "height": new_h})
        return {"image": ref.to_json()}, (ref,)

    def rotate(self, input: Mapping[str, Any]) -> tuple[dict, tuple[ArtifactRef, ...]]:
        scene = self._scene(input["image"])
        turns = input["quarter_turns_ccw"]
        if turns not in (1, 2, 3):
            raise ToolError("quarter_turns_ccw must be 1, 2 or 3")

        for _ in range(turns):
            objects = tuple(
                SceneObject(
                    label=o.label,
                    bbox=rotate90ccw_bbox(o.bbox),
                    confidence=o.confidence,
                    points=tuple(rotate90ccw_point(p) for p in o.points),
                    attributes=dict(o.attributes),
                    text=o.text,
                )
                for o in scene.objects
            )
            blocks = tuple(
                TextBlock(
                    text=b.text,
                    bbox=rotate90ccw_bbox(b.bbox),
                    words=tuple(
                        Word(text=w.text, bbox=rotate90ccw_bbox(w.bbox), confidence=w.confidence)
                        for w in b.words
                    ),
                )
                for b in scene.text_blocks
            )
            elements = tuple(
                UiElement(kind=e.kind, bbox=rotate90ccw_bbox(e.bbox), text=e.text)
                for e in scene.ui_elements
            )
            scene = SceneFixture(
                width=scene.height,
                height=scene.width,
                objects=objects,
                text_blocks=blocks,
                ui_elements=elements,
            )

        ref = self._put_fixture(
            scene, Modality.image, meta={"width": scene.width, "height": scene.height}
        )
        return {"image": ref.to_json()}, (ref,)

    def generate(self, input: Mapping[str, Any]) -> tuple[dict, tuple[ArtifactRef, ...]]:
        mode = input["mode"]
        prompt = input["prompt"]
        refs = [self._resolve_id(r) for r in input.get("refs", [])]
        if mode != "t2i" and not refs:
            raise MissingRefs(f"mode {mode!r} requires at least one reference")
        descriptor = json.dumps(
            {"kind": "generated", "mode": mode, "prompt": prompt, "refs": refs},
            sort_keys=True,
            separators=(",", ":"),
        ).encode()
        modality = Modality.video if mode == "video" else Modality.image
        ref = self._put_bytes(descriptor, FIXTURE_MIME, modality, meta={"mode": mode})
        return {"artifact": ref.to_json()}, (ref,)

    # -- document tools -----------------------------------------------------

    def doc_layout(self, input: Mapping[str, Any]) -> dict:
        doc = self._doc(input["document"])
        page = input.get("page")
        if page is not None:
            page = int(page)
            if not 0 <= page < len(doc.pages):
                raise PageOutOfRange(f"page {page} outside 0..{len(doc.pages) - 1}")
            indices: Iterable[int] = [page]
        else:
            indices = range(len(doc.pages))
        blocks = []
        for pi in indices:
            for block in sorted(doc.pages[pi].blocks, key=lambda b: b.order):
                entry = block.to_json()
                entry["page"] = pi
                blocks.append(entry)
        return {"blocks": blocks}

    def doc_form_extract(self, input: Mapping[str, Any]) -> dict:
        doc = self._doc(input["document"])
        merged: dict[str, dict] = {}
        order: list[str] = []
        for pi, page in enumerate(doc.pages):
            for f in page.fields:
                if f.name not in merged:
                    order.append(f.name)
                    merged[f.name] = {**f.to_json(), "page": pi, "provenance": [pi]}
                else:
                    entry = merged[f.name]
                    entry.update(f.to_json())
                    entry["page"] = pi
                    entry["provenance"].append(pi)
        return {"fields": [merged[name] for name in order]}

    def doc_paginate(self, input: Mapping[str, Any]) -> dict:
        doc = self._doc(input["document"])
        qt = _tokens(input["query"])
        scored = []
        for pi, page in enumerate(doc.pages):
            page_tokens = _tokens(" ".join(b.text for b in page.blocks))
            score = len(qt & page_tokens)
            if score > 0:
                scored.append((-score, pi))
        scored.sort()
        return {"pages": [pi for _, pi in scored]}

    def doc_redact(self, input: Mapping[str, Any]) -> tuple[dict, tuple[ArtifactRef, ...]]:
        doc = self._doc(input["document"])
        targets = [t for t in input["targets"] if t]

        def scrub(text: str) -> str:
            for target in targets:
                text = re.sub(
                    re.escape(target), lambda m: "█" * len(m.group(0)), text, flags=re.IGNORECASE
                )
            return text

        pages = tuple(
            DocPage(
                blocks=tuple(
                    DocBlock(type=b.type, text=scrub(b.text), bbox=b.bbox, order=b.order)
                    for b in page.blocks
                ),
                fields=tuple(
                    DocField(
                        name=f.name,
                        value=scrub(f.value),
                        name_bbox=f.name_bbox,
                        value_bbox=f.value_bbox,
                        handwritten=f.handwritten,
                    )
                    for f in page.fields
                ),
            )
            for page in doc.pages
        )
        redacted = DocFixture(pages=pages)
        ref = self._put_fixture(redacted, Modality.document, meta={"pages": len(pages)})
        return {"document": ref.to_json()}, (ref,)

    # -- video tools --------------------------------------------------------

    def video_caption(self, input: Mapping[str, Any]) -> dict:
        video = self._video(input["video"])
        ordered = sorted(enumerate(video.segments), key=lambda isg: (isg[1].seg.start_ms, isg[0]))
        entries = [
            {
                "seg": {"start_ms": s.seg.start_ms, "end_ms": s.seg.end_ms},
                "caption": s.caption,
            }
            for _, s in ordered
        ]
        return {"entries": entries}

    def temporal_ground(self, input: Mapping[str, Any]) -> dict:
        video = self._video(input["video"])
        qt = _tokens(input["query"])
        candidates = []
        for i, s in enumerate(video.segments):
            seg_tokens = _tokens(" ".join((s.caption, *s.tags)))
            if qt & seg_tokens:
                candidates.append((-s.salience, s.seg.start_ms, i))
        if not candidates:
            raise NoMatch(f"no segment matches {input['query']!r}")
        candidates.sort()
        best = video.segments[candidates[0][2]]
        return {"segment": {"start_ms": best.seg.start_ms, "end_ms": best.seg.end_ms}}

    def _frame_at(self, video: VideoFixture, at_ms: int) -> ArtifactRef:
        scene = next(
            (s.scene for s in video.segments if s.scene is not None and s.seg.start_ms <= at_ms < s.seg.end_ms),
            None,
        )
        if scene is None:
            scene = SceneFixture(width=640, height=360)
        return self._put_fixture(
            scene,
            Modality.image,
            extra={"sampled_at_ms": at_ms},
            meta={"sampled_at_ms": at_ms},
        )

    def frame_sample(self, input: Mapping[str, Any]) -> tuple[dict, tuple[ArtifactRef, ...]]:
        video = self._video(input["video"])
        at = input["at"]
        if "interval_ms" in at:
            interval = int(at["interval_ms"])
            if interval <= 0:
                raise ToolError("interval_ms must be positive")
            instants = list(range(0, video.duration_ms, interval))
        elif "timestamps_ms" in at:
            instants = [int(t) for t in at["timestamps_ms"] if 0 <= int(t) < video.duration_ms]
        else:
            raise ToolError("at must carry interval_ms or timestamps_ms")
        refs = tuple(self._frame_at(video, t) for t in instants)
        return {"frames": [r.to_json() for r in refs]}, refs

    def _trimmed(self, video: VideoFixture, window: TimeSegment) -> VideoFixture:
        segments = []
        for s in video.segments:
            start = max(s.seg.start_ms, window.start_ms)
            end = min(s.seg.end_ms, window.end_ms)
            if start >= end:
                continue
            segments.append(
                VideoSegment(
                    seg=TimeSegment(start - window.start_ms, end - window.start_ms),
                    tags=s.tags,
                    caption=s.caption,
                    salience=s.salience,
                    scene=s.scene,
                )
            )
        return VideoFixture(
            duration_ms=window.end_ms - window.start_ms, fps=video.fps, segments=tuple(segments)
        )

    def highlight_extract(self, input: Mapping[str, Any]) -> tuple[dict, tuple[ArtifactRef, ...]]:
        video = self._video(input["video"])
        k = int(input["k"])
        if k < 0:
            raise ToolError("k must be non-negative")
        ranked = sorted(
            enumerate(video.segments), key=lambda isg: (-isg[1].salience, isg[1].seg.start_ms, isg[0])
        )
        highlights = []
        refs = []
        for _, s in ranked[:k]:
            clip = self._trimmed(video, s.seg)
            ref = self._put_fixture(clip, Modality.video, meta={"duration_ms": clip.duration_ms})
            refs.append(ref)
            highlights.append(
                {"seg": {"start_ms": s.seg.start_ms, "end_ms": s.seg.end_ms}, "url": ref.url}
            )
        return {"highlights": highlights}, tuple(refs)

    def trim(self, input: Mapping[str, Any]) -> tuple[dict, tuple[ArtifactRef, ...]]:
        video = self._video(input["video"])
        seg = input["seg"]
        try:
            window = TimeSegment(int(seg["start_ms"]), int(seg["end_ms"]))
        except Exception as exc:
            raise ToolError(f"bad segment: {exc}") from exc
        if window.start_ms >= window.end_ms:
            raise ToolError("segment must have positive duration")
        if window.end_ms > video.duration_ms:
            raise OutOfRange(
                f"segment ends at {window.end_ms}ms but the video is {video.duration_ms}ms"
            )
        clip = self._trimmed(video, window)
        ref = self._put_fixture(clip, Modality.video, meta={"duration_ms": clip.duration_ms})
        return {"video": ref.to_json()}, (ref,)


def catalog_path() -> Path:
    return Path(str(resources.files("orion").joinpath("data/catalog.json")))


def register_all(
    registry: ToolRegistry, store: ArtifactStore, catalog: Optional[str | Path] = None
) -> ToolRegistry:
    """Register the whole reference catalog against one store."""
    from orion.registry import load_catalog

    toolbox = FixtureToolbox(store)

    def binder(binding: str):
        scheme, _, name = binding.partition(":")
        if scheme != "fixture" or not hasattr(toolbox, name):
            raise ToolError(f"unknown backend binding {binding!r}")
        return getattr(toolbox, name)

    return load_catalog(catalog or catalog_path(), binder, registry)
