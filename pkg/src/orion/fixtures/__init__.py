"""Deterministic reference backends driven by structured fixture files."""

from orion.fixtures.media import (
    DocBlock,
    DocField,
    DocFixture,
    DocPage,
    FixtureError,
    SceneFixture,
    SceneObject,
    TextBlock,
    UiElement,
    VideoFixture,
    VideoSegment,
    Word,
    fixture_bytes,
    load_fixture,
    parse_fixture,
)
from orion.fixtures.toolbox import FixtureToolbox, register_all

__all__ = [
    "DocBlock",
    "DocField",
    "DocFixture",
    "DocPage",
    "FixtureError",
    "FixtureToolbox",
    "SceneFixture",
    "SceneObject",
    "TextBlock",
    "UiElement",
    "VideoFixture",
    "VideoSegment",
    "Word",
    "fixture_bytes",
    "load_fixture",
    "parse_fixture",
    "register_all",
]
