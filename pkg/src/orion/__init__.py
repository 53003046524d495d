"""Orion: a plan-execute-reflect visual agent with typed multimodal tools."""

__version__ = "0.1.0"
