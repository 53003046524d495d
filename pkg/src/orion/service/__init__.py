"""HTTP surface and the request pipeline behind it."""

from orion.service.config import ServiceConfig
from orion.service.controller import AgentController, TierRouter, render_answer
from orion.service.app import create_app

__all__ = ["AgentController", "ServiceConfig", "TierRouter", "create_app", "render_answer"]
