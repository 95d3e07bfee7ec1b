"""
Engine preset registry for the synthetic answer engine.

Presets register themselves at import time. core.synthengine.preset() and
the `simulate` subcommand look names up here.
"""

import logging
from typing import Dict, List

from core.errors import UnknownPreset
from engines.protocol import EnginePreset

logger = logging.getLogger(__name__)

ENGINE_REGISTRY: Dict[str, EnginePreset] = {}


def register_engine(engine: EnginePreset) -> None:
    """Register an engine preset. Called at module import time."""
    ENGINE_REGISTRY[engine.name] = engine
    logger.debug(f"Registered engine preset: {engine.name}")


def get_engine(name: str) -> EnginePreset:
    """Get a preset by name. Raises UnknownPreset if not registered."""
    key = name.strip().lower()
    if key not in ENGINE_REGISTRY:
        raise UnknownPreset(name, ENGINE_REGISTRY)
    return ENGINE_REGISTRY[key]


def list_engines() -> List[str]:
    return sorted(ENGINE_REGISTRY)


# Auto-import presets so they self-register at import time.
# This import must come after the registry functions are defined above.
from engines import presets  # noqa: F401, E402
