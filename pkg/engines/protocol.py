"""
Engine preset protocol for the synthetic answer engine.

Each preset module exposes an object that satisfies this protocol and
registers it with engines.register_engine(). Use duck typing; no need to
inherit.
"""

from typing import Protocol, Tuple

from core.synthengine import SynthConfig


class EnginePreset(Protocol):
    """Interface that every engine preset must implement."""

    # --- Identity ---
    name: str                   # registry key, e.g. "searchgpt-like"
    description: str            # one line for --help / logs
    regimes: Tuple[str, ...]    # sampling regimes this preset can build

    # --- Configuration ---
    def build(self, regime: str = "daily", seed: int = 0) -> SynthConfig:
        """Return a SynthConfig for the given sampling regime and seed.

        Raise ConfigError for a regime the preset does not support.
        """
        ...
