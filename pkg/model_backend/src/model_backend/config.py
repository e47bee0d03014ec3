"""Backend configuration from environment variables and CLI flags."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

ENV_PREFIX = "MODEL_BACKEND_"

ENGINES = ("auto", "models", "heuristic")


@dataclass(frozen=True)
class BackendConfig:
    """Everything the server needs to pick and initialize its engines.

    `engine="auto"` selects the real models when both weight paths are
    configured and the deterministic heuristic engine otherwise, so the
    backend is usable on machines without weights or a GPU.
    """

    engine: str = "auto"
    device: str = "cpu"
    max_side: int = 1024
    detector_weights: Path | None = None
    detector_config: Path | None = None
    segmenter_weights: Path | None = None
    sam_model_type: str = "vit_h"
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.max_side < 1:
            raise ValueError(f"max_side must be >= 1, got {self.max_side}")

    def resolved_engine(self) -> str:
        if self.engine != "auto":
            return self.engine
        if self.detector_weights and self.segmenter_weights:
            return "models"
        return "heuristic"

    def validate_startup(self) -> None:
        """Fail fast before serving: model weights must exist on disk."""
        if self.resolved_engine() != "models":
            return
        for label, path in (
            ("detector weights", self.detector_weights),
            ("segmenter weights", self.segmenter_weights),
        ):
            if path is None:
                raise ValueError(f"models engine requires {label} to be configured")
            if not Path(path).is_file():
                raise FileNotFoundError(f"{label} not found: {path}")
        if self.detector_config is not None and not Path(self.detector_config).is_file():
            raise FileNotFoundError(f"detector config not found: {self.detector_config}")


def _path_or_none(value: str | None) -> Path | None:
    return Path(value) if value else None


def from_env(environ: Mapping[str, str] | None = None) -> BackendConfig:
    """Read MODEL_BACKEND_* variables; unset ones keep their defaults."""
    env = os.environ if environ is None else environ

    def get(name: str, default: str | None = None) -> str | None:
        return env.get(ENV_PREFIX + name, default)

    return BackendConfig(
        engine=get("ENGINE", "auto"),
        device=get("DEVICE", "cpu"),
        max_side=int(get("MAX_SIDE", "1024")),
        detector_weights=_path_or_none(get("DETECTOR_WEIGHTS")),
        detector_config=_path_or_none(get("DETECTOR_CONFIG")),
        segmenter_weights=_path_or_none(get("SEGMENTER_WEIGHTS")),
        sam_model_type=get("SAM_MODEL_TYPE", "vit_h"),
    )


def with_overrides(config: BackendConfig, **overrides) -> BackendConfig:
    """Apply non-None overrides (CLI flags beat environment values)."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    for key in ("detector_weights", "detector_config", "segmenter_weights"):
        if key in changes:
            changes[key] = Path(changes[key])
    return replace(config, **changes) if changes else config
