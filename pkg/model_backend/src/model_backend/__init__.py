"""Model-serving backend for the segpipe annotation protocol.

Wraps a text-prompted detector and a box-prompted segmenter behind the
NDJSON stdio protocol. With model weights configured it serves Grounding
DINO and SAM; without them it falls back to deterministic heuristics so
the protocol surface stays fully testable.
"""

__version__ = "0.1.0"

from .config import BackendConfig, from_env, with_overrides

__all__ = ["BackendConfig", "from_env", "with_overrides", "__version__"]
