"""Three bundled sample images for smoke tests and conformance runs.

leaf.png mimics a diseased crop leaf (small brown lesions on green), the
setting the heuristic detector is calibrated for; coins.png and cells.png
are bright-on-gray and blue-on-light scenes exercising other lexicon bands.
"""

from importlib.resources import files
from pathlib import Path

SAMPLE_NAMES = ("leaf.png", "coins.png", "cells.png")


def sample_bytes(name: str) -> bytes:
    if name not in SAMPLE_NAMES:
        raise KeyError(f"unknown sample {name!r}; have {SAMPLE_NAMES}")
    return (files(__package__) / "data" / name).read_bytes()


def write_samples(out_dir: str | Path) -> list[Path]:
    """Materialize all bundled samples into a directory; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in SAMPLE_NAMES:
        path = out / name
        path.write_bytes(sample_bytes(name))
        paths.append(path)
    return paths
