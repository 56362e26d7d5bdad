"""Python access to the aquilt C++ core."""

import json as _json
import os as _os
from pathlib import Path as _Path

_bundled = _Path(__file__).with_name("assets")
if _bundled.is_dir():
    _os.environ.setdefault("AQUILT_ASSETS", str(_bundled))

from ._core import (
    AquiltError,
    ConfigError,
    DependencyError,
    ParseError,
    PreconditionError,
    RangeError,
    SchemaError,
    choice_accuracy,
    exact_match,
    minimal_removals,
    normalize_answer,
    render_stats,
    rouge_l,
    select_cutoff,
    sha256_hex,
    squad_f1,
)
from . import _core


def extract_structured(text, schema):
    """Parse a model response into a dict for schema generation, inspection, yes-no or logic."""
    return _json.loads(_core.extract_structured(text, schema))


def evaluate_file(path):
    return _json.loads(_core.evaluate_file(str(path)))


def run_pipeline(config, out=None):
    return [_json.loads(r) for r in _core.run_pipeline(str(config), None if out is None else str(out))]


__all__ = [
    "AquiltError",
    "ConfigError",
    "DependencyError",
    "ParseError",
    "PreconditionError",
    "RangeError",
    "SchemaError",
    "choice_accuracy",
    "evaluate_file",
    "exact_match",
    "extract_structured",
    "minimal_removals",
    "normalize_answer",
    "render_stats",
    "rouge_l",
    "run_pipeline",
    "select_cutoff",
    "sha256_hex",
    "squad_f1",
]
