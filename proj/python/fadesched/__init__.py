"""Python access to the fadesched scheduling simulator and region analysis.

Configs and models are plain dicts with the same layout as the CLI's JSON
files (see ``preset``).
"""

import csv
import io
import json

from . import _core
from ._core import FadeschedError, ValidationError

__all__ = [
    "FadeschedError",
    "ValidationError",
    "analyze",
    "boundary_scale",
    "membership",
    "preset",
    "preset_names",
    "run",
    "run_csv",
]


def preset_names():
    return list(_core.preset_names())


def preset(name, full=False):
    return json.loads(_core.preset_json(name, full))


def run_csv(config, horizon=None, jobs=1):
    """Run every (sweep value, policy, seed) of ``config``; returns CSV text."""
    return _core.run_csv(json.dumps(config), horizon, jobs)


def run(config, horizon=None, jobs=1):
    """Like ``run_csv`` but parsed into a list of dicts (values kept as strings)."""
    return list(csv.DictReader(io.StringIO(run_csv(config, horizon, jobs))))


def analyze(config, lam=None):
    return json.loads(_core.analyze_json(json.dumps(config), None if lam is None else list(lam)))


def membership(model, lam):
    return json.loads(_core.membership_json(json.dumps(model), list(lam)))


def boundary_scale(model, direction):
    return _core.boundary_scale(json.dumps(model), list(direction))
