"""Python access to the ulab core: models, data, RefDist, unlearners, metrics and the harness."""

import json

from ._ulab import *  # noqa: F401,F403
from ._ulab import default_config as _default_config_json
from ._ulab import run_experiment as _run_experiment_json


def default_config() -> dict:
    """The calibrated default experiment config as a dict."""
    return json.loads(_default_config_json())


def run_experiment(config=None, output_dir=None, sweep=True):
    """Run the full protocol from a config dict (merged over the defaults by the core)."""
    return _run_experiment_json(json.dumps(config or {}), output_dir, sweep)
