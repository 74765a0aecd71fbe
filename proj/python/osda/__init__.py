"""Open-set domain adaptation with negative supervision.

Thin wrapper over the C++ core: configs are plain dicts, arrays are numpy.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    ContractError,
    Dataset,
    IoError,
    LabelSpace,
    Model,
    NumericError,
    TrainingError,
    h_score,
    load_model,
    loss,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "Dataset",
    "IoError",
    "LabelSpace",
    "Model",
    "NumericError",
    "Trainer",
    "TrainingError",
    "default_config",
    "evaluate",
    "evaluate_decisions",
    "event_schedule",
    "extract_negatives",
    "h_score",
    "load_data",
    "load_model",
    "loss",
    "openness_sweep",
    "synthetic_benchmark",
    "train",
]


def _dump(d):
    return json.dumps(d or {})


def default_config():
    return json.loads(_core.default_config())


def synthetic_benchmark(spec=None):
    """(source, target, label_space) for the 2-D Gaussian benchmark."""
    return _core.synthetic_benchmark(_dump(spec))


def load_data(dataset):
    return _core.load_data(json.dumps(dataset))


def event_schedule(config=None):
    return _core.event_schedule(_dump(config))


def train(config, source, target, label_space):
    return _core.train(_dump(config), source, target, label_space)


def evaluate(model, target, label_space):
    return json.loads(_core.evaluate(model, target, label_space))


def evaluate_decisions(decisions, label_space):
    """decisions: iterable of (true_class, predicted_class or None)."""
    return json.loads(_core.evaluate_decisions(list(decisions), label_space))


def extract_negatives(model, target, threshold=0.9):
    """[(row, sample_id, 1 - p_o)] for target rows strictly above threshold."""
    return _core.extract_negatives(model, target, threshold)


def openness_sweep(config, counts, spec=None, repeats=1):
    return _core.openness_sweep(_dump(config), _dump(spec), list(counts), repeats)


class Trainer(_core.Trainer):
    def __init__(self, config, source, target, label_space):
        super().__init__(_dump(config), source, target, label_space)

    @property
    def config(self):
        return json.loads(self.config_json)
