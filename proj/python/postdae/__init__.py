"""Post-DAE: project segmentation masks onto a learned manifold of plausible anatomy.

Masks are ``uint8`` arrays of shape (height, width), images are ``float64``
arrays in [0, 1], soft masks are ``float64`` arrays of shape
(height, width, classes). Configurations are plain dicts; missing keys take
the library defaults.
"""

import json

import numpy as np

from . import _core
from ._core import Error, InsufficientDataError, TrainingError, set_threads, threads

__all__ = [
    "Error",
    "InsufficientDataError",
    "Model",
    "TrainingError",
    "build_model",
    "crf",
    "crf_params",
    "degrade",
    "degradation_preset",
    "dice",
    "fit_weak_classifier",
    "generate_scene",
    "hausdorff",
    "set_threads",
    "threads",
    "train",
    "weak_segment",
    "wilcoxon",
]

Model = _core.Model


def _dump(config):
    return "" if config is None else json.dumps(config)


def _num_classes(mask, num_classes):
    if num_classes is not None:
        return num_classes
    return max(2, int(np.max(mask)) + 1)


def generate_scene(index, config=None):
    """Return ``(image, mask)`` for scene ``index``."""
    return _core.generate_scene(_dump(config or {}), index)


def degradation_preset(severity, seed=0):
    return json.loads(_core.degradation_preset(severity, seed))


def degrade(mask, config="heavy", index=0, num_classes=None):
    """Corrupt a mask. ``config`` is a severity name or a config dict."""
    if isinstance(config, str):
        config = degradation_preset(config)
    return _core.degrade(mask, _num_classes(mask, num_classes), _dump(config), index)


def fit_weak_classifier(images, masks, num_classes=None):
    k = num_classes or max(_num_classes(m, None) for m in masks)
    return json.loads(_core.fit_weak_classifier(list(images), list(masks), k))


def weak_segment(image, params, stream=0):
    return _core.weak_segment(image, _dump(params), stream)


def crf_params(size):
    return json.loads(_core.crf_params(size))


def crf(unary, image, params=None):
    """Dense CRF mean-field refinement of a soft mask."""
    return _core.crf(unary, image, _dump(params))


def dice(a, b, label=1, num_classes=None):
    k = num_classes or max(_num_classes(a, None), _num_classes(b, None))
    return _core.dice(a, b, label, k)


def hausdorff(a, b, label=1, num_classes=None):
    k = num_classes or max(_num_classes(a, None), _num_classes(b, None))
    return _core.hausdorff(a, b, label, k)


def wilcoxon(x, y):
    """Two-sided paired signed-rank test; returns a dict with p_value."""
    return _core.wilcoxon(list(map(float, x)), list(map(float, y)))


def build_model(config=None, seed=0, num_classes=2, input_size=64):
    if config is None:
        config = json.loads(_core.default_model_config(num_classes, input_size))
    return _core.build_model(json.dumps(config), seed)


def train(masks, num_classes=None, train_config=None, model_config=None, on_epoch=None):
    """Train a model; returns ``(model, per-epoch mean losses)``."""
    masks = list(masks)
    k = num_classes or max(_num_classes(m, None) for m in masks)
    cfg = json.loads(_core.default_train_config())
    cfg.update(train_config or {})
    return _core.train(masks, k, json.dumps(cfg), _dump(model_config), on_epoch)
