"""
Model and config files.

A model file is a JSON document holding the architecture (with explicit
wiring), one (midpoint, log_halfwidth) pair per projection and the
classifier. Kernel noise is not stored: it is regenerated from the seed, so
a reloaded model is bit-identical to the saved one.

Files are written by hand rather than with ``json.dumps`` so that the
layout and the float formatting are fixed: floats use 17 significant digits
and always carry a decimal point or exponent. Saving a loaded model
reproduces the original file byte for byte.
"""

import json
import math
from pathlib import Path

import numpy as np

from .core import LayerSpec, ModelConfig
from .exceptions import FormatError
from .network import Model, draw_noise

__all__ = [
    "FORMAT_VERSION",
    "dump_config",
    "dumps_config",
    "dumps_model",
    "load_config",
    "load_model",
    "loads_config",
    "loads_model",
    "save_model",
]

FORMAT_VERSION = 1
INDENT = "  "

_CONFIG_KEYS = ("seed", "num_classes", "input_height", "input_width", "smr_window", "layers")
_LAYER_KEYS = ("num_projections", "support", "wiring")
_MODEL_KEYS = ("format_version", "config", "distributions", "classifier")


def format_float(value):
    value = float(value)
    if not math.isfinite(value):
        raise FormatError(f"cannot write non-finite value {value!r}")
    text = format(value, ".17g")
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def _floats(values):
    return "[" + ", ".join(format_float(v) for v in values) + "]"


def _ints(values):
    return "[" + ", ".join(str(int(v)) for v in values) + "]"


def _block(items, depth):
    """Join pre-rendered ``items`` into an indented JSON array or object body."""
    pad = INDENT * (depth + 1)
    return ",\n".join(pad + item for item in items) + "\n" + INDENT * depth


def _layer_text(layer):
    wiring = "null" if layer.wiring is None else _ints(layer.wiring)
    return f'{{"num_projections": {layer.num_projections}, "support": {layer.support}, "wiring": {wiring}}}'


def _config_text(config, depth):
    items = [
        f'"seed": {config.seed}',
        f'"num_classes": {config.num_classes}',
        f'"input_height": {config.input_height}',
        f'"input_width": {config.input_width}',
        f'"smr_window": {config.smr_window}',
        '"layers": [\n' + _block([_layer_text(layer) for layer in config.layers], depth + 1) + "]",
    ]
    return "{\n" + _block(items, depth) + "}"


def dumps_config(config):
    return _config_text(config, 0) + "\n"


def dump_config(config, path):
    Path(path).write_text(dumps_config(config), encoding="utf-8")


def dumps_model(model):
    distributions = [
        "[" + ", ".join(_floats(pair) for pair in zip(m, rho, strict=True)) + "]"
        for m, rho in zip(model.midpoints, model.log_halfwidths, strict=True)
    ]
    classifier = [
        '"weights": [\n' + _block([_floats(row) for row in model.classifier_weights], 2) + "]",
        f'"bias": {_floats(model.classifier_bias)}',
    ]
    items = [
        f'"format_version": {FORMAT_VERSION}',
        f'"config": {_config_text(model.config, 1)}',
        '"distributions": [\n' + _block(distributions, 1) + "]",
        '"classifier": {\n' + _block(classifier, 1) + "}",
    ]
    return "{\n" + _block(items, 0) + "}\n"


def save_model(model, path):
    Path(path).write_text(dumps_model(model), encoding="utf-8")


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------


def _parse_json(text, source):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{source}: invalid JSON ({e})") from e


def _check_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise FormatError(f"{where} must be a JSON object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise FormatError(f"{where} has unknown keys: {', '.join(sorted(unknown))}")
    missing = [key for key in required if key not in obj]
    if missing:
        raise FormatError(f"{where} is missing keys: {', '.join(missing)}")


def _integer(value, where):
    if isinstance(value, bool) or not isinstance(value, int):
        raise FormatError(f"{where} must be an integer, got {value!r}")
    return value


def _config_from_obj(obj, source):
    _check_keys(obj, _CONFIG_KEYS, ("layers",), f"{source}: config")
    layers_obj = obj["layers"]
    if not isinstance(layers_obj, list):
        raise FormatError(f"{source}: config.layers must be a list")
    layers = []
    for index, layer_obj in enumerate(layers_obj):
        where = f"{source}: layer {index}"
        _check_keys(layer_obj, _LAYER_KEYS, ("num_projections",), where)
        wiring = layer_obj.get("wiring")
        if wiring is not None:
            if not isinstance(wiring, list):
                raise FormatError(f"{where}: wiring must be a list or null")
            wiring = tuple(_integer(k, f"{where}: wiring entry") for k in wiring)
        layers.append(
            LayerSpec(
                num_projections=_integer(layer_obj["num_projections"], f"{where}: num_projections"),
                support=_integer(layer_obj.get("support", 25), f"{where}: support"),
                wiring=wiring,
            )
        )
    options = {key: _integer(obj[key], f"{source}: {key}") for key in _CONFIG_KEYS[:-1] if key in obj}
    return ModelConfig(layers=tuple(layers), **options)


def loads_config(text, source="<config>"):
    return _config_from_obj(_parse_json(text, source), source)


def load_config(path):
    path = Path(path)
    return loads_config(path.read_text(encoding="utf-8"), str(path))


def _float_rows(value, where):
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise FormatError(f"{where} must hold numbers only") from e
    return arr


def loads_model(text, source="<model>"):
    obj = _parse_json(text, source)
    _check_keys(obj, _MODEL_KEYS, _MODEL_KEYS, source)
    if obj["format_version"] != FORMAT_VERSION:
        raise FormatError(f"{source}: unsupported format_version {obj['format_version']!r}")
    config = _config_from_obj(obj["config"], source)
    if not config.is_wired:
        raise FormatError(f"{source}: model files must store the wiring of every layer")
    distributions = obj["distributions"]
    if not isinstance(distributions, list) or len(distributions) != config.num_layers:
        raise FormatError(f"{source}: expected {config.num_layers} layers of distributions")
    pairs = []
    for index, (layer, layer_pairs) in enumerate(zip(config.layers, distributions, strict=True)):
        arr = _float_rows(layer_pairs, f"{source}: distributions of layer {index}")
        if arr.shape != (layer.num_projections, 2):
            raise FormatError(f"{source}: layer {index} needs {layer.num_projections} (midpoint, log_halfwidth) pairs")
        pairs.append(arr)
    classifier = obj["classifier"]
    _check_keys(classifier, ("weights", "bias"), ("weights", "bias"), f"{source}: classifier")
    return Model.from_parameters(
        config,
        [arr[:, 0].copy() for arr in pairs],
        [arr[:, 1].copy() for arr in pairs],
        draw_noise(config),
        _float_rows(classifier["weights"], f"{source}: classifier weights"),
        _float_rows(classifier["bias"], f"{source}: classifier bias"),
    )


def load_model(path):
    path = Path(path)
    return loads_model(path.read_text(encoding="utf-8"), str(path))
