"""Versioned JSON persistence for trained models.

Parameters are written with Python's shortest-round-trip float repr, so a
saved model reloads to bit-identical values and reproduces every read-out
exactly. The ansatz is stored as its recipe (kind, dims, layers, roles,
domains), not as a gate list; loading rebuilds the program and then insists
the parameter vector length matches what the recipe implies.
"""
from __future__ import annotations

import json

import numpy as np

from .circuits import build_ansatz
from .shiftrule import OutputMap, TrainedModel

FORMAT_VERSION = 1
ENTANGLER = "ring"  # the only layout the builders emit


class CheckpointError(Exception):
    """A checkpoint file could not be read back into a model."""


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def model_to_dict(model: TrainedModel) -> dict:
    t = model.template
    return {
        "format_version": FORMAT_VERSION,
        "ansatz": {
            "kind": t.kind,
            "input_dims": t.input_dims,
            "n_layers": t.n_layers,
            "dim_roles": list(t.dim_roles),
            "dim_domains": [[float(a), float(b)] for a, b in t.dim_domains],
            "entangler": ENTANGLER,
        },
        "parameters": [float(p) for p in model.params],
        "output_map": {
            "weight": float(model.output_map.weight),
            "offset": float(model.output_map.offset),
        },
        "metadata": _jsonable(dict(model.metadata)),
    }


def model_from_dict(payload: dict) -> TrainedModel:
    if not isinstance(payload, dict):
        raise CheckpointError("checkpoint root must be a JSON object")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported format_version {version!r}, this build reads {FORMAT_VERSION}"
        )
    try:
        ansatz = payload["ansatz"]
        kind = ansatz["kind"]
        entangler = ansatz["entangler"]
        template = build_ansatz(
            kind,
            ansatz["input_dims"],
            ansatz["n_layers"],
            dim_roles=tuple(ansatz["dim_roles"]),
            dim_domains=tuple(tuple(d) for d in ansatz["dim_domains"]),
        )
        params = np.array(payload["parameters"], dtype=np.float64)
        omap = OutputMap(
            float(payload["output_map"]["weight"]),
            float(payload["output_map"]["offset"]),
        )
        metadata = dict(payload.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    if entangler != ENTANGLER:
        raise CheckpointError(f"unknown entangler layout {entangler!r}")
    if params.ndim != 1 or len(params) != template.n_params:
        raise CheckpointError(
            f"parameter vector has {params.size} entries, "
            f"{kind} with {ansatz['n_layers']} layers needs {template.n_params}"
        )
    return TrainedModel(template, params, omap, metadata)


def save_model(model: TrainedModel, path) -> None:
    text = json.dumps(model_to_dict(model), indent=2) + "\n"
    with open(path, "w") as fh:
        fh.write(text)


def load_model(path) -> TrainedModel:
    try:
        with open(path) as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CheckpointError(
            f"{path} is not valid JSON at byte {exc.pos}: {exc.msg}"
        ) from exc
    return model_from_dict(payload)
