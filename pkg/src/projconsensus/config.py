"""Experiment configuration: JSON schema, seeding and named recipes."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np

MODES = ("sync", "async", "tracking", "lsq", "rate", "necessity")

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}
_arcs = {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                    "minItems": 2, "maxItems": 2}}

SCHEMA = {
    "type": "object",
    "required": ["mode"],
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": list(MODES)},
        "seed": {"type": "integer", "minimum": 0},
        "problem": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["blocks"],
                    "additionalProperties": False,
                    "properties": {
                        "blocks": {
                            "type": "array", "minItems": 1,
                            "items": {"type": "object", "required": ["A", "b"],
                                      "additionalProperties": False,
                                      "properties": {"A": _matrix, "b": _vector}},
                        },
                        "x_star": _vector,
                    },
                },
                {
                    "type": "object",
                    "required": ["generator"],
                    "additionalProperties": False,
                    "properties": {
                        "generator": {
                            "type": "object",
                            "required": ["m", "n", "block_rows"],
                            "additionalProperties": False,
                            "properties": {
                                "m": {"type": "integer", "minimum": 1},
                                "n": {"type": "integer", "minimum": 1},
                                "block_rows": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                                "seed": {"type": "integer", "minimum": 0},
                                "solvable": {"type": "boolean"},
                                "rank": {"type": "integer", "minimum": 0},
                                "cond": {"type": ["number", "null"], "minimum": 1},
                            },
                        }
                    },
                },
                {
                    "type": "object",
                    "required": ["time_varying"],
                    "additionalProperties": False,
                    "properties": {
                        "time_varying": {
                            "type": "object",
                            "required": ["A", "b"],
                            "additionalProperties": False,
                            "properties": {
                                "A": {"type": "object", "required": ["base", "perturbation", "frequency"],
                                      "properties": {"base": _matrix, "perturbation": _matrix,
                                                     "frequency": {"type": "number"}},
                                      "additionalProperties": False},
                                "b": {"type": "object", "required": ["base", "perturbation", "frequency"],
                                      "properties": {"base": _vector, "perturbation": _vector,
                                                     "frequency": {"type": "number"}},
                                      "additionalProperties": False},
                                "block_rows": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                                "det_floor": {"type": "number", "exclusiveMinimum": 0},
                                "amplitude": {"type": "number"},
                            },
                        },
                        "initial_states": _matrix,
                    },
                },
            ]
        },
        "schedule": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["fixed", "periodic", "seeded-random"]},
                "graph": {"oneOf": [_arcs, {"enum": ["complete", "ring", "self-loops"]}]},
                "period": {"type": "array", "items": _arcs, "minItems": 1},
                "seed": {"type": "integer", "minimum": 0},
                "l": {"type": "integer", "minimum": 1},
                "density": {"type": "number", "minimum": 0, "maximum": 1},
                "window_style": {"enum": ["planted-ring"]},
            },
        },
        "events": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": _vector,
                "T_bar": _vector,
                "seed": {"type": "integer", "minimum": 0},
                "times": {"type": "array", "items": _vector},
            },
        },
        "tree": {"oneOf": [{"enum": ["path", "star"]}, _arcs]},
        "rate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["exhaustive", "sampled"]},
                "samples": {"type": "integer", "minimum": 1},
            },
        },
        "max_steps": {"type": "integer", "minimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "horizon": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
    },
}


class ConfigError(ValueError):
    """The configuration does not validate; ``errors`` lists ``(path, message)``."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {msg}" for p, msg in errors))


def validate(config: dict) -> dict:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError([("/" + "/".join(str(p) for p in e.absolute_path), e.message) for e in errors])
    return config


def load(path: str | Path) -> dict:
    with open(path) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([("/", f"invalid JSON: {exc}")]) from None
    return validate(config)


def derived_seeds(seed: int) -> dict[str, int]:
    """Independent sub-seeds for each random component, from one top-level seed.

    Uses numpy's ``SeedSequence(seed).spawn`` so each stream is stable
    across runs and platforms.
    """
    names = ("problem", "init", "schedule", "events", "rate")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: int(c.generate_state(1, dtype=np.uint32)[0]) for name, c in zip(names, children)}


DEFAULT_SEED = 20150101

_RECIPES: dict[str, dict] = {
    "sync-unique": {
        "mode": "sync",
        "problem": {"generator": {"m": 3, "n": 4, "block_rows": [2, 1, 1], "solvable": True}},
        "schedule": {"kind": "seeded-random", "l": 3},
        "max_steps": 10000,
        "tol": 1e-9,
    },
    "sync-nonunique": {
        "mode": "sync",
        "problem": {"generator": {"m": 3, "n": 4, "block_rows": [2, 1, 1], "solvable": True, "rank": 3}},
        "schedule": {"kind": "seeded-random", "l": 3},
        "max_steps": 10000,
        "tol": 1e-9,
    },
    "rate-corollary": {
        "mode": "rate",
        # kernels are the lines at 0 and 60 degrees
        "problem": {"blocks": [
            {"A": [[0.0, 1.0]], "b": [0.0]},
            {"A": [[-0.8660254037844386, 0.5]], "b": [0.0]},
        ], "x_star": [0.0, 0.0]},
        "schedule": {"kind": "fixed", "graph": "complete"},
        "rate": {"method": "exhaustive"},
        "max_steps": 1000,
        "tol": 1e-9,
    },
    "necessity": {
        "mode": "necessity",
        "problem": {"generator": {"m": 4, "n": 4, "block_rows": [1, 1, 1, 1], "solvable": True}},
        "schedule": {"kind": "fixed", "graph": [[0, 1], [1, 0], [2, 3], [3, 2]]},
        "max_steps": 10000,
        "tol": 1e-9,
    },
    "async-fixed": {
        "mode": "async",
        "problem": {"generator": {"m": 3, "n": 4, "block_rows": [2, 1, 1], "solvable": True}},
        "schedule": {"kind": "fixed", "graph": "ring"},
        "events": {"T": [0.5, 0.5, 0.5], "T_bar": [1.7, 1.7, 1.7]},
        "horizon": 2000,
        "tol": 1e-9,
    },
    "tracking-paper-example": {
        "mode": "tracking",
        "problem": {
            "time_varying": {
                "A": {"base": [[2, 3, 5], [4, 9, -8], [1, 5, 10]],
                      "perturbation": [[0.1, 0.09, -0.24], [0.2, -0.6, 0.1], [0.03, 0.05, 0.4]],
                      "frequency": 0.1},
                "b": {"base": [10, 5, 16], "perturbation": [0.1, 0.2, 0.3], "frequency": 0.6},
                "block_rows": [1, 1, 1],
            },
            "initial_states": [[11.5, -1, -2], [1.25, 0, 0], [-9, 1, 2]],
        },
        "schedule": {"kind": "fixed", "graph": "complete"},
        "horizon": 300,
    },
    "lsq-demo": {
        "mode": "lsq",
        "problem": {"generator": {"m": 3, "n": 3, "block_rows": [3, 3, 3], "solvable": False}},
        "schedule": {"kind": "seeded-random", "l": 3, "density": 0.5},
        "tree": "path",
        "max_steps": 100000,
        "tol": 1e-9,
    },
}

RECIPES = tuple(_RECIPES)


def recipe(name: str) -> dict:
    """A validated copy of a named recipe with the default seed filled in."""
    try:
        config = copy.deepcopy(_RECIPES[name])
    except KeyError:
        raise KeyError(f"unknown recipe {name!r}; choose from {', '.join(RECIPES)}") from None
    config["seed"] = DEFAULT_SEED
    return validate(config)
