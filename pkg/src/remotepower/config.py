"""JSON experiment configs: defaults, merging, and model construction.

A config is one JSON document with the sections process, channel, reception,
actions, cost, grid, solver, and simulate.  User files override defaults key
by key within each section; unknown sections or keys are rejected so typos
fail loudly instead of silently running the default.
"""

from __future__ import annotations

import copy
import json
import math

from .belief import GridGeometry
from .model import (
    ActionSet,
    ControlProblem,
    CostWeights,
    FadingChannel,
    ModelError,
    ReceptionModel,
    ScalarProcess,
    reception_prob,
)


class ConfigError(ValueError):
    """Config file missing, malformed, or containing unknown/invalid entries."""


DEFAULT_CONFIG: dict = {
    "process": {"a": 1.2, "noise_var": 1.0, "init_var": 1.0},
    "channel": {
        "gains": [0.5, 2.0],
        "transition": [[0.8, 0.2], [0.3, 0.7]],
        "initial_gain_index": 0,
    },
    "reception": {"form": "exponential", "scale": 1.0, "on_level": None, "on_prob": 1.0},
    "actions": {"levels": [0.0, 1.0, 2.0, 4.0], "saturation_radius": 12.0,
                "lipschitz_bound": None},
    "cost": {"alpha": 0.5},
    "grid": {"half_width": 60.0, "n_points": 4001, "convolution": "fft"},
    "solver": {"depth": 8, "tol_rho": 1e-6, "max_rounds": 200, "threshold_points": None},
    "simulate": {
        "horizon": 1_000_000,
        "replications": 20,
        "base_seed": 20250817,
        "estimator": "closed_form",
        "window": 100_000,
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def merge_config(user: dict) -> dict:
    """Overlay a user config on the defaults, rejecting unknown keys."""
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    resolved = default_config()
    for section, entries in user.items():
        if section not in resolved:
            raise ConfigError(
                f"unknown config section {section!r}; "
                f"expected one of {sorted(resolved)}"
            )
        if not isinstance(entries, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, value in entries.items():
            if key not in resolved[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section {section!r}; "
                    f"expected one of {sorted(resolved[section])}"
                )
            resolved[section][key] = value
    return resolved


def load_config(path: str | None) -> dict:
    """Read and resolve a config file; None means pure defaults."""
    if path is None:
        return default_config()
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"malformed JSON in {path} at line {err.lineno} column {err.colno}: {err.msg}"
        ) from err
    return merge_config(user)


def build_problem(cfg: dict) -> ControlProblem:
    try:
        process = ScalarProcess(
            a=float(cfg["process"]["a"]),
            noise_var=float(cfg["process"]["noise_var"]),
            init_var=float(cfg["process"]["init_var"]),
        )
        channel = FadingChannel(
            gains=tuple(float(g) for g in cfg["channel"]["gains"]),
            transition=tuple(
                tuple(float(p) for p in row) for row in cfg["channel"]["transition"]
            ),
            initial_gain_index=int(cfg["channel"]["initial_gain_index"]),
        )
        rc = cfg["reception"]
        reception = ReceptionModel(
            form=rc["form"],
            scale=float(rc["scale"]),
            on_level=None if rc["on_level"] is None else float(rc["on_level"]),
            on_prob=float(rc["on_prob"]),
        )
        ac = cfg["actions"]
        actions = ActionSet(
            levels=tuple(float(u) for u in ac["levels"]),
            saturation_radius=float(ac["saturation_radius"]),
            lipschitz_bound=None
            if ac["lipschitz_bound"] is None
            else float(ac["lipschitz_bound"]),
        )
        cost = CostWeights(alpha=float(cfg["cost"]["alpha"]))
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, ModelError):
            raise
        raise ConfigError(f"invalid config value: {err}") from err
    return ControlProblem(process, channel, reception, actions, cost)


def default_geometry(
    problem: ControlProblem, n_points: int = 2001, convolution: str = "direct"
) -> GridGeometry:
    """Grid wide enough for the worst sustained failure run: half width
    30 * sqrt(W / (1 - q(u_max, h_min))), i.e. wider the likelier failures."""
    q_min = float(
        reception_prob(
            problem.reception, problem.actions.u_max, min(problem.channel.gains)
        )
    )
    if q_min >= 1.0:
        q_min = 1.0 - 1e-6
    half = 30.0 * math.sqrt(problem.process.noise_var / (1.0 - q_min))
    return GridGeometry(half_width=half, n_points=n_points, convolution=convolution)


def build_geometry(cfg: dict, problem: ControlProblem | None = None) -> GridGeometry:
    """Geometry from the grid section; a null half_width invokes the default
    sizing heuristic (which then needs the problem)."""
    grid = cfg["grid"]
    if grid["half_width"] is None:
        if problem is None:
            raise ConfigError("grid.half_width: null requires the model sections")
        geo = default_geometry(
            problem, n_points=int(grid["n_points"]), convolution=grid["convolution"]
        )
        return geo
    try:
        return GridGeometry(
            half_width=float(grid["half_width"]),
            n_points=int(grid["n_points"]),
            convolution=grid["convolution"],
        )
    except ValueError as err:
        raise ConfigError(f"invalid grid section: {err}") from err
