"""Experiment configuration: one JSON document with embedded defaults.

Omitted fields take the baseline values below (the published parameter
setting); unknown keys are rejected by name so typos cannot silently fall
back to defaults.  A loaded configuration serializes back to the identical
document (floats round-trip exactly through repr).
"""

import copy
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import Grid, GridSpec
from .model import ControlLayout, ModelParams
from .optimizer import OptimizerConfig
from .state_solver import StateField

SCENARIOS = ("simulate", "optimize", "sweep")

DEFAULTS = {
    "scenario": "simulate",
    "grid": {"T": 5.0, "a_max": 1.0, "dt": 0.01, "dx": 0.1, "x_lo": 0.0, "x_hi": 1.0},
    "model": {
        "c": 0.18564,
        "phi1": 0.0052,
        "phi2": 0.00062,
        "d_I": 0.0018,
        "gamma": 0.278574,
        "alpha": 500.0,
        "u_bar": 10.0,
        "g": [0.0, 0.0, 1.0, 0.0],
        "mu_scale": 1.0,
        "beta_scale": 1.0,
        "kernel_radius": 0.1,
        "sigma": {"S": [0.1, -0.1], "V": [0.1, -0.1], "I": [0.05, -0.1], "R": [0.1, -0.1]},
    },
    "control": {
        "regions": [[0.45, 0.55]],
        "age_breaks": [0.0, 0.18, 0.3, 0.5, 0.7, 1.0],
    },
    "optimizer": {
        "max_iters": 500,
        "rel_tol": 1e-8,
        "memory": 10,
        "sufficient_decrease": 1e-4,
        "backtrack": 0.5,
        "bb_min": 1e-8,
        "bb_max": 1e8,
        "bb_variant": "bb1",
    },
    "initial": {"S": 1000.0, "V": 0.0, "I": 10.0, "R": 0.0},
    "sweep_u_bars": [0.0, 10.0, 20.0, 50.0, 80.0],
    "out_dir": "out",
}


def _merge_section(name: str, defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if key not in defaults:
            raise ConfigurationError(f"{name}.{key}", "unknown configuration key")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigurationError(f"{name}.{key}", f"expected an object, got {val!r}")
            out[key] = _merge_section(f"{name}.{key}", defaults[key], val)
        else:
            out[key] = val
    return out


@dataclass
class ExperimentConfig:
    """Validated, fully-populated configuration document."""

    doc: dict

    @property
    def scenario(self) -> str:
        return self.doc["scenario"]

    @property
    def out_dir(self) -> str:
        return self.doc["out_dir"]

    @property
    def sweep_u_bars(self) -> list:
        return list(self.doc["sweep_u_bars"])

    def grid_spec(self) -> GridSpec:
        g = self.doc["grid"]
        return GridSpec(
            T=g["T"], a_max=g["a_max"], dt=g["dt"], dx=g["dx"], x_lo=g["x_lo"], x_hi=g["x_hi"]
        )

    def layout(self) -> ControlLayout:
        c = self.doc["control"]
        return ControlLayout(
            regions=tuple(tuple(r) for r in c["regions"]),
            age_breaks=tuple(c["age_breaks"]),
        )

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(**self.doc["optimizer"])

    def model_params(self, u_bar: float = None) -> ModelParams:
        m = self.doc["model"]
        a_max = self.doc["grid"]["a_max"]
        mu_scale, beta_scale = m["mu_scale"], m["beta_scale"]
        radius = m["kernel_radius"]
        sig = {k: tuple(v) for k, v in m["sigma"].items()}

        def exp_rate(coef, rate):
            return lambda a: coef * np.exp(rate * np.asarray(a, dtype=float))

        return ModelParams(
            a_max=a_max,
            c=m["c"],
            phi1=m["phi1"],
            phi2=m["phi2"],
            d_I=m["d_I"],
            gamma=m["gamma"],
            mu=lambda a: mu_scale * np.exp(-np.asarray(a, dtype=float)) * np.asarray(a, dtype=float) ** 5,
            beta_birth=lambda a: beta_scale
            * (6.78 / a_max)
            * np.asarray(a, dtype=float) ** 2
            * (a_max - np.asarray(a, dtype=float))
            * (1.0 + np.sin(np.pi * np.asarray(a, dtype=float) / a_max)),
            kernel=lambda x, xi: np.maximum(radius - np.abs(x - xi), 0.0),
            sigma_s=exp_rate(*sig["S"]),
            sigma_v=exp_rate(*sig["V"]),
            sigma_i=exp_rate(*sig["I"]),
            sigma_r=exp_rate(*sig["R"]),
            g=np.asarray(m["g"], dtype=float),
            alpha=m["alpha"],
            u_bar=m["u_bar"] if u_bar is None else float(u_bar),
        )

    def initial_state(self, grid: Grid) -> StateField:
        init = self.doc["initial"]
        if "table_file" in init:
            return _load_initial_table(init["table_file"], grid)
        data = np.empty((4, grid.na, grid.nx))
        for comp, key in enumerate(("S", "V", "I", "R")):
            data[comp] = float(init[key])
        return StateField(data)


def _load_initial_table(path: str, grid: Grid) -> StateField:
    """Per-node initial condition from a CSV with columns a, x, S, V, I, R."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.shape != (grid.na * grid.nx, 6):
        raise ConfigurationError(
            "initial.table_file",
            f"expected {grid.na * grid.nx} rows of 6 columns, got shape {rows.shape}",
        )
    data = np.empty((4, grid.na, grid.nx))
    ka = np.rint(rows[:, 0] / grid.dt).astype(int)
    km = np.rint((rows[:, 1] - grid.spec.x_lo) / grid.dx).astype(int)
    if not (
        np.all((ka >= 0) & (ka < grid.na))
        and np.all((km >= 0) & (km < grid.nx))
        and len(set(zip(ka.tolist(), km.tolist()))) == grid.na * grid.nx
    ):
        raise ConfigurationError("initial.table_file", "rows do not cover the grid nodes exactly")
    for comp in range(4):
        data[comp, ka, km] = rows[:, 2 + comp]
    return StateField(data)


def _normalize_initial(given) -> dict:
    if given is None:
        return copy.deepcopy(DEFAULTS["initial"])
    if not isinstance(given, dict):
        raise ConfigurationError("initial", f"expected an object, got {given!r}")
    if "table_file" in given:
        extra = set(given) - {"table_file"}
        if extra:
            raise ConfigurationError(
                "initial", f"table_file excludes other keys, got {sorted(extra)}"
            )
        return {"table_file": given["table_file"]}
    return _merge_section("initial", DEFAULTS["initial"], given)


def normalize(document: dict) -> dict:
    """Merge a raw JSON document over the defaults, rejecting unknown keys."""
    if not isinstance(document, dict):
        raise ConfigurationError("config", "top level must be a JSON object")
    document = dict(document)
    initial = document.pop("initial", None)
    defaults = {k: v for k, v in DEFAULTS.items() if k != "initial"}
    merged = _merge_section("config", defaults, document)
    merged["initial"] = _normalize_initial(initial)
    return merged


def validate(doc: dict) -> None:
    if doc["scenario"] not in SCENARIOS:
        raise ConfigurationError("scenario", f"must be one of {SCENARIOS}, got {doc['scenario']!r}")
    if doc["scenario"] == "sweep" and len(doc["sweep_u_bars"]) == 0:
        raise ConfigurationError("sweep_u_bars", "must be nonempty for the sweep scenario")
    init = doc["initial"]
    if "table_file" in init:
        if not os.path.isfile(init["table_file"]):
            raise ConfigurationError("initial.table_file", f"file not found: {init['table_file']}")
    else:
        for key in ("S", "V", "I", "R"):
            if key not in init:
                raise ConfigurationError(f"initial.{key}", "missing compartment constant")
    GridSpec(**doc["grid"]).validate()


def from_document(document: dict) -> ExperimentConfig:
    doc = normalize(document)
    validate(doc)
    return ExperimentConfig(doc=doc)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError("config", f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError("config", f"invalid JSON in {path}: {exc}")
    return from_document(document)


def dump_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
