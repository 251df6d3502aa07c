"""Declarative experiment configuration.

A config is a single JSON document.  Unknown keys anywhere are rejected so a
typo can never silently fall back to a default.  Example::

    {
      "model": {"kind": "torus_wrapped_gaussian", "true_sigma": 0.1},
      "M_list": [2, 10, 50, 250],
      "N_list": [20, 200],
      "replicates": 50,
      "seed": 20240101,
      "theta_grid": {"lo": 0.02, "hi": 0.5, "count": 61},
      "optimizer": {"grid_points": 61, "refine_tol": 1e-6},
      "outputs": {"directory": "out", "formats": ["csv", "svg"]}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import DensityModel
from ..errors import ConfigError
from ..models import BivariateNormalRatioModel, DiscreteTabularModel, TorusWrappedGaussianModel
from ..optimize import MinimizeOptions

__all__ = ["ExperimentConfig", "ThetaGrid", "load_config", "build_model",
           "MODEL_KINDS", "DEFAULT_CONFIGS"]

_U64 = (1 << 64) - 1

MODEL_KINDS = {
    "torus_wrapped_gaussian": {"kind", "true_sigma", "sigma_domain", "truncation_radius"},
    "bivariate_normal_ratio": {"kind", "true_rho", "tau"},
    "discrete_tabular": {"kind", "mu", "nu", "features", "theta_domain", "true_theta"},
}
_TOP_KEYS = {"model", "theta_star", "M_list", "N_list", "replicates", "seed",
             "theta_grid", "optimizer", "outputs"}


def _check_keys(block: dict, allowed: set, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def build_model(block: dict, theta_star: Optional[float] = None) -> DensityModel:
    """Instantiate the model described by a config ``model`` block.

    ``theta_star``, when given, replaces the block's true parameter.
    """
    kind = block.get("kind") if isinstance(block, dict) else None
    if kind not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {sorted(MODEL_KINDS)}, got {kind!r}")
    _check_keys(block, MODEL_KINDS[kind], f"model ({kind})")
    try:
        if kind == "torus_wrapped_gaussian":
            return TorusWrappedGaussianModel(
                true_sigma=block.get("true_sigma", 0.1) if theta_star is None else theta_star,
                sigma_domain=tuple(block.get("sigma_domain", (0.02, 0.5))),
                truncation_radius=int(block.get("truncation_radius", 4)))
        if kind == "bivariate_normal_ratio":
            return BivariateNormalRatioModel(
                true_rho=block.get("true_rho", -0.5) if theta_star is None else theta_star,
                tau=float(block.get("tau", 0.05)))
        missing = {"mu", "nu", "features", "theta_domain"} - set(block)
        if missing:
            raise ConfigError(f"discrete_tabular model needs {sorted(missing)}")
        lo, hi = block["theta_domain"]
        return DiscreteTabularModel(
            block["features"], block["mu"], block["nu"], (lo, hi),
            true_param=block.get("true_theta") if theta_star is None else theta_star)
    except ConfigError:
        raise
    except Exception as exc:  # invalid numbers, shapes, domains
        raise ConfigError(f"invalid model block: {exc}") from exc


@dataclass(frozen=True)
class ThetaGrid:
    lo: float
    hi: float
    count: int

    def points(self) -> np.ndarray:
        # endpoint weighting hits 0 exactly on symmetric grids, unlike linspace
        i = np.arange(self.count)
        pts = (self.lo * (self.count - 1 - i) + self.hi * i) / (self.count - 1)
        pts[0], pts[-1] = self.lo, self.hi
        return pts


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    M_list: tuple
    N_list: tuple
    replicates: int = 1
    seed: int = 0
    theta_star: Optional[tuple] = None
    theta_grid: Optional[ThetaGrid] = None
    optimizer: MinimizeOptions = field(default_factory=MinimizeOptions)
    out_dir: str = "out"
    formats: tuple = ("csv", "svg")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _check_keys(raw, _TOP_KEYS, "config")
        if "model" not in raw:
            raise ConfigError("config needs a model block")
        kw = {"model": dict(raw["model"])}
        for key in ("M_list", "N_list"):
            vals = raw.get(key)
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"{key} must be a non-empty list of integers")
            if any(not isinstance(v, int) or isinstance(v, bool) or v < 1 for v in vals):
                raise ConfigError(f"{key} entries must be integers >= 1")
            kw[key] = tuple(vals)
        if "replicates" in raw:
            r = raw["replicates"]
            if not isinstance(r, int) or r < 1:
                raise ConfigError("replicates must be an integer >= 1")
            kw["replicates"] = r
        if "seed" in raw:
            s = raw["seed"]
            if not isinstance(s, int) or not 0 <= s <= _U64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            kw["seed"] = s
        if "theta_star" in raw:
            ts = raw["theta_star"]
            ts = ts if isinstance(ts, list) else [ts]
            if not ts or any(not isinstance(v, (int, float)) for v in ts):
                raise ConfigError("theta_star must be a number or a list of numbers")
            kw["theta_star"] = tuple(float(v) for v in ts)
        if "theta_grid" in raw:
            g = raw["theta_grid"]
            _check_keys(g, {"lo", "hi", "count"}, "theta_grid")
            try:
                grid = ThetaGrid(float(g["lo"]), float(g["hi"]), int(g["count"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError("theta_grid needs numeric lo, hi, count") from exc
            if not (grid.lo < grid.hi and grid.count >= 2):
                raise ConfigError("theta_grid must have lo < hi and count >= 2")
            kw["theta_grid"] = grid
        if "optimizer" in raw:
            o = raw["optimizer"]
            _check_keys(o, {"grid_points", "refine_tol", "max_refine_iters"}, "optimizer")
            try:
                kw["optimizer"] = MinimizeOptions(**o)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid optimizer block: {exc}") from exc
        if "outputs" in raw:
            o = raw["outputs"]
            _check_keys(o, {"directory", "formats"}, "outputs")
            if "directory" in o:
                kw["out_dir"] = str(o["directory"])
            if "formats" in o:
                fmts = tuple(o["formats"])
                if not set(fmts) <= {"csv", "svg"} or "csv" not in fmts:
                    raise ConfigError("outputs.formats must include csv and be within {csv, svg}")
                kw["formats"] = fmts
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def true_values(self) -> tuple:
        """The true parameters to simulate from, one experiment cell each."""
        if self.theta_star is not None:
            return self.theta_star
        return (float(build_model(self.model).true_param),)

    def model_for(self, theta_star: Optional[float] = None) -> DensityModel:
        return build_model(self.model, theta_star)

    def grid(self) -> ThetaGrid:
        if self.theta_grid is not None:
            return self.theta_grid
        dom = build_model(self.model).domain
        return ThetaGrid(dom.lower[0], dom.upper[0], self.optimizer.grid_points)

    def validate(self):
        base = build_model(self.model)
        if base.d != 1:
            raise ConfigError("experiments need a model with a scalar parameter")
        if self.theta_star is not None:
            for ts in self.theta_star:
                if not base.domain.contains(ts):
                    raise ConfigError(f"theta_star {ts} outside the model domain")
                build_model(self.model, ts)
        if self.theta_grid is not None:
            g = self.theta_grid
            if base.domain.dim == 1 and not (base.domain.contains(g.lo)
                                             and base.domain.contains(g.hi)):
                raise ConfigError("theta_grid must lie inside the model domain")

    def with_overrides(self, seed=None, out_dir=None) -> "ExperimentConfig":
        kw = {}
        if seed is not None:
            if not 0 <= seed <= _U64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            kw["seed"] = seed
        if out_dir is not None:
            kw["out_dir"] = str(out_dir)
        return replace(self, **kw)


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


_DISCRETE_3X3 = {
    "kind": "discrete_tabular",
    "mu": [0.2, 0.3, 0.5],
    "nu": [0.25, 0.25, 0.5],
    "features": [[1.0, -0.5, 0.0], [-0.5, 1.0, 0.3], [0.2, -0.4, 1.0]],
    "theta_domain": [[-2.0], [2.0]],
    "true_theta": [0.8],
}

# Desk-scale defaults for each CLI subcommand.
DEFAULT_CONFIGS = {
    "simulate": {
        "model": {"kind": "torus_wrapped_gaussian", "true_sigma": 0.1},
        "M_list": [50], "N_list": [200], "replicates": 50, "seed": 1,
    },
    "loss-curve": {
        "model": {"kind": "torus_wrapped_gaussian", "true_sigma": 0.1},
        "M_list": [2, 10, 50, 250], "N_list": [20, 200], "replicates": 50, "seed": 1,
        "theta_grid": {"lo": 0.02, "hi": 0.5, "count": 61},
    },
    "cv": {
        "model": {"kind": "torus_wrapped_gaussian", "true_sigma": 0.1},
        "theta_star": [0.05, 0.1, 0.2],
        "M_list": [1, 2, 5, 10, 50, 100], "N_list": [20, 40, 80],
        "replicates": 50, "seed": 1,
    },
    "limit-convergence": {
        "model": _DISCRETE_3X3,
        "M_list": [2, 4, 8, 16, 32, 64, 128, 256], "N_list": [1],
        "theta_grid": {"lo": -1.2, "hi": 1.6, "count": 5},
    },
    "oracle-check": {
        "model": _DISCRETE_3X3,
        "M_list": [2, 3], "N_list": [1], "seed": 1,
    },
}
