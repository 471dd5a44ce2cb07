"""Run-configuration parsing and validation.

Configs are YAML (key-value with nested blocks).  Validation errors carry the
dotted field path so the CLI can name the offending key.  Seeds are always
explicit; there are no wall-clock defaults anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import yaml

from .geometry import TorusDomain
from .model import JumpKernel, ModelSpec, PairPotential
from .testfunctions import TestFunction


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


EXPERIMENTS: dict[str, dict] = {
    "sample-gibbs": {
        "description": "draw Gibbs configurations and report basic estimates",
        "blocks": ["model", "sampler", "output"],
    },
    "validate-gnz": {
        "description": "GNZ residual battery, Ursell decay, Ruelle probe and "
                       "the death-rate consistency check",
        "blocks": ["model", "sampler", "output"],
    },
    "run-kawasaki": {
        "description": "simulate the hop dynamics from Gibbs initial states",
        "blocks": ["model", "sampler", "dynamics", "output"],
    },
    "run-glauber": {
        "description": "simulate the birth-death dynamics from Gibbs initial states",
        "blocks": ["model", "sampler", "dynamics", "output"],
    },
    "scaling-sweep": {
        "description": "L2 generator distance across an eps grid, with split parts",
        "blocks": ["model", "sampler", "output"],
    },
    "fdd-compare": {
        "description": "finite-dimensional-distribution divergence of hop vs "
                       "birth-death ensembles",
        "blocks": ["model", "sampler", "dynamics", "output"],
    },
    "gap-probe": {
        "description": "relaxation-rate fit against the analytic spectral-gap bound",
        "blocks": ["model", "sampler", "dynamics", "output"],
    },
}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found")
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML ({exc})")
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    return raw


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply `--set a.b.c=value` overrides (values parsed as YAML scalars)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        path, _, raw_val = item.partition("=")
        value = yaml.safe_load(raw_val)
        node = cfg
        keys = path.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(path, "override path crosses a non-mapping")
        node[keys[-1]] = value
    return cfg


def _need(block: dict, key: str, path: str, types=None):
    if key not in block or block[key] is None:
        raise ConfigError(f"{path}.{key}", "required field is missing")
    val = block[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError(f"{path}.{key}",
                          f"expected {types}, got {type(val).__name__}")
    return val


def build_potential(block: dict, path: str = "model.potential") -> PairPotential:
    kind = _need(block, "kind", path, str)
    try:
        if kind == "zero":
            return PairPotential.zero()
        if kind == "square_well":
            return PairPotential.square_well(_need(block, "J", path, (int, float)),
                                             _need(block, "R", path, (int, float)))
        if kind == "triangle":
            return PairPotential.triangle(_need(block, "J", path, (int, float)),
                                          _need(block, "R", path, (int, float)))
        if kind == "hardcore_square_well":
            return PairPotential.hardcore_square_well(
                _need(block, "r_hc", path, (int, float)),
                _need(block, "J", path, (int, float)),
                _need(block, "R", path, (int, float)))
        if kind == "lennard_jones_truncated":
            return PairPotential.lennard_jones_truncated(
                _need(block, "sigma", path, (int, float)),
                _need(block, "eps", path, (int, float)),
                _need(block, "R", path, (int, float)),
                _need(block, "B", path, (int, float)))
    except ValueError as exc:
        raise ConfigError(path, str(exc))
    raise ConfigError(f"{path}.kind", f"unknown potential kind {kind!r}")


def build_kernel(block: dict, d: int, path: str = "model.kernel") -> JumpKernel:
    kind = _need(block, "kind", path, str)
    amp = block.get("amplitude", 1.0)
    try:
        if kind == "uniform_ball":
            return JumpKernel.uniform_ball(_need(block, "r", path, (int, float)),
                                           d, amp)
        if kind == "gaussian_truncated":
            return JumpKernel.gaussian_truncated(
                _need(block, "sigma", path, (int, float)),
                _need(block, "r_cut", path, (int, float)), d, amp)
    except ValueError as exc:
        raise ConfigError(path, str(exc))
    raise ConfigError(f"{path}.kind", f"unknown kernel kind {kind!r}")


def build_model(cfg: dict) -> tuple[ModelSpec, list[float]]:
    """Returns the model at the largest eps plus the full eps grid."""
    block = _need(cfg, "model", "", dict)
    d = _need(block, "d", "model", int)
    L = _need(block, "L", "model", (int, float))
    z = _need(block, "z", "model", (int, float))
    try:
        dom = TorusDomain(d, float(L))
    except ValueError as exc:
        raise ConfigError("model", str(exc))
    phi = build_potential(_need(block, "potential", "model", dict))
    kernel = build_kernel(_need(block, "kernel", "model", dict), d)
    if "eps_grid" in block and block["eps_grid"] is not None:
        grid = [float(e) for e in block["eps_grid"]]
        if not grid or any(b >= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("model.eps_grid", "must be strictly decreasing")
    else:
        grid = [float(block.get("eps", 1.0))]
    try:
        model = ModelSpec(dom, phi, float(z), kernel, eps=grid[0],
                          s=float(block.get("s", 0.0)),
                          rate_cap=block.get("rate_cap"))
    except ValueError as exc:
        raise ConfigError("model", str(exc))
    return model, grid


def build_test_function(block: dict, path: str) -> TestFunction:
    kind = _need(block, "kind", path, str)
    if kind == "bump":
        return TestFunction.bump(_need(block, "center", path),
                                 _need(block, "radius", path, (int, float)),
                                 _need(block, "height", path, (int, float)))
    if kind == "step":
        return TestFunction.step(_need(block, "lo", path),
                                 _need(block, "hi", path),
                                 _need(block, "height", path, (int, float)))
    if kind == "sum":
        parts = [build_test_function(b, f"{path}.terms[{i}]")
                 for i, b in enumerate(_need(block, "terms", path, list))]
        return TestFunction.sum_of(*parts)
    raise ConfigError(f"{path}.kind", f"unknown test function kind {kind!r}")


@dataclass
class RunConfig:
    """Validated experiment configuration."""

    experiment: str
    raw: dict
    model: ModelSpec
    eps_grid: list[float]
    sampler: dict
    dynamics: Optional[dict]
    output: dict

    @property
    def sampler_seed(self):
        return self.sampler["seed"]


def validate_config(cfg: dict) -> RunConfig:
    experiment = _need(cfg, "experiment", "", str)
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment",
                          f"unknown experiment {experiment!r}; valid names: "
                          + ", ".join(sorted(EXPERIMENTS)))
    for block_name in EXPERIMENTS[experiment]["blocks"]:
        if block_name == "output":
            continue  # output has defaults
        _need(cfg, block_name, "", dict)

    model, grid = build_model(cfg)

    sampler = dict(cfg.get("sampler") or {})
    if "sampler" in EXPERIMENTS[experiment]["blocks"]:
        _need(sampler, "seed", "sampler", int)
        sampler.setdefault("n_samples", 1000)
        sampler.setdefault("burn_in", 10_000)
        sampler.setdefault("thin", None)
        for key in ("n_samples", "burn_in"):
            if not isinstance(sampler[key], int) or sampler[key] < 0:
                raise ConfigError(f"sampler.{key}", "must be a nonnegative integer")

    dynamics = None
    if "dynamics" in EXPERIMENTS[experiment]["blocks"]:
        dynamics = dict(cfg.get("dynamics") or {})
        _need(dynamics, "seed", "dynamics", int)
        # fdd-compare derives its horizon from the observation times
        if experiment != "fdd-compare":
            _need(dynamics, "T", "dynamics", (int, float))
        dynamics.setdefault("replicas", 1)
        dynamics.setdefault("snapshot_times", [])
        dynamics.setdefault("alpha", None)
        dynamics.setdefault("audit", False)

    output = dict(cfg.get("output") or {})
    output.setdefault("directory", "out")
    output.setdefault("formats", ["json", "csv"])

    return RunConfig(experiment, cfg, model, grid, sampler, dynamics, output)
