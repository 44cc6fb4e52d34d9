"""Experiment configuration: YAML schema, preset expansion and validation.

A config file is a mapping with the sections ``model``, ``parameters``,
``constraints``, ``cost``, ``mpc``, ``estimator``, ``disturbance``, ``simulation``
and ``experiment``. Setting ``preset: building`` fills every section from the
preset first; anything else in the file is then merged on top.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .analysis import AUDITS
from .estimator import choose_gain
from .linmodel import ConstraintData, EconomicCost, ParameterBox, ParametricLinearModel
from .mpc import MpcConfig
from .presets import PRESETS
from .sim import DisturbanceGenerator, ScenarioConfig
from .terminal import TerminalDesignError, make_terminal_cost

Matrix = list[list[float]]
Vector = list[float]


class ConfigError(ValueError):
    """Schema or invariant violation; ``errors`` lists (field path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.errors))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    A: list[Matrix] = Field(min_length=2)
    B: list[Matrix] = Field(min_length=2)


class ParametersSection(_Section):
    theta_star: Vector
    theta_hat_0: Vector
    lower: Vector
    upper: Vector


class ConstraintsSection(_Section):
    H: Matrix
    h: Vector
    u_lower: Vector
    u_upper: Vector
    z_lower: Vector
    z_upper: Vector
    w_bound: Optional[float] = None


class CostSection(_Section):
    Q: Matrix
    R: Matrix
    q: Vector
    r: Vector
    Lambda: Matrix


class MpcSection(_Section):
    N: int = Field(ge=1)


class EstimatorSection(_Section):
    mu: Union[float, Literal["auto"]] = "auto"

    @field_validator("mu")
    @classmethod
    def _positive(cls, v):
        if v != "auto" and not v > 0:
            raise ValueError("mu must be positive or 'auto'")
        return v


class DisturbanceSection(_Section):
    kind: Literal["zero", "decaying", "building", "recorded"]
    amplitude: Optional[Vector] = None
    noise: Optional[Vector] = None
    period: float = 144.0
    lag: Optional[Vector] = None
    w0: Optional[Vector] = None
    rho: Optional[float] = None
    sequence: Optional[Matrix] = None
    matrix: Optional[Matrix] = None


class SimulationSection(_Section):
    steps: int = Field(ge=1)
    x0: Optional[Vector] = None
    adapt: bool = True
    baseline: bool = True
    steps_per_day: int = Field(default=144, ge=1)


class ExperimentSection(_Section):
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    audits: list[str] = Field(default_factory=lambda: list(AUDITS))
    output: str = "results"
    workers: int = Field(default=1, ge=1)
    window: int = Field(default=500, ge=1)

    @field_validator("audits")
    @classmethod
    def _known(cls, v):
        unknown = sorted(set(v) - set(AUDITS))
        if unknown:
            raise ValueError(f"unknown audits {unknown}; choose from {list(AUDITS)}")
        return v


class ConfigSchema(_Section):
    preset: Optional[str] = None
    model: ModelSection
    parameters: ParametersSection
    constraints: ConstraintsSection
    cost: CostSection
    mpc: MpcSection
    estimator: EstimatorSection = EstimatorSection()
    disturbance: DisturbanceSection
    simulation: SimulationSection
    experiment: ExperimentSection = ExperimentSection()


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig
    audits: list
    output_dir: Path
    seeds: list
    preset: str | None = None
    baseline: bool = True
    workers: int = 1
    window: int = 500
    steps_per_day: int = 144
    raw: dict = field(default_factory=dict, repr=False)


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def expand_preset(data: dict) -> dict:
    name = data.get("preset")
    if name is None:
        return data
    if name not in PRESETS:
        raise ConfigError([("preset", f"unknown preset {name!r}; available: {sorted(PRESETS)}")])
    return _deep_merge(PRESETS[name](), data)


def _pydantic_errors(err: ValidationError):
    return [(".".join(str(p) for p in e["loc"]) or "<root>", e["msg"]) for e in err.errors()]


def _disturbance(sec: DisturbanceSection, n: int, seed: int) -> tuple[DisturbanceGenerator, np.ndarray | None]:
    if sec.kind == "zero":
        dim = len(sec.matrix[0]) if sec.matrix else n
        gen = DisturbanceGenerator("zero", {"dim": dim}, seed)
    elif sec.kind == "decaying":
        if sec.w0 is None or sec.rho is None:
            raise ConfigError([("disturbance", "decaying disturbances need w0 and rho")])
        gen = DisturbanceGenerator("decaying", {"w0": sec.w0, "rho": sec.rho}, seed)
    elif sec.kind == "building":
        if sec.amplitude is None or sec.noise is None:
            raise ConfigError([("disturbance", "building disturbances need amplitude and noise")])
        lag = sec.lag if sec.lag is not None else [0.0] * len(sec.amplitude)
        gen = DisturbanceGenerator(
            "building", {"amplitude": sec.amplitude, "noise": sec.noise, "period": sec.period, "lag": lag}, seed
        )
    else:
        if sec.sequence is None:
            raise ConfigError([("disturbance.sequence", "recorded disturbances need a sequence")])
        gen = DisturbanceGenerator("recorded", {"sequence": sec.sequence}, seed)
    E = None if sec.matrix is None else np.asarray(sec.matrix, dtype=float)
    if E is not None and E.shape != (n, gen.dim):
        raise ConfigError([("disturbance.matrix", f"expected shape {(n, gen.dim)}, got {E.shape}")])
    if E is None and gen.dim != n:
        raise ConfigError([("disturbance", f"disturbance dimension {gen.dim} differs from n = {n}")])
    return gen, E


def build_experiment(data: dict) -> ExperimentConfig:
    """Validate a (possibly preset-based) mapping and construct every model object."""
    if not isinstance(data, dict) or not data:
        raise ConfigError([("<root>", "config is empty; expected a mapping with 'preset' or a 'model' section")])
    data = expand_preset(data)
    try:
        cfg = ConfigSchema.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_pydantic_errors(err)) from None

    def wrap(path, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (ValueError, np.linalg.LinAlgError, TerminalDesignError) as exc:
            raise ConfigError([(path, str(exc))]) from None

    model = wrap("model", lambda: ParametricLinearModel(tuple(cfg.model.A), tuple(cfg.model.B)))
    p = cfg.parameters
    box = wrap("parameters", lambda: ParameterBox(p.lower, p.upper))
    if len(p.lower) != model.d:
        raise ConfigError([("parameters.lower", f"expected {model.d} entries")])
    for name in ("theta_star", "theta_hat_0"):
        val = getattr(p, name)
        if len(val) != model.d:
            raise ConfigError([(f"parameters.{name}", f"expected {model.d} entries")])
        if not box.contains(val):
            raise ConfigError([(f"parameters.{name}", "must lie inside the parameter box")])
    c = cfg.constraints
    cons = wrap("constraints", lambda: ConstraintData(
        c.H, c.h, c.u_lower, c.u_upper, c.z_lower, c.z_upper, 0.0 if c.w_bound is None else c.w_bound))
    if cons.H.shape[1] != model.n or cons.u_lower.shape[0] != model.m:
        raise ConfigError([("constraints", "dimensions do not match the model")])
    k = cfg.cost
    cost = wrap("cost", lambda: EconomicCost(k.Q, k.R, k.q, k.r, k.Lambda))
    if cost.Q.shape[0] != model.n or cost.R.shape[0] != model.m or cost.Lambda.shape[0] != cons.c:
        raise ConfigError([("cost", "dimensions do not match the model and constraints")])
    terminal = wrap("parameters", lambda: make_terminal_cost(model, box, cost, cons))
    mpc_cfg = MpcConfig(cfg.mpc.N, cost, cons, terminal, box)

    mu_max = wrap("estimator.mu", lambda: choose_gain(model, (cons.z_lower, cons.z_upper), (cons.u_lower, cons.u_upper)))
    mu = mu_max if cfg.estimator.mu == "auto" else float(cfg.estimator.mu)

    seeds = cfg.experiment.seeds
    gen, E = _disturbance(cfg.disturbance, model.n, seeds[0])
    x0 = cfg.simulation.x0
    if x0 is not None and len(x0) != model.n:
        raise ConfigError([("simulation.x0", f"expected {model.n} entries")])
    scenario = wrap("simulation", lambda: ScenarioConfig(
        model=model,
        theta_star=np.asarray(p.theta_star, dtype=float),
        theta_hat_0=np.asarray(p.theta_hat_0, dtype=float),
        theta_box=box,
        mpc_config=mpc_cfg,
        disturbance=gen,
        T_steps=cfg.simulation.steps,
        mu=mu,
        adapt=cfg.simulation.adapt,
        seed=seeds[0],
        x0=None if x0 is None else np.asarray(x0, dtype=float),
        disturbance_matrix=E,
    ))
    return ExperimentConfig(
        scenario=scenario,
        audits=list(cfg.experiment.audits),
        output_dir=Path(cfg.experiment.output),
        seeds=list(seeds),
        preset=cfg.preset,
        baseline=cfg.simulation.baseline,
        workers=cfg.experiment.workers,
        window=cfg.experiment.window,
        steps_per_day=cfg.simulation.steps_per_day,
        raw=cfg.model_dump(),
    )


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("<file>", f"not valid YAML: {exc}")]) from None
    if data is None:
        data = {}
    return build_experiment(data)


def dump_config(raw: dict) -> str:
    return yaml.safe_dump(raw, sort_keys=False)
