"""Experiment configuration: strict YAML schema, presets, and conversion to runtime objects."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .acquisition.agent import AgentConfig
from .core import (
    BoundaryMode,
    BurgersParams,
    DarcyParams,
    Lorenz96Params,
    ProblemKind,
    ProblemSpec,
)
from .reward import RewardConfig
from .surrogate import DEFAULT_INPUT_SCALE, RidgeConfig

METHODS = ("rlmesh", "uniform", "random", "gradient", "variance", "intensity", "oracle", "full_information")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BurgersSection(_Strict):
    viscosity: float = Field(0.002, ge=0)
    horizon: float = Field(1.0, gt=0)
    n: int = Field(129, ge=3)
    boundary: BoundaryMode = BoundaryMode.DIRICHLET_WALLS


class DarcySection(_Strict):
    n: int = Field(128, ge=8)
    forcing: float = 1.0
    levels: tuple[float, float] = (4.0, 12.0)
    patches: int = Field(16, ge=1)

    @field_validator("levels")
    @classmethod
    def _positive(cls, v):
        if min(v) <= 0:
            raise ValueError("coefficient levels must be strictly positive")
        return v


class Lorenz96Section(_Strict):
    n: int = Field(60, ge=4)
    forcing: float = 4.0
    dt: float = Field(0.01, gt=0)
    horizon: float = Field(1.0, gt=0)


class ProblemSection(_Strict):
    kind: ProblemKind = ProblemKind.BURGERS
    burgers: BurgersSection = BurgersSection()
    darcy: DarcySection = DarcySection()
    lorenz96: Lorenz96Section = Lorenz96Section()


class CorpusSection(_Strict):
    train: int = Field(1000, ge=1)
    test: int = Field(200, ge=1)
    seed: int = Field(0, ge=0)


class RidgeSection(_Strict):
    lam: float = Field(0.1, gt=0)
    gamma: float = Field(1.0, gt=0)
    input_scale: Optional[float] = Field(None, gt=0)  # None: per-problem default
    mode: Literal["masked", "interpolate"] = "masked"


class ProxySection(RidgeSection):
    mode: Literal["masked", "interpolate"] = "interpolate"
    kappa: float = Field(1e4, gt=0)
    holdout: int = Field(50, ge=1)
    reward_mode: Literal["episode", "batch"] = "episode"


class AgentSection(_Strict):
    lr: float = Field(1e-4, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    gamma: float = Field(0.99, gt=0, le=1)
    batch_size: int = Field(64, ge=1)
    buffer_capacity: int = Field(10_000, ge=1)
    eps_start: float = Field(1.0, gt=0, le=1)
    eps_floor: float = Field(0.1, gt=0)
    eps_decay: float = Field(0.995, gt=0, le=1)
    target_sync: int = Field(100, ge=1)
    grad_clip: float = Field(1.0, gt=0)
    hidden: int = Field(256, ge=1)
    target_mode: Literal["td", "mc"] = "td"
    imitation_lr: float = Field(1e-3, gt=0)
    imitation_epochs: int = Field(50, ge=0)
    imitation_temperature: float = Field(0.05, gt=0)
    updates_per_episode: Optional[int] = Field(None, ge=0)  # None: one per environment step

    @model_validator(mode="after")
    def _eps(self):
        if self.eps_floor >= self.eps_start:
            raise ValueError("eps_floor must be below eps_start")
        return self


class OracleSection(_Strict):
    field: Literal["residual", "input"] = "residual"
    magnitude: float = Field(1.0, ge=0)
    coverage: Optional[float] = Field(2.0, gt=0)  # in action cells; None: n / B
    demo_instances: int = Field(100, ge=1)


class RunSection(_Strict):
    method: Literal[METHODS] = "rlmesh"
    iterations: int = Field(18, ge=1)
    instances_per_iteration: int = Field(50, ge=1)
    budget: int = Field(60, ge=1)
    retrain_interval: int = Field(1, ge=1)
    pretrain_size: int = Field(100, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    solver_mode: Literal["oracle_uniform", "nonuniform"] = "oracle_uniform"


class SweepSection(_Strict):
    budgets: list[int] = Field(default_factory=lambda: [20, 40, 60, 80, 100], min_length=1)
    total_budget: Optional[int] = Field(None, ge=1)  # None: fixed instance count per iteration


class ExperimentConfig(_Strict):
    problem: ProblemSection = ProblemSection()
    corpus: CorpusSection = CorpusSection()
    surrogate: RidgeSection = RidgeSection()
    proxy: ProxySection = ProxySection()
    agent: AgentSection = AgentSection()
    oracle: OracleSection = OracleSection()
    run: RunSection = RunSection()
    sweep: SweepSection = SweepSection()

    @model_validator(mode="after")
    def _fits_corpus(self):
        r = self.run
        need = r.pretrain_size + self.proxy.holdout + r.iterations * r.instances_per_iteration
        if need > self.corpus.train:
            raise ValueError(
                f"run needs {need} training instances (pretrain + holdout + acquisition) "
                f"but corpus.train is {self.corpus.train}"
            )
        return self


PRESETS = {
    "desk": {
        "run": {"iterations": 10, "instances_per_iteration": 20, "budget": 60, "seeds": [0, 1, 2]},
    },
    "paper": {
        "corpus": {"train": 1050},
        "run": {"iterations": 18, "instances_per_iteration": 50, "budget": 60, "seeds": [0, 1, 2, 3, 4]},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        key = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{key}: {e['msg']}")
    return "; ".join(parts)


def build_config(data: dict | None = None, preset: str | None = None) -> ExperimentConfig:
    raw = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
        raw = _merge(raw, PRESETS[preset])
    raw = _merge(raw, data or {})
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as err:
        raise ConfigError(_describe(err)) from None


def load_config(path: Path | None, preset: str | None = None) -> ExperimentConfig:
    data = {}
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigError("configuration file must hold a mapping at the top level")
    return build_config(data, preset)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def problem_spec(cfg: ExperimentConfig) -> ProblemSpec:
    p = cfg.problem
    return ProblemSpec(
        p.kind,
        BurgersParams(**p.burgers.model_dump()),
        DarcyParams(**p.darcy.model_dump()),
        Lorenz96Params(**p.lorenz96.model_dump()),
    )


def spec_to_dict(spec: ProblemSpec) -> dict:
    return ProblemSection(
        kind=spec.kind,
        burgers=BurgersSection(viscosity=spec.burgers.viscosity, horizon=spec.burgers.horizon,
                               n=spec.burgers.n, boundary=spec.burgers.boundary),
        darcy=DarcySection(n=spec.darcy.n, forcing=spec.darcy.forcing, levels=spec.darcy.levels,
                           patches=spec.darcy.patches),
        lorenz96=Lorenz96Section(n=spec.lorenz96.n, forcing=spec.lorenz96.forcing, dt=spec.lorenz96.dt,
                                 horizon=spec.lorenz96.horizon),
    ).model_dump(mode="json")


def spec_from_dict(data: dict) -> ProblemSpec:
    p = ProblemSection.model_validate(data)
    return problem_spec(ExperimentConfig.model_construct(problem=p))


def ridge_config(section: RidgeSection, kind: ProblemKind) -> RidgeConfig:
    scale = section.input_scale if section.input_scale is not None else DEFAULT_INPUT_SCALE[kind]
    return RidgeConfig(section.lam, section.gamma, scale, section.mode)


def reward_config(cfg: ExperimentConfig) -> RewardConfig:
    return RewardConfig(cfg.proxy.kappa, ridge_config(cfg.proxy, cfg.problem.kind))


def agent_config(cfg: ExperimentConfig) -> AgentConfig:
    d = cfg.agent.model_dump()
    d.pop("updates_per_episode")
    return AgentConfig(**d)
