"""Experiment configuration: YAML in, validated and fully resolved out.

Every suite has its own schema with desk-scale defaults. Unknown keys are
rejected at every nesting level, so a typo fails before any compute.
"""
from __future__ import annotations

from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..classifiers import TrainConfig
from ..distributions import gaussian_classes, sphere_classes
from ..proximity import DiscriminatorConfig
from ..robustness import AttackConfig, SmoothingConfig

SUITES = ("theorem1", "theorem2", "theorem6", "theorem7", "arc-rank", "adaptive", "certify", "gradcheck",
          "port-benefit")


class ConfigError(ValueError):
    pass


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DistributionSpec(Strict):
    family: Literal["gaussian", "sphere"] = "gaussian"
    dimension: int = Field(16, ge=1)
    classes: int = Field(4, ge=1)
    means: Optional[list[list[float]]] = None
    mean_scale: float = 3.0
    cov_scale: float = Field(1.0, gt=0)
    radii: Optional[list[float]] = None
    metric: Literal["l2", "linf"] = "l2"

    @model_validator(mode="after")
    def _shapes(self):
        if self.means is not None:
            if len(self.means) != self.classes or any(len(m) != self.dimension for m in self.means):
                raise ValueError("means must be a classes x dimension list")
        elif self.classes > 1 and self.classes > self.dimension:
            raise ValueError("default means mean_scale * e_k need classes <= dimension")
        if self.radii is not None and len(self.radii) != self.classes:
            raise ValueError("radii needs one entry per class")
        return self

    def class_means(self):
        if self.means is not None:
            return [np.asarray(m, dtype=np.float64) for m in self.means]
        if self.classes == 1:
            return [np.zeros(self.dimension)]
        return [self.mean_scale * np.eye(self.dimension)[k] for k in range(self.classes)]

    def build(self):
        if self.family == "gaussian":
            return gaussian_classes(self.class_means(), self.cov_scale, metric=self.metric)
        radii = self.radii if self.radii is not None else [1.0] * self.classes
        return sphere_classes(self.class_means(), radii)


class ModelSpec(Strict):
    hidden: list[int] = [32]
    activation: Literal["relu", "tanh"] = "relu"


class AttackSpec(Strict):
    norm: Literal["l2", "linf"] = "l2"
    epsilon: float = Field(0.5, ge=0)
    steps: int = Field(10, ge=1)
    restarts: int = Field(1, ge=1)
    step_size: Optional[float] = None

    def build(self, seed: int = 0) -> AttackConfig:
        return AttackConfig(self.norm, self.epsilon, self.steps, self.step_size, self.restarts, seed)


class TrainSpec(Strict):
    lr: float = Field(0.05, gt=0)
    epochs: int = Field(30, ge=1)
    batch: int = Field(64, ge=1)
    weight_decay: float = Field(5e-4, ge=0)
    momentum: float = Field(0.0, ge=0, lt=1)

    def build(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(self.lr, self.epochs, self.batch, seed, self.weight_decay, self.momentum)


class SmoothingSpec(Strict):
    sigma: float = Field(0.25, gt=0)
    n_selection: int = Field(100, ge=1)
    n_estimation: int = Field(10_000, ge=1)
    alpha: float = Field(0.001, gt=0, lt=0.5)
    beta: float = Field(6.0, ge=0)

    def build(self) -> SmoothingConfig:
        return SmoothingConfig(self.sigma, self.n_selection, self.n_estimation, self.alpha, self.beta)


class ProximitySpec(Strict):
    hidden: list[int] = [64, 64]
    lr: float = Field(0.05, gt=0)
    epochs: int = Field(60, ge=1)
    batch: int = Field(64, ge=1)
    attack_steps: int = Field(10, ge=1)
    eval_steps: int = Field(20, ge=1)
    eval_restarts: int = Field(2, ge=1)
    holdout: float = Field(0.25, gt=0, lt=1)
    grid_points: int = Field(12, ge=2)
    epsilons: Optional[list[float]] = None

    def build(self, seed: int = 0) -> DiscriminatorConfig:
        return DiscriminatorConfig(
            hidden=tuple(self.hidden),
            train=TrainConfig(self.lr, self.epochs, self.batch, seed, 0.0, 0.0),
            attack=AttackConfig("l2", 0.0, self.attack_steps, None, 1, seed),
            eval_attack=AttackConfig("l2", 0.0, self.eval_steps, None, self.eval_restarts, seed),
            holdout=self.holdout,
            seed=seed,
        )


class _Base(Strict):
    seeds: list[int] = [0]
    output: str = "results"


# -- per-suite schemas ----------------------------------------------------------


class Theorem1Params(Strict):
    n_proxies: int = Field(20, ge=1)
    mean_shift_max: float = Field(1.0, ge=0)
    cov_shift_max: float = Field(1.0, ge=0)
    n_train_per_class: int = Field(250, ge=1)
    n_eval_per_class: int = Field(500, ge=2)
    eps_max: float = Field(4.0, gt=0)
    eval_steps: int = Field(10, ge=1)
    eval_restarts: int = Field(1, ge=1)


class Theorem1Config(_Base):
    suite: Literal["theorem1"] = "theorem1"
    distribution: DistributionSpec = DistributionSpec()
    model: ModelSpec = ModelSpec()
    attack: AttackSpec = AttackSpec()
    train: TrainSpec = TrainSpec()
    params: Theorem1Params = Theorem1Params()


class Theorem2Params(Strict):
    sphere_dimension: int = Field(8, ge=2)
    sphere_pairs: list[tuple[float, float]] = [(1.0, 2.0)]
    n_per_side: int = Field(2000, ge=8)
    equality_tolerance: float = Field(0.2, gt=0)
    check_fractions: tuple[float, float] = (0.25, 0.75)
    check_bounds: tuple[float, float] = (0.95, 0.60)
    gaussian_pairs: int = Field(5, ge=0)
    gaussian_shift_range: tuple[float, float] = (0.2, 1.0)
    n_per_class: int = Field(500, ge=8)


class Theorem2Config(_Base):
    suite: Literal["theorem2"] = "theorem2"
    distribution: DistributionSpec = DistributionSpec(dimension=4, classes=2, mean_scale=3.0)
    proximity: ProximitySpec = ProximitySpec()
    params: Theorem2Params = Theorem2Params()


class Theorem6Params(Strict):
    ps: list[float] = [0.1, 0.5, 0.9]
    shift: float = Field(2.0, ge=0)
    n_per_class: int = Field(200, ge=1)


class Theorem6Config(_Base):
    suite: Literal["theorem6"] = "theorem6"
    distribution: DistributionSpec = DistributionSpec(dimension=4, classes=2)
    params: Theorem6Params = Theorem6Params()


class Theorem7Params(Strict):
    alphas: list[float] = [0.0, 0.25, 0.5, 1.0]
    w: list[float] = [1.0, 0.3]
    b: float = 0.1
    n_per_class: int = Field(500, ge=1)
    tolerance: float = Field(1e-6, gt=0)


class Theorem7Config(_Base):
    suite: Literal["theorem7"] = "theorem7"
    distribution: DistributionSpec = DistributionSpec(dimension=2, classes=2, means=[[-1.5, 0.0], [1.5, 0.0]])
    params: Theorem7Params = Theorem7Params()


class ArcRankParams(Strict):
    shifts: list[float] = [0.5, 1.5, 3.0]
    n_real_per_class: int = Field(500, ge=2)
    n_proxy_per_class: int = Field(500, ge=2)
    n_eval_per_class: int = Field(500, ge=1)


class ArcRankConfig(_Base):
    suite: Literal["arc-rank"] = "arc-rank"
    distribution: DistributionSpec = DistributionSpec(dimension=8, classes=4, mean_scale=2.5)
    model: ModelSpec = ModelSpec()
    attack: AttackSpec = AttackSpec()
    train: TrainSpec = TrainSpec()
    proximity: ProximitySpec = ProximitySpec()
    params: ArcRankParams = ArcRankParams()


class AdaptiveParams(Strict):
    near_fraction: float = Field(0.7, ge=0, le=1)
    near_shift: float = 0.2
    far_shift: float = 2.5
    far_class_shift: float = 1.5
    n_real_per_class: int = Field(250, ge=2)
    n_pool_per_class: int = Field(500, ge=2)
    n_eval_per_class: int = Field(500, ge=1)
    n_groups: int = Field(10, ge=2)
    score_epsilon: float = Field(0.25, ge=0)
    gamma: float = Field(0.0, ge=0, le=1)


class AdaptiveConfig(_Base):
    suite: Literal["adaptive"] = "adaptive"
    seeds: list[int] = [0, 1, 2]
    distribution: DistributionSpec = DistributionSpec(dimension=8, classes=4, mean_scale=2.5)
    model: ModelSpec = ModelSpec()
    attack: AttackSpec = AttackSpec()
    train: TrainSpec = TrainSpec(batch=32)
    proximity: ProximitySpec = ProximitySpec()
    params: AdaptiveParams = AdaptiveParams()

    @model_validator(mode="after")
    def _room(self):
        if self.distribution.dimension <= self.distribution.classes:
            raise ValueError("adaptive needs dimension > classes for the off-class shift direction")
        return self


class CertifyParams(Strict):
    oracle_dimension: int = Field(2, ge=1)
    n_points: int = Field(500, ge=1)
    margin: float = Field(0.5, gt=0)
    fraction_at_margin: float = Field(0.5, ge=0, le=1)
    max_margin: float = Field(2.0, gt=0)
    radius_ratio: float = Field(0.8, gt=0)
    compare_training: bool = False
    gamma: float = Field(0.5, ge=0, le=1)
    proxy_shift: float = 0.3
    n_real_per_class: int = Field(100, ge=1)
    n_proxy_per_class: int = Field(400, ge=1)
    n_eval: int = Field(50, ge=1)


class CertifyConfig(_Base):
    suite: Literal["certify"] = "certify"
    distribution: DistributionSpec = DistributionSpec(dimension=4, classes=2, mean_scale=1.5)
    model: ModelSpec = ModelSpec()
    train: TrainSpec = TrainSpec()
    smoothing: SmoothingSpec = SmoothingSpec(n_estimation=100_000, alpha=1e-4)
    params: CertifyParams = CertifyParams()


class GradcheckParams(Strict):
    n_checks: int = Field(50, ge=1)
    threshold: float = Field(1e-5, gt=0)
    step: float = Field(1e-5, gt=0)
    corrupt_path: Optional[str] = None


class GradcheckConfig(_Base):
    suite: Literal["gradcheck"] = "gradcheck"
    params: GradcheckParams = GradcheckParams()


class PortBenefitParams(Strict):
    proxy_shift: float = Field(0.4, ge=0)
    gamma: float = Field(0.4, ge=0, le=1)
    n_real_per_class: int = Field(100, ge=1)
    n_proxy_per_class: int = Field(1000, ge=1)
    n_eval_per_class: int = Field(500, ge=1)
    max_cwd: float = Field(0.5, ge=0)


class PortBenefitConfig(_Base):
    suite: Literal["port-benefit"] = "port-benefit"
    seeds: list[int] = [0, 1, 2]
    distribution: DistributionSpec = DistributionSpec(dimension=32, classes=4, mean_scale=2.5)
    model: ModelSpec = ModelSpec(hidden=[64])
    attack: AttackSpec = AttackSpec()
    train: TrainSpec = TrainSpec(epochs=40, batch=32)
    params: PortBenefitParams = PortBenefitParams()


SCHEMAS = {
    "theorem1": Theorem1Config,
    "theorem2": Theorem2Config,
    "theorem6": Theorem6Config,
    "theorem7": Theorem7Config,
    "arc-rank": ArcRankConfig,
    "adaptive": AdaptiveConfig,
    "certify": CertifyConfig,
    "gradcheck": GradcheckConfig,
    "port-benefit": PortBenefitConfig,
}


def resolve(suite: str, raw: dict | None = None, seed: int | None = None):
    """Validate ``raw`` against ``suite``'s schema; ``seed`` replaces the seed list."""
    if suite not in SCHEMAS:
        raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    raw = dict(raw or {})
    named = raw.get("suite", suite)
    if named != suite:
        raise ConfigError(f"config is for suite {named!r}, not {suite!r}")
    if seed is not None:
        raw["seeds"] = [seed]
    try:
        cfg = SCHEMAS[suite].model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    if not cfg.seeds:
        raise ConfigError("seeds must not be empty")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds must be distinct")
    return cfg


def load(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping at the top level")
    return raw


def dump_resolved(cfg) -> dict:
    return cfg.model_dump(mode="json")
