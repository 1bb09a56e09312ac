"""Experiment and audit configuration (YAML documents validated by pydantic)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from nblend.attacks import ShadowEnsembleConfig
from nblend.defense import DefenseConfig
from nblend.models import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` holds ``(field path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, ser_json_inf_nan="strings")


class SplitSection(_Strict):
    fractions: tuple[float, float, float] = (0.4, 0.4, 0.2)
    eval_size: Optional[int] = Field(default=None, ge=1)

    @field_validator("fractions")
    @classmethod
    def _sum(cls, v):
        if any(f < 0 for f in v) or sum(v) > 1 + 1e-9:
            raise ValueError("fractions must be non-negative and sum to <= 1")
        return v


class SynthSection(_Strict):
    num_classes: int = Field(ge=2)
    dim: int = Field(ge=1)
    per_class: int = Field(ge=1)
    spread: float = Field(gt=0)
    seed: Optional[int] = None


class DatasetSection(_Strict):
    name: str
    csv: Optional[str] = None
    label_column: Optional[str] = None
    categorical_columns: list[str] = []
    synth: Optional[SynthSection] = None
    split: Optional[SplitSection] = None
    repeats: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _source(self):
        if (self.csv is None) == (self.synth is None):
            raise ValueError("exactly one of 'csv' or 'synth' is required")
        if self.csv is not None and not self.label_column:
            raise ValueError("'label_column' is required with 'csv'")
        return self


class ModelSection(_Strict):
    kind: Literal["logreg", "tree_ensemble", "mlp"]
    name: Optional[str] = None
    learning_rate: float = Field(default=0.5, gt=0)
    epochs: int = Field(default=500, ge=1)
    l2: float = Field(default=0.0, ge=0)
    hidden: list[int] = [64, 32]
    batch_size: int = Field(default=32, ge=1)
    n_trees: int = Field(default=15, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=1)
    max_features: Union[int, Literal["sqrt", "log2"], None] = "sqrt"
    bootstrap: bool = True
    leaf_alpha: float = Field(default=1e-3, gt=0)

    @property
    def label(self) -> str:
        return self.name or self.kind

    def train_config(self, seed: int) -> TrainConfig:
        d = self.model_dump(exclude={"name"})
        d["hidden"] = tuple(d["hidden"])
        return TrainConfig(seed=seed, **d)


class DefenseSection(_Strict):
    m: Optional[int] = Field(default=None, ge=1)
    epsilon: float = Field(default=1.0, ge=0)
    delta_u: float = Field(default=2.0, gt=0)
    sampler_mode: Literal["gumbel", "exact_em"] = "gumbel"

    def defense_config(self, p: float, seed: int) -> DefenseConfig:
        return DefenseConfig(m=self.m, epsilon=self.epsilon, p=p, delta_u=self.delta_u,
                             sampler_mode=self.sampler_mode, seed=seed)


ATTACK_KINDS = ("shadow", "confidence", "entropy", "modified_entropy")


class AttackSection(_Strict):
    kinds: list[Literal["shadow", "confidence", "entropy", "modified_entropy"]] = list(ATTACK_KINDS)
    num_shadow_models: int = Field(default=4, ge=1)
    per_class_models: bool = False
    per_class_thresholds: bool = True
    adaptive: bool = True
    report_static: bool = False
    attack_learning_rate: float = Field(default=0.5, gt=0)
    attack_epochs: int = Field(default=1000, ge=1)

    def shadow_config(self, model: TrainConfig, seed: int) -> ShadowEnsembleConfig:
        return ShadowEnsembleConfig(
            num_shadow_models=self.num_shadow_models,
            model=model,
            per_class=self.per_class_models,
            seed=seed,
            attack_learning_rate=self.attack_learning_rate,
            attack_epochs=self.attack_epochs,
        )


class ExperimentConfig(_Strict):
    seed: int
    output_dir: str = "results"
    p: Union[float, Literal["inf"]] = 2.0
    repeats: int = Field(default=1, ge=1)
    split: SplitSection = SplitSection()
    datasets: list[DatasetSection] = Field(min_length=1)
    models: list[ModelSection] = Field(min_length=1)
    defense: DefenseSection = DefenseSection()
    attacks: AttackSection = AttackSection()

    @field_validator("p")
    @classmethod
    def _p(cls, v):
        v = math.inf if v == "inf" else float(v)
        if v not in (1.0, 2.0) and not math.isinf(v):
            raise ValueError("p must be 1, 2 or inf")
        return v

    @model_validator(mode="after")
    def _unique(self):
        for what, names in (("datasets", [d.name for d in self.datasets]),
                            ("models", [m.label for m in self.models])):
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate names in {what}: {names}")
        return self


class RatioSection(_Strict):
    instances: int = Field(default=200, ge=1)


class TailSection(_Strict):
    t: list[float] = [1.0, 2.0, 3.0]
    trials: int = Field(default=50_000, ge=1)
    instances: int = Field(default=5, ge=1)


class EquivalenceSection(_Strict):
    instances: int = Field(default=50, ge=1)
    draws: int = Field(default=200_000, ge=1)
    tv_max: float = Field(default=0.01, gt=0)


class AuditConfig(_Strict):
    seed: int
    sizes: tuple[int, int] = (2, 6)
    m: tuple[int, int] = (1, 3)
    epsilons: list[float] = [0.5, 1.0, 4.0]
    delta_u: float = Field(default=2.0, gt=0)
    ratio_tolerance: float = Field(default=1e-9, ge=0)
    ratio: RatioSection = RatioSection()
    tail: TailSection = TailSection()
    equivalence: EquivalenceSection = EquivalenceSection()

    @model_validator(mode="after")
    def _ranges(self):
        if not 1 <= self.sizes[0] <= self.sizes[1]:
            raise ValueError("sizes must be an increasing range starting at >= 1")
        if not 1 <= self.m[0] <= self.m[1]:
            raise ValueError("m must be an increasing range starting at >= 1")
        if self.m[0] > self.sizes[1]:
            raise ValueError("m range lies entirely above the candidate sizes")
        return self


def _flatten(err: ValidationError) -> list[tuple[str, str]]:
    return [(".".join(str(p) for p in e["loc"]) or "<root>", e["msg"]) for e in err.errors()]


def _read(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([("<file>", f"{path} not found")])
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([("<file>", f"YAML parse error: {exc}")]) from None
    if not isinstance(doc, dict):
        raise ConfigError([("<root>", "config must be a mapping")])
    return doc


def parse_experiment(doc: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as err:
        raise ConfigError(_flatten(err)) from None


def parse_audit(doc: dict) -> AuditConfig:
    try:
        return AuditConfig.model_validate(doc)
    except ValidationError as err:
        raise ConfigError(_flatten(err)) from None


def load_experiment(path: str | Path) -> tuple[ExperimentConfig, Path]:
    """Parse an experiment config; relative CSV paths resolve against its directory."""
    return parse_experiment(_read(path)), Path(path).resolve().parent


def load_audit(path: str | Path) -> AuditConfig:
    return parse_audit(_read(path))
