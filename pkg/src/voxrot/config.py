"""Declarative experiment configuration.

One nested key/value document (YAML or JSON) drives every subcommand and
service endpoint; unknown keys are rejected and validation errors name the
offending path. CLI flags override file values; the effective merged
config is written next to the outputs of every run.
"""

from __future__ import annotations

import json
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError

from .anonymizer import SelectionConfig
from .attacks import ScenarioConfig
from .errors import InvalidSpec
from .losses import LossConfig
from .pool import SyntheticSpec
from .training import TrainConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticSection(_Section):
    speakers: int = 40
    utterances: int = 10
    dim: int = 16
    sigma_between: float = 1.0
    sigma_within: float = 0.25
    seed: int = 0
    normalize: bool = False
    enroll_per_speaker: int = 2
    trial_per_speaker: int = 2

    def to_spec(self) -> SyntheticSpec:
        spec = SyntheticSpec(
            num_speakers=self.speakers,
            utterances_per_speaker=self.utterances,
            dim=self.dim,
            sigma_between=self.sigma_between,
            sigma_within=self.sigma_within,
            seed=self.seed,
            normalize=self.normalize,
            enroll_per_speaker=self.enroll_per_speaker,
            trial_per_speaker=self.trial_per_speaker,
        )
        spec.validate()
        return spec


class LossSection(_Section):
    variant: str = "waam"
    margin: float = 0.2
    paired_margin: float = 0.2
    scale: float = 30.0
    lam: float = 20.0
    cos_margin: float = 0.0

    def to_loss(self) -> LossConfig:
        return LossConfig(
            margin=self.margin,
            paired_margin=self.paired_margin,
            scale=self.scale,
            lam=self.lam,
            cos_margin=self.cos_margin,
        )


class StackSection(_Section):
    variant: str = "roh"
    layers: int = 4
    reflections: int = 8
    form: str = "simplified"


class TrainSection(_Section):
    seed: int = 50
    iterations: int = 2000
    batch_size: int = 64
    lr_min: float = 1e-8
    lr_max: float = 1e-3
    cycle_length: int = 2000
    optimizer: str = "adam"


class SelectionSection(_Section):
    n_far: int = 200
    n_pick: int = 100
    seed: int = 0

    def to_selection(self) -> SelectionConfig:
        return SelectionConfig(n_far=self.n_far, n_pick=self.n_pick, seed=self.seed)


class AttackSection(_Section):
    kind: str = "ohnn"
    scenarios: list[str] = ["unprotected", "ignorant", "lazy-informed", "semi-informed"]
    user_seed: int = 50
    attacker_seed: int = 1986
    calibration: str = "logistic"


class ExperimentConfig(_Section):
    """Root document; every section has working desk-scale defaults."""

    pool: SyntheticSection = SyntheticSection()
    stack: StackSection = StackSection()
    train: TrainSection = TrainSection()
    loss: LossSection = LossSection()
    selection: SelectionSection = SelectionSection()
    attack: AttackSection = AttackSection()

    def to_train_config(self) -> TrainConfig:
        cfg = TrainConfig(
            seed=self.train.seed,
            iterations=self.train.iterations,
            batch_size=self.train.batch_size,
            lr_min=self.train.lr_min,
            lr_max=self.train.lr_max,
            cycle_length=self.train.cycle_length,
            loss_variant=self.loss.variant,
            optimizer=self.train.optimizer,
            stack_variant=self.stack.variant,
            num_layers=self.stack.layers,
            reflections_per_layer=self.stack.reflections,
            form=self.stack.form,
            loss=self.loss.to_loss(),
        )
        cfg.validate()
        return cfg

    def to_scenario_config(self, scenario: str | None = None) -> ScenarioConfig:
        cfg = ScenarioConfig(
            scenario=scenario or self.attack.scenarios[0],
            kind=self.attack.kind,
            user_seed=self.attack.user_seed,
            attacker_seed=self.attack.attacker_seed,
            train=self.to_train_config(),
            selection=self.selection.to_selection(),
            calibration_method=self.attack.calibration,
        )
        cfg.validate()
        return cfg


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{path}: {err['msg']}")
    return "; ".join(parts)


def config_from_dict(doc: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(doc or {})
    except ValidationError as exc:
        raise InvalidSpec(f"invalid config: {_format_validation_error(exc)}") from None


def load_config_file(path) -> ExperimentConfig:
    """Load a YAML or JSON config document; schema errors name the path."""
    text = Path(path).read_text()
    try:
        if str(path).endswith(".json"):
            doc = json.loads(text)
        else:
            doc = yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise InvalidSpec(f"cannot parse config file {path}: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise InvalidSpec(f"config root must be a mapping, got {type(doc).__name__}")
    return config_from_dict(doc)


def merge_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply {section: {key: value}} overrides (CLI flags win over file)."""
    doc = config.model_dump()
    for section, values in overrides.items():
        if values:
            doc.setdefault(section, {}).update(values)
    return config_from_dict(doc)


def dump_effective_config(config: ExperimentConfig, path) -> None:
    """Write the merged config next to a run's outputs, stable key order."""
    with open(path, "w") as fh:
        yaml.safe_dump(config.model_dump(), fh, sort_keys=True)
