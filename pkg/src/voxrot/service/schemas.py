"""Request and response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..attacks import SCENARIOS


class _Schema(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GenDataRequest(_Schema):
    name: str = Field(pattern=r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
    speakers: int = 40
    utterances: int = 10
    dim: int = 16
    sigma_between: float = 1.0
    sigma_within: float = 0.25
    seed: int = 0
    normalize: bool = False
    enroll_per_speaker: int = 2
    trial_per_speaker: int = 2


class PoolSummary(_Schema):
    dim: int
    records: int
    speakers: int
    splits: dict[str, int]
    fingerprint: str
    path: str | None = None


class PoolListResponse(_Schema):
    pools: list[PoolSummary]


class StackParams(_Schema):
    variant: str = "roh"
    layers: int = 4
    reflections: int = 8
    form: str = "simplified"


class LossParams(_Schema):
    variant: str = "waam"
    margin: float = 0.2
    paired_margin: float = 0.2
    scale: float = 30.0
    lam: float = 20.0
    cos_margin: float = 0.0


class TrainParams(_Schema):
    seed: int = 50
    iterations: int = 2000
    batch_size: int = 64
    lr_min: float = 1e-8
    lr_max: float = 1e-3
    cycle_length: int = 2000
    optimizer: str = "adam"


class TrainRequest(_Schema):
    pool: str
    run: str = Field(pattern=r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
    train: TrainParams = TrainParams()
    stack: StackParams = StackParams()
    loss: LossParams = LossParams()


class TrainResponse(_Schema):
    model: str
    report: str
    final_pair_cosine: float
    final_loss: float | None
    iterations: int
    wall_clock_sec: float


class SelectionParams(_Schema):
    n_far: int = 200
    n_pick: int = 100
    seed: int = 0


class AnonymizeVectorRequest(_Schema):
    model: str
    vector: list[float]


class AnonymizeVectorResponse(_Schema):
    vector: list[float]


class AnonymizePoolRequest(_Schema):
    pool: str
    out: str = Field(pattern=r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
    side: str = "all"
    model: str | None = None
    selection: SelectionParams | None = None


class EvaluateRequest(_Schema):
    pool: str
    run: str = Field(pattern=r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
    model: str | None = None
    selection: SelectionParams | None = None
    calibration: str = "logistic"


class EvaluateResponse(_Schema):
    calibration: list[float]
    d_diag_oo: float
    d_diag_aa: float
    g_vd: float
    mean_positive_pair_cosine: float
    mean_negative_pair_cosine: float
    speakers: int


class AttackSimRequest(_Schema):
    pools: list[str]
    weights: list[float] | None = None
    run: str = Field(pattern=r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
    kind: str = "ohnn"
    scenarios: list[str] = list(SCENARIOS)
    user_seed: int = 50
    attacker_seed: int = 1986
    calibration: str = "logistic"
    train: TrainParams = TrainParams()
    stack: StackParams = StackParams()
    loss: LossParams = LossParams()
    selection: SelectionParams = SelectionParams()


class AttackSimResponse(_Schema):
    kind: str
    scenarios: list[str]
    subsets: dict[str, dict[str, float]]
    weights: list[float]
    weighted_eer: dict[str, float]


class HealthResponse(_Schema):
    status: str
    version: str
