"""Attack scenarios for privacy evaluation, at the embedding level.

Four attacker strengths, ordered by knowledge:

* unprotected: no anonymization anywhere; sanity floor.
* ignorant: the attacker scores original enrollment data against the
  user's anonymized trial vectors, unaware anonymization happened.
* lazy-informed: the attacker knows the method, trains their own
  anonymizer on the same pool with their own seed, anonymizes the
  enrollment side with it, but keeps the stock score calibration.
* semi-informed: as lazy-informed, plus the calibration is refit on
  attacker-anonymized data.

Anonymization is speaker-level: every utterance of a speaker goes through
the same transform, so a speaker keeps one pseudo-identity within a side.
For the selection baseline each speaker of a side receives one
pseudo-vector (drawn with a per-speaker seed derived from the side's base
seed and the speaker id, so results do not depend on pool ordering).

Reports carry the raw EER as primary (it can exceed 0.5 when anonymization
reverses the score orientation) with min(e, 1 - e) alongside, the crossing
threshold, trial counts, a pool fingerprint and the full config echo;
identical (pool, config) inputs produce byte-identical reports.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .anonymizer import AnonymizerModel, SelectionConfig, anonymize, select_from_centroids
from .errors import InvalidSpec, SplitMissing
from .linalg import cosine_matrix
from .metrics import (
    Calibration,
    ScoreSet,
    TrialScores,
    cosine_pair_scores,
    eer,
    enrollment_models,
    fit_calibration,
    score_trials,
)
from .pool import EmbeddingPool, PoolRecord, pool_fingerprint, pool_stats
from .training import TrainConfig, train

SCENARIOS = ("unprotected", "ignorant", "lazy-informed", "semi-informed")
SIDES = ("train", "enroll", "trial", "all")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "ignorant"
    kind: str = "ohnn"  # "ohnn" | "selection"
    user_seed: int = 50
    attacker_seed: int = 1986
    train: TrainConfig = field(default_factory=TrainConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    calibration_method: str = "logistic"

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise InvalidSpec(f"unknown scenario {self.scenario!r}")
        if self.kind not in ("ohnn", "selection"):
            raise InvalidSpec(f"unknown anonymizer kind {self.kind!r}")
        if self.kind == "ohnn":
            self.train.validate()
        else:
            self.selection.validate()


@dataclass
class ScenarioReport:
    scenario: str
    kind: str
    eer: float  # raw, primary
    eer_flipped: float  # min(e, 1 - e), informational
    threshold: float
    n_target: int
    n_nontarget: int
    pool_fingerprint: str
    config: dict

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "kind": self.kind,
            "eer": self.eer,
            "eer_flipped": self.eer_flipped,
            "threshold": self.threshold,
            "n_target": self.n_target,
            "n_nontarget": self.n_nontarget,
            "pool_fingerprint": self.pool_fingerprint,
            "config": self.config,
        }


def _speaker_seed(base_seed: int, speaker: str) -> int:
    """Stable per-speaker seed: base composed with a hash of the id."""
    digest = hashlib.sha256(speaker.encode("utf-8")).digest()
    return (int(base_seed) << 64) | int.from_bytes(digest[:8], "little")


def anonymize_pool_model(
    pool: EmbeddingPool, model: AnonymizerModel, side: str
) -> EmbeddingPool:
    """Run every record of ``side`` through the model; others untouched."""
    if side not in SIDES:
        raise InvalidSpec(f"unknown side {side!r}")
    records = []
    for rec in pool.records:
        if side == "all" or rec.split == side:
            records.append(
                PoolRecord(rec.speaker, rec.utterance, anonymize(model, rec.vector), rec.split)
            )
        else:
            records.append(rec)
    return EmbeddingPool(pool.dim, tuple(records))


def anonymize_pool_selection(
    pool: EmbeddingPool,
    cfg: SelectionConfig,
    side: str,
    candidates: dict[str, np.ndarray] | None = None,
) -> EmbeddingPool:
    """Replace each speaker's vectors in ``side`` with one pseudo-vector.

    The pseudo-vector averages a seeded subset of the farthest candidate
    centroids (the pool's train-split centroids unless ``candidates`` is
    given); the source centroid is the speaker's mean over the side being
    anonymized. The subset seed combines ``cfg.seed`` with the speaker id.
    """
    if side not in SIDES:
        raise InvalidSpec(f"unknown side {side!r}")
    if candidates is None:
        candidates = pool_stats(pool).centroids
    groups = pool.by_speaker(side if side != "all" else None)
    pseudo: dict[str, np.ndarray] = {}
    for sid, recs in groups.items():
        source = np.stack([r.vector for r in recs]).mean(axis=0)
        per_speaker = replace(cfg, seed=_speaker_seed(cfg.seed, sid))
        pseudo[sid] = select_from_centroids(candidates, source, per_speaker)
    records = []
    for rec in pool.records:
        if side == "all" or rec.split == side:
            records.append(
                PoolRecord(rec.speaker, rec.utterance, pseudo[rec.speaker], rec.split)
            )
        else:
            records.append(rec)
    return EmbeddingPool(pool.dim, tuple(records))


@dataclass
class AttackContext:
    """Reusable state across scenarios on one (pool, config) pair."""

    stock_calibration: Calibration
    user_model: AnonymizerModel | None = None
    attacker_model: AnonymizerModel | None = None


def _require_splits(pool: EmbeddingPool) -> None:
    for split in ("enroll", "trial"):
        if not any(r.split == split for r in pool.records):
            raise SplitMissing(f"pool has no {split!r} records")
    if not any(r.split == "train" for r in pool.records):
        raise SplitMissing("pool has no 'train' records to fit scoring on")


def _groups_arrays(pool: EmbeddingPool, split: str) -> dict[str, np.ndarray]:
    return {
        sid: np.stack([r.vector for r in recs])
        for sid, recs in pool.by_speaker(split).items()
    }


def prepare_context(pool: EmbeddingPool, cfg: ScenarioConfig) -> AttackContext:
    """Fit the stock calibration and train user/attacker models once."""
    cfg.validate()
    _require_splits(pool)
    calib = fit_calibration(
        cosine_pair_scores(_groups_arrays(pool, "train")), cfg.calibration_method
    )
    ctx = AttackContext(stock_calibration=calib)
    if cfg.kind == "ohnn":
        user_cfg = replace(cfg.train, seed=cfg.user_seed)
        attacker_cfg = replace(cfg.train, seed=cfg.attacker_seed)
        ctx.user_model, _ = train(pool, user_cfg)
        ctx.attacker_model, _ = train(pool, attacker_cfg)
    return ctx


def _user_side(pool: EmbeddingPool, cfg: ScenarioConfig, ctx: AttackContext, side: str) -> EmbeddingPool:
    if cfg.kind == "ohnn":
        return anonymize_pool_model(pool, ctx.user_model, side)
    return anonymize_pool_selection(pool, replace(cfg.selection, seed=cfg.user_seed), side)


def _attacker_side(pool: EmbeddingPool, cfg: ScenarioConfig, ctx: AttackContext, side: str) -> EmbeddingPool:
    if cfg.kind == "ohnn":
        return anonymize_pool_model(pool, ctx.attacker_model, side)
    return anonymize_pool_selection(
        pool, replace(cfg.selection, seed=cfg.attacker_seed), side
    )


def run_scenario(
    pool: EmbeddingPool,
    cfg: ScenarioConfig,
    context: AttackContext | None = None,
) -> tuple[ScenarioReport, TrialScores]:
    """Score one scenario; returns the report and the raw trial scores."""
    cfg.validate()
    if context is None:
        context = prepare_context(pool, cfg)
    enroll_pool = pool
    trial_pool = pool
    calibration = context.stock_calibration
    if cfg.scenario != "unprotected":
        trial_pool = _user_side(pool, cfg, context, "trial")
    if cfg.scenario in ("lazy-informed", "semi-informed"):
        enroll_pool = _attacker_side(pool, cfg, context, "enroll")
    if cfg.scenario == "semi-informed":
        attacker_train = _attacker_side(pool, cfg, context, "train")
        calibration = fit_calibration(
            cosine_pair_scores(_groups_arrays(attacker_train, "train")),
            cfg.calibration_method,
        )
    enroll = enrollment_models(_groups_arrays(enroll_pool, "enroll"))
    trials = [
        (r.speaker, r.utterance, r.vector)
        for r in trial_pool.records
        if r.split == "trial"
    ]
    scored = score_trials(enroll, trials, calibration)
    score_set = scored.score_set()
    value, threshold = eer(score_set)
    report = ScenarioReport(
        scenario=cfg.scenario,
        kind=cfg.kind,
        eer=value,
        eer_flipped=min(value, 1.0 - value),
        threshold=threshold,
        n_target=int(score_set.target.size),
        n_nontarget=int(score_set.nontarget.size),
        pool_fingerprint=pool_fingerprint(pool),
        config=asdict(cfg),
    )
    return report, scored


def run_scenarios(
    pool: EmbeddingPool, cfg: ScenarioConfig, scenarios: list[str] | None = None
) -> list[tuple[ScenarioReport, TrialScores]]:
    """Run several scenarios sharing one prepared context (models trained once)."""
    names = list(scenarios) if scenarios is not None else list(SCENARIOS)
    for name in names:
        if name not in SCENARIOS:
            raise InvalidSpec(f"unknown scenario {name!r}")
    context = prepare_context(pool, replace(cfg, scenario=names[0]))
    return [
        run_scenario(pool, replace(cfg, scenario=name), context) for name in names
    ]


@dataclass
class PairCosines:
    """Cosines between original and anonymized utterances for plotting."""

    positive: np.ndarray  # same-speaker original/anonymized pairs
    negative: np.ndarray  # cross-speaker original/anonymized pairs


def pair_cosine_report(
    original: EmbeddingPool, anonymized: EmbeddingPool, split: str | None = None
) -> PairCosines:
    """All original-vs-anonymized cosines, split by same/different speaker."""
    o_rows, o_own = [], []
    a_rows, a_own = [], []
    speakers = {s: i for i, s in enumerate(original.speakers())}
    for rec in original.records:
        if split is None or rec.split == split:
            o_rows.append(rec.vector)
            o_own.append(speakers[rec.speaker])
    for rec in anonymized.records:
        if split is None or rec.split == split:
            a_rows.append(rec.vector)
            a_own.append(speakers.get(rec.speaker, -1))
    if not o_rows or not a_rows:
        raise SplitMissing(f"no records for split {split!r}")
    sims = cosine_matrix(np.stack(o_rows), np.stack(a_rows))
    same = np.asarray(o_own)[:, None] == np.asarray(a_own)[None, :]
    return PairCosines(sims[same], sims[~same])


def save_pair_cosines_csv(pairs: PairCosines, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("kind,cosine\n")
        for v in pairs.positive:
            fh.write(f"positive,{repr(float(v))}\n")
        for v in pairs.negative:
            fh.write(f"negative,{repr(float(v))}\n")
