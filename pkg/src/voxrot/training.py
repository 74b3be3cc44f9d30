"""Training loop for rotation anonymizers.

The objective is lam * pair-hinge + margin-softmax classification over a
paired batch (originals plus their anonymized versions, recomputed through
the current model every iteration). Gradients are the hand-derived ones
from the losses and anonymizer modules; no autodiff anywhere.

The learning rate follows a triangular cycle: lr_min at iteration 0,
linearly up to lr_max at half a cycle, linearly back to lr_min at the full
cycle, repeating. Optimizer state updates and batch draws all come from
generators derived deterministically from the config seed, so two runs
with equal inputs produce bit-identical models and reports.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .anonymizer import (
    AnonymizerModel,
    HouseholderStack,
    init_stack,
    model_backward,
    model_forward,
)
from .errors import DivergenceDetected, InvalidSpec, SplitMissing
from .linalg import cholesky_factor, cholesky_whitening
from .losses import Batch, LossConfig, combined_objective, init_head
from .pool import EmbeddingPool, pool_stats


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 50
    iterations: int = 2000
    batch_size: int = 64
    lr_min: float = 1e-8
    lr_max: float = 1e-3
    cycle_length: int = 2000
    loss_variant: str = "waam"  # "aam" | "waam"
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    stack_variant: str = "roh"  # "roh" | "loh"
    num_layers: int = 4
    reflections_per_layer: int = 8
    form: str = "simplified"  # "simplified" | "general"
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self) -> None:
        if self.iterations < 0:
            raise InvalidSpec("iterations must be non-negative")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise InvalidSpec("batch_size must be even and >= 2")
        if not (0.0 < self.lr_min <= self.lr_max):
            raise InvalidSpec("need 0 < lr_min <= lr_max")
        if self.cycle_length < 1:
            raise InvalidSpec("cycle_length must be positive")
        if self.loss_variant not in ("aam", "waam"):
            raise InvalidSpec(f"unknown loss variant {self.loss_variant!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidSpec(f"unknown optimizer {self.optimizer!r}")
        self.loss.validate()


@dataclass
class TrainReport:
    loss_trace: list[float]
    final_pair_cosine: float
    wall_clock_sec: float
    config: dict
    seed: int
    num_speakers: int
    dim: int

    def to_json(self) -> dict:
        """Artifact form. Wall-clock is deliberately left out so identical
        configs produce byte-identical report files; it goes to the log."""
        return {
            "seed": self.seed,
            "num_speakers": self.num_speakers,
            "dim": self.dim,
            "config": self.config,
            "final_pair_cosine": self.final_pair_cosine,
            "loss_trace": self.loss_trace,
        }


def cyclical_lr(iteration: int, cfg: TrainConfig) -> float:
    """Triangular schedule: lr_min -> lr_max -> lr_min over one cycle."""
    pos = iteration % cfg.cycle_length
    x = pos / cfg.cycle_length
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 - abs(2.0 * x - 1.0))


def _training_records(pool: EmbeddingPool):
    """Flattened train-split arrays plus the speaker label map.

    Pools without a train split fall back to all records (same rule as
    pool_stats). Speakers are label-indexed in sorted order.
    """
    split = "train" if any(r.split == "train" for r in pool.records) else None
    groups = pool.by_speaker(split)
    if not groups:
        raise SplitMissing("pool has no records to train on")
    speakers = sorted(groups)
    rows, labels = [], []
    for idx, sid in enumerate(speakers):
        for rec in groups[sid]:
            rows.append(rec.vector)
            labels.append(idx)
    return np.stack(rows), np.array(labels, dtype=np.int64), speakers


def build_batch(
    pool: EmbeddingPool,
    model: AnonymizerModel,
    batch_size: int,
    rng: np.random.Generator,
) -> Batch:
    """Draw a paired batch: N/2 train vectors plus their anonymized versions.

    Rows are drawn uniformly with replacement; anonymized labels are the
    original labels shifted by the speaker count.
    """
    if batch_size < 2 or batch_size % 2 != 0:
        raise InvalidSpec("batch_size must be even and >= 2")
    vectors, labels, speakers = _training_records(pool)
    idx = rng.integers(0, vectors.shape[0], size=batch_size // 2)
    originals = vectors[idx]
    anon = model_forward(model, originals)
    batch = Batch(
        np.vstack([originals, anon]),
        np.concatenate([labels[idx], labels[idx] + len(speakers)]),
    )
    batch.validate_pairing(len(speakers))
    return batch


class _Adam:
    def __init__(self, params: list[np.ndarray], beta1: float, beta2: float, eps: float):
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m += (1.0 - self.b1) * (g - m)
            v += (1.0 - self.b2) * (g * g - v)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Sgd:
    def __init__(self, params, *_):
        pass

    def step(self, params, grads, lr: float) -> None:
        for p, g in zip(params, grads):
            p -= lr * g


def _sub_seeds(seed: int, n: int) -> list[int]:
    state = np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def build_model(pool: EmbeddingPool, cfg: TrainConfig) -> AnonymizerModel:
    """Initialize an untrained model against the pool statistics."""
    cfg.validate()
    stats = pool_stats(pool)
    stack_seed, _, _ = _sub_seeds(cfg.seed, 3)
    stack = init_stack(
        cfg.stack_variant,
        pool.dim,
        cfg.num_layers,
        cfg.reflections_per_layer,
        stack_seed,
    )
    whitening = None
    if cfg.form == "general":
        lw = cholesky_whitening(stats.covariance)
        li = cholesky_factor(stats.covariance)  # exact inverse of lw
        whitening = (lw, li)
    return AnonymizerModel(
        stack, stats.mean, form=cfg.form, whitening=whitening, seed=cfg.seed
    )


def train(pool: EmbeddingPool, cfg: TrainConfig) -> tuple[AnonymizerModel, TrainReport]:
    """Train an anonymizer on the pool's train split.

    Returns the model (classifier head attached for resume) and a report
    with the per-iteration loss trace and the final mean original/anonymized
    cosine over held-out vectors (non-train records; train as fallback).

    Raises:
        DivergenceDetected: the loss became non-finite.
    """
    cfg.validate()
    started = time.monotonic()
    model = build_model(pool, cfg)
    vectors, labels, speakers = _training_records(pool)
    num_speakers = len(speakers)
    _, head_seed, batch_seed = _sub_seeds(cfg.seed, 3)
    head = init_head(pool.dim, num_speakers, head_seed)
    rng = np.random.default_rng(batch_seed)

    params = model.stack.param_arrays() + [head]
    opt_cls = _Adam if cfg.optimizer == "adam" else _Sgd
    opt = opt_cls(params, cfg.beta1, cfg.beta2, cfg.adam_eps)

    trace_out: list[float] = []
    half = cfg.batch_size // 2
    for it in range(cfg.iterations):
        idx = rng.integers(0, vectors.shape[0], size=half)
        originals = vectors[idx]
        anon, fwd_trace = model_forward(model, originals, want_trace=True)
        batch = Batch(
            np.vstack([originals, anon]),
            np.concatenate([labels[idx], labels[idx] + num_speakers]),
        )
        result = combined_objective(batch, head, cfg.loss, cfg.loss_variant)
        if not np.isfinite(result.loss):
            raise DivergenceDetected(f"loss became {result.loss} at iteration {it}")
        grads = model_backward(model, fwd_trace, result.grad_anonymized)
        grads.append(result.grad_head)
        opt.step(params, grads, cyclical_lr(it, cfg))
        trace_out.append(float(result.loss))

    model.head = head
    held = [r.vector for r in pool.records if r.split != "train"]
    if not held:
        held = [r.vector for r in pool.records]
    held_rows = np.stack(held)
    anon_rows = model_forward(model, held_rows)
    hn = held_rows / np.linalg.norm(held_rows, axis=1, keepdims=True)
    an = anon_rows / np.linalg.norm(anon_rows, axis=1, keepdims=True)
    final_cos = float(np.mean((hn * an).sum(axis=1)))

    report = TrainReport(
        loss_trace=trace_out,
        final_pair_cosine=final_cos,
        wall_clock_sec=time.monotonic() - started,
        config=asdict(cfg),
        seed=cfg.seed,
        num_speakers=num_speakers,
        dim=pool.dim,
    )
    return model, report


def gradient_check(
    model: AnonymizerModel,
    head: np.ndarray,
    batch: Batch,
    loss_cfg: LossConfig,
    variant: str = "waam",
    epsilon: float = 1e-5,
) -> float:
    """Worst relative error of the analytic gradient vs central differences.

    The batch's first half supplies the originals; the anonymized half is
    recomputed through the (possibly perturbed) model on every evaluation,
    so the check covers the full chain: margin loss -> embeddings ->
    reflections -> generator parameters, plus the classifier head.

    The error is measured per parameter array as the 2-norm of the
    difference over the larger of the two gradient norms, and the maximum
    over arrays is returned. Individual entries whose true magnitude sits
    below the finite-difference resolution (about |loss| * 1e-16 / epsilon)
    cannot be certified scalar by scalar in double precision; the norm
    metric still covers every entry that can influence an update.
    """
    h = batch.half
    originals = batch.vectors[:h].copy()
    labels_first = batch.labels[:h].copy()
    num_shift = int(batch.labels[h] - batch.labels[0]) if h else 0

    def objective() -> float:
        anon = model_forward(model, originals)
        b = Batch(
            np.vstack([originals, anon]),
            np.concatenate([labels_first, labels_first + num_shift]),
        )
        return combined_objective(b, head, loss_cfg, variant).loss

    anon, fwd_trace = model_forward(model, originals, want_trace=True)
    b = Batch(
        np.vstack([originals, anon]),
        np.concatenate([labels_first, labels_first + num_shift]),
    )
    result = combined_objective(b, head, loss_cfg, variant)
    analytic = model_backward(model, fwd_trace, result.grad_anonymized)
    analytic.append(result.grad_head)

    params = model.stack.param_arrays() + [head]
    worst = 0.0
    for arr, grad in zip(params, analytic):
        flat = arr.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.shape[0]):
            keep = flat[i]
            flat[i] = keep + epsilon
            hi = objective()
            flat[i] = keep - epsilon
            lo = objective()
            flat[i] = keep
            numeric[i] = (hi - lo) / (2.0 * epsilon)
        gflat = grad.reshape(-1)
        denom = max(
            float(np.linalg.norm(numeric)), float(np.linalg.norm(gflat)), 1e-12
        )
        worst = max(worst, float(np.linalg.norm(numeric - gflat)) / denom)
    return worst
