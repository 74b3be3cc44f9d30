"""Margin-softmax classification losses and the pair-similarity hinge.

All losses operate on cosine geometry: embeddings and classifier columns
are length-normalized at every evaluation (the raw weights are free, the
normalization Jacobian is part of the hand-derived gradients), so every
loss here is invariant to rescaling any input by a positive constant.

Angular-margin softmax: for sample i with label y_i and cosines
c_j = cos(theta_j) against the K head columns, the own-class logit is
s * cos(theta_y + m) = s * (c cos m - sqrt(1 - c^2) sin m) and the other
logits are s * c_j; the loss is the mean cross-entropy. The paired variant
additionally rewrites the logit of the sample's *paired* class (the class
of the sample at position (i + N/2) mod N, i.e. the other member of its
original/anonymized pair) as s * cos(theta_p - m2) = s * (c cos m2 +
sqrt(1 - c^2) sin m2), which raises that term in the partition sum and
pushes the pair apart; the remaining classes enter with plain cosines.

The pair hinge max(0, cos(x_o, x_a) - m) penalizes residual similarity
between an original and its anonymized version; its gradient is zero in
the inactive region.

Gradient conventions: every function returns d(mean loss)/d(argument)
directly usable for a descent step; all derivations are verified against
central finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidShape, InvalidSpec, ZeroVector

# Cosines are clamped to the open interval so sqrt(1 - c^2) stays finite;
# gradients are zeroed where the clamp engages.
_COS_EPS = 1e-12


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2  # additive angle on the own class
    paired_margin: float = 0.2  # subtractive angle on the paired class
    scale: float = 30.0  # logit scale
    lam: float = 20.0  # weight of the pair hinge in the combined objective
    cos_margin: float = 0.0  # hinge threshold

    def validate(self) -> None:
        if self.scale <= 0.0:
            raise InvalidSpec("scale must be positive")
        if not (0.0 <= self.margin < np.pi):
            raise InvalidSpec("margin must lie in [0, pi)")
        if not (0.0 <= self.paired_margin < np.pi):
            raise InvalidSpec("paired_margin must lie in [0, pi)")
        if self.lam < 0.0:
            raise InvalidSpec("lam must be non-negative")
        if not (-1.0 <= self.cos_margin <= 1.0):
            raise InvalidSpec("cos_margin must lie in [-1, 1]")


@dataclass
class Batch:
    """Paired training batch: originals first, their anonymized versions after.

    Row i of the second half is the anonymized version of row i of the
    first half; its label is the original label shifted by the number of
    original classes.
    """

    vectors: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,) int

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.vectors.ndim != 2:
            raise InvalidShape(f"batch vectors must be (N, d), got {self.vectors.shape}")
        n = self.vectors.shape[0]
        if n < 2 or n % 2 != 0:
            raise InvalidSpec(f"batch size must be even and >= 2, got {n}")
        if self.labels.shape != (n,):
            raise InvalidShape("labels must be one per batch row")

    @property
    def half(self) -> int:
        return self.vectors.shape[0] // 2

    def validate_pairing(self, num_speakers: int) -> None:
        """Check the label contract against the original class count."""
        h = self.half
        first, second = self.labels[:h], self.labels[h:]
        if np.any(first < 0) or np.any(first >= num_speakers):
            raise InvalidSpec("original labels must lie in [0, num_speakers)")
        if np.any(second != first + num_speakers):
            raise InvalidSpec(
                "anonymized labels must equal the paired original label "
                "plus num_speakers"
            )


@dataclass
class LossResult:
    loss: float
    grad_embeddings: np.ndarray  # (N, d)
    grad_head: np.ndarray  # (d, K)
    extras: dict = field(default_factory=dict)


def init_head(dim: int, num_speakers: int, seed: int) -> np.ndarray:
    """Gaussian (dim, 2 * num_speakers) classifier weights; deterministic."""
    if num_speakers < 1 or dim < 1:
        raise InvalidSpec("dim and num_speakers must be positive")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim, 2 * num_speakers))


def _normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector("cannot normalize a zero embedding")
    return x / norms[:, None], norms


def _margin_loss(
    vectors: np.ndarray,
    labels: np.ndarray,
    head: np.ndarray,
    cfg: LossConfig,
    paired: np.ndarray | None,
) -> LossResult:
    """Shared core; ``paired`` selects the paired-margin variant."""
    cfg.validate()
    x = np.asarray(vectors, dtype=np.float64)
    w = np.asarray(head, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != x.shape[1]:
        raise DimensionMismatch(
            f"head must be ({x.shape[1]}, K), got {w.shape}"
        )
    n, k = x.shape[0], w.shape[1]
    if np.any(labels < 0) or np.any(labels >= k):
        raise InvalidSpec("labels outside the head's class range")
    xh, xn = _normalize_rows(x)
    wn = np.linalg.norm(w, axis=0)
    if np.any(wn == 0.0):
        raise ZeroVector("cannot normalize a zero head column")
    wh = w / wn[None, :]
    cos_raw = xh @ wh
    c = np.clip(cos_raw, -1.0 + _COS_EPS, 1.0 - _COS_EPS)
    clamped = cos_raw != c
    sin = np.sqrt(1.0 - c * c)
    s = cfg.scale
    rows = np.arange(n)

    logits = s * c.copy()
    c_own = c[rows, labels]
    sin_own = sin[rows, labels]
    logits[rows, labels] = s * (
        c_own * np.cos(cfg.margin) - sin_own * np.sin(cfg.margin)
    )
    if paired is not None:
        c_pair = c[rows, paired]
        sin_pair = sin[rows, paired]
        pair_logit = s * (
            c_pair * np.cos(cfg.paired_margin) + sin_pair * np.sin(cfg.paired_margin)
        )
        own_wins = paired == labels  # batch contract makes this impossible
        logits[rows, paired] = np.where(
            own_wins, logits[rows, paired], pair_logit
        )

    # Stable cross-entropy: loss_i = -logit_own + logsumexp(logits_i).
    m = logits.max(axis=1, keepdims=True)
    exp = np.exp(logits - m)
    z = exp.sum(axis=1)
    loss = float(np.mean(np.log(z) + m[:, 0] - logits[rows, labels]))

    p = exp / z[:, None]
    dlogits = p.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= n

    dc = dlogits * s
    dpsi_own = np.cos(cfg.margin) + c_own / sin_own * np.sin(cfg.margin)
    dc[rows, labels] = dlogits[rows, labels] * s * dpsi_own
    if paired is not None:
        dpsi_pair = np.cos(cfg.paired_margin) - c_pair / sin_pair * np.sin(
            cfg.paired_margin
        )
        dc[rows, paired] = np.where(
            own_wins,
            dc[rows, paired],
            dlogits[rows, paired] * s * dpsi_pair,
        )
    dc[clamped] = 0.0

    dxh = dc @ wh.T
    dwh = xh.T @ dc
    grad_x = (dxh - (dxh * xh).sum(axis=1, keepdims=True) * xh) / xn[:, None]
    grad_w = (dwh - wh * (dwh * wh).sum(axis=0, keepdims=True)) / wn[None, :]
    acc = float(np.mean(np.argmax(logits, axis=1) == labels))
    return LossResult(loss, grad_x, grad_w, extras={"accuracy": acc})


def aam_loss(batch: Batch, head: np.ndarray, cfg: LossConfig) -> LossResult:
    """Angular-margin softmax over the whole batch (no paired rewrite)."""
    return _margin_loss(batch.vectors, batch.labels, head, cfg, paired=None)


def waam_loss(batch: Batch, head: np.ndarray, cfg: LossConfig) -> LossResult:
    """Paired-margin variant; reduces exactly to aam_loss at paired_margin 0."""
    h = batch.half
    idx = (np.arange(2 * h) + h) % (2 * h)
    paired = batch.labels[idx]
    return _margin_loss(batch.vectors, batch.labels, head, cfg, paired=paired)


def cosine_pair_loss(
    x_o, x_a, cos_margin: float = 0.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hinge on residual pair similarity: max(0, cos(x_o, x_a) - margin).

    Accepts single vectors (d,) or aligned row batches (P, d). Returns
    (values, grad_o, grad_a) with shapes matching the inputs; gradients
    are zero wherever the hinge is inactive (cos <= margin).
    """
    o = np.asarray(x_o, dtype=np.float64)
    a = np.asarray(x_a, dtype=np.float64)
    squeeze = o.ndim == 1
    if squeeze:
        o, a = o[None, :], a[None, :]
    if o.shape != a.shape or o.ndim != 2:
        raise DimensionMismatch(f"pair shapes differ: {o.shape} vs {a.shape}")
    oh, on = _normalize_rows(o)
    ah, an = _normalize_rows(a)
    c = np.clip((oh * ah).sum(axis=1), -1.0, 1.0)
    values = np.maximum(0.0, c - cos_margin)
    active = (c > cos_margin).astype(np.float64)[:, None]
    grad_o = active * (ah - c[:, None] * oh) / on[:, None]
    grad_a = active * (oh - c[:, None] * ah) / an[:, None]
    if squeeze:
        return values[0], grad_o[0], grad_a[0]
    return values, grad_o, grad_a


@dataclass
class CombinedResult:
    loss: float
    grad_anonymized: np.ndarray  # (N/2, d): gradient w.r.t. the anonymized rows
    grad_head: np.ndarray
    parts: dict


def combined_objective(
    batch: Batch, head: np.ndarray, cfg: LossConfig, variant: str = "waam"
) -> CombinedResult:
    """Training objective: lam * mean pair hinge + classification loss.

    The originals are data constants: the returned embedding gradient
    covers only the anonymized half (their hinge share plus their share of
    the classification gradient), which is what flows back into the
    anonymizer parameters.
    """
    if variant == "aam":
        cls = aam_loss(batch, head, cfg)
    elif variant == "waam":
        cls = waam_loss(batch, head, cfg)
    else:
        raise InvalidSpec(f"unknown loss variant {variant!r}")
    h = batch.half
    originals = batch.vectors[:h]
    anonymized = batch.vectors[h:]
    values, _, grad_a = cosine_pair_loss(originals, anonymized, cfg.cos_margin)
    sim = float(values.mean())
    total = cfg.lam * sim + cls.loss
    grad_anon = cfg.lam / h * grad_a + cls.grad_embeddings[h:]
    return CombinedResult(
        total,
        grad_anon,
        cls.grad_head,
        parts={
            "classification": cls.loss,
            "similarity": sim,
            "accuracy": cls.extras.get("accuracy"),
        },
    )
