"""Privacy/utility metrics: calibrated scores, similarity matrices, EER.

Scoring backend: an affine calibration of cosine similarity,
score = alpha * cos + beta, standing in for a full probabilistic backend.
The calibration is fitted on held-out data either by 1-D logistic
regression (default) or by moment matching (target/non-target means map to
+2/-2).

Voice similarity matrix: cell (i, j) is the sigmoid of the mean pairwise
score between speaker i's vectors in one collection and speaker j's in the
other. When both collections are the same one, same-utterance pairs are
excluded on the diagonal and the mean runs over the remaining pairs (a
speaker needs at least two utterances there). De-identification is visible
as a flattened diagonal.

Distinctiveness: d_diag(M) = |mean(diag) - mean(offdiag)|; the gain of
voice distinctiveness between an anonymized and an original matrix is
10 * log10(d_diag(M_aa) / d_diag(M_oo)); 0 means preserved, negative means
lost distinctiveness.

EER: candidates are the distinct scores plus sentinels beyond the extremes.
At threshold t, the false-acceptance rate counts non-target scores
strictly above t and the false-rejection rate counts target scores
strictly below t (ties at the threshold count as neither). FA - FR is
non-increasing in t; the reported EER and threshold interpolate linearly
inside the bracket where the sign flips. The interpolated value depends
only on the rate sequences, so the EER is invariant under any strictly
increasing transform of all scores. Raw EER may exceed 0.5 when the score
orientation is reversed; min(e, 1 - e) is reported alongside as the
flipped-orientation value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateReference,
    DimensionMismatch,
    EmptyPool,
    EmptyScores,
    InsufficientUtterances,
    InvalidShape,
    InvalidSpec,
    MatrixTooSmall,
    ZeroWeightSum,
)
from .linalg import cosine, cosine_matrix

Calibration = tuple[float, float]
IDENTITY_CALIBRATION: Calibration = (1.0, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def llr_score(a, b, calibration: Calibration = IDENTITY_CALIBRATION) -> float:
    """Calibrated similarity score: alpha * cosine(a, b) + beta."""
    alpha, beta = calibration
    return alpha * cosine(a, b) + beta


@dataclass(frozen=True)
class ScoreSet:
    """Target (same-speaker) and non-target (different-speaker) scores."""

    target: np.ndarray
    nontarget: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.target, dtype=np.float64).reshape(-1)
        n = np.asarray(self.nontarget, dtype=np.float64).reshape(-1)
        if t.size == 0 or n.size == 0:
            raise EmptyScores("both target and non-target scores are required")
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "nontarget", n)


def fit_calibration_moments(scores: ScoreSet) -> Calibration:
    """Affine fit mapping the target/non-target means to +2 / -2."""
    mt = float(scores.target.mean())
    mn = float(scores.nontarget.mean())
    if mt == mn:
        raise InvalidSpec("target and non-target score means coincide")
    alpha = 4.0 / (mt - mn)
    return alpha, 2.0 - alpha * mt


def fit_calibration_logistic(scores: ScoreSet, iterations: int = 50) -> Calibration:
    """1-D logistic regression (Newton steps) of target-vs-non on the scores.

    Deterministic: moment-matching start, fixed iteration cap, a tiny ridge
    keeps the Hessian invertible on separable data.
    """
    s = np.concatenate([scores.target, scores.nontarget])
    y = np.concatenate(
        [np.ones_like(scores.target), np.zeros_like(scores.nontarget)]
    )
    try:
        alpha, beta = fit_calibration_moments(scores)
    except InvalidSpec:
        alpha, beta = 1.0, 0.0
    x = np.stack([s, np.ones_like(s)], axis=1)
    w = np.array([alpha, beta])
    ridge = 1e-6 * np.eye(2)
    for _ in range(iterations):
        p = sigmoid(x @ w)
        grad = x.T @ (p - y)
        hess = (x * (p * (1.0 - p))[:, None]).T @ x + ridge
        step = np.linalg.solve(hess, grad)
        w = w - step
        if float(np.max(np.abs(step))) < 1e-12:
            break
    return float(w[0]), float(w[1])


def fit_calibration(scores: ScoreSet, method: str = "logistic") -> Calibration:
    if method == "logistic":
        return fit_calibration_logistic(scores)
    if method == "moments":
        return fit_calibration_moments(scores)
    raise InvalidSpec(f"unknown calibration method {method!r}")


def cosine_pair_scores(groups: dict[str, np.ndarray]) -> ScoreSet:
    """Raw cosine target/non-target scores from per-speaker vector stacks.

    Targets are all within-speaker pairs (k < l); non-targets are all
    cross-speaker pairs. Used to fit calibrations on held-out data.
    """
    if not groups:
        raise EmptyPool("no speakers to score")
    sids = sorted(groups)
    rows = np.vstack([groups[s] for s in sids])
    owner = np.concatenate(
        [np.full(groups[s].shape[0], i) for i, s in enumerate(sids)]
    )
    sims = cosine_matrix(rows, rows)
    same = owner[:, None] == owner[None, :]
    upper = np.triu(np.ones_like(sims, dtype=bool), k=1)
    return ScoreSet(sims[same & upper], sims[~same & upper])


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray  # (S, S)
    speakers: tuple[str, ...]
    block: str  # caller-supplied tag: "oo", "oa", "aa", ...

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] != len(self.speakers):
            raise InvalidShape(
                f"matrix {v.shape} does not match {len(self.speakers)} speakers"
            )
        object.__setattr__(self, "values", v)


def similarity_matrix(
    groups_a: dict[str, np.ndarray],
    groups_b: dict[str, np.ndarray] | None = None,
    calibration: Calibration = IDENTITY_CALIBRATION,
    block: str = "oo",
) -> SimilarityMatrix:
    """Voice similarity matrix between two per-speaker collections.

    ``groups_*`` map speaker id to an (n_i, d) stack. With ``groups_b``
    omitted the collection is compared against itself and same-utterance
    pairs (k = l) are excluded on the diagonal, which then needs n_i >= 2.
    With two collections (rows index ``groups_a`` speakers, columns
    ``groups_b``) all pairs count, including aligned indices: the
    collections are different renderings, so no pair compares a vector
    with itself. Speaker sets must coincide.

    The affine calibration commutes with the pair mean, so each cell is
    sigmoid(alpha * mean_cos + beta) over the included pairs.
    """
    if not groups_a:
        raise EmptyPool("no speakers to compare")
    self_mode = groups_b is None
    if groups_b is not None and sorted(groups_a) != sorted(groups_b):
        raise InvalidSpec("speaker sets of the two collections differ")
    sids = sorted(groups_a)
    a_stacks = {s: np.asarray(groups_a[s], dtype=np.float64) for s in sids}
    b_stacks = a_stacks if self_mode else {
        s: np.asarray(groups_b[s], dtype=np.float64) for s in sids
    }
    alpha, beta = calibration
    size = len(sids)
    out = np.empty((size, size))
    for i, si in enumerate(sids):
        for j, sj in enumerate(sids):
            sims = cosine_matrix(a_stacks[si], b_stacks[sj])
            if self_mode and i == j:
                n = sims.shape[0]
                if n < 2:
                    raise InsufficientUtterances(si)
                mean_cos = (sims.sum() - np.trace(sims)) / (n * (n - 1))
            else:
                mean_cos = sims.mean()
            out[i, j] = sigmoid(alpha * mean_cos + beta)
    return SimilarityMatrix(out, tuple(sids), block)


def d_diag(matrix: SimilarityMatrix) -> float:
    """|mean(diagonal) - mean(off-diagonal)| of a similarity matrix."""
    v = matrix.values
    n = v.shape[0]
    if n < 2:
        raise MatrixTooSmall("need at least 2 speakers for distinctiveness")
    diag = float(np.trace(v) / n)
    off = float((v.sum() - np.trace(v)) / (n * (n - 1)))
    return abs(diag - off)


def g_vd(anonymized: SimilarityMatrix, original: SimilarityMatrix) -> float:
    """Gain of voice distinctiveness, 10 * log10(D_aa / D_oo), in dB.

    Zero means distinctiveness preserved; negative means lost. A zero
    reference distinctiveness is undefined (DegenerateReference); a zero
    anonymized distinctiveness returns -inf (total collapse).
    """
    if anonymized.values.shape != original.values.shape:
        raise DimensionMismatch("matrices must have equal shape")
    d_aa = d_diag(anonymized)
    d_oo = d_diag(original)
    if d_oo == 0.0:
        raise DegenerateReference("original matrix has zero distinctiveness")
    if d_aa == 0.0:
        return float("-inf")
    return 10.0 * float(np.log10(d_aa / d_oo))


def eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and crossing threshold of a score set.

    See the module docstring for the exact convention. Returns
    (eer, threshold); the raw value may exceed 0.5 for reversed scores.
    """
    tgt = np.sort(scores.target)
    non = np.sort(scores.nontarget)
    distinct = np.unique(np.concatenate([tgt, non]))
    cand = np.concatenate(
        [[distinct[0] - 1.0], distinct, [distinct[-1] + 1.0]]
    )
    # FA(t) = #(non > t) / |non|;  FR(t) = #(tgt < t) / |tgt|
    fa = (non.size - np.searchsorted(non, cand, side="right")) / non.size
    fr = np.searchsorted(tgt, cand, side="left") / tgt.size
    diff = fa - fr
    k = int(np.argmax(diff <= 0.0))
    if diff[k] == 0.0:
        return float((fa[k] + fr[k]) / 2.0), float(cand[k])
    frac = diff[k - 1] / (diff[k - 1] - diff[k])
    value = fa[k - 1] + (fa[k] - fa[k - 1]) * frac
    thr = cand[k - 1] + (cand[k] - cand[k - 1]) * frac
    return float(value), float(thr)


def weighted_average_eer(values, weights) -> float:
    """Weighted mean of per-subset EERs; weights need not be normalized."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if v.size != w.size:
        raise DimensionMismatch(f"{v.size} values vs {w.size} weights")
    if v.size == 0:
        raise EmptyScores("no values to aggregate")
    total = float(w.sum())
    if total == 0.0:
        raise ZeroWeightSum("aggregation weights sum to zero")
    return float((v * w).sum() / total)


@dataclass
class TrialScores:
    """Scored verification trials: (enroll speaker, test utterance, score, target)."""

    rows: list[tuple[str, str, float, bool]]

    def score_set(self) -> ScoreSet:
        t = [r[2] for r in self.rows if r[3]]
        n = [r[2] for r in self.rows if not r[3]]
        return ScoreSet(np.array(t), np.array(n))


def enrollment_models(groups: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Per-speaker enrollment vector: the mean of the speaker's stack."""
    if not groups:
        raise EmptyPool("no enrollment speakers")
    return {
        sid: np.asarray(groups[sid], dtype=np.float64).mean(axis=0)
        for sid in sorted(groups)
    }


def score_trials(
    enroll: dict[str, np.ndarray],
    trials: list[tuple[str, str, np.ndarray]],
    calibration: Calibration = IDENTITY_CALIBRATION,
) -> TrialScores:
    """Score every (enrollment speaker, trial utterance) pair.

    ``trials`` holds (true speaker, utterance id, vector). A trial is a
    target when the enrollment speaker equals the true speaker.
    """
    if not enroll:
        raise EmptyPool("no enrollment speakers")
    if not trials:
        raise EmptyScores("no trial utterances")
    sids = sorted(enroll)
    e_rows = np.stack([enroll[s] for s in sids])
    t_rows = np.stack([t[2] for t in trials])
    alpha, beta = calibration
    sims = alpha * cosine_matrix(e_rows, t_rows) + beta
    rows = []
    for i, sid in enumerate(sids):
        for j, (speaker, utt, _) in enumerate(trials):
            rows.append((sid, utt, float(sims[i, j]), sid == speaker))
    return TrialScores(rows)


def matrix_to_json(matrix: SimilarityMatrix) -> dict:
    return {
        "block": matrix.block,
        "speakers": list(matrix.speakers),
        "values": matrix.values.tolist(),
    }


def save_matrix_csv(matrix: SimilarityMatrix, path) -> None:
    """CSV grid: header row/column of speaker ids, cells via repr."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["block:" + matrix.block] + list(matrix.speakers)) + "\n")
        for sid, row in zip(matrix.speakers, matrix.values):
            fh.write(",".join([sid] + [repr(float(x)) for x in row]) + "\n")


def save_scores_csv(trial_scores: TrialScores, path) -> None:
    """CSV rows: enroll_id, test_id, score, target_flag."""
    with open(path, "w", newline="") as fh:
        fh.write("enroll_id,test_id,score,target\n")
        for enroll_id, test_id, score, target in trial_scores.rows:
            fh.write(f"{enroll_id},{test_id},{repr(score)},{int(target)}\n")
