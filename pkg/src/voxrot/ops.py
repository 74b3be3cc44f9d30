"""Operations shared by the CLI and the HTTP service.

Each operation takes core dataclasses plus output locations, writes its
artifacts (deterministic bytes for deterministic inputs: JSON with sorted
keys, floats via repr) and returns a JSON-friendly summary dict. The CLI
prints the summaries; the service returns them as response bodies.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .anonymizer import (
    AnonymizerModel,
    SelectionConfig,
    load_model,
    save_model,
    save_model_json,
)
from .attacks import (
    ScenarioConfig,
    anonymize_pool_model,
    anonymize_pool_selection,
    pair_cosine_report,
    run_scenarios,
    save_pair_cosines_csv,
)
from .config import ExperimentConfig, dump_effective_config
from .errors import InvalidSpec
from .metrics import (
    IDENTITY_CALIBRATION,
    cosine_pair_scores,
    d_diag,
    fit_calibration,
    g_vd,
    matrix_to_json,
    save_matrix_csv,
    save_scores_csv,
    similarity_matrix,
    weighted_average_eer,
)
from .pool import (
    EmbeddingPool,
    SyntheticSpec,
    generate_synthetic,
    load_pool,
    load_pool_csv,
    pool_fingerprint,
    save_pool,
    save_pool_csv,
)
from .training import TrainConfig, train


def resolve_pool(path) -> EmbeddingPool:
    """Load a pool file; `.csv` goes through the CSV importer."""
    if str(path).endswith(".csv"):
        return load_pool_csv(path)
    return load_pool(path)


def write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def pool_summary(pool: EmbeddingPool, path=None) -> dict:
    counts = {split: 0 for split in ("train", "enroll", "trial")}
    for rec in pool.records:
        counts[rec.split] += 1
    doc = {
        "dim": pool.dim,
        "records": len(pool.records),
        "speakers": len(pool.speakers()),
        "splits": counts,
        "fingerprint": pool_fingerprint(pool),
    }
    if path is not None:
        doc["path"] = str(path)
    return doc


def op_gen_data(
    spec: SyntheticSpec,
    out: Path,
    effective: ExperimentConfig,
    emit_csv: bool = False,
) -> dict:
    pool = generate_synthetic(spec)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_pool(pool, out)
    if emit_csv:
        save_pool_csv(pool, out.with_suffix(".csv"))
    dump_effective_config(effective, out.with_suffix(".config.yaml"))
    return pool_summary(pool, out)


def op_train(
    pool: EmbeddingPool,
    cfg: TrainConfig,
    out_dir: Path,
    effective: ExperimentConfig,
) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    model, report = train(pool, cfg)
    model_path = out_dir / "model.ohnn"
    save_model(model, model_path)
    save_model_json(model, out_dir / "model.json")
    write_json(out_dir / "report.json", report.to_json())
    dump_effective_config(effective, out_dir / "effective-config.yaml")
    return {
        "model": str(model_path),
        "report": str(out_dir / "report.json"),
        "final_pair_cosine": report.final_pair_cosine,
        "final_loss": report.loss_trace[-1] if report.loss_trace else None,
        "iterations": len(report.loss_trace),
        "wall_clock_sec": report.wall_clock_sec,
    }


def op_anonymize(
    pool: EmbeddingPool,
    side: str,
    out: Path,
    effective: ExperimentConfig,
    model: AnonymizerModel | None = None,
    selection: SelectionConfig | None = None,
) -> dict:
    if (model is None) == (selection is None):
        raise InvalidSpec("exactly one of a model or a selection config is required")
    if model is not None:
        result = anonymize_pool_model(pool, model, side)
    else:
        result = anonymize_pool_selection(pool, selection, side)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_pool(result, out)
    dump_effective_config(effective, out.with_suffix(".config.yaml"))
    return pool_summary(result, out)


def _held_out(pool: EmbeddingPool) -> EmbeddingPool:
    """Non-train records when present, the whole pool otherwise."""
    held = EmbeddingPool(
        pool.dim, tuple(r for r in pool.records if r.split != "train")
    )
    return held if held.records else pool


def op_evaluate(
    pool: EmbeddingPool,
    out_dir: Path,
    effective: ExperimentConfig,
    model: AnonymizerModel | None = None,
    selection: SelectionConfig | None = None,
    calibration_method: str = "logistic",
) -> dict:
    """Similarity matrices (oo, oa, aa), distinctiveness, pair cosines.

    Matrices are computed over held-out records (non-train; whole pool as
    fallback); the calibration is fitted on train-split cosine pairs when a
    train split exists, otherwise the identity calibration is used.
    """
    if (model is None) == (selection is None):
        raise InvalidSpec("exactly one of a model or a selection config is required")
    out_dir.mkdir(parents=True, exist_ok=True)
    held = _held_out(pool)
    if model is not None:
        anon_held = anonymize_pool_model(held, model, "all")
    else:
        candidates = None
        if any(r.split == "train" for r in pool.records):
            from .pool import pool_stats

            candidates = pool_stats(pool).centroids
        anon_held = anonymize_pool_selection(held, selection, "all", candidates)

    if any(r.split == "train" for r in pool.records):
        groups_train = {
            sid: np.stack([r.vector for r in recs])
            for sid, recs in pool.by_speaker("train").items()
        }
        calibration = fit_calibration(
            cosine_pair_scores(groups_train), calibration_method
        )
    else:
        calibration = IDENTITY_CALIBRATION

    def groups_of(p: EmbeddingPool) -> dict[str, np.ndarray]:
        return {
            sid: np.stack([r.vector for r in recs])
            for sid, recs in p.by_speaker().items()
        }

    orig = groups_of(held)
    anon = groups_of(anon_held)
    m_oo = similarity_matrix(orig, calibration=calibration, block="oo")
    m_aa = similarity_matrix(anon, calibration=calibration, block="aa")
    m_oa = similarity_matrix(orig, anon, calibration=calibration, block="oa")
    gain = g_vd(m_aa, m_oo)
    pairs = pair_cosine_report(held, anon_held)

    for m, name in ((m_oo, "oo"), (m_aa, "aa"), (m_oa, "oa")):
        save_matrix_csv(m, out_dir / f"matrix_{name}.csv")
        write_json(out_dir / f"matrix_{name}.json", matrix_to_json(m))
    save_pair_cosines_csv(pairs, out_dir / "pair_cosines.csv")
    summary = {
        "calibration": list(calibration),
        "d_diag_oo": d_diag(m_oo),
        "d_diag_aa": d_diag(m_aa),
        "g_vd": gain,
        "mean_positive_pair_cosine": float(pairs.positive.mean()),
        "mean_negative_pair_cosine": float(pairs.negative.mean()),
        "speakers": len(m_oo.speakers),
    }
    write_json(out_dir / "evaluation.json", summary)
    dump_effective_config(effective, out_dir / "effective-config.yaml")
    return summary


def op_attack_sim(
    pools: list[tuple[str, EmbeddingPool]],
    weights: list[float],
    cfg: ScenarioConfig,
    scenarios: list[str],
    out_dir: Path,
    effective: ExperimentConfig,
) -> dict:
    """Run the scenario suite over one or more pools (subsets).

    Per subset and scenario, writes the report JSON and the raw score CSV;
    with several subsets the summary carries the weighted-average EER per
    scenario (weights need not be normalized).
    """
    if len(pools) != len(weights):
        raise InvalidSpec(f"{len(pools)} pools but {len(weights)} weights")
    out_dir.mkdir(parents=True, exist_ok=True)
    per_subset: dict[str, dict[str, float]] = {}
    for name, pool in pools:
        results = run_scenarios(pool, cfg, scenarios)
        per_subset[name] = {}
        for report, scored in results:
            tag = f"{name}.{report.scenario}"
            write_json(out_dir / f"report_{tag}.json", report.to_json())
            save_scores_csv(scored, out_dir / f"scores_{tag}.csv")
            per_subset[name][report.scenario] = report.eer
    weighted = {
        scenario: weighted_average_eer(
            [per_subset[name][scenario] for name, _ in pools], weights
        )
        for scenario in scenarios
    }
    summary = {
        "kind": cfg.kind,
        "scenarios": scenarios,
        "subsets": per_subset,
        "weights": list(weights),
        "weighted_eer": weighted,
    }
    write_json(out_dir / "summary.json", summary)
    dump_effective_config(effective, out_dir / "effective-config.yaml")
    return summary


def format_attack_table(summary: dict) -> str:
    """Human-readable EER table (percent), one row per scenario."""
    subsets = list(summary["subsets"])
    lines = []
    header = f"{'scenario':<16}" + "".join(f"{s:>14}" for s in subsets)
    if len(subsets) > 1:
        header += f"{'weighted':>14}"
    lines.append(header)
    for scenario in summary["scenarios"]:
        row = f"{scenario:<16}"
        for name in subsets:
            row += f"{100.0 * summary['subsets'][name][scenario]:>13.2f}%"
        if len(subsets) > 1:
            row += f"{100.0 * summary['weighted_eer'][scenario]:>13.2f}%"
        lines.append(row)
    return "\n".join(lines)


def load_model_file(path) -> AnonymizerModel:
    return load_model(path)


def export_inference_model(model_path: Path, out: Path) -> dict:
    """Strip the training head; the result is inference-only."""
    model = load_model(model_path)
    save_model(model.without_head(), out)
    return {"model": str(out), "had_head": model.head is not None}
