"""Ten acceptance gates, one test and one printed verdict line each.

Each gate re-derives its expected values from an in-file oracle or from
frozen measurements of the committed golden run, asserts the check at its
stated tolerance, and enforces a wall-clock budget. Heavy trainings are
cached module-wide so gates that share a model pay for it once.
"""

import functools
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from voxrot import ops
from voxrot.anonymizer import (
    AnonymizerModel,
    SelectionConfig,
    apply_stack,
    init_stack,
    model_forward,
    model_to_bytes,
    stack_directions,
)
from voxrot.attacks import (
    SCENARIOS,
    ScenarioConfig,
    anonymize_pool_model,
    pair_cosine_report,
    prepare_context,
    run_scenario,
)
from voxrot.config import ExperimentConfig
from voxrot.linalg import cholesky_factor, cholesky_whitening, householder_matrix
from voxrot.losses import Batch, LossConfig, init_head
from voxrot.metrics import (
    ScoreSet,
    SimilarityMatrix,
    d_diag,
    eer,
    g_vd,
    weighted_average_eer,
)
from voxrot.pool import (
    SyntheticSpec,
    generate_synthetic,
    load_pool,
    pool_from_bytes,
    pool_to_bytes,
)
from voxrot.training import TrainConfig, gradient_check, train

GOLDEN_POOL = Path(__file__).parent / "golden" / "default_pool.emb1"


def verdict(num, label, ok, detail, t0, budget):
    """One line per gate; fails the test on a bad value or a blown budget."""
    elapsed = time.perf_counter() - t0
    word = "PASS" if ok and elapsed < budget else "FAIL"
    print(f"[acceptance {num:02d}] {label}: {word} "
          f"({detail}; {elapsed:.2f}s of {budget:.0f}s budget)")
    assert ok, f"acceptance {num:02d} {label}: {detail}"
    assert elapsed < budget, (
        f"acceptance {num:02d} {label}: runtime {elapsed:.2f}s over {budget}s"
    )


@functools.lru_cache(maxsize=None)
def golden_pool():
    return load_pool(GOLDEN_POOL)


@functools.lru_cache(maxsize=None)
def stock_model(seed):
    # default config: roh, 4 layers x 8 reflections, waam, 2000 iterations
    model, _ = train(golden_pool(), TrainConfig(seed=seed))
    return model


def test_01_orthogonality_by_construction():
    t0 = time.perf_counter()
    d = 192
    eye = np.eye(d)
    rng = np.random.default_rng(424)
    worst = 0.0
    for k in range(100):
        stack = init_stack("roh", d, 12, 192, seed=1000 + k)
        img = apply_stack(stack, eye)
        worst = max(worst, float(np.abs(img @ img.T - eye).max()))
    for k in range(100):
        stack = init_stack("loh", d, 12, 50, seed=2000 + k)
        img = apply_stack(stack, eye, conditioner=rng.standard_normal(d))
        worst = max(worst, float(np.abs(img @ img.T - eye).max()))
    verdict(1, "orthogonality by construction", worst < 1e-9,
            f"max basis deviation {worst:.2e} < 1e-9", t0, 30.0)


def test_02_dense_product_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    worst = 0.0
    for case in range(1000):
        d = int(rng.integers(2, 17))
        layers = int(rng.integers(1, 5))
        q = int(rng.integers(1, d + 1))
        variant = "roh" if case % 2 == 0 else "loh"
        stack = init_stack(variant, d, layers, q, seed=int(rng.integers(1 << 30)))
        cond = rng.standard_normal(d) if variant == "loh" else None
        x = rng.standard_normal((3, d))
        dirs, _, _ = stack_directions(stack, cond)
        dense = np.eye(d)
        for v in dirs:
            dense = dense @ householder_matrix(v)
        expect = x @ dense
        got = apply_stack(stack, x, conditioner=cond)
        rel = float(np.linalg.norm(got - expect) / np.linalg.norm(expect))
        worst = max(worst, rel)
    verdict(2, "dense product oracle", worst < 1e-10,
            f"1000 cases, max relative error {worst:.2e} < 1e-10", t0, 5.0)


def test_03_distribution_preservation():
    t0 = time.perf_counter()
    d, n = 8, 100_000
    rng = np.random.default_rng(321)
    mu = rng.standard_normal(d)
    a = rng.standard_normal((d, d))
    cov = a @ a.T + 0.5 * np.eye(d)
    chol = cholesky_factor(cov)
    x = rng.standard_normal((n, d)) @ chol.T + mu
    model = AnonymizerModel(
        init_stack("roh", d, 4, d, seed=6),
        mu,
        form="general",
        whitening=(cholesky_whitening(cov), chol),
    )
    y = model_forward(model, x)

    sd = np.sqrt(np.diag(cov))
    mean_dev = np.abs(y.mean(axis=0) - mu)
    mean_band = 4.0 * sd / np.sqrt(n)
    cov_y = np.cov(y, rowvar=False)
    cov_x = np.cov(x, rowvar=False)
    # standard error of a sample covariance entry under Gaussian data
    se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
    cov_dev = np.abs(cov_y - cov)
    cross_dev = np.abs(cov_y - cov_x)
    ok = (
        bool(np.all(mean_dev < mean_band))
        and bool(np.all(cov_dev < 4.0 * se))
        and bool(np.all(cross_dev < 4.0 * np.sqrt(2.0) * se))
    )
    verdict(3, "distribution preservation", ok,
            f"worst mean z {float((mean_dev / (sd / np.sqrt(n))).max()):.2f} < 4, "
            f"worst cov z {float((cov_dev / se).max()):.2f} < 4", t0, 10.0)


def test_04_gradient_correctness():
    t0 = time.perf_counter()
    d = 6
    rng = np.random.default_rng(61)
    head = init_head(d, 8, seed=5)
    originals = rng.standard_normal((4, d))
    labels = np.array([0, 1, 2, 3])
    worst = 0.0
    for stack_variant in ("roh", "loh"):
        model = AnonymizerModel(
            init_stack(stack_variant, d, 2, 3, seed=9), rng.standard_normal(d)
        )
        anon = model_forward(model, originals)
        batch = Batch(
            np.vstack([originals, anon]), np.concatenate([labels, labels + 8])
        )
        for loss_variant in ("aam", "waam"):
            for lam in (0.0, 20.0):
                err = gradient_check(
                    model, head, batch, LossConfig(lam=lam), variant=loss_variant
                )
                worst = max(worst, err)
    verdict(4, "gradient correctness", worst < 1e-4,
            f"8 configurations, max relative error {worst:.2e} < 1e-4", t0, 60.0)


def eer_oracle(target, non):
    """Plain-loop threshold enumeration, independent of the library."""
    cand = sorted(set(list(target) + list(non)))
    cand = [cand[0] - 1.0] + cand + [cand[-1] + 1.0]
    rates = []
    for t in cand:
        fa = sum(1 for s in non if s > t) / len(non)
        fr = sum(1 for s in target if s < t) / len(target)
        rates.append((fa, fr))
    for k, (fa, fr) in enumerate(rates):
        if fa - fr <= 0.0:
            if fa == fr:
                return (fa + fr) / 2.0
            pfa, pfr = rates[k - 1]
            frac = (pfa - pfr) / ((pfa - pfr) - (fa - fr))
            return pfa + (fa - pfa) * frac
    raise AssertionError("no crossing found")


def test_05_eer_machinery():
    t0 = time.perf_counter()
    rng = np.random.default_rng(88)
    worst = 0.0
    for _ in range(300):
        nt = int(rng.integers(1, 101))
        nn = int(rng.integers(1, 101))
        shift = rng.uniform(-1.0, 1.0)
        target = np.round(rng.normal(shift, 1.0, nt), 1)
        non = np.round(rng.normal(0.0, 1.0, nn), 1)
        got, _ = eer(ScoreSet(target, non))
        worst = max(worst, abs(got - eer_oracle(target, non)))
    mc, _ = eer(ScoreSet(rng.standard_normal(10_000), rng.standard_normal(10_000)))
    weighted = weighted_average_eer(
        [39.77, 45.81, 41.55, 44.07, 45.93, 49.29],
        [0.25, 0.25, 0.20, 0.20, 0.05, 0.05],
    )
    ok = worst < 1e-12 and abs(mc - 0.5) < 0.02 and abs(weighted - 43.28) < 0.01
    verdict(5, "error-rate machinery", ok,
            f"oracle gap {worst:.1e}, matched-distribution {mc:.3f}, "
            f"weighted {weighted:.2f}", t0, 5.0)


def test_06_metric_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(14)
    exact_zero = True
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 21))
        values = rng.uniform(0.0, 1.0, (n, n)) + np.eye(n)
        m = SimilarityMatrix(values, tuple(f"s{i}" for i in range(n)), "oo")
        exact_zero = exact_zero and g_vd(m, m) == 0.0
        got = d_diag(m)
        diag = [values[i, i] for i in range(n)]
        off = [values[i, j] for i in range(n) for j in range(n) if i != j]
        oracle = abs(sum(diag) / n - sum(off) / len(off))
        worst = max(worst, abs(got - oracle))
    verdict(6, "metric identities", exact_zero and worst < 1e-15,
            f"gain-vs-self exactly 0, diagonal-dominance gap {worst:.1e}", t0, 1.0)


def test_07_linkability_ordering():
    t0 = time.perf_counter()
    pool = golden_pool()
    selection_cfg = ScenarioConfig(
        scenario="semi-informed", kind="selection",
        selection=SelectionConfig(n_far=20, n_pick=16),
    )
    ctx = prepare_context(pool, selection_cfg)  # stock calibration only
    ctx.user_model = stock_model(50)
    ctx.attacker_model = stock_model(1986)
    rotation = {}
    for name in SCENARIOS:
        report, _ = run_scenario(pool, ScenarioConfig(scenario=name, kind="ohnn"), ctx)
        rotation[name] = report.eer
    selection_report, _ = run_scenario(pool, selection_cfg)
    sel = selection_report.eer
    ok = (
        rotation["unprotected"] < 0.05
        and all(rotation[s] > 0.30 for s in ("ignorant", "lazy-informed", "semi-informed"))
        and sel < 0.15
        and all(sel < rotation[s] for s in ("lazy-informed", "semi-informed"))
    )
    detail = ", ".join(f"{k} {v * 100:.2f}%" for k, v in rotation.items())
    verdict(7, "linkability ordering", ok,
            f"rotation: {detail}; selection semi-informed {sel * 100:.2f}%", t0, 180.0)


def test_08_distinctiveness_ordering(tmp_path):
    t0 = time.perf_counter()
    pool = golden_pool()
    rotation = ops.op_evaluate(
        pool, tmp_path / "rotation", ExperimentConfig(),
        model=stock_model(50), calibration_method="moments",
    )
    selection = ops.op_evaluate(
        pool, tmp_path / "selection", ExperimentConfig(),
        selection=SelectionConfig(n_far=20, n_pick=16, seed=50),
        calibration_method="moments",
    )
    ok = selection["g_vd"] < rotation["g_vd"]
    verdict(8, "distinctiveness ordering", ok,
            f"selection {selection['g_vd']:+.3f} dB < rotation "
            f"{rotation['g_vd']:+.3f} dB", t0, 60.0)


def test_09_loss_variant_ordering():
    t0 = time.perf_counter()
    pool = golden_pool()
    details = []
    ok = True
    for seed in (50, 1986):
        means = {}
        for variant in ("waam", "aam"):
            cfg = TrainConfig(seed=seed, loss_variant=variant, loss=LossConfig(lam=5.0))
            model, _ = train(pool, cfg)
            anon = anonymize_pool_model(pool, model, "all")
            means[variant] = float(pair_cosine_report(pool, anon).positive.mean())
        ok = ok and means["waam"] < means["aam"]
        details.append(
            f"seed {seed}: {means['waam']:.4f} vs {means['aam']:.4f}"
        )
    verdict(9, "loss variant ordering", ok,
            "paired-margin mean pair cosine below plain-margin "
            f"({'; '.join(details)})", t0, 180.0)


def test_10_determinism_and_persistence(tmp_path):
    t0 = time.perf_counter()
    spec = SyntheticSpec(num_speakers=6, utterances_per_speaker=6, dim=8, seed=3)
    small = generate_synthetic(spec)
    cfg = TrainConfig(
        seed=9, iterations=40, batch_size=16, num_layers=2,
        reflections_per_layer=3, cycle_length=40,
    )
    model_a, report_a = train(small, cfg)
    model_b, report_b = train(small, cfg)
    same_model = model_to_bytes(model_a) == model_to_bytes(model_b)
    same_report = json.dumps(report_a.to_json()) == json.dumps(report_b.to_json())
    same_pool = pool_to_bytes(generate_synthetic(spec)) == pool_to_bytes(small)
    same_anon = pool_to_bytes(anonymize_pool_model(small, model_a, "all")) == \
        pool_to_bytes(anonymize_pool_model(small, model_b, "all"))

    rng = np.random.default_rng(12)
    trips = 0
    clean = True
    from voxrot.pool import EmbeddingPool, PoolRecord  # local: fuzz construction only

    for case in range(200):
        dim = int(rng.integers(1, 13))
        recs = []
        for s in range(int(rng.integers(1, 7))):
            for u in range(int(rng.integers(1, 5))):
                recs.append(PoolRecord(
                    f"sp{s}", f"u{u}",
                    rng.standard_normal(dim).astype(np.float32).astype(np.float64),
                    ("train", "enroll", "trial")[int(rng.integers(0, 3))],
                ))
        fuzz = EmbeddingPool(dim, tuple(recs))
        data = pool_to_bytes(fuzz)
        back = pool_from_bytes(data)
        clean = clean and pool_to_bytes(back) == data and all(
            a.speaker == b.speaker and a.utterance == b.utterance
            and a.split == b.split and np.array_equal(a.vector, b.vector)
            for a, b in zip(fuzz.records, back.records)
        )
        trips += 1
    ok = same_model and same_report and same_pool and same_anon and clean
    verdict(10, "determinism and persistence", ok,
            f"model/report/pool/anonymized reruns bit-identical, "
            f"{trips} fuzzed round-trips clean", t0, 30.0)
