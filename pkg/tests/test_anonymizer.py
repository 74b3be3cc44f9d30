import numpy as np
import pytest

from voxrot.anonymizer import (
    AnonymizerModel,
    HouseholderStack,
    RohLayer,
    SelectionConfig,
    anonymize,
    apply_stack,
    init_stack,
    model_from_bytes,
    model_to_bytes,
    model_to_json,
    select_anonymize,
    select_from_centroids,
    stack_backward,
    stack_forward,
)
from voxrot.errors import (
    DimensionMismatch,
    InvalidShape,
    InvalidSpec,
    PoolTooSmall,
    ZeroVector,
)
from voxrot.linalg import householder_matrix
from voxrot.pool import EmbeddingPool, PoolRecord


def dense_stack_matrix(stack, conditioner=None):
    """Explicit W via the stack's action on the canonical basis."""
    d = stack.dim
    basis = np.eye(d)
    cond = None
    if stack.variant == "loh":
        cond = conditioner if conditioner is not None else np.zeros(d)
    return stack_forward(stack, basis, conditioner=cond).T


class TestInitStack:
    def test_deterministic(self):
        a = init_stack("roh", 8, 3, 4, seed=50)
        b = init_stack("roh", 8, 3, 4, seed=50)
        for la, lb in zip(a.param_arrays(), b.param_arrays()):
            assert np.array_equal(la, lb)

    def test_seeds_differ(self):
        a = init_stack("roh", 8, 3, 4, seed=50)
        b = init_stack("roh", 8, 3, 4, seed=1986)
        assert any(
            not np.array_equal(x, y)
            for x, y in zip(a.param_arrays(), b.param_arrays())
        )

    def test_loh_deterministic(self):
        a = init_stack("loh", 8, 2, 3, seed=50)
        b = init_stack("loh", 8, 2, 3, seed=50)
        for la, lb in zip(a.param_arrays(), b.param_arrays()):
            assert np.array_equal(la, lb)

    def test_per_layer_sizes(self):
        stack = init_stack("roh", 8, 3, [2, 5, 8], seed=0)
        assert stack.layer_sizes() == [2, 5, 8]

    def test_reflections_capped_by_dim(self):
        with pytest.raises(InvalidShape):
            init_stack("roh", 4, 1, 5, seed=0)

    def test_at_least_one_reflection(self):
        with pytest.raises(InvalidShape):
            init_stack("roh", 4, 1, 0, seed=0)

    def test_at_least_one_layer(self):
        with pytest.raises(InvalidShape):
            init_stack("roh", 4, 0, 2, seed=0)


class TestApplyStack:
    def test_single_e1_reflection(self):
        stack = HouseholderStack(
            3, "roh", [RohLayer(np.array([[1.0, 0.0, 0.0]]))]
        )
        out = apply_stack(stack, np.array([2.0, 3.0, 4.0]))
        assert np.allclose(out, [-2.0, 3.0, 4.0], atol=1e-15)

    def test_norm_preserved_full_scale(self):
        stack = init_stack("roh", 192, 12, 192, seed=7)
        rng = np.random.default_rng(8)
        x = rng.standard_normal(192)
        y = apply_stack(stack, x)
        ratio = np.linalg.norm(y) / np.linalg.norm(x)
        assert 1.0 - 1e-10 < ratio < 1.0 + 1e-10

    def test_reverse_inverts(self):
        rng = np.random.default_rng(9)
        stack = init_stack("roh", 12, 3, 5, seed=10)
        x = rng.standard_normal((4, 12))
        y = stack_forward(stack, x)
        back = stack_forward(stack, y, reverse=True)
        assert np.max(np.abs(back - x)) < 1e-9

    def test_reverse_inverts_loh(self):
        rng = np.random.default_rng(10)
        stack = init_stack("loh", 10, 2, 4, seed=11)
        x = rng.standard_normal(10)
        # fixed conditioner: same directions forward and back
        y = stack_forward(stack, x[None], conditioner=x)
        back = stack_forward(stack, y, conditioner=x, reverse=True)
        assert np.max(np.abs(back - x)) < 1e-9

    def test_matches_dense_product(self):
        rng = np.random.default_rng(11)
        for trial in range(30):
            d = int(rng.integers(2, 17))
            L = int(rng.integers(1, 5))
            q = int(rng.integers(1, d + 1))
            stack = init_stack("roh", d, L, q, seed=trial)
            x = rng.standard_normal(d)
            # W = W_1 ... W_L, layer l applies rows bottom-up
            w = np.eye(d)
            for layer in stack.layers:
                wl = np.eye(d)
                for v in layer.vectors:
                    wl = householder_matrix(v) @ wl
                w = w @ wl
            got = apply_stack(stack, x)
            want = w @ x
            denom = max(np.linalg.norm(want), 1e-12)
            assert np.linalg.norm(got - want) / denom < 1e-10

    def test_orthogonality_via_basis(self):
        stack = init_stack("roh", 16, 4, 8, seed=12)
        w = dense_stack_matrix(stack)
        assert np.max(np.abs(w.T @ w - np.eye(16))) < 1e-9

    def test_loh_orthogonality_any_parameters(self):
        rng = np.random.default_rng(13)
        stack = init_stack("loh", 12, 3, 5, seed=14)
        # scramble parameters arbitrarily; orthogonality must survive
        for arr in stack.param_arrays():
            arr *= rng.standard_normal(arr.shape) * 3.0
        cond = rng.standard_normal(12)
        w = dense_stack_matrix(stack, conditioner=cond)
        assert np.max(np.abs(w.T @ w - np.eye(12))) < 1e-9

    def test_not_identity_for_random_vectors(self):
        stack = init_stack("roh", 8, 2, 3, seed=15)
        w = dense_stack_matrix(stack)
        assert np.max(np.linalg.norm(w - np.eye(8), axis=0)) > 1e-6

    def test_zero_roh_vector_rejected(self):
        stack = HouseholderStack(3, "roh", [RohLayer(np.zeros((1, 3)))])
        with pytest.raises(ZeroVector):
            apply_stack(stack, np.ones(3))

    def test_loh_needs_conditioner_for_matrix_input(self):
        stack = init_stack("loh", 6, 2, 2, seed=16)
        rng = np.random.default_rng(17)
        x = rng.standard_normal((3, 6))
        # default conditioner is x itself: per-sample directions
        y = stack_forward(stack, x)
        for i in range(3):
            yi = stack_forward(stack, x[i][None], conditioner=x[i])
            assert np.max(np.abs(y[i] - yi[0])) < 1e-12

    def test_loh_zero_generator_falls_back(self):
        stack = init_stack("loh", 6, 1, 1, seed=18)
        stack.layers[0].kernel[:] = 0.0
        stack.layers[0].bias[:] = 0.0
        x = np.ones(6)
        y = apply_stack(stack, x)  # must not raise
        assert np.isfinite(y).all()
        assert np.linalg.norm(y) == pytest.approx(np.linalg.norm(x), rel=1e-10)

    def test_dim_mismatch(self):
        stack = init_stack("roh", 4, 1, 2, seed=19)
        with pytest.raises(DimensionMismatch):
            apply_stack(stack, np.ones(5))


class TestAnonymizerModel:
    def test_orthogonal_complement_fixed_point(self):
        # v orthogonal to (x - mu): reflection leaves x - mu unchanged
        mu = np.array([1.0, 1.0, 1.0])
        stack = HouseholderStack(3, "roh", [RohLayer(np.array([[0.0, 0.0, 1.0]]))])
        model = AnonymizerModel(stack, mu)
        x = np.array([2.0, 3.0, 1.0])  # x - mu = (1, 2, 0) is orthogonal to e3
        assert np.allclose(anonymize(model, x), x, atol=1e-14)

    def test_zero_mu_equals_apply_stack(self):
        stack = init_stack("roh", 6, 2, 3, seed=20)
        model = AnonymizerModel(stack, np.zeros(6))
        rng = np.random.default_rng(21)
        x = rng.standard_normal(6)
        assert np.allclose(anonymize(model, x), apply_stack(stack, x), atol=1e-14)

    def test_deterministic(self):
        stack = init_stack("roh", 6, 2, 3, seed=22)
        model = AnonymizerModel(stack, np.ones(6))
        x = np.arange(6.0)
        assert np.array_equal(anonymize(model, x), anonymize(model, x))

    def test_general_requires_whitening(self):
        stack = init_stack("roh", 4, 1, 2, seed=23)
        with pytest.raises(InvalidSpec):
            AnonymizerModel(stack, np.zeros(4), form="general")

    def test_general_validates_pair(self):
        stack = init_stack("roh", 4, 1, 2, seed=24)
        bad = (np.eye(4), 2.0 * np.eye(4))
        with pytest.raises(InvalidSpec):
            AnonymizerModel(stack, np.zeros(4), form="general", whitening=bad)

    def test_general_distribution_preserved(self):
        rng = np.random.default_rng(25)
        d = 8
        a = rng.standard_normal((d, d))
        cov = a @ a.T / d + np.eye(d)
        mu = rng.standard_normal(d)
        from voxrot.linalg import cholesky_factor, cholesky_whitening

        lw = cholesky_whitening(cov)
        li = cholesky_factor(cov)
        stack = init_stack("roh", d, 2, 4, seed=26)
        model = AnonymizerModel(stack, mu, form="general", whitening=(lw, li))
        n = 10_000
        x = rng.multivariate_normal(mu, cov, size=n)
        y = np.stack([anonymize(model, xi) for xi in x[:64]])
        # vectorized path for the bulk
        from voxrot.anonymizer import model_forward

        y = model_forward(model, x)
        # mean within 3 sigma Monte-Carlo band per coordinate
        se_mean = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(y.mean(axis=0) - x.mean(axis=0)) < 4.0 * se_mean)
        cov_in = np.cov(x, rowvar=False)
        cov_out = np.cov(y, rowvar=False)
        scale = np.sqrt(np.outer(np.diag(cov), np.diag(cov)))
        assert np.max(np.abs(cov_out - cov_in) / scale) < 0.1


class TestSelection:
    def centroids(self):
        # hand-placed d=2 centroids around the unit circle
        return {
            "s0": np.array([1.0, 0.0]),
            "s1": np.array([0.9, 0.1]),
            "s2": np.array([0.0, 1.0]),
            "s3": np.array([-1.0, 0.1]),
            "s4": np.array([-0.9, -0.2]),
        }

    def test_hand_ranked_top3(self):
        cents = self.centroids()
        source = np.array([1.0, 0.0])
        cfg = SelectionConfig(n_far=3, n_pick=3, seed=0)
        got = select_from_centroids(cents, source, cfg)
        # farthest three by cosine distance from (1,0): s3, s4, s2
        want = (cents["s2"] + cents["s3"] + cents["s4"]) / 3.0
        assert np.allclose(got, want, atol=1e-12)

    def test_all_picked_is_seed_independent(self):
        cents = self.centroids()
        source = np.array([0.3, 0.7])
        a = select_from_centroids(cents, source, SelectionConfig(5, 5, seed=1))
        b = select_from_centroids(cents, source, SelectionConfig(5, 5, seed=99))
        assert np.array_equal(a, b)
        assert np.allclose(a, np.mean(list(cents.values()), axis=0), atol=1e-12)

    def test_seeds_generally_differ(self):
        rng = np.random.default_rng(27)
        cents = {f"s{i}": rng.standard_normal(6) for i in range(30)}
        source = rng.standard_normal(6)
        a = select_from_centroids(cents, source, SelectionConfig(20, 5, seed=1))
        b = select_from_centroids(cents, source, SelectionConfig(20, 5, seed=2))
        assert not np.allclose(a, b)

    def test_pool_order_invariance(self):
        rng = np.random.default_rng(28)
        names = [f"s{i}" for i in range(12)]
        cents = {n: rng.standard_normal(4) for n in names}
        source = rng.standard_normal(4)
        cfg = SelectionConfig(8, 4, seed=5)
        a = select_from_centroids(cents, source, cfg)
        shuffled = {n: cents[n] for n in reversed(names)}
        b = select_from_centroids(shuffled, source, cfg)
        assert np.array_equal(a, b)

    def test_tie_broken_by_speaker_id(self):
        # two centroids at identical distance; only one slot to keep
        cents = {
            "zz": np.array([0.0, 1.0]),
            "aa": np.array([0.0, 1.0]),
            "mid": np.array([1.0, 1.0]),
            "near": np.array([1.0, 0.0]),
        }
        source = np.array([1.0, 0.0])
        cfg = SelectionConfig(n_far=1, n_pick=1, seed=0)
        got = select_from_centroids(cents, source, cfg)
        # 'aa' and 'zz' tie as farthest; ascending id keeps 'aa' first
        assert np.allclose(got, cents["aa"])

    def test_pool_too_small(self):
        cents = self.centroids()
        with pytest.raises(PoolTooSmall):
            select_from_centroids(cents, np.ones(2), SelectionConfig(6, 3, seed=0))

    def test_invalid_config(self):
        with pytest.raises(InvalidSpec):
            SelectionConfig(3, 4, seed=0).validate()
        with pytest.raises(InvalidSpec):
            SelectionConfig(3, 0, seed=0).validate()

    def test_pool_wrapper(self):
        recs = []
        for sid, c in self.centroids().items():
            for u in range(2):
                recs.append(PoolRecord(sid, f"u{u}", c, "train"))
        pool = EmbeddingPool(2, tuple(recs))
        got = select_anonymize(pool, np.array([1.0, 0.0]), SelectionConfig(3, 3, seed=0))
        cents = self.centroids()
        want = (cents["s2"] + cents["s3"] + cents["s4"]) / 3.0
        assert np.allclose(got, want, atol=1e-12)


class TestModelContainer:
    def roundtrip(self, model):
        return model_from_bytes(model_to_bytes(model))

    def test_roh_bit_exact(self):
        stack = init_stack("roh", 6, 2, 3, seed=30)
        model = AnonymizerModel(stack, np.arange(6.0), seed=30)
        again = self.roundtrip(model)
        assert model_to_bytes(again) == model_to_bytes(model)
        for a, b in zip(model.stack.param_arrays(), again.stack.param_arrays()):
            assert np.array_equal(a, b)
        assert np.array_equal(model.mu, again.mu)
        assert again.seed == 30

    def test_loh_bit_exact(self):
        stack = init_stack("loh", 5, 3, 2, seed=31)
        model = AnonymizerModel(stack, np.zeros(5), seed=31)
        again = self.roundtrip(model)
        assert model_to_bytes(again) == model_to_bytes(model)

    def test_general_with_whitening(self):
        rng = np.random.default_rng(32)
        a = rng.standard_normal((4, 4))
        cov = a @ a.T + 4 * np.eye(4)
        from voxrot.linalg import cholesky_factor, cholesky_whitening

        stack = init_stack("roh", 4, 1, 2, seed=33)
        model = AnonymizerModel(
            stack, np.zeros(4), form="general",
            whitening=(cholesky_whitening(cov), cholesky_factor(cov)),
        )
        again = self.roundtrip(model)
        assert again.form == "general"
        x = rng.standard_normal(4)
        assert np.array_equal(anonymize(model, x), anonymize(again, x))

    def test_head_roundtrip_and_strip(self):
        rng = np.random.default_rng(34)
        stack = init_stack("roh", 4, 1, 2, seed=35)
        model = AnonymizerModel(stack, np.zeros(4), head=rng.standard_normal((4, 6)))
        again = self.roundtrip(model)
        assert np.array_equal(again.head, model.head)
        stripped = model.without_head()
        assert stripped.head is None
        assert model_to_bytes(self.roundtrip(stripped)) == model_to_bytes(stripped)

    def test_truncation_offsets(self):
        stack = init_stack("roh", 3, 1, 2, seed=36)
        model = AnonymizerModel(stack, np.zeros(3))
        data = model_to_bytes(model)
        from voxrot.errors import FormatError

        for cut in range(0, len(data), 7):
            with pytest.raises(FormatError):
                model_from_bytes(data[:cut])

    def test_json_export(self):
        stack = init_stack("roh", 3, 1, 2, seed=37)
        model = AnonymizerModel(stack, np.zeros(3), seed=37)
        doc = model_to_json(model)
        assert doc["variant"] == "roh"
        assert doc["dim"] == 3
        assert doc["form"] == "simplified"
        assert len(doc["layers"]) == 1

    def test_file_roundtrip(self, tmp_path):
        from voxrot.anonymizer import load_model, save_model

        stack = init_stack("loh", 4, 2, 2, seed=38)
        model = AnonymizerModel(stack, np.ones(4), seed=38)
        path = tmp_path / "m.ohnn"
        save_model(model, path)
        again = load_model(path)
        assert model_to_bytes(again) == model_to_bytes(model)
