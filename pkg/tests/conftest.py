import numpy as np
import pytest

from voxrot.pool import EmbeddingPool, PoolRecord, SyntheticSpec, generate_synthetic


@pytest.fixture(scope="session")
def small_pool():
    """8 speakers x 6 utterances at d=8, with enroll/trial splits."""
    spec = SyntheticSpec(
        num_speakers=8, utterances_per_speaker=6, dim=8, seed=101
    )
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def tiny_pool():
    """Hand-built 2-speaker pool, train split only."""
    recs = []
    vecs = {
        "a": [(1.0, 0.0, 0.0), (0.9, 0.1, 0.0)],
        "b": [(0.0, 1.0, 0.0), (0.1, 0.9, 0.1)],
    }
    for sid, rows in vecs.items():
        for i, row in enumerate(rows):
            recs.append(PoolRecord(sid, f"u{i}", np.array(row), "train"))
    return EmbeddingPool(3, tuple(recs))


def rng_of(seed):
    return np.random.default_rng(seed)
