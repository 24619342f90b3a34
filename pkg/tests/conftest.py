import numpy as np
import pytest

from rcfair.dataset import ScoredDataset

# the eight-row fixture used throughout: two groups, base rate 0.5 each
D1_ROWS = [
    (0.9, 1, "A"),
    (0.8, 0, "A"),
    (0.7, 1, "A"),
    (0.6, 0, "A"),
    (0.85, 1, "B"),
    (0.55, 0, "B"),
    (0.5, 1, "B"),
    (0.4, 0, "B"),
]


@pytest.fixture
def d1() -> ScoredDataset:
    scores, labels, groups = zip(*D1_ROWS)
    return ScoredDataset.from_arrays(scores, labels, groups)


def random_dataset(rng: np.random.Generator, n: int, n_groups: int, ties: bool = False) -> ScoredDataset:
    """Small random instance; every group is non-empty."""
    names = [chr(ord("A") + i) for i in range(n_groups)]
    codes = np.concatenate([np.arange(n_groups), rng.integers(0, n_groups, n - n_groups)])
    rng.shuffle(codes)
    if ties:
        scores = rng.integers(0, 5, n) / 4
    else:
        scores = rng.random(n)
    labels = (rng.random(n) < rng.uniform(0.2, 0.8)).astype(int)
    return ScoredDataset.from_arrays(scores, labels, [names[c] for c in codes])
