import numpy as np
import pytest

from mspace.graph import TemporalGraphDataset


def path_graph(n: int) -> np.ndarray:
    adj = np.zeros((n, n), dtype=int)
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = 1
    return adj


def make_dataset(adjacency, features, name="fixture") -> TemporalGraphDataset:
    return TemporalGraphDataset(adjacency=np.asarray(adjacency),
                                features=np.asarray(features, dtype=float),
                                name=name)


def random_dataset(rng, n=4, d=2, snapshots=12, adjacency=None) -> TemporalGraphDataset:
    if adjacency is None:
        draw = rng.random((n, n)) < 0.5
        upper = np.triu(draw, k=1)
        adjacency = (upper | upper.T).astype(int)
    # dyadic-grid values keep float differencing exact
    features = rng.integers(-2000, 2000, (snapshots, n, d)) / 16.0
    return make_dataset(adjacency, features)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
