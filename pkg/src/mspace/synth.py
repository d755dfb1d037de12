"""Synthetic temporal-graph generation.

Node features evolve as a random walk whose increments are drawn from a
state-conditional Gaussian: the discrete state is the sign pattern of
the previous increment, and the first visit to a state fixes that
state's mean and covariance for the rest of the run.  The covariance is
a symmetrized uniform draw masked by the graph structure (entries of
non-adjacent node pairs are zeroed), so connected nodes co-move while
disconnected ones stay uncorrelated.  An optional periodic signal tiled
with period tau adds seasonality.

The masked matrix is generally indefinite, so it is repaired by
clipping its eigenvalues at a small floor before sampling; the
pre-repair matrix is what carries the structural zeros.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .graph import TemporalGraphDataset

_EIG_FLOOR = 1e-9
_LAW_CACHE_SIZE = 128

# sub-stream tags so trajectory, laws, and graph draws never interleave
_TRAJ_TAG = 0
_LAW_TAG = 1
_GRAPH_TAG = 2


@dataclass(frozen=True)
class SynthParams:
    """Generator inputs; `length` is the number of generated steps T, so
    the output dataset has T+1 snapshots and exactly T shocks."""

    nodes: int
    edge_prob: float | None = None
    adjacency: tuple | None = None      # explicit graph (row tuples) overrides edge_prob
    d: int = 1
    length: int = 1000
    mu_min: float = -200.0
    mu_max: float = 200.0
    var_min: float = 40.0
    var_max: float = 50.0
    init_mean: float = 2e4
    init_std: float = 5000.0
    period: int = 0                     # tau; 0 disables seasonality
    season_mean: float = 0.0
    season_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.nodes < 1:
            raise ConfigError(f"need at least one node, got {self.nodes}")
        if self.adjacency is None:
            if self.edge_prob is None or not 0.0 <= self.edge_prob <= 1.0:
                raise ConfigError(f"edge probability must be in [0, 1], got {self.edge_prob}")
        if self.d < 1:
            raise ConfigError(f"feature dimension must be >= 1, got {self.d}")
        if self.length < 1:
            raise ConfigError(f"length must be >= 1, got {self.length}")
        if self.mu_min > self.mu_max:
            raise ConfigError(f"mu range inverted: [{self.mu_min}, {self.mu_max}]")
        if self.var_min > self.var_max or self.var_min < 0:
            raise ConfigError(f"variance range invalid: [{self.var_min}, {self.var_max}]")
        if self.init_std < 0 or self.season_std < 0:
            raise ConfigError("standard deviations must be >= 0")
        if self.period < 0:
            raise ConfigError(f"period must be >= 0, got {self.period}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


# Table of published benchmark packages.  syn01/syn02 differ only in
# the seasonal component; syn04 is syn03 with ten times the length.
PRESETS = {
    "syn01": SynthParams(nodes=20, edge_prob=0.2, d=1, length=1000,
                         mu_min=-200.0, mu_max=200.0, var_min=40.0, var_max=50.0,
                         init_mean=2e4, init_std=5000.0,
                         period=100, season_mean=100.0, season_std=20.0),
    "syn02": SynthParams(nodes=20, edge_prob=0.2, d=1, length=1000,
                         mu_min=-200.0, mu_max=200.0, var_min=40.0, var_max=50.0,
                         init_mean=2e4, init_std=5000.0, period=0),
    "syn03": SynthParams(nodes=40, edge_prob=0.5, d=1, length=1000,
                         mu_min=-400.0, mu_max=400.0, var_min=30.0, var_max=40.0,
                         init_mean=1e4, init_std=2000.0, period=0),
    "syn04": SynthParams(nodes=40, edge_prob=0.5, d=1, length=10000,
                         mu_min=-400.0, mu_max=400.0, var_min=30.0, var_max=40.0,
                         init_mean=1e4, init_std=2000.0, period=0),
}


def gen_er_graph(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Erdos-Renyi G(n, p): each unordered pair kept independently with
    probability p; symmetric with zero diagonal."""
    if n < 1:
        raise ConfigError(f"need at least one node, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"edge probability must be in [0, 1], got {p}")
    draw = rng.random((n, n)) < p
    upper = np.triu(draw, k=1)
    return (upper | upper.T).astype(np.int8)


def _covariance_mask(adjacency: np.ndarray, d: int) -> np.ndarray:
    """(A + I) kron ones(d, d): keeps own-node blocks so variances survive."""
    n = adjacency.shape[0]
    arr = np.asarray(adjacency, dtype=np.float64) + np.eye(n)
    return np.kron(arr, np.ones((d, d)))


def materialize_law(params: SynthParams, adjacency: np.ndarray, index: int):
    """Shock law of the state discovered as the `index`-th new state.

    Deterministic in (seed, index): revisiting a state after cache
    eviction regenerates the identical law.  Returns the mean, the
    masked pre-repair covariance, the repaired covariance, and its
    Cholesky factor.
    """
    nd = params.nodes * params.d
    rng = np.random.default_rng([params.seed, _LAW_TAG, index])
    mu = rng.uniform(params.mu_min, params.mu_max, nd)
    raw = rng.uniform(params.var_min, params.var_max, (nd, nd))
    sym = 0.5 * (raw + raw.T)
    masked = sym * _covariance_mask(adjacency, params.d)
    vals, vecs = np.linalg.eigh(masked)
    repaired = (vecs * np.clip(vals, _EIG_FLOOR, None)) @ vecs.T
    repaired = 0.5 * (repaired + repaired.T)
    chol = np.linalg.cholesky(repaired + _EIG_FLOOR * np.eye(nd))
    return mu, masked, repaired, chol


@dataclass
class SynthTrace:
    """Provenance of one generated instance, for inspection and tests."""

    params: SynthParams
    adjacency: np.ndarray
    state_keys: list            # discovery order; index == law index
    state_indices: np.ndarray   # per step t in [1, T]: law index used
    seasonal: np.ndarray | None # (tau, nd) tiled signal, if any


class _LawCache:
    """Bounded materialized-law cache; evicted laws regenerate on demand."""

    def __init__(self, params, adjacency, limit=_LAW_CACHE_SIZE):
        self.params = params
        self.adjacency = adjacency
        self._cache = collections.OrderedDict()
        self.limit = limit

    def get(self, index: int):
        if index in self._cache:
            self._cache.move_to_end(index)
            return self._cache[index]
        mu, _, _, chol = materialize_law(self.params, self.adjacency, index)
        self._cache[index] = (mu, chol)
        if len(self._cache) > self.limit:
            self._cache.popitem(last=False)
        return mu, chol


def gen_synthetic(params: SynthParams, trace: bool = False):
    """Run the generator; returns the dataset (and a SynthTrace if asked)."""
    nd = params.nodes * params.d
    if params.adjacency is not None:
        adjacency = np.asarray(params.adjacency, dtype=np.int8)
    else:
        adjacency = gen_er_graph(params.nodes, params.edge_prob,
                                 np.random.default_rng([params.seed, _GRAPH_TAG]))
    rng = np.random.default_rng([params.seed, _TRAJ_TAG])

    # initial shock is a uniform sign pattern: its only use is seeding the
    # first state, and a constant pattern would defeat the randomization
    eps = rng.integers(0, 2, nd) * 2.0 - 1.0
    x = params.init_mean + params.init_std * rng.standard_normal(nd)

    state_index: dict[bytes, int] = {}
    laws = _LawCache(params, adjacency)
    snapshots = np.empty((params.length + 1, nd))
    snapshots[0] = x
    indices = np.empty(params.length, dtype=np.intp) if trace else None
    keys = [] if trace else None

    for t in range(1, params.length + 1):
        key = (eps >= 0).astype(np.uint8).tobytes()
        idx = state_index.get(key)
        if idx is None:
            idx = len(state_index)
            state_index[key] = idx
            if trace:
                keys.append(key)
        mu, chol = laws.get(idx)
        eps = mu + chol @ rng.standard_normal(nd)
        x = x + eps
        snapshots[t] = x
        if trace:
            indices[t - 1] = idx

    seasonal = None
    if params.period > 0:
        seasonal = params.season_mean + params.season_std * rng.standard_normal(
            (params.period, nd))
        steps = np.arange(1, params.length + 1)
        snapshots[1:] += seasonal[steps % params.period]

    dataset = TemporalGraphDataset(
        adjacency=adjacency,
        features=snapshots.reshape(params.length + 1, params.nodes, params.d),
        name="synthetic",
    )
    if trace:
        return dataset, SynthTrace(params=params, adjacency=adjacency,
                                   state_keys=keys, state_indices=indices,
                                   seasonal=seasonal)
    return dataset


def instance_seed(seed: int, index: int) -> int:
    """Well-mixed per-instance seed derived from (seed, index)."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0] >> 1)


def gen_preset(name: str, instances: int = 1, seed: int = 0) -> list[TemporalGraphDataset]:
    """Expand a preset into independently seeded instances."""
    try:
        base = PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    out = []
    for i in range(instances):
        params = replace(base, seed=instance_seed(seed, i))
        dataset = gen_synthetic(params)
        out.append(TemporalGraphDataset(
            adjacency=dataset.adjacency,
            features=dataset.features,
            name=f"{name.lower()}_{i}",
        ))
    return out


def provenance_dict(params: SynthParams) -> dict:
    """Manifest-embeddable record of the generator inputs."""
    out = {
        "generator": "state-conditional random walk",
        "nodes": params.nodes,
        "edge_prob": params.edge_prob,
        "d": params.d,
        "length": params.length,
        "mu_min": params.mu_min,
        "mu_max": params.mu_max,
        "var_min": params.var_min,
        "var_max": params.var_max,
        "init_mean": params.init_mean,
        "init_std": params.init_std,
        "period": params.period,
        "season_mean": params.season_mean,
        "season_std": params.season_std,
        "seed": params.seed,
        "initial_sign_support": "[-1, 1]",
        "covariance_mask": "adjacency plus identity",
    }
    return out
