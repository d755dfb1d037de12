"""Temporal graph data model, hop neighborhoods, and shock computation.

A dataset is a static node set with a binary symmetric adjacency and a
time series of feature snapshots.  The "shock" at time t is the first
difference of the features, eps_t = x_t - x_{t-1}; every model in this
package operates on shocks rather than raw features.

Vector layout convention: whenever the shocks of an ordered node set U
are flattened into a single vector, the layout is node-major,
[u1 dims 1..d, u2 dims 1..d, ...], so per-node blocks stay contiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class TemporalGraphDataset:
    """Static graph plus T feature snapshots of shape (n, d).

    The adjacency must be binary and symmetric; the diagonal is ignored
    (each node is always treated as its own neighbor downstream).
    """

    adjacency: np.ndarray
    features: np.ndarray
    name: str = "dataset"
    timestep_seconds: float | None = None

    def __post_init__(self):
        adj = np.asarray(self.adjacency)
        feats = np.asarray(self.features, dtype=np.float64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DataError(f"adjacency must be square, got shape {adj.shape}")
        if feats.ndim != 3:
            raise DataError(f"features must be (T, n, d), got shape {feats.shape}")
        if feats.shape[0] < 2:
            raise DataError(f"need at least 2 snapshots, got T={feats.shape[0]}")
        if feats.shape[1] != adj.shape[0]:
            raise DataError(
                f"feature node count {feats.shape[1]} does not match "
                f"adjacency size {adj.shape[0]}"
            )
        validate_adjacency(adj)
        if not np.all(np.isfinite(feats)):
            t, v, j = np.argwhere(~np.isfinite(feats))[0]
            raise DataError(f"non-finite feature at snapshot {t}, node {v}, dim {j}")
        if self.timestep_seconds is not None and self.timestep_seconds <= 0:
            raise DataError(f"timestep_seconds must be positive, got {self.timestep_seconds}")
        object.__setattr__(self, "adjacency", adj.astype(np.int8))
        object.__setattr__(self, "features", feats)
        self.adjacency.setflags(write=False)
        self.features.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]

    @property
    def num_snapshots(self) -> int:
        return self.features.shape[0]

    @property
    def num_shocks(self) -> int:
        """Number of observable shocks; the 'T' of all training loop bounds."""
        return self.features.shape[0] - 1


def validate_adjacency(adj: np.ndarray) -> None:
    """Reject non-binary or non-symmetric adjacency, naming the offending entry."""
    bad = np.argwhere((adj != 0) & (adj != 1))
    if bad.size:
        i, j = bad[0]
        raise DataError(f"adjacency entry ({i}, {j}) = {adj[i, j]} is not binary")
    asym = np.argwhere(adj != adj.T)
    if asym.size:
        i, j = asym[0]
        raise DataError(
            f"adjacency not symmetric at ({i}, {j}): {adj[i, j]} vs {adj[j, i]}"
        )


@dataclass(frozen=True)
class NeighborhoodIndex:
    """Per-node ordered neighbor lists <U_v> (ascending IDs, v included)."""

    members: tuple[tuple[int, ...], ...]
    hops: int

    def __getitem__(self, v: int) -> tuple[int, ...]:
        return self.members[v]

    def __len__(self) -> int:
        return len(self.members)

    @property
    def max_size(self) -> int:
        return max(len(u) for u in self.members)


def build_neighborhood_index(dataset: TemporalGraphDataset, hops: int = 1) -> NeighborhoodIndex:
    """Collect, for each node, all nodes reachable within `hops` edges.

    The node itself is always a member even when the adjacency diagonal
    is zero: downstream extraction of a node's own shock from the
    neighborhood vector requires v in U_v.
    """
    if hops < 1:
        raise ConfigError(f"hops must be >= 1, got {hops}")
    adj = np.asarray(dataset.adjacency, dtype=bool)
    n = adj.shape[0]
    reach = adj | np.eye(n, dtype=bool)
    step = reach
    for _ in range(hops - 1):
        step = reach @ step
    members = tuple(tuple(int(u) for u in np.flatnonzero(step[v])) for v in range(n))
    return NeighborhoodIndex(members=members, hops=hops)


def singleton_index(n: int) -> NeighborhoodIndex:
    """Degenerate index U_v = <v>; used by phase-only model variants."""
    return NeighborhoodIndex(members=tuple((v,) for v in range(n)), hops=0)


@dataclass(frozen=True)
class ShockSeries:
    """First differences of the snapshots: values[k] = x_{k+1} - x_k.

    In the 1-based time convention used by the training loops,
    eps_t = values[t - 1] for t in [1, T] with T = num_snapshots - 1.
    """

    values: np.ndarray  # (T-1, n, d)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise DataError(f"shocks must be (T-1, n, d), got shape {vals.shape}")
        object.__setattr__(self, "values", vals)
        self.values.setflags(write=False)

    def at_time(self, t: int) -> np.ndarray:
        """Shock eps_t (1-based time), shape (n, d)."""
        if not 1 <= t <= len(self.values):
            raise DataError(f"shock time {t} outside [1, {len(self.values)}]")
        return self.values[t - 1]

    def __len__(self) -> int:
        return len(self.values)


def compute_shocks(dataset: TemporalGraphDataset) -> ShockSeries:
    """First-order differencing; the input is never mutated.

    Reconstruction identity: features[k] + shocks[k] recovers
    features[k+1] (bit-exact whenever the feature values live on a
    dyadic grid, e.g. integer-valued counts; within one ulp otherwise).
    """
    if dataset.num_snapshots < 2:
        raise DataError("need at least 2 snapshots to compute shocks")
    return ShockSeries(values=np.diff(dataset.features, axis=0))


def gather_shock(shocks: ShockSeries, t: int, neighbors) -> np.ndarray:
    """Flatten the shocks of the ordered node set at 1-based time t."""
    frame = shocks.at_time(t)
    return gather_vector(frame, neighbors)


def gather_vector(frame: np.ndarray, neighbors) -> np.ndarray:
    """Node-major flattening of rows of an (n, d) frame."""
    idx = np.asarray(neighbors, dtype=np.intp)
    n = frame.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise DataError(f"node id {idx.max()} outside [0, {n})")
    return frame[idx].reshape(-1)
