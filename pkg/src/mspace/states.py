"""Discrete shock states, bounded queues, and Gaussian state statistics.

A state function quantizes a shock vector (or a timestamp) into a
discrete state; a sampling function maps a state back onto a shock.
Three state kinds exist:

* sign states  -- the entrywise sign pattern of a shock vector,
* phase states -- the timestamp modulo a period,
* combined     -- both, with a weight gamma blending the two distances.

Each (node, state) pair owns a FIFO queue of at most M succeeding
shocks; the queue's mean/covariance are the state's Gaussian
parameters.  The bounded queue is what makes the model online: old
evidence falls out, so estimates track the prevailing trend.

Canonical state encodings double as dict keys and as the lexicographic
tie-break order for nearest-state matching (sign entries with -1 < +1,
then phase).
"""

from __future__ import annotations

import collections
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

# Jitter base for Cholesky of near-singular covariances; scaled by
# (trace/dim + 1) and doubled until the factorization succeeds.
_JITTER_BASE = 1e-9


# ---------------------------------------------------------------------------
# state types


@dataclass(frozen=True)
class SignState:
    """Entrywise sign pattern of a shock vector; entries in {-1, +1}."""

    values: tuple[int, ...]

    def __post_init__(self):
        if any(v not in (-1, 1) for v in self.values):
            raise DataError(f"sign state entries must be -1 or +1, got {self.values}")

    @property
    def key(self) -> bytes:
        # bytes of the {0,1} mask; byte order == lexicographic with -1 < +1
        return bytes(int(v > 0) for v in self.values)


@dataclass(frozen=True)
class PhaseState:
    """Timestamp phase t mod tau0."""

    phase: int
    period: int

    def __post_init__(self):
        if self.period < 1:
            raise ConfigError(f"period must be >= 1, got {self.period}")
        if not 0 <= self.phase < self.period:
            raise DataError(f"phase {self.phase} outside [0, {self.period})")

    @property
    def key(self) -> int:
        return self.phase


@dataclass(frozen=True)
class CombinedState:
    """Sign pattern paired with a phase; gamma enters only distances."""

    sign: SignState
    phase: PhaseState

    @property
    def key(self) -> tuple[bytes, int]:
        return (self.sign.key, self.phase.key)


def psi_s(shock) -> SignState:
    """Sign quantization; the zero entry maps to +1 by convention."""
    arr = np.asarray(shock, dtype=np.float64).reshape(-1)
    return SignState(values=tuple(int(v) for v in np.where(arr >= 0, 1, -1)))


def psi_t(t: int, tau0: int) -> PhaseState:
    if tau0 < 1:
        raise ConfigError(f"period must be a positive integer, got {tau0}")
    if t < 0:
        raise ConfigError(f"time index must be >= 0, got {t}")
    return PhaseState(phase=t % tau0, period=tau0)


def psi_st(shock, t: int, tau0: int) -> CombinedState:
    return CombinedState(sign=psi_s(shock), phase=psi_t(t, tau0))


def state_distance(a, b, gamma: float = 1.0) -> float:
    """Distance between two states of the same kind.

    Sign states use the Euclidean norm of the difference; phase states
    the circular distance min(|dp|, tau0 - |dp|); combined states blend
    the two with weight gamma on the phase part.
    """
    if isinstance(a, SignState) and isinstance(b, SignState):
        if len(a.values) != len(b.values):
            raise TypeError("sign states of different lengths")
        ham = sum(x != y for x, y in zip(a.values, b.values))
        return 2.0 * np.sqrt(ham)
    if isinstance(a, PhaseState) and isinstance(b, PhaseState):
        if a.period != b.period:
            raise TypeError("phase states with different periods")
        return float(circular_distance(a.phase, b.phase, a.period))
    if isinstance(a, CombinedState) and isinstance(b, CombinedState):
        ds = state_distance(a.sign, b.sign)
        dp = state_distance(a.phase, b.phase)
        return float(np.sqrt(ds * ds + gamma * gamma * dp * dp))
    raise TypeError(f"cannot compare states of kinds {type(a).__name__} and {type(b).__name__}")


def circular_distance(p, q, period):
    delta = np.abs(np.asarray(p) - np.asarray(q))
    return np.minimum(delta, period - delta)


def _sort_key(state):
    if isinstance(state, SignState):
        return state.key
    if isinstance(state, PhaseState):
        return state.key
    return state.key  # CombinedState: (sign bytes, phase)


def nearest_state(states, target, gamma: float = 1.0):
    """Argmin of state_distance over a candidate set, deterministically.

    Ties break by the lexicographic order of the canonical encoding so
    that repeated runs match the same state regardless of set order.
    """
    pool = list(states)
    if not pool:
        raise DataError("nearest_state over an empty state set")
    return min(pool, key=lambda s: (state_distance(s, target, gamma), _sort_key(s)))


# ---------------------------------------------------------------------------
# queues and Gaussian parameters


class BoundedQueue:
    """FIFO of shock vectors with capacity M; oldest evicted on overflow."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError(f"queue capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries = collections.deque(maxlen=capacity)
        self._width = None

    def push(self, shock) -> None:
        arr = np.asarray(shock, dtype=np.float64).reshape(-1)
        if self._width is None:
            self._width = arr.size
        elif arr.size != self._width:
            raise DataError(f"shock length {arr.size} != queue width {self._width}")
        self._entries.append(arr)

    def snapshot(self) -> np.ndarray:
        """Entries stacked oldest-first, shape (count, width)."""
        if not self._entries:
            raise DataError("empty queue")
        return np.stack(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)


@dataclass(frozen=True)
class GaussianParams:
    """Mean/covariance of a queue; covariance is the unbiased estimate."""

    mean: np.ndarray
    cov: np.ndarray
    sample_count: int


def estimate_params(queue: BoundedQueue) -> GaussianParams:
    """Queue mean and unbiased sample covariance (zero for singletons)."""
    data = queue.snapshot()
    count, width = data.shape
    mean = data.mean(axis=0)
    if count < 2:
        cov = np.zeros((width, width))
    else:
        centered = data - mean
        cov = centered.T @ centered / (count - 1)
    return GaussianParams(mean=mean, cov=cov, sample_count=count)


def cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding the smallest diagonal jitter that works."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    dim = cov.shape[0]
    lam = _JITTER_BASE * (np.trace(cov) / dim + 1.0)
    eye = np.eye(dim)
    for _ in range(64):
        try:
            return np.linalg.cholesky(cov + lam * eye)
        except np.linalg.LinAlgError:
            lam *= 2.0
    raise DataError("covariance could not be factorized even with jitter")


def sample_omega_n(params: GaussianParams, rng: np.random.Generator) -> np.ndarray:
    """Gaussian draw from the state's shock law.

    A zero covariance degenerates to the mean exactly (no randomness
    consumed), which makes the probabilistic sampler collapse onto the
    deterministic one for singleton queues.
    """
    if not (np.all(np.isfinite(params.mean)) and np.all(np.isfinite(params.cov))):
        raise DataError("non-finite Gaussian parameters")
    if not params.cov.any():
        return params.mean.copy()
    chol = cholesky_with_jitter(params.cov)
    return params.mean + chol @ rng.standard_normal(params.mean.size)


def omega_mu(params: GaussianParams) -> np.ndarray:
    """Deterministic sampling: the state's mean shock."""
    if not np.all(np.isfinite(params.mean)):
        raise DataError("non-finite Gaussian parameters")
    return params.mean.copy()


# ---------------------------------------------------------------------------
# per-node state store


class _StateEntry:
    __slots__ = ("queue", "version", "_cache_version", "_mean", "_own_trace", "_chol", "_cov")

    def __init__(self, capacity: int):
        self.queue = BoundedQueue(capacity)
        self.version = 0
        self._cache_version = -1
        self._mean = None
        self._own_trace = None
        self._chol = None
        self._cov = None

    def push(self, shock) -> None:
        self.queue.push(shock)
        self.version += 1

    def _refresh(self, own_positions) -> None:
        if self._cache_version == self.version:
            return
        data = self.queue.snapshot()
        count = data.shape[0]
        self._mean = data.mean(axis=0)
        if count < 2:
            self._own_trace = 0.0
            self._cov = None
            self._chol = None
        else:
            own = data[:, own_positions]
            self._own_trace = float(own.var(axis=0, ddof=1).sum())
            self._cov = None  # full covariance built only when sampling needs it
            self._chol = None
        self._cache_version = self.version

    def mean(self, own_positions) -> np.ndarray:
        self._refresh(own_positions)
        return self._mean

    def own_trace(self, own_positions) -> float:
        """Trace of the node's own d x d block of the covariance."""
        self._refresh(own_positions)
        return self._own_trace

    def chol(self, own_positions):
        """Cholesky factor of the full covariance; None when it is zero."""
        self._refresh(own_positions)
        if len(self.queue) < 2:
            return None
        if self._chol is None and self._cov is None:
            data = self.queue.snapshot()
            centered = data - self._mean
            self._cov = centered.T @ centered / (data.shape[0] - 1)
        if self._chol is None:
            if not self._cov.any():
                self._cov = None
                return None
            self._chol = cholesky_with_jitter(self._cov)
            self._cov = None
        return self._chol

    def nbytes(self) -> int:
        total = sum(e.nbytes for e in self.queue)
        for arr in (self._mean, self._chol, self._cov):
            if arr is not None:
                total += arr.nbytes
        return total


class NodeStateStore:
    """Observed states of one node with their queues and Gaussian stats.

    kind is one of "s", "t", "st"; it fixes the key encoding and the
    distance used by nearest-state matching.  Keys are the canonical
    encodings from the state types above, so matching is deterministic.
    """

    def __init__(self, width: int, capacity: int, kind: str = "s",
                 period: int | None = None, gamma: float = 1.0):
        if kind not in ("s", "t", "st"):
            raise ConfigError(f"unknown state kind {kind!r}")
        if kind in ("t", "st") and (period is None or period < 1):
            raise ConfigError("phase-based stores need a positive period")
        self.width = width
        self.capacity = capacity
        self.kind = kind
        self.period = period
        self.gamma = gamma
        self._entries: dict = {}
        # scan structures for nearest-state misses, grown incrementally;
        # sign patterns are packed into uint64 words so a miss costs one
        # xor+popcount sweep over the observed states
        self._order: list = []      # keys in insertion order
        self._words = (width + 63) // 64
        self._codes = None          # (capacity_rows, words) uint64
        self._phases = None
        self._scanned = 0

    # -- bookkeeping ---------------------------------------------------

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def states(self):
        return self._entries.keys()

    def queue(self, key) -> BoundedQueue:
        return self._entries[self._key_of(key)].queue

    def params(self, key) -> GaussianParams:
        return estimate_params(self.queue(key))

    def entry(self, key) -> _StateEntry:
        return self._entries[self._key_of(key)]

    @staticmethod
    def _key_of(state):
        if isinstance(state, (SignState, PhaseState, CombinedState)):
            return state.key
        return state

    def enqueue(self, state, shock) -> None:
        key = self._key_of(state)
        entry = self._entries.get(key)
        if entry is None:
            self._validate_key(key)
            entry = _StateEntry(self.capacity)
            self._entries[key] = entry
            self._order.append(key)
        arr = np.asarray(shock, dtype=np.float64).reshape(-1)
        if arr.size != self.width:
            raise DataError(f"shock length {arr.size} != store width {self.width}")
        entry.push(arr)

    def _validate_key(self, key) -> None:
        if self.kind == "s":
            if not isinstance(key, bytes) or len(key) != self.width:
                raise DataError(f"bad sign-state key for width {self.width}: {key!r}")
        elif self.kind == "t":
            if not isinstance(key, int):
                raise DataError(f"bad phase-state key: {key!r}")
        else:
            if not (isinstance(key, tuple) and len(key) == 2):
                raise DataError(f"bad combined-state key: {key!r}")

    # -- matching ------------------------------------------------------

    def _pack(self, key: bytes) -> np.ndarray:
        bits = np.frombuffer(key, dtype=np.uint8)
        packed = np.packbits(bits, bitorder="little")
        padded = np.zeros(self._words * 8, dtype=np.uint8)
        padded[: packed.size] = packed
        return padded.view(np.uint64)

    def _grow(self, arr, rows: int, cols: int | None, dtype):
        capacity = max(16, rows, 0 if arr is None else arr.shape[0] * 2)
        fresh = np.empty((capacity,) if cols is None else (capacity, cols), dtype=dtype)
        if arr is not None and self._scanned:
            fresh[: self._scanned] = arr[: self._scanned]
        return fresh

    def _sync_scan(self) -> None:
        """Append scan rows for states added since the last nearest-miss."""
        total = len(self._order)
        if self._scanned == total:
            return
        if self.kind != "t":
            if self._codes is None or self._codes.shape[0] < total:
                self._codes = self._grow(self._codes, total, self._words, np.uint64)
            for i in range(self._scanned, total):
                key = self._order[i] if self.kind == "s" else self._order[i][0]
                self._codes[i] = self._pack(key)
        if self.kind != "s":
            if self._phases is None or self._phases.shape[0] < total:
                self._phases = self._grow(self._phases, total, None, np.float64)
            for i in range(self._scanned, total):
                key = self._order[i] if self.kind == "t" else self._order[i][1]
                self._phases[i] = key
        self._scanned = total

    def _hamming(self, count: int, sign_key: bytes) -> np.ndarray:
        target = self._pack(sign_key)
        if self._words == 1:
            return np.bitwise_count(self._codes[:count, 0] ^ target[0])
        return np.bitwise_count(self._codes[:count] ^ target).sum(axis=1)

    def match(self, key):
        """Nearest observed state's key, or None when nothing was observed.

        Exact hits short-circuit; otherwise a vectorized scan (Hamming
        via xor+popcount for sign parts, since Euclidean^2 = 4 x Hamming
        on +-1 vectors) with the lexicographic tie-break on the key.
        """
        key = self._key_of(key)
        if key in self._entries:
            return key
        if not self._entries:
            return None
        self._sync_scan()
        count = self._scanned
        if self.kind == "s":
            d2 = self._hamming(count, key)
        elif self.kind == "t":
            d2 = circular_distance(self._phases[:count], key, self.period) ** 2
        else:
            dp = circular_distance(self._phases[:count], key[1], self.period)
            d2 = 4.0 * self._hamming(count, key[0]) + (self.gamma * dp) ** 2
        best = d2.min()
        candidates = np.flatnonzero(d2 <= best)
        if candidates.size == 1:
            return self._order[candidates[0]]
        return min(self._order[i] for i in candidates)

    def nbytes(self) -> int:
        total = sum(e.nbytes() for e in self._entries.values())
        total += sum(len(k[0]) + 8 if isinstance(k, tuple) else
                     (len(k) if isinstance(k, bytes) else 8)
                     for k in self._order)
        if self._codes is not None:
            total += self._codes.nbytes
        if self._phases is not None:
            total += self._phases.nbytes
        return total


def enqueue_observation(store: NodeStateStore, state, shock) -> NodeStateStore:
    """Record that `shock` immediately succeeded `state`; returns the store."""
    store.enqueue(state, shock)
    return store


def encode_state_key(key) -> str:
    """Human-readable canonical encoding for CSV export."""
    if isinstance(key, bytes):
        return "".join("+" if b else "-" for b in key)
    if isinstance(key, tuple):
        return f"{encode_state_key(key[0])}@{key[1]}"
    return str(key)


def export_state_statistics(stores, path) -> int:
    """Dump (node, state, sample_count, trace) rows for every learned state.

    The trace column is the full covariance trace of the state's shock
    law, whose distribution over states indicates how predictable a
    dataset is (mass near zero means near-deterministic conditional
    shocks).  Returns the number of rows written.
    """
    rows = 0
    with open(path, "w") as fh:
        fh.write("node,state,sample_count,trace\n")
        for node, store in enumerate(stores):
            for key in sorted(store.states):
                data = store.queue(key).snapshot()
                trace = 0.0 if data.shape[0] < 2 else float(
                    data.var(axis=0, ddof=1).sum())
                fh.write(f"{node},{encode_state_key(key)},{data.shape[0]},"
                         f"{trace:.17g}\n")
                rows += 1
    return rows
