"""Forecast error metrics and the data-dependent error-bound envelopes.

RMSE(q) and MAE(q) follow the cumulative-shock convention: the error at
horizon i is the norm of the *summed* shock differences up to i, which
equals the reconstructed-feature error at time t+i.  The expectation is
the plain mean over all forecast origins (and Monte-Carlo chains).

The upper envelope sqrt(alpha q^2 + (3 alpha + beta) q + beta) and the
lower envelope beta' (q + 1) are computed from the realized run: alpha
from the worst matched-mean miss, beta / beta' from the extreme traces
of the matched states' own covariance blocks.  For mean-sampling
variants beta is identically zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import ShockSeries


def _truth_values(truth) -> np.ndarray:
    if isinstance(truth, ShockSeries):
        return truth.values
    arr = np.asarray(truth, dtype=np.float64)
    if arr.ndim != 3:
        raise DataError(f"truth shocks must be (T, n, d), got shape {arr.shape}")
    return arr


def _truth_slice(truth_vals: np.ndarray, origin: int, q: int) -> np.ndarray:
    """True shocks eps_{t+1..t+q} for a record at origin t."""
    if origin + q > len(truth_vals):
        raise DataError(
            f"record at origin {origin} needs truth up to time {origin + q}, "
            f"have {len(truth_vals)} shocks"
        )
    return truth_vals[origin:origin + q]


@dataclass(frozen=True)
class ErrorReport:
    """Per-horizon error curves; entry i-1 is the metric at horizon i."""

    rmse_per_q: np.ndarray
    mae_per_q: np.ndarray
    mse_per_q: np.ndarray
    horizon: int
    record_count: int
    chain_count: int

    @property
    def rmse(self) -> float:
        return float(self.rmse_per_q[-1])

    @property
    def mae(self) -> float:
        return float(self.mae_per_q[-1])


def error_report(records, truth, q: int | None = None) -> ErrorReport:
    """RMSE(i), MAE(i) and MSE(i) for every horizon i in [1, q]."""
    if not records:
        raise DataError("no records to score")
    truth_vals = _truth_values(truth)
    q = records[0].horizon if q is None else q
    if q > records[0].horizon:
        raise DataError(f"horizon {q} exceeds record horizon {records[0].horizon}")
    n, d = records[0].shocks.shape[2], records[0].shocks.shape[3]
    denom = n * d * np.arange(1, q + 1)
    sq_sum = np.zeros(q)
    rmse_sum = np.zeros(q)
    l1_sum = np.zeros(q)
    chains = 0
    for rec in records:
        sl = _truth_slice(truth_vals, rec.origin, q)
        if sl.shape[1] != n or sl.shape[2] != d:
            raise DataError(
                f"truth shape {sl.shape[1:]} does not match record shape {(n, d)}"
            )
        diff = sl[None] - rec.shocks[:, :q]
        cum = np.cumsum(diff, axis=1)
        sq = (cum * cum).sum(axis=(2, 3))          # (chains, q)
        per_i_sq = np.cumsum(sq, axis=1) / denom   # mean squared error per horizon
        l1 = np.abs(cum).sum(axis=(2, 3))
        per_i_l1 = np.cumsum(l1, axis=1) / denom
        sq_sum += per_i_sq.sum(axis=0)
        rmse_sum += np.sqrt(per_i_sq).sum(axis=0)
        l1_sum += per_i_l1.sum(axis=0)
        chains += rec.shocks.shape[0]
    return ErrorReport(
        rmse_per_q=rmse_sum / chains,
        mae_per_q=l1_sum / chains,
        mse_per_q=sq_sum / chains,
        horizon=q,
        record_count=len(records),
        chain_count=chains,
    )


def rmse_q(records, truth, q: int | None = None) -> ErrorReport:
    return error_report(records, truth, q)


def mae_q(records, truth, q: int | None = None) -> ErrorReport:
    return error_report(records, truth, q)


# ---------------------------------------------------------------------------
# error-bound envelopes


@dataclass(frozen=True)
class BoundReport:
    alpha: float
    beta: float
    bound_curve: np.ndarray      # envelope at q = 1..Q
    empirical_rmse: np.ndarray
    satisfied: np.ndarray        # per-q flags
    horizon: int

    @property
    def all_satisfied(self) -> bool:
        return bool(self.satisfied.all())


def envelope(alpha: float, beta: float, horizons) -> np.ndarray:
    qs = np.asarray(horizons, dtype=np.float64)
    return np.sqrt(alpha * qs * qs + (3.0 * alpha + beta) * qs + beta)


def _bound_accumulators(records, truth_vals, q):
    """Per-node extremes of the matched-state statistics over a run."""
    n = records[0].shocks.shape[2]
    max_miss = np.zeros(n)
    max_trace = np.zeros(n)
    min_trace = np.full(n, np.inf)
    for rec in records:
        if rec.mean_tracks is None or rec.trace_tracks is None:
            raise DataError("records lack bound statistics (run with track_bounds)")
        sl = _truth_slice(truth_vals, rec.origin, q)
        delta = rec.mean_tracks[:, :q] - sl[None]
        miss = (delta * delta).sum(axis=3)         # (chains, q, n)
        max_miss = np.maximum(max_miss, miss.max(axis=(0, 1)))
        tr = rec.trace_tracks[:, :q]
        max_trace = np.maximum(max_trace, tr.max(axis=(0, 1)))
        min_trace = np.minimum(min_trace, tr.min(axis=(0, 1)))
    return max_miss, max_trace, min_trace


def theorem1_bound(records, truth, q: int | None = None, *,
                   deterministic_sampling: bool,
                   report: ErrorReport | None = None) -> BoundReport:
    """Envelope check sqrt(alpha q^2 + (3 alpha + beta) q + beta) vs RMSE(q).

    alpha averages each node's worst squared matched-mean miss (scaled
    by 1/6), beta each node's largest matched covariance-block trace
    (scaled by 1/2); beta is forced to zero for mean-sampling variants.
    For stochastic runs the empirical side should be a Monte-Carlo mean
    (>= 30 chains) since a single draw may legitimately exceed an
    expectation bound.
    """
    if not records:
        raise DataError("no records")
    truth_vals = _truth_values(truth)
    q = records[0].horizon if q is None else q
    n, d = records[0].shocks.shape[2], records[0].shocks.shape[3]
    max_miss, max_trace, _ = _bound_accumulators(records, truth_vals, q)
    alpha = float(max_miss.sum() / (6.0 * n * d))
    beta = 0.0 if deterministic_sampling else float(max_trace.sum() / (2.0 * n * d))
    if report is None:
        report = error_report(records, truth, q)
    curve = envelope(alpha, beta, np.arange(1, q + 1))
    emp = report.rmse_per_q[:q]
    satisfied = emp <= curve * (1.0 + 1e-12)
    return BoundReport(alpha=alpha, beta=beta, bound_curve=curve,
                       empirical_rmse=emp, satisfied=satisfied, horizon=q)


@dataclass(frozen=True)
class LowerBoundReport:
    beta_prime: float
    bound_curve: np.ndarray      # beta' (q + 1) at q = 1..Q
    empirical_mse: np.ndarray
    satisfied: np.ndarray
    asserted: bool               # False for deterministic variants (trivial bound)
    horizon: int


def lower_bound(records, truth, q: int | None = None, *,
                deterministic_sampling: bool, tolerance: float = 1.0,
                report: ErrorReport | None = None) -> LowerBoundReport:
    """MSE(q) >= beta' (q+1) from the smallest matched covariance trace.

    Only asserted for Gaussian-sampling runs; deterministic variants
    report beta' (from the stored covariances) with the trivial flag.
    The tolerance factor relaxes the envelope for finite Monte-Carlo
    averages.
    """
    if not records:
        raise DataError("no records")
    truth_vals = _truth_values(truth)
    q = records[0].horizon if q is None else q
    n, d = records[0].shocks.shape[2], records[0].shocks.shape[3]
    _, _, min_trace = _bound_accumulators(records, truth_vals, q)
    beta_prime = float(min_trace.sum() / (n * d))
    if report is None:
        report = error_report(records, truth, q)
    qs = np.arange(1, q + 1, dtype=np.float64)
    curve = beta_prime * (qs + 1.0)
    emp = report.mse_per_q[:q]
    satisfied = emp >= curve * tolerance
    return LowerBoundReport(beta_prime=beta_prime, bound_curve=curve,
                            empirical_mse=emp, satisfied=satisfied,
                            asserted=not deterministic_sampling, horizon=q)


# ---------------------------------------------------------------------------
# empirical complexity probe


@dataclass(frozen=True)
class ProbeCell:
    n: int
    length: int          # generated shocks per series
    seconds: float
    store_bytes: int
    records: int


def complexity_probe(ns, lengths, *, seed: int = 0, variant: str = "s-mu",
                     train_ratio: float = 0.5, degree: float = 3.0) -> list[ProbeCell]:
    """Time one online run per (n, T) grid cell and size the state store.

    Uses sparse random graphs with a fixed expected degree, and shock
    means biased positive so each node's sign-state set saturates almost
    immediately; dataset generation happens outside the timed region.
    Linear compute scaling shows up as time ratios near 2 when either n
    or T doubles, and saturation as a store-size plateau in T.
    """
    from .engine import RunConfig, online_run
    from .synth import SynthParams, gen_synthetic

    cells = []
    for n in ns:
        for length in lengths:
            params = SynthParams(
                nodes=n,
                edge_prob=min(1.0, degree / max(1, n - 1)),
                d=1,
                length=length,
                mu_min=30.0, mu_max=230.0,
                var_min=40.0, var_max=50.0,
                init_mean=2e4, init_std=5000.0,
                period=0,
                seed=seed,
            )
            dataset = gen_synthetic(params)
            config = RunConfig(variant=variant, train_ratio=train_ratio,
                               horizon=1, seed=seed, track_bounds=False)
            start = time.perf_counter()
            result = online_run(dataset, config)
            elapsed = time.perf_counter() - start
            cells.append(ProbeCell(
                n=n, length=length, seconds=elapsed,
                store_bytes=result.model.store_nbytes(),
                records=result.num_records,
            ))
    return cells


def probe_ratios(cells) -> dict[str, float]:
    """time(2n)/time(n), time(2T)/time(T), size(2T)/size(T) where defined."""
    by_key = {(c.n, c.length): c for c in cells}
    out = {}
    for (n, length), cell in sorted(by_key.items()):
        double_n = by_key.get((2 * n, length))
        if double_n is not None:
            out[f"time_n{2 * n}_over_n{n}_T{length}"] = double_n.seconds / cell.seconds
        double_t = by_key.get((n, 2 * length))
        if double_t is not None:
            out[f"time_T{2 * length}_over_T{length}_n{n}"] = double_t.seconds / cell.seconds
            out[f"size_T{2 * length}_over_T{length}_n{n}"] = (
                double_t.store_bytes / cell.store_bytes
            )
    return out
