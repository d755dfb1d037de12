"""Classical linear-Gaussian baselines: independent per-node Kalman filters.

Two observation choices exist: the raw node features ("kalman-x") and
their first differences ("kalman-eps").  Both share one filter core;
the shock variant simply feeds the differenced series and maps its
predictions back onto features by cumulative summation, so the two are
identical up to that reparametrization.

The latent dimension equals the observation dimension with an identity
emission; EM fits the transition matrix, transition offset, both noise
covariances, and the initial state, which is enough for the baseline's
role (the classical reference point, not a tuned competitor).  All
filter passes are batched over nodes with a leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .graph import TemporalGraphDataset, compute_shocks

VARIANTS = ("kalman-x", "kalman-eps")

_NOISE_FLOOR = 1e-9


@dataclass
class KalmanParams:
    """Time-invariant per-node LDS parameters; leading axis is the node."""

    transition: np.ndarray        # (n, d, d)
    emission: np.ndarray          # (n, d, d), identity here
    process_noise: np.ndarray     # (n, d, d)
    obs_noise: np.ndarray         # (n, d, d)
    transition_offset: np.ndarray # (n, d)
    emission_offset: np.ndarray   # (n, d)
    initial_mean: np.ndarray      # (n, d)
    initial_cov: np.ndarray       # (n, d, d)
    loglik_path: np.ndarray       # (iterations + 1, n) filter log-likelihoods
    floored: np.ndarray           # (n,) True where degenerate noise was floored


def _sym(mat):
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


def _solve_spd(mats, rhs):
    """Batched solve for stacks of small SPD matrices."""
    return np.linalg.solve(mats, rhs)


def kalman_filter(params: KalmanParams, series: np.ndarray):
    """Forward pass over a (steps, n, d) series.

    Returns filtered means/covs, one-step-ahead predicted means/covs,
    and the per-node log-likelihood.  Innovation covariances get a tiny
    conditional diagonal jitter so exactly-degenerate inputs do not
    break the solve.
    """
    steps, n, d = series.shape
    A = params.transition
    Q = params.process_noise
    R = params.obs_noise
    b = params.transition_offset
    eye = np.eye(d)
    means = np.empty((steps, n, d))
    covs = np.empty((steps, n, d, d))
    pred_means = np.empty((steps, n, d))
    pred_covs = np.empty((steps, n, d, d))
    loglik = np.zeros(n)
    h = params.initial_mean
    P = params.initial_cov
    for t in range(steps):
        if t > 0:
            h = np.einsum("nij,nj->ni", A, h) + b
            P = _sym(np.einsum("nij,njk,nlk->nil", A, P, A) + Q)
        pred_means[t] = h
        pred_covs[t] = P
        innov = series[t] - h
        S = P + R
        trace = np.einsum("nii->n", S)
        S = S + (_NOISE_FLOOR * (trace / d + 1.0))[:, None, None] * eye
        Sinv_innov = _solve_spd(S, innov[..., None])[..., 0]
        K = np.swapaxes(_solve_spd(S, np.swapaxes(P, 1, 2)), 1, 2)
        h = h + np.einsum("nij,nj->ni", K, innov)
        IK = eye - K
        P = _sym(np.einsum("nij,njk,nlk->nil", IK, P, IK)
                 + np.einsum("nij,njk,nlk->nil", K, R, K))
        sign, logdet = np.linalg.slogdet(S)
        loglik += -0.5 * (d * np.log(2.0 * np.pi) + logdet
                          + np.einsum("ni,ni->n", innov, Sinv_innov))
        means[t] = h
        covs[t] = P
    return means, covs, pred_means, pred_covs, loglik


def _smoother(params, series, means, covs, pred_means, pred_covs):
    """RTS backward pass; also returns the lag-one smoothed covariances."""
    steps, n, d = series.shape
    A = params.transition
    s_means = np.empty_like(means)
    s_covs = np.empty_like(covs)
    gains = np.empty((steps - 1, n, d, d))
    s_means[-1] = means[-1]
    s_covs[-1] = covs[-1]
    for t in range(steps - 2, -1, -1):
        Pp = pred_covs[t + 1] + _NOISE_FLOOR * np.eye(d)
        # J_t = P_t A^T (P^-_{t+1})^-1
        J = np.swapaxes(_solve_spd(Pp, np.einsum("nij,nkj->nik", A, covs[t])), 1, 2)
        gains[t] = J
        s_means[t] = means[t] + np.einsum("nij,nj->ni", J, s_means[t + 1] - pred_means[t + 1])
        s_covs[t] = _sym(covs[t] + np.einsum("nij,njk,nlk->nil", J,
                                             s_covs[t + 1] - pred_covs[t + 1], J))
    # Cov(h_t, h_{t-1} | all data) = P^s_t J_{t-1}^T
    cross = np.einsum("tnij,tnkj->tnik", s_covs[1:], gains)
    return s_means, s_covs, cross


def kalman_fit(series: np.ndarray, em_iterations: int = 20) -> KalmanParams:
    """EM for time-invariant parameters on a (steps, n, d) training series.

    Initialization: identity transition and emission, zero offsets,
    noise at the per-node sample variance (floored when degenerate).
    The filter log-likelihood is recorded before the first update and
    after every M-step; exact EM makes the sequence non-decreasing.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 3:
        raise DataError(f"series must be (steps, n, d), got {series.shape}")
    steps, n, d = series.shape
    if steps < 3:
        raise DataError(f"need at least 3 observations to fit, got {steps}")
    if em_iterations < 0:
        raise ConfigError(f"em_iterations must be >= 0, got {em_iterations}")

    var = series.var(axis=0, ddof=1).mean(axis=1)      # (n,)
    floored = var < _NOISE_FLOOR
    var = np.maximum(var, _NOISE_FLOOR)
    eye = np.eye(d)
    params = KalmanParams(
        transition=np.tile(eye, (n, 1, 1)),
        emission=np.tile(eye, (n, 1, 1)),
        process_noise=var[:, None, None] * eye,
        obs_noise=var[:, None, None] * eye,
        transition_offset=np.zeros((n, d)),
        emission_offset=np.zeros((n, d)),
        initial_mean=series[0].copy(),
        initial_cov=var[:, None, None] * eye,
        loglik_path=np.zeros((0, n)),
        floored=floored,
    )

    logliks = []
    for _ in range(em_iterations):
        means, covs, pred_means, pred_covs, ll = kalman_filter(params, series)
        logliks.append(ll)
        s_means, s_covs, cross = _smoother(params, series, means, covs,
                                           pred_means, pred_covs)
        # sufficient statistics for the transition regression with intercept
        count = steps - 1
        second = s_covs + np.einsum("tni,tnj->tnij", s_means, s_means)
        sum_x = s_means[:-1].sum(axis=0)               # (n, d)
        sum_y = s_means[1:].sum(axis=0)
        sum_xx = second[:-1].sum(axis=0)               # (n, d, d)
        sum_yx = (cross + np.einsum("tni,tnj->tnij", s_means[1:], s_means[:-1])).sum(axis=0)
        cxx = sum_xx - np.einsum("ni,nj->nij", sum_x, sum_x) / count
        cyx = sum_yx - np.einsum("ni,nj->nij", sum_y, sum_x) / count
        cxx = cxx + _NOISE_FLOOR * eye
        A = np.swapaxes(_solve_spd(_sym(cxx), np.swapaxes(cyx, 1, 2)), 1, 2)
        b = (sum_y - np.einsum("nij,nj->ni", A, sum_x)) / count

        resid = s_means[1:] - np.einsum("nij,tnj->tni", A, s_means[:-1]) - b
        cov_term = (
            s_covs[1:]
            - np.einsum("tnij,nkj->tnik", cross, A)
            - np.einsum("nij,tnkj->tnik", A, cross)
            + np.einsum("nij,tnjk,nlk->tnil", A, s_covs[:-1], A)
        )
        Q = _sym((cov_term + np.einsum("tni,tnj->tnij", resid, resid)).sum(axis=0) / count)
        Q += _NOISE_FLOOR * eye

        obs_resid = series - s_means
        R = _sym((np.einsum("tni,tnj->tnij", obs_resid, obs_resid) + s_covs).sum(axis=0) / steps)
        R += _NOISE_FLOOR * eye

        params = KalmanParams(
            transition=A,
            emission=params.emission,
            process_noise=Q,
            obs_noise=R,
            transition_offset=b,
            emission_offset=params.emission_offset,
            initial_mean=s_means[0],
            initial_cov=_sym(s_covs[0]) + _NOISE_FLOOR * eye,
            loglik_path=params.loglik_path,
            floored=floored,
        )

    _, _, _, _, ll = kalman_filter(params, series)
    logliks.append(ll)
    params.loglik_path = np.stack(logliks)
    return params


def kalman_forecast(params: KalmanParams, history: np.ndarray, q: int) -> np.ndarray:
    """Filter the history, then roll the transition forward q steps.

    Returns the predicted observations, shape (q, n, d); with the
    identity emission these are the propagated state means.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 3 or history.shape[0] < 1:
        raise DataError(f"history must be non-empty (steps, n, d), got {history.shape}")
    means, _, _, _, _ = kalman_filter(params, history)
    h = means[-1]
    out = np.empty((q, history.shape[1], history.shape[2]))
    for k in range(q):
        h = np.einsum("nij,nj->ni", params.transition, h) + params.transition_offset
        out[k] = h
    return out


# ---------------------------------------------------------------------------
# baseline runner emitting engine-compatible records


@dataclass
class BaselineResult:
    records: list
    variant: str
    em_iterations: int
    dataset_name: str
    first_origin: int
    last_origin: int
    params: KalmanParams

    @property
    def num_records(self) -> int:
        return len(self.records)


def kalman_run(dataset: TemporalGraphDataset, variant: str,
               train_ratio: float = 0.8, horizon: int = 1,
               em_iterations: int = 20) -> BaselineResult:
    """Prequential baseline run with the same split conventions as the
    state-space engine: fit on the training prefix, then forecast from
    every origin t in [max(1, floor(r*T)), T - q].

    Records hold predicted shocks regardless of the observation domain,
    so the metrics pipeline treats baselines and the engine uniformly.
    """
    from .engine import ForecastRecord

    if variant not in VARIANTS:
        raise ConfigError(f"unknown baseline variant {variant!r}; expected {VARIANTS}")
    if not 0.0 <= train_ratio < 1.0:
        raise ConfigError(f"train ratio must be in [0, 1), got {train_ratio}")
    if horizon < 1:
        raise ConfigError(f"forecast horizon must be >= 1, got {horizon}")

    shocks = compute_shocks(dataset)
    total = dataset.num_shocks
    t_start = max(1, int(np.floor(train_ratio * total)))
    t_end = total - horizon
    if t_start > t_end:
        raise ConfigError(
            f"online loop empty: floor(r*T)={t_start} > T-q={t_end} "
            f"(T={total}, q={horizon})"
        )

    on_features = variant == "kalman-x"
    if on_features:
        series = dataset.features                     # y index i == snapshot x_i
        train = series[:t_start + 1]
    else:
        series = shocks.values                        # y index i == shock eps_{i+1}
        train = series[:t_start]
    params = kalman_fit(train, em_iterations=em_iterations)

    means, _, _, _, _ = kalman_filter(params, series)
    records = []
    A = params.transition
    b = params.transition_offset
    for t in range(t_start, t_end + 1):
        h = means[t] if on_features else means[t - 1]
        preds = np.empty((horizon, dataset.n, dataset.d))
        for k in range(horizon):
            h = np.einsum("nij,nj->ni", A, h) + b
            preds[k] = h
        if on_features:
            # feature-domain forecast -> shock records
            prev = np.concatenate([dataset.features[t][None], preds[:-1]], axis=0)
            preds = preds - prev
        records.append(ForecastRecord(
            origin=t,
            shocks=preds[None],
            origin_features=np.array(dataset.features[t], copy=True),
            fallback=np.zeros(dataset.n, dtype=bool),
        ))
    return BaselineResult(
        records=records,
        variant=variant,
        em_iterations=em_iterations,
        dataset_name=dataset.name,
        first_origin=t_start,
        last_origin=t_end,
        params=params,
    )
