"""Online node-feature forecasting for discrete-time temporal graphs.

The model family quantizes first differences of node features
("shocks") into discrete states per node, learns a state-conditional
Gaussian shock law from bounded FIFO queues, and forecasts iteratively
by chaining sampled or mean shocks through the state function.
"""

from .engine import (
    ForecastRecord,
    MspaceModel,
    RunConfig,
    RunResult,
    forecast_q,
    offline_train,
    online_run,
)
from .errors import ConfigError, DataError, MspaceError
from .graph import (
    NeighborhoodIndex,
    ShockSeries,
    TemporalGraphDataset,
    build_neighborhood_index,
    compute_shocks,
    gather_shock,
)
from .kalman import KalmanParams, kalman_fit, kalman_forecast, kalman_run
from .metrics import (
    BoundReport,
    ErrorReport,
    LowerBoundReport,
    complexity_probe,
    error_report,
    lower_bound,
    mae_q,
    rmse_q,
    theorem1_bound,
)
from .states import (
    BoundedQueue,
    CombinedState,
    GaussianParams,
    NodeStateStore,
    PhaseState,
    SignState,
    enqueue_observation,
    estimate_params,
    nearest_state,
    omega_mu,
    psi_s,
    psi_st,
    psi_t,
    sample_omega_n,
    state_distance,
)
from .synth import PRESETS, SynthParams, gen_er_graph, gen_preset, gen_synthetic

__version__ = "0.1.0"
