"""Homophily-adjusted network autocorrelation models.

Estimation of social influence from cross-sectional network data while
accounting for latent homophilic features: the HANE (effects) and HAND
(disturbances) models alongside the classical NAM baselines, MAP fitting
with normal-approximation credible intervals, a latent-distance sampler,
and a simulation-study harness.
"""

__version__ = "0.1.0"

from .network import (
    Adjacency,
    RowNormalizedNetwork,
    row_normalize,
    spectral_norm,
    check_stability,
)
from .latent import (
    LatentDraws,
    LatentSamplerConfig,
    MatrixNormalApprox,
    sample_latent_posterior,
    procrustes_align,
    fit_matrix_normal,
    matrix_normal_loglik,
    read_draws,
    write_draws,
)
from .models import (
    HANE,
    HAND,
    NAM_EFFECTS,
    NAM_DISTURBANCES,
    FAMILIES,
    Dataset,
    ParamVector,
    Priors,
    ModelFamily,
    log_posterior,
    grad_log_posterior,
    nam_loglik,
)
from .estimation import (
    FitConfig,
    FitResult,
    init_2sls,
    map_fit,
    nam_mle,
    credible_intervals,
)
from .simulation import (
    NetParams,
    ScenarioConfig,
    ForwardSimConfig,
    LimitReport,
    MetricsTable,
    generate_network,
    draw_limiting_outcome,
    forward_simulate,
    validate_limit,
    run_scenario,
    run_replicate,
    mix_seed,
)

__all__ = [
    "__version__",
    "Adjacency",
    "RowNormalizedNetwork",
    "row_normalize",
    "spectral_norm",
    "check_stability",
    "LatentDraws",
    "LatentSamplerConfig",
    "MatrixNormalApprox",
    "sample_latent_posterior",
    "procrustes_align",
    "fit_matrix_normal",
    "matrix_normal_loglik",
    "read_draws",
    "write_draws",
    "HANE",
    "HAND",
    "NAM_EFFECTS",
    "NAM_DISTURBANCES",
    "FAMILIES",
    "Dataset",
    "ParamVector",
    "Priors",
    "ModelFamily",
    "log_posterior",
    "grad_log_posterior",
    "nam_loglik",
    "FitConfig",
    "FitResult",
    "init_2sls",
    "map_fit",
    "nam_mle",
    "credible_intervals",
    "NetParams",
    "ScenarioConfig",
    "ForwardSimConfig",
    "LimitReport",
    "MetricsTable",
    "generate_network",
    "draw_limiting_outcome",
    "forward_simulate",
    "validate_limit",
    "run_scenario",
    "run_replicate",
    "mix_seed",
]
