"""Bayesian Dirichlet ARMA modelling of compositional time series.

The package covers the full workflow: simulation from vector-ARMA dynamics
on the additive log-ratio scale with Dirichlet observation noise, posterior
inference under five shrinkage-prior families via gradient-based MCMC,
recursive probabilistic forecasting, forecast/recovery metrics, and a study
harness with a command-line front end.
"""

__version__ = "0.1.0"

from .errors import (
    BdarmaError,
    ConfigError,
    IngestError,
    InvalidCompositionError,
    LikelihoodError,
    PrecisionOverflowError,
    SamplerError,
    ShapeError,
    StudyError,
)
from .simplex import (
    DirichletParams,
    alr,
    alr_inv,
    clamp_shares,
    closure,
    dirichlet_logpdf,
    dirichlet_sample,
    validate_compositions,
)
from .model import (
    DarmaLikelihood,
    IdentityDesign,
    ModelSpec,
    ParameterVector,
    coefficient_names,
    count_parameters,
    linear_predictor,
    model_from_json,
    model_to_json,
    precision_at,
    register_design,
)
from .priors import (
    GammaCoefPrior,
    HierarchicalNormalPrior,
    HorseshoePrior,
    InformativeNormalPrior,
    LaplacePrior,
    PRIOR_FAMILIES,
    SpikeSlabPrior,
    default_gamma_prior,
    default_study_priors,
    prior_from_dict,
    prior_to_dict,
)
from .sampler import (
    DESK_PROFILE,
    PAPER_PROFILE,
    PosteriorDraws,
    SamplerConfig,
    diagnostics,
    ess_bulk,
    profile_config,
    sample,
    split_rhat,
)
from .posterior import FitResult, Posterior, fit
from .simulate import builtin_dgp, simulate, simulate_builtin
from .forecast import (
    ForecastResult,
    forecast,
    forecast_paths,
    mean_forecast_only,
    summarize_paths,
)
from .metrics import (
    RecoveryTable,
    forecast_mae,
    forecast_rmse,
    forecast_summary,
    ratio_table,
    recovery_metrics,
)
from .ingest import (
    FourierSeasonalDesign,
    SectorPanel,
    read_long_csv,
    read_wide_csv,
    split_panel,
    synthetic_sector_panel,
    to_shares,
)
from .study import (
    ApplicationConfig,
    StudyConfig,
    run_application,
    run_study,
)
