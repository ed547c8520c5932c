"""hreserve: layered individual-claim reserving with a bridge to triangle methods.

The package fits ordered conditional models (GLM or boosted trees) to the
yearly close/payment/size updates of reported claims, simulates future
development for RBNS reserve estimates with prediction intervals, and
implements the classical aggregate counterparts (chain ladder with Mack
errors, multiplicative/ODP, DCL- and CRM-style fits) together with a
likelihood-ratio test for choosing between the two worlds.
"""

from .data import (
    Claim,
    DevelopmentRecord,
    ObservationWindow,
    Portfolio,
    SchemaConfig,
    ColumnSpec,
    bin_continuous,
    derive_development_covariates,
    ingest_csv,
)
from .weights import WeightVector, assign_folds, development_year_weights, weighted_loglik
from .families import get_family
from .glm import GlmFit, fit_gamma, fit_logistic
from .gbm import GbmFit, GbmParams, fit_gbm, gbm_importance
from .selection import SelectionResult, forward_select
from .hrm import (
    HierarchicalModel,
    LayerModel,
    LayerSpec,
    a3_layers,
    default_weights,
    fit_hrm,
)
from .simulate import ReserveReport, SimulationResult, rbns_reserve, simulate_paths
from .triangles import (
    ChainLadderResult,
    CrmParams,
    DclParams,
    MultiplicativeFit,
    Triangle,
    build_triangle,
    chain_ladder,
    crm_rbns,
    dcl_rbns,
    fit_multiplicative,
    lrt_bridge,
    lrt_joint,
    mack_se,
)
from .generator import CovariateSpec, GeneratorConfig, LayerTruth, generate
from .evaluation import (
    EvaluationRun,
    actual_development,
    moving_window_eval,
    percentage_error,
    summarize,
)

__version__ = "0.1.0"
