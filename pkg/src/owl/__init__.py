"""Optimistically weighted likelihood estimation.

Robust model fitting by alternating a convex reweighting of the data (an
information projection onto a total-variation ball around the empirical
measure) with a weighted maximum likelihood step.
"""

from .admm import (
    AdmmConfig,
    KernelOperator,
    OklResult,
    gaussian_kernel_matrix,
    i_projection,
    i_projection_conditional,
    i_projection_kernelized,
    kl_objective,
)
from .bench import (
    BitFlipZeros,
    BootstrapResult,
    CoordinateSpike,
    CorruptionPlan,
    LabelFlip,
    ResponseExtreme,
    SCENARIOS,
    UniformBox,
    corrupt,
    os_bootstrap,
    run_corruption_sweep,
)
from .core import (
    BERNOULLI_MIXTURE,
    BernoulliParams,
    Dataset,
    GAUSSIAN,
    GAUSSIAN_MIXTURE,
    GaussianParams,
    LINEAR_REGRESSION,
    LOGISTIC_REGRESSION,
    LinearParams,
    LogisticParams,
    MixtureParams,
    ModelParams,
    ModelSpec,
    WeightVector,
    log_densities,
    log_density,
    params_from_dict,
    params_to_dict,
    uniform_weights,
)
from .engine import (
    EpsilonSearchResult,
    FitResult,
    FitTrace,
    OwlConfig,
    SelectionResult,
    choose_bandwidth,
    kernel_bandwidth_grid,
    okl_estimate,
    owl_fit,
    owl_fit_conditional,
    owl_selection_criterion,
    tune_epsilon,
)
from .models import (
    HardEmResult,
    wmle_bernoulli_product,
    wmle_gaussian,
    wmle_linear_regression,
    wmle_logistic_regression,
    wmle_mixture_hard_em,
)
from .prox import (
    ProxKlCoeffs,
    project_l1_ball,
    project_simplex,
    prox_entropy,
)
from .verify import (
    McEstimate,
    check_gradient_condition,
    coarsened_likelihood_mc,
    okl_bruteforce,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "BERNOULLI_MIXTURE",
    "BernoulliParams",
    "BitFlipZeros",
    "BootstrapResult",
    "CoordinateSpike",
    "CorruptionPlan",
    "Dataset",
    "EpsilonSearchResult",
    "FitResult",
    "FitTrace",
    "GAUSSIAN",
    "GAUSSIAN_MIXTURE",
    "GaussianParams",
    "HardEmResult",
    "KernelOperator",
    "LINEAR_REGRESSION",
    "LOGISTIC_REGRESSION",
    "LabelFlip",
    "LinearParams",
    "LogisticParams",
    "McEstimate",
    "MixtureParams",
    "ModelParams",
    "ModelSpec",
    "OklResult",
    "OwlConfig",
    "ProxKlCoeffs",
    "ResponseExtreme",
    "SCENARIOS",
    "SelectionResult",
    "UniformBox",
    "WeightVector",
    "check_gradient_condition",
    "choose_bandwidth",
    "coarsened_likelihood_mc",
    "corrupt",
    "gaussian_kernel_matrix",
    "i_projection",
    "i_projection_conditional",
    "i_projection_kernelized",
    "kernel_bandwidth_grid",
    "kl_objective",
    "log_densities",
    "log_density",
    "okl_bruteforce",
    "okl_estimate",
    "os_bootstrap",
    "owl_fit",
    "owl_fit_conditional",
    "owl_selection_criterion",
    "params_from_dict",
    "params_to_dict",
    "project_l1_ball",
    "project_simplex",
    "prox_entropy",
    "run_corruption_sweep",
    "tune_epsilon",
    "uniform_weights",
    "wmle_bernoulli_product",
    "wmle_gaussian",
    "wmle_linear_regression",
    "wmle_logistic_regression",
    "wmle_mixture_hard_em",
]
