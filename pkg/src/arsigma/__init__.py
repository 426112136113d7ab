"""Empirical variance estimation via an accuracy-reliability cost function.

Given signed errors of a black-box mean model, the library estimates
input-dependent Gaussian noise levels by trading off forecast accuracy
(closed-form Gaussian CRPS) against statistical reliability (an
analytic score on the distribution of scaled relative errors).
"""

from .arcost import ArWeights, ErrorSample, ar_cost, ar_grad, compute_beta, crps_min_total
from .bench import (
    DatasetSpec,
    ExperimentReport,
    density_plot_5d,
    generate,
    make_dataset,
    nlpd,
    nlpd_from_arrays,
    run_experiment,
    sigma_recovery,
)
from .meanfn import GpModel, gp_fit, gp_predict_mean, se_kernel
from .optim import OptimOptions, OptimTrace, minimize, multi_restart
from .scores import (
    ForecastTriple,
    RelativeErrorSet,
    crps_dsigma,
    crps_gaussian,
    crps_quadrature_oracle,
    crps_sigma_min,
    reliability_score,
    rs_dsigma,
    rs_min,
    rs_optimal_etas,
    rs_quadrature_oracle,
)
from .varmodel import (
    MlpModel,
    PerPointModel,
    PolynomialModel,
    fit_mlp,
    fit_per_point,
    fit_polynomial,
    load_model,
    param_grad,
    predict_sigma,
    save_model,
)

__version__ = "0.1.0"
