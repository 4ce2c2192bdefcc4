"""Proxy metrics over expert trajectories: ranking and capability forecasting."""

from .curvefit import (
    FitResult,
    Series,
    extrapolation_error,
    fit_exponential,
    fit_power_law,
    fit_sigmoid,
    inner_split_select,
)
from .proxylib import (
    PROXY_IDS,
    ProxyId,
    ProxyVector,
    SignTable,
    baseline_generic_ce,
    baseline_rbridge,
    instance_proxy_vector,
    task_proxy_vector,
    truncate_window,
)
from .protocols import (
    ComputePoint,
    CvReport,
    FoldSpec,
    compute_fraction,
    corpus_decision_curve,
    make_folds,
    oracle_select,
    run_cv,
    subsample_subjects,
)
from .ranking import (
    CoefficientGrid,
    PreferencePair,
    Ranker,
    RankerSpec,
    ScoreTable,
    UndefinedCorrelation,
    decision_accuracy,
    fit_ranksvm_linear,
    fit_ranksvm_rbf,
    preference_pairs,
    score_model,
    select_sparse3,
    select_univariate,
    spearman,
)
from .tokenstats import (
    CORE_METRICS,
    WEIGHTINGS,
    CoreMetrics,
    FrequencyTable,
    LossStats,
    TokenRecord,
    ValidationError,
    WeightVector,
    build_frequency_table,
    core_metrics,
    loss_stats,
    weight_vector,
)

__version__ = "0.1.0"
