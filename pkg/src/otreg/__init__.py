"""Regression with implicitly modeled noise via optimal-transport cost minimization.

A stochastic generator y = f(x, z) is trained by repeatedly matching
mini-batches of real samples against generated samples through an exact
linear assignment problem (dense or k-nearest-neighbor sparsified) and
descending the matched transport cost.
"""

from .lap import (
    Assignment,
    CostMatrix,
    InfeasibleMatchingError,
    SparseCostMatrix,
    brute_force,
    solve_dense,
    solve_sparse,
)
from .transport import (
    LabeledSample,
    TransportConfig,
    TransportPlan,
    build_dense_cost,
    build_sparse_cost,
    ot_cost_and_plan,
    unit_cost,
    unit_cost_grad_fake_y,
    wasserstein_p,
)
from .generator import (
    AdamState,
    GeneratorParams,
    NoiseSpec,
    adam_step,
    backward,
    forward,
    load_checkpoint,
    sample,
    save_checkpoint,
)
from .data import (
    Dataset,
    FoldSplit,
    StandardizationStats,
    gen_exp,
    gen_heteroscedastic,
    gen_mixture_density,
    gen_multimodal,
    gen_sinus,
    inverse_transform,
    kfold,
    load_csv,
    save_csv,
    standardize,
)
from .evaluation import (
    EvalConfig,
    MetricsReport,
    ParzenEstimator,
    cross_validate,
    nlpd,
    parzen_log_density,
    point_metrics,
    select_bandwidth,
    trimmed_mean,
)
from .trainer import Batch, TrainConfig, TrainHistory, make_batch, step, train

__version__ = "0.1.0"
