"""Bayesian and distributionally robust recourse for black-box classifiers."""

__version__ = "0.1.0"

from .bounds import (
    AmbiguityBall,
    ComponentSolution,
    WorstCaseComponent,
    build_orthonormal_basis,
    gaussian_ground_cost,
    grid_oracle_2d,
    log_optimistic_likelihood,
    log_pessimistic_likelihood,
    optimistic_alpha,
    optimistic_likelihood,
    pessimistic_alpha,
    pessimistic_likelihood,
    project_quarter_disk,
    recover_optimistic_component,
    recover_pessimistic_component,
    smoothed_likelihood,
)
from .data import Dataset, FeatureMeta, MinMaxScaler, SplitSpec, generate_synthetic, load_csv, split
from .errors import (
    AlreadyFavorableError,
    CsvParseError,
    DegenerateDataError,
    DegenerateNeighborhoodError,
    InvalidBracketError,
    ModelFileError,
    ModelVersionError,
    SchemaError,
)
from .harness import evaluate_recourse, pareto_sweep, retrain_future_models, run_sweep
from .mlp import MlpModel, TrainConfig, auc, load_model, predict_label, predict_proba, save_model, train_mlp
from .quarter_disk import pgd_2d
from .recourse import (
    RecourseConfig,
    RecourseResult,
    kde_objective,
    kde_recourse,
    project_l1_ball,
    robust_gradient,
    robust_objective,
    robust_recourse,
    wachter_recourse,
)
from .sampler import (
    LocalSampleSet,
    boundary_bisection,
    build_local_sample_set,
    nearest_counterfactuals,
    sample_uniform_ball,
    select_boundary,
)
