"""Operator-learning surrogates for 1-D soil consolidation.

Reference solutions of the single-drainage consolidation equation come
from classical integrators (implicit BDF, explicit Dormand-Prince) on a
central-difference grid; four branch/trunk operator-network variants
learn the solution operator from sampled initial-pressure profiles and
consolidation coefficients; the evaluation harness measures accuracy,
out-of-distribution behavior, and inference speed against the solvers.
"""

from .consolidation import (
    ConsolidationCase,
    SolutionField,
    analytical_field,
    analytical_solution,
    average_degree_of_consolidation,
    build_system_matrix,
    time_factor,
    tv_to_time,
    uniform_case,
)
from .dataset import (
    OperatorDataset,
    StandardizationStats,
    destandardize,
    generate_dataset,
    load_dataset,
    save_dataset,
    standardize,
)
from .errors import (
    ConsonetError,
    ConvergenceError,
    NumericalError,
    SingularMatrixError,
    StepUnderflowError,
    StorageError,
    ValidationError,
)
from .integrators import (
    IntegratorConfig,
    bdf_solve,
    bdf_step,
    rk4_step,
    rk45_solve,
    solve_field,
)
from .models import (
    ModelSpec,
    ModelState,
    TrainConfig,
    load_model,
    operator_loss,
    predict,
    query_grid,
    query_points,
    save_model,
    train,
)
from .nn import FourierEmbedding, MlpParams, MlpSpec, adam_update, fourier_embed, init_mlp
from .random_fields import GrfSpec, SamplingRanges, covariance_matrix, sample_case, sample_grf
from .tridiag import Tridiagonal, thomas_solve

__version__ = "0.1.0"
