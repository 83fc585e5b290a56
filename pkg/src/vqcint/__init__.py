"""Train a circuit's shift-rule derivative on an integrand, then read the
integral off the circuit itself.

The workflow: pick an ansatz (`build_ansatz`), fit its input derivative to
data (`train` / `ensemble_train`), then treat the circuit output as the
primitive: `corner_sum` for definite integrals, `marginalize` for
differential distributions, `parametric_scan` for sweeps over spectator
settings. `save_model`/`load_model` round-trip everything bitwise.
"""

from .checkpoint import CheckpointError, load_model, save_model
from .circuits import CircuitTemplate, build_ansatz, build_qpdf, build_reuploading, init_parameters
from .integration import (
    DegenerateNormalizationError,
    ExtrapolationWarning,
    IntegralResult,
    MarginalRow,
    corner_sum,
    corner_sum_of,
    ensemble_integrate,
    marginalize,
    normalized_prediction,
    normalized_prediction_batch,
    parametric_scan,
    primitive,
)
from .shiftrule import (
    IDENTITY_MAP,
    OutputMap,
    TrainedModel,
    circuit_value,
    plan_cost,
    shift_rule_derivative,
)
from .targets import (
    CosineTarget,
    HalfSineTarget,
    TabulatedGrid,
    pdf_like_grid,
    quadrature_marginal,
    quadrature_oracle,
)
from .training import Dataset, TrainConfig, ensemble_train, generate_dataset, train

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "CircuitTemplate",
    "CosineTarget",
    "Dataset",
    "DegenerateNormalizationError",
    "ExtrapolationWarning",
    "HalfSineTarget",
    "IDENTITY_MAP",
    "IntegralResult",
    "MarginalRow",
    "OutputMap",
    "TabulatedGrid",
    "TrainConfig",
    "TrainedModel",
    "build_ansatz",
    "build_qpdf",
    "build_reuploading",
    "circuit_value",
    "corner_sum",
    "corner_sum_of",
    "ensemble_integrate",
    "ensemble_train",
    "generate_dataset",
    "init_parameters",
    "load_model",
    "marginalize",
    "normalized_prediction",
    "normalized_prediction_batch",
    "parametric_scan",
    "pdf_like_grid",
    "plan_cost",
    "primitive",
    "quadrature_marginal",
    "quadrature_oracle",
    "save_model",
    "shift_rule_derivative",
    "train",
]
