"""Error metrics, cross validation, cell-width sweeps and distribution comparison."""
from ..metrics import mae, rmse
from .compare import ModelingError, aggregated_modeling_error
from .cv import ErrorReport, cross_validate, kfold_indices
from .sweep import SweepResult, forest_trainer, sweep_cell_width

__all__ = [
    "mae", "rmse", "ModelingError", "aggregated_modeling_error", "ErrorReport",
    "cross_validate", "kfold_indices", "SweepResult", "forest_trainer", "sweep_cell_width",
]
