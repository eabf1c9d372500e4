"""GP-based sequential auto-tuning over discrete configuration spaces."""

from gp_autotune.space import (
    ConfigPoint,
    ConfigSpace,
    ParameterDef,
    TabularDataset,
    linear_index,
    load_dataset,
    load_space,
    neighborhood,
    point_at,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigPoint",
    "ConfigSpace",
    "ParameterDef",
    "TabularDataset",
    "linear_index",
    "load_dataset",
    "load_space",
    "neighborhood",
    "point_at",
    "__version__",
]
