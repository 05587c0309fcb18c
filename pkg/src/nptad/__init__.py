"""Tabular anomaly detection by masked reconstruction with a Non-Parametric Transformer."""

__version__ = "0.1.0"

from .estimators import KNNDetector, MaskKNNDetector, NPTAD  # noqa: E402
from .exceptions import CapacityError, ContractError, DataLoadError, NumericError, SchemaError  # noqa: E402
from .masking import MaskBank, build_mask_bank  # noqa: E402
from .metrics import auroc, f1_at_count  # noqa: E402

__all__ = [
    "NPTAD", "MaskKNNDetector", "KNNDetector", "MaskBank", "build_mask_bank",
    "auroc", "f1_at_count", "ContractError", "CapacityError", "NumericError",
    "SchemaError", "DataLoadError", "__version__",
]
