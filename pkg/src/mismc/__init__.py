"""Multi-index sequential Monte Carlo ratio estimation for Bayesian inverse problems."""
from mismc.multiindex import (
    IndexSet,
    MultiIndex,
    SignedCorner,
    corners,
    delta_from_rates,
    mi,
    mixed_difference,
    tensor_product_set,
    total_degree_set,
)

__version__ = "0.1.0"

__all__ = [
    "IndexSet",
    "MultiIndex",
    "SignedCorner",
    "corners",
    "delta_from_rates",
    "mi",
    "mixed_difference",
    "tensor_product_set",
    "total_degree_set",
    "__version__",
]
