"""Random dyadic grids, Haar shifts, and the kernels of their averages.

The package provides exact integer/rational geometry for translated dyadic
grids on a truncated scale window, seeded shift families whose operators
are norm-controlled by construction, scalar and vectorized kernel
evaluation with matching bits, and a set of verification sweeps comparing
Monte Carlo estimates to exact references and deterministic budgets.
"""

from .grid import (
    DyadicCube,
    GridShift,
    Point,
    ScaleWindow,
    WindowError,
    boundary_distance,
    children,
    cube_at,
    descendants_at_depth,
    parent,
    sample_shift,
    zero_shift,
)
from .haar import (
    HaarFunction,
    StepFunction,
    apply_shift,
    estimate_operator_norm,
    inner_product,
    shift_cell_matrix,
    step_inner,
)
from .kernel import (
    KernelEstimate,
    ResolutionError,
    estimate_kernel,
    estimate_kernel_difference,
    holder_envelope,
    kernel_omega,
    pairing_via_kernel,
    pairing_via_operator,
    size_budget,
    truncation_tail_bound,
)
from .shiftfamily import (
    FAMILIES,
    ShiftFamilySpec,
    ShiftOperator,
    build_shift,
    lambda_value,
)
from .verify import (
    SweepReport,
    boundary_lemma_check,
    default_window,
    ek_decay_check,
    fubini_check,
    holder_sweep,
    norm_suite,
    single_shift_holder_failure,
    size_estimate_sweep,
    vanishing_identity_check,
    vanishing_trials,
)

__version__ = "0.1.0"

__all__ = [
    "DyadicCube",
    "GridShift",
    "Point",
    "ScaleWindow",
    "WindowError",
    "boundary_distance",
    "children",
    "cube_at",
    "descendants_at_depth",
    "parent",
    "sample_shift",
    "zero_shift",
    "HaarFunction",
    "StepFunction",
    "apply_shift",
    "estimate_operator_norm",
    "inner_product",
    "shift_cell_matrix",
    "step_inner",
    "KernelEstimate",
    "ResolutionError",
    "estimate_kernel",
    "estimate_kernel_difference",
    "holder_envelope",
    "kernel_omega",
    "pairing_via_kernel",
    "pairing_via_operator",
    "size_budget",
    "truncation_tail_bound",
    "FAMILIES",
    "ShiftFamilySpec",
    "ShiftOperator",
    "build_shift",
    "lambda_value",
    "SweepReport",
    "boundary_lemma_check",
    "default_window",
    "ek_decay_check",
    "fubini_check",
    "holder_sweep",
    "norm_suite",
    "single_shift_holder_failure",
    "size_estimate_sweep",
    "vanishing_identity_check",
    "vanishing_trials",
    "__version__",
]
