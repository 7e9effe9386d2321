"""topogrid: a constraint engine for topological interactions between the
classes of a multi-class label grid.

Detects sites that violate containment/exclusion constraints (including
width-d variants) with three mutually verifying algorithms, turns the
resulting critical mask into a differentiable training penalty, and scores
segmentations with Dice, Hausdorff, average symmetric surface distance, and
the violation percentage.
"""

__version__ = "0.1.0"

from .constraints import (
    CONTAINMENT,
    EXCLUSION,
    ConnectivityKernel,
    Constraint,
    ConstraintSet,
    PairTask,
    build_kernel,
    format_constraint_config,
    parse_constraint_config,
    read_constraint_config,
    reduce,
)
from .detect import (
    ALGORITHMS,
    DetectionResult,
    choose_algorithm,
    detect,
    detect_conv,
    detect_naive,
    detect_shifted,
)
from .grid import (
    BinaryMask,
    CountGrid,
    LabelGrid,
    LikelihoodGrid,
    SegvError,
    argmax_labels,
    class_mask,
    one_hot,
    read_label_grid,
    read_likelihood_grid,
    read_mask,
    write_label_grid,
    write_likelihood_grid,
    write_mask,
    write_pgm,
)
from .loss import (
    LossConfig,
    LossReport,
    masked_loss,
    masked_loss_with_gradient,
    total_loss,
)
from .metrics import (
    MetricsReport,
    MetricUndefinedError,
    assd,
    dice,
    evaluate,
    hausdorff,
    surface_sites,
    violations_percent,
)
from .synth import BenchReport, SynthSpec, bench, generate

__all__ = [name for name in dir() if not name.startswith("_")]
