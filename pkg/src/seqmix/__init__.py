"""Asymptotic analysis of learning on correlated Gaussian-mixture sequences.

Three coupled surfaces over one problem definition: a fixed-point solver for
the overlap self-consistency equations (also usable as time-indexed state
evolution), finite-dimensional message-passing simulators (rBP and GAMP),
and a gradient-descent baseline lab, plus a harness that cross-checks all
three against each other at desk scale.
"""

from .model import (
    ClassLaw,
    compute_fixed_statistics,
    ConjugateParameters,
    Dimensions,
    FixedStatistics,
    LossModel,
    make_atom,
    ModelSpec,
    OrderParameters,
    SpectralAtom,
    SpectralMeasure,
    validate_spec,
)
from .gaussian import (
    expect_over_measure,
    McPlan,
    sample_energetic_measure,
    sample_joint_xy,
    sym_pinv,
    sym_pinv_sqrt,
    sym_sqrt,
)
from .prox import gamp_resolvent, moreau_prox, prox_jacobians, ProxProblem
from .saddle import (
    FixedPointReport,
    free_entropy,
    solve_fixed_point,
    SolverConfig,
    test_error,
    train_loss,
    update_hats,
    update_overlaps,
)
from .gamp import (
    Dataset,
    gamp_run,
    gd_gradient_norm,
    generate_dataset,
    rbp_run,
)
from .erm import empirical_test_error, erm_train, summary_statistics, TrainConfig
from .zoo import instance_by_name

__version__ = "0.1.0"

__all__ = [
    "ClassLaw",
    "compute_fixed_statistics",
    "ConjugateParameters",
    "Dataset",
    "Dimensions",
    "empirical_test_error",
    "erm_train",
    "expect_over_measure",
    "FixedPointReport",
    "FixedStatistics",
    "free_entropy",
    "gamp_resolvent",
    "gamp_run",
    "gd_gradient_norm",
    "generate_dataset",
    "instance_by_name",
    "LossModel",
    "make_atom",
    "McPlan",
    "ModelSpec",
    "moreau_prox",
    "OrderParameters",
    "prox_jacobians",
    "ProxProblem",
    "rbp_run",
    "sample_energetic_measure",
    "sample_joint_xy",
    "solve_fixed_point",
    "SolverConfig",
    "SpectralAtom",
    "SpectralMeasure",
    "summary_statistics",
    "sym_pinv",
    "sym_pinv_sqrt",
    "sym_sqrt",
    "test_error",
    "train_loss",
    "TrainConfig",
    "update_hats",
    "update_overlaps",
    "validate_spec",
]
