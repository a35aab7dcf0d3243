"""Interaction-energy minimization over discrete measures on model manifolds.

Subpackages: geometry (model-space metric operations), kernels (interaction
profiles), measures (discrete measures and bottleneck transport), energy
(values and gradients), descent (Riemannian minimization), certify
(necessary-condition certificates), cli (batch experiment runner).
"""

from .geometry import (
    DegenerateInputError,
    GeometryError,
    InvalidPointError,
    Manifold,
    TangentVector,
    distance,
    distance_gradient,
    euclidean,
    exp_map,
    geodesic_point,
    hinge_comparison,
    hyperbolic,
    hyperbolic_third_side,
    log_map,
    sphere,
)
from .kernels import (
    AttractiveRepulsive,
    CosinePower,
    Kernel,
    KernelError,
    PowerLaw,
    RepulsionClass,
    Tabulated,
    classify,
    from_spec,
)
from .measures import (
    DiscreteMeasure,
    MeasureError,
    SignedPerturbation,
    d_infinity,
    merge_atoms,
    mix,
    read_measure_csv,
    support_clusters,
    write_measure_csv,
)
from .energy import (
    EnergyReport,
    cross_energy,
    energy,
    energy_report,
    grad_positions,
    grad_weights,
    potential,
    quadratic_form,
)
from .descent import (
    DescentConfig,
    StallError,
    Trajectory,
    minimize,
    multi_start,
    random_measure,
)
from .certify import (
    CertificateReport,
    constant_potential_check,
    discrete_resolution,
    discreteness_report,
    nested_support_check,
    second_variation_check,
    sqrt_triangle_check,
    triangle_halfpower_margin,
)

__version__ = "0.1.0"
