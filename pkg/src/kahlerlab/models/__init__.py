"""Model metrics near a divisor and their asymptotic diagnostics."""

from .metrics import (
    DivisorModel,
    FiberWeight,
    LogExpansion,
    LogTerm,
    ModelError,
    ModelPositivityError,
    eta_phi,
    euclidean_reference,
    evaluate_expansion,
    f_phi,
    mixed_discriminant,
    model_constant,
    model_potential,
    omega_phi,
    omega_phi_semiample,
    semiample_expansion,
    top_power_defect,
)
from .profiles import (
    DecayFit,
    RadialProfile,
    completeness_profile,
    curvature_decay_profile,
    decay_fit,
    radial_maxima,
    volume_growth_profile,
)
