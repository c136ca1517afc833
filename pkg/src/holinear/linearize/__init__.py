"""Conjugacy construction: planners, series solvers, flattening,
h-linearization and verification."""

from .contracting import contracting_series, inverse_bundle, linearize_contracting
from .core import ConjugacyMap, compose_conjugacies, identity_conjugacy, linear_conjugacy, restricted
from .flatten import FlatteningMap, flatten, flattened_bundle, tabulated_bundle
from .hlinear import flatness_defect, h_linearize
from .plans import ContractionPlan, SaddlePlan, plan_contraction, plan_saddle
from .saddle import linearize_saddle, saddle_series
from .verify import anisotropic_norms, apply_H_s, holder_certificate, verify_conjugacy

__all__ = [
    "ConjugacyMap", "ContractionPlan", "FlatteningMap", "SaddlePlan",
    "anisotropic_norms", "apply_H_s", "compose_conjugacies", "contracting_series",
    "flatness_defect", "flatten", "flattened_bundle", "h_linearize", "holder_certificate",
    "identity_conjugacy", "inverse_bundle", "linear_conjugacy", "linearize_contracting",
    "linearize_saddle", "plan_contraction", "plan_saddle", "restricted", "saddle_series",
    "tabulated_bundle", "verify_conjugacy",
]
