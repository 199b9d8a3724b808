"""Conjugacy of fibrewise Anosov maps on trivial torus bundles to their affine models."""

from .base import BaseSystem
from .cones import (
    BundleApproximation,
    ConeCertificate,
    ConeField,
    approximate_invariant_bundles,
    check_cone_invariance,
)
from .config import ConfigError, SystemConfig, parse_config
from .conjugacy import (
    ConjugacyResult,
    SeriesParameters,
    build_conjugacy,
    injectivity_scan,
    solve_cohomological,
    verify_conjugacy,
)
from .leaves import IntersectionReport, LeafSegment, compute_leaf, find_intersections, leaf_distance_bound
from .linear import (
    AffineModel,
    HyperbolicSplitting,
    IntegerMatrix,
    NotHyperbolicError,
    apply_affine,
    compute_splitting,
    is_hyperbolic,
)
from .system import (
    DisplacementField,
    FibrewiseSystem,
    HomologyMismatch,
    displacement,
    evaluate,
    fibre_jacobian,
    induced_homology_matrix,
    invert_fibre,
)
from .torus import BundlePoint, DeckVector, Grid, LiftPoint, TorusPoint, project, torus_distance, translate
from .trig import TrigPolynomial

__version__ = "0.1.0"
