"""Mirror synthesis and billiard verification for parallel-beam optics.

Build mirror systems that carry a vertical parallel light beam over one
planar domain onto a prescribed diffeomorphic image of it, and verify any
such system by honest ray tracing: reflections are counted against every
surface, stray intersections are reported, and the realized map and the
optical path constant are measured, never assumed.
"""

from __future__ import annotations

from . import errors
from .composer import (
    CompositePlan,
    compose_four_mirror,
    invert_system,
    realize_orientation_preserving,
    realize_orientation_reversing,
)
from .decomposition import (
    DecompositionResult,
    decompose_local,
    factor_linear,
    hyperbolicity,
    pde_coefficients,
)
from .domains import ConvexPolygon, Disc, DomainUnion, Interval, convex_hull, grid_cells, image_hull
from .ellipse import (
    EllipseConfig,
    mobius_fit,
    pencil_map_angle,
    pencil_map_geometric,
)
from .fields import (
    AffineField,
    GridField,
    PolynomialField,
    ScalarField,
    SecondMirrorHeight,
    SumField,
    constant_field,
    half_norm_sq,
    linear_field,
)
from .geometry import Ray, reflect, reflect_vertical, segment_slope, upward_normal, vertical_ray
from .maps import (
    AnalyticMap,
    CallableMap,
    CompositeMap,
    GradientMap,
    LinearMap,
    PlaneMap,
    curl_deficit,
    invert_map,
    orientation,
    potential_from_gradient,
)
from .mirrors import MirrorPatch, MirrorSystem, Stage, intersect_ray_patch
from .scene import (
    SceneDocument,
    load_scene,
    save_scene,
    scene_equal,
    scene_from_text,
    scene_to_text,
)
from .synthesis import (
    PiecewisePiece,
    PiecewiseSpec,
    TwoMirrorSpec,
    choose_path_constant,
    legendre_check,
    recover_gradient,
    synthesize_piecewise,
    synthesize_two_mirror,
)
from .tracing import backend_for, compiled_available, trace_rays
from .verify import (
    TraceResult,
    VerificationReport,
    halton_labels,
    measure_time_shift,
    trace_many,
    trace_ray,
    verify_system,
)

__version__ = "0.1.0"

__all__ = [
    "AffineField",
    "AnalyticMap",
    "CallableMap",
    "CompositeMap",
    "CompositePlan",
    "ConvexPolygon",
    "DecompositionResult",
    "Disc",
    "DomainUnion",
    "EllipseConfig",
    "GradientMap",
    "GridField",
    "Interval",
    "LinearMap",
    "MirrorPatch",
    "MirrorSystem",
    "PiecewisePiece",
    "PiecewiseSpec",
    "PlaneMap",
    "PolynomialField",
    "Ray",
    "ScalarField",
    "SceneDocument",
    "SecondMirrorHeight",
    "Stage",
    "SumField",
    "TraceResult",
    "TwoMirrorSpec",
    "VerificationReport",
    "backend_for",
    "choose_path_constant",
    "compiled_available",
    "compose_four_mirror",
    "constant_field",
    "convex_hull",
    "curl_deficit",
    "decompose_local",
    "errors",
    "factor_linear",
    "grid_cells",
    "half_norm_sq",
    "halton_labels",
    "hyperbolicity",
    "image_hull",
    "intersect_ray_patch",
    "invert_map",
    "invert_system",
    "legendre_check",
    "linear_field",
    "load_scene",
    "measure_time_shift",
    "mobius_fit",
    "orientation",
    "pde_coefficients",
    "pencil_map_angle",
    "pencil_map_geometric",
    "potential_from_gradient",
    "realize_orientation_preserving",
    "realize_orientation_reversing",
    "recover_gradient",
    "reflect",
    "reflect_vertical",
    "save_scene",
    "scene_equal",
    "scene_from_text",
    "scene_to_text",
    "segment_slope",
    "synthesize_piecewise",
    "synthesize_two_mirror",
    "trace_many",
    "trace_ray",
    "trace_rays",
    "upward_normal",
    "verify_system",
    "vertical_ray",
    "__version__",
]
