"""Exact checks of Cartan-calculus identities and Bourbaki-algebroid axioms on coordinate charts."""

__version__ = "0.1.0"

from .errors import (
    BourbakiError,
    BundleMismatch,
    DimensionMismatch,
    HypothesisViolation,
    IndexOutOfRange,
    NotInImage,
    PolySyntaxError,
    Refused,
    ShapeMismatch,
)
from .poly import Poly
from .bundle import (
    BidiffOp,
    Bundle,
    BundleMap,
    FirstOrderOp,
    LocalityOperator,
    MetricTensor,
    Section,
    SplitPresentation,
    bidiff_equal,
    check_metric,
    check_split,
)
from .chart import (
    BaseAlgebroid,
    Chart,
    Form,
    VectorField,
    a_exterior_d,
    a_interior,
    a_lie_derivative,
    base_cartan,
    cartan_operators,
    exterior_d,
    interior,
    lie_bracket,
    lie_derivative,
    wedge,
)
from .engine import (
    CheckReport,
    HierarchyReport,
    SectionBasis,
    check_anchor_morphism,
    check_antisymmetry,
    check_cartan_suite,
    check_jacobi,
    check_locality,
    check_metric_invariance,
    check_precalculus,
    check_right_leibniz,
    check_symmetric_part,
    classify,
)
from .constructions import (
    AlgebroidStack,
    PreCalculus,
    TwistData,
    canned_dorfman,
    extract_twist,
    induce_precalculus,
    make_cartan_precalculus,
    make_connection_precalculus,
    make_lie_algebroid_precalculus,
    make_zero_d_precalculus,
    random_two_form,
    standard_bracket,
    twist,
    twist_from_form,
)
