"""
carnot-gmt: geometric measure theory of C^1 submanifolds in Carnot groups.

Stratified algebras in exponential coordinates, homogeneous quasi-distances,
graded multivectors, pointwise degree and characteristic sets of parametrized
submanifolds, and the measure, blow-up and dimension experiments built on them.
"""

__version__ = "0.1.0"

from carnot_gmt.algebra import (  # noqa: E402
    GroupPoint,
    StratifiedAlgebra,
    bch_product,
    builtin,
    dilate,
    inverse,
    load_algebra,
    validate,
)
from carnot_gmt.exterior import Multivector, degree_profile, max_degree, wedge  # noqa: E402
from carnot_gmt.manifold import (  # noqa: E402
    PointClass,
    builtin_chart,
    load_chart,
    normal_form,
    pointwise_degree,
    sample_characteristic_set,
    tangent_multivector,
)
from carnot_gmt.metric import HomogeneousQuasiNorm, greedy_5r_cover, make_norm  # noqa: E402
from carnot_gmt.gmt import (  # noqa: E402
    blowup_trace,
    box_dimension,
    charset_dim_bound,
    intrinsic_measure,
    metric_factor,
    riemannian_measure,
)

__all__ = [
    "__version__",
    "GroupPoint",
    "StratifiedAlgebra",
    "bch_product",
    "builtin",
    "dilate",
    "inverse",
    "load_algebra",
    "validate",
    "Multivector",
    "degree_profile",
    "max_degree",
    "wedge",
    "PointClass",
    "builtin_chart",
    "load_chart",
    "normal_form",
    "pointwise_degree",
    "sample_characteristic_set",
    "tangent_multivector",
    "HomogeneousQuasiNorm",
    "greedy_5r_cover",
    "make_norm",
    "blowup_trace",
    "box_dimension",
    "charset_dim_bound",
    "intrinsic_measure",
    "metric_factor",
    "riemannian_measure",
]
