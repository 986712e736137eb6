"""Resolvents, proximal point iterations and heat flows on Hadamard spaces.

The package is organised bottom-up:

``spaces``     metric backends (Euclidean, hyperbolic, spider, product), geodesics, means
``operators``  nonexpansive maps and their resolvents
``flows``      proximal point iteration and the exponential-formula semigroup
``energy``     convex functionals, proximal maps and gradient flows
``markov``     Markov kernels, map fields, Dirichlet problems and heat flows
``config``     run configuration files
``cli``        the ``hadaflow`` command
"""

from .energy import (
    ConvexFunctional,
    DirichletEnergy,
    QuadraticFunctional,
    gradient_flow,
    prox,
    prox_ppa,
    resolvent_limit_probe,
)
from .errors import ConfigError, ConvergenceError, DomainError, StructuralError
from .flows import (
    SemigroupQuery,
    StepSchedule,
    Trajectory,
    fejer_check,
    ppa,
    semigroup_apply,
    semigroup_trajectory,
)
from .markov import (
    DirichletOperator,
    DirichletSpec,
    FieldSpace,
    MapField,
    MarkovKernel,
    MarkovOperator,
    conjecture_probe,
    d2,
    dirichlet_operator,
    format_instance,
    markov_apply,
    parse_instance,
    solve_dirichlet_flow,
    solve_dirichlet_ppa,
    spectral_bound,
)
from .operators import (
    GeodesicAverage,
    LinearMap,
    NonexpansiveMap,
    Projection,
    resolvent,
    resolvent_curve,
    validate_nonexpansive,
)
from .spaces import (
    Euclidean,
    HadamardSpace,
    Hyperbolic,
    Point,
    Product,
    Spider,
    check_cat0,
    distance,
    format_point,
    frechet_mean,
    geodesic_point,
    parse_point,
    project,
)

__version__ = "0.1.0"
