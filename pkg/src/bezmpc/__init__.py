"""Bezier-spline model predictive planning with CLF tracking.

A cone-program planner produces Bezier reference splines at a slow rate and
a control Lyapunov function controller tracks them continuously. Planning
constraints are tightened by the tracker's robust tube, and an input bound
on the tracker is enforced through second-order cones.
"""

from .errors import (
    BezmpcError,
    ConfigurationError,
    InternalError,
    InvalidInputError,
    NumericalError,
    PlannerFailure,
    PreconditionError,
    RangeError,
    SingularityError,
    StaleSplineError,
)

__version__ = "0.1.0"
