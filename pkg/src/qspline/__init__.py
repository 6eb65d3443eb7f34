"""Minimum-change Hamiltonian interpolation of quantum states on SU(n+1).

Given an initial pure state, a list of target states with visit times, and a
closeness weight, the package finds the time-dependent Hamiltonian that moves
through (or exactly through, in the small-width limit) the targets while
changing as little as possible, via a variational one-step integrator on the
unitary group and exact adjoint gradients of the discrete action.

Typical use::

    from qspline import make_problem, solve

    spec = make_problem(psi0, [(phi1, 1.0), (phi2, 2.0)], sigma=0.04, steps=300)
    sol = solve(spec)
    sol.path.states()          # interpolating trajectory
    sol.path.H                 # Hamiltonian path that produces it

``qspline.cli`` provides the command-line entry point; ``qspline.coherent``
embeds solutions into k-particle symmetric subspaces.
"""

from .adjoint import Gradient, backward, gradient
from .coherent import (
    SymmetricState,
    coherent_spline,
    embed_path,
    lift_hamiltonian,
    lifted_propagation,
    metric_scale,
    occupation_basis,
    veronese,
)
from .forward import (
    DiscretePath,
    ProblemSpec,
    cost,
    energies,
    integrate,
    make_problem,
    step,
    terminal_residual,
)
from .lie_core import (
    AlgebraElement,
    CayleyChartError,
    HermitianOperator,
    UnitaryOperator,
    cayley,
    cayley_inverse,
    inner,
    norm,
    su_basis,
)
from .optimizer import (
    DescentOptions,
    Solution,
    ValidationReport,
    fd_gradient,
    solve,
    validate,
)
from .state_geom import (
    CutLocusError,
    FieldDecomposition,
    PureState,
    TargetList,
    TargetPoint,
    bloch_coords,
    delta_mu,
    distance,
    field_decomposition,
    geodesic_hamiltonian,
    mismatch_force,
    stabilizer_basis,
    stabilizer_perp_basis,
)

__version__ = "0.1.0"

__all__ = [
    "AlgebraElement",
    "CayleyChartError",
    "CutLocusError",
    "DescentOptions",
    "DiscretePath",
    "FieldDecomposition",
    "Gradient",
    "HermitianOperator",
    "ProblemSpec",
    "PureState",
    "Solution",
    "SymmetricState",
    "TargetList",
    "TargetPoint",
    "UnitaryOperator",
    "ValidationReport",
    "backward",
    "bloch_coords",
    "cayley",
    "cayley_inverse",
    "coherent_spline",
    "cost",
    "delta_mu",
    "distance",
    "embed_path",
    "energies",
    "fd_gradient",
    "field_decomposition",
    "geodesic_hamiltonian",
    "gradient",
    "inner",
    "integrate",
    "lift_hamiltonian",
    "lifted_propagation",
    "make_problem",
    "metric_scale",
    "mismatch_force",
    "norm",
    "occupation_basis",
    "solve",
    "step",
    "stabilizer_basis",
    "stabilizer_perp_basis",
    "su_basis",
    "terminal_residual",
    "validate",
    "veronese",
    "__version__",
]
