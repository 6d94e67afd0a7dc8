"""Global linearization of flows near asymptotically stable equilibria.

For ``x' = f(x)`` with a strict Lyapunov function ``V`` on a box around an
asymptotically stable equilibrium, :class:`GlobalLinearizer` builds a
homeomorphism ``h`` with ``h(Phi^t(x)) = exp(A t) h(x)`` for any Hurwitz
``A``, including at nonhyperbolic equilibria. Companion tools give Koopman
eigenfunctions, a Morse-type normal form of ``V`` and numerical witnesses
for each identity.
"""

from .conjugacy import (
    ConjugacyReport,
    GlobalLinearizer,
    HurwitzTarget,
    SphereChart,
    restrict_to_sublevel,
    retarget,
    verify_conjugacy,
    verify_conjugacy_targets,
)
from .exceptions import GloblinError
from .expr import compile_field, parse
from .koopman import EigenfunctionSet, eigenfunctions, export_grid, verify_eigenfunctions
from .linalg import expm, is_hurwitz, solve_lyapunov
from .lyapunov import DomainBox, LyapunovFunction, choose_level, quadratic_lyapunov_from_jacobian, validate
from .morse import GammaSpec, MorseNormalForm, verify_normal_form
from .ode import IntegratorConfig, VectorField, flow, flow_to_level, integrate
from .zoo import get_zoo, list_zoo

__version__ = "0.1.0"

__all__ = [
    "ConjugacyReport",
    "DomainBox",
    "EigenfunctionSet",
    "GammaSpec",
    "GlobalLinearizer",
    "GloblinError",
    "HurwitzTarget",
    "IntegratorConfig",
    "LyapunovFunction",
    "MorseNormalForm",
    "SphereChart",
    "VectorField",
    "choose_level",
    "compile_field",
    "eigenfunctions",
    "expm",
    "export_grid",
    "flow",
    "flow_to_level",
    "get_zoo",
    "integrate",
    "is_hurwitz",
    "list_zoo",
    "parse",
    "quadratic_lyapunov_from_jacobian",
    "restrict_to_sublevel",
    "retarget",
    "solve_lyapunov",
    "validate",
    "verify_conjugacy",
    "verify_conjugacy_targets",
    "verify_eigenfunctions",
    "verify_normal_form",
]
