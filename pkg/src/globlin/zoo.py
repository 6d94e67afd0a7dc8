"""Registry of example systems with known structure.

Each entry has a native right-hand side, the same field as expression
source, a recommended Lyapunov function with level and box, and closed
forms where they exist.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import UnknownSystem
from .linalg import expm
from .lyapunov import DomainBox, LyapunovFunction, quadratic_lyapunov_from_jacobian
from .ode import VectorField

__all__ = ["ZooEntry", "get_zoo", "list_zoo"]


@dataclass
class ZooEntry:
    name: str
    description: str
    field: VectorField
    lyapunov: LyapunovFunction
    box: DomainBox
    hyperbolic: bool
    f_source: tuple
    v_source: Optional[str] = None
    closed_flow: Optional[Callable] = None
    closed_h: Optional[Callable] = None
    note: str = ""

    @property
    def dimension(self):
        return self.field.dimension

    @property
    def level(self):
        return self.lyapunov.level


def _half_square(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * float(x @ x)


def _cubic_1d():
    field = VectorField(lambda x: -x**3, [0.0], jacobian=lambda x: np.array([[-3.0 * x[0] ** 2]]),
                        name="cubic_1d")
    V = LyapunovFunction(_half_square, [0.0], gradient=lambda x: np.array(x, dtype=float),
                         level=0.5, name="x1^2/2")

    def closed_flow(x0, t):
        x0 = float(np.ravel(x0)[0])
        return np.array([x0 / np.sqrt(1.0 + 2.0 * x0 * x0 * t)])

    def closed_h(x):
        x = float(np.ravel(x)[0])
        if x == 0.0:
            return np.array([0.0])
        return np.array([np.sign(x) * np.exp(0.5) * np.exp(-1.0 / (2.0 * x * x))])

    return ZooEntry("cubic_1d", "x' = -x^3, nonhyperbolic origin", field, V,
                    DomainBox([-1.8], [1.8]), False, ("-x1^3",), "x1^2/2",
                    closed_flow, closed_h,
                    "closed-form conjugacy sign(x) e^{1/2} e^{-1/(2x^2)} for the level c = 1/2")


def _linear_identity():
    field = VectorField(lambda x: -np.asarray(x, dtype=float), [0.0, 0.0],
                        jacobian=lambda x: -np.eye(2), name="linear_identity")
    V = LyapunovFunction(_half_square, [0.0, 0.0], gradient=lambda x: np.array(x, dtype=float),
                         level=0.5, name="(x1^2+x2^2)/2")
    return ZooEntry("linear_identity", "x' = -x in the plane; h is the identity", field, V,
                    DomainBox([-1.5, -1.5], [1.5, 1.5]), True, ("-x1", "-x2"), "(x1^2+x2^2)/2",
                    lambda x0, t: np.exp(-t) * np.asarray(x0, dtype=float),
                    lambda x: np.asarray(x, dtype=float).copy())


def _linear_entry(name, description, A, box):
    A = np.asarray(A, dtype=float)
    field = VectorField(lambda x: A @ x, [0.0, 0.0], jacobian=lambda x: A, name=name)
    V = quadratic_lyapunov_from_jacobian(field)
    return field, V, (lambda x0, t: expm(A, t) @ np.asarray(x0, dtype=float))


def _stiff_linear():
    box = DomainBox([-1.0, -1.0], [1.0, 1.0])
    field, V, closed = _linear_entry("stiff_linear", "", [[-1.0, 0.0], [0.0, -100.0]], box)
    # V = x1^2/2 + x2^2/200; boundary minimum 1/200 at (0, +-1).
    return ZooEntry("stiff_linear", "x' = diag(-1, -100) x, stiff, quadratic V from the Jacobian",
                    field, V.with_level(0.0025), box, True, ("-x1", "-100*x2"),
                    "x1^2/2 + x2^2/200", closed)


def _spiral_2d():
    box = DomainBox([-1.5, -1.5], [1.5, 1.5])
    field, V, closed = _linear_entry("spiral_2d", "", [[-1.0, 2.0], [-2.0, -1.0]], box)
    return ZooEntry("spiral_2d", "x' = [[-1, 2], [-2, -1]] x, stable focus",
                    field, V.with_level(0.5625), box, True, ("-x1+2*x2", "-2*x1-x2"),
                    "(x1^2+x2^2)/2", closed)


def _bistable_1d():
    field = VectorField(lambda x: x**3 - x, [0.0], jacobian=lambda x: np.array([[3.0 * x[0] ** 2 - 1.0]]),
                        name="bistable_1d")
    c = 0.2025
    V = LyapunovFunction(_half_square, [0.0], gradient=lambda x: np.array(x, dtype=float),
                         level=c, name="x1^2/2")
    ell2 = 2.0 * c

    def closed_flow(x0, t):
        x0 = float(np.ravel(x0)[0])
        if x0 == 0.0:
            return np.array([0.0])
        return np.array([np.sign(x0) / np.sqrt(1.0 + (1.0 / x0**2 - 1.0) * np.exp(2.0 * t))])

    def closed_h(x):
        x = float(np.ravel(x)[0])
        if x == 0.0:
            return np.array([0.0])
        return np.array([np.sign(x) * np.sqrt((1.0 / ell2 - 1.0) / (1.0 / x**2 - 1.0))])

    return ZooEntry("bistable_1d", "x' = x^3 - x, basin (-1, 1) of the origin", field, V,
                    DomainBox([-0.9], [0.9]), True, ("x1^3-x1",), "x1^2/2",
                    closed_flow, closed_h, "proper sub-basin; unstable equilibria at +-1")


def _quartic_2d():
    field = VectorField(lambda x: -np.asarray(x, dtype=float) ** 3, [0.0, 0.0],
                        jacobian=lambda x: np.diag(-3.0 * np.asarray(x, dtype=float) ** 2),
                        name="quartic_2d")

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.25 * float(x[0] ** 4 + x[1] ** 4)

    V = LyapunovFunction(value, [0.0, 0.0], gradient=lambda x: np.asarray(x, dtype=float) ** 3,
                         level=0.25, name="(x1^4+x2^4)/4")

    def closed_flow(x0, t):
        x0 = np.asarray(x0, dtype=float)
        return x0 / np.sqrt(1.0 + 2.0 * x0**2 * t)

    return ZooEntry("quartic_2d", "(x', y') = (-x^3, -y^3), nonhyperbolic, quartic V", field, V,
                    DomainBox([-1.5, -1.5], [1.5, 1.5]), False, ("-x1^3", "-x2^3"),
                    "(x1^4+x2^4)/4", closed_flow)


def _vdp_reversed():
    def rhs(x):
        return np.array([-x[1], x[0] - (1.0 - x[0] * x[0]) * x[1]])

    def jac(x):
        return np.array([[0.0, -1.0], [1.0 + 2.0 * x[0] * x[1], -(1.0 - x[0] * x[0])]])

    field = VectorField(rhs, [0.0, 0.0], jacobian=jac, name="vdp_reversed")
    V = quadratic_lyapunov_from_jacobian(field).with_level(0.234375)
    return ZooEntry("vdp_reversed", "time-reversed Van der Pol (mu = 1) inside its unstable limit cycle",
                    field, V, DomainBox([-0.75, -0.75], [0.75, 0.75]), True,
                    ("-x2", "x1-(1-x1^2)*x2"), "1.5*x1^2 - x1*x2 + x2^2",
                    note="box chosen inside the region where the quadratic V decreases")


_REGISTRY = {
    "cubic_1d": _cubic_1d,
    "linear_identity": _linear_identity,
    "stiff_linear": _stiff_linear,
    "spiral_2d": _spiral_2d,
    "bistable_1d": _bistable_1d,
    "quartic_2d": _quartic_2d,
    "vdp_reversed": _vdp_reversed,
}


def list_zoo():
    """``[(name, description), ...]`` in registry order."""
    return [(name, factory().description) for name, factory in _REGISTRY.items()]


def get_zoo(name):
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownSystem(f"unknown system {name!r}; known: {', '.join(_REGISTRY)}") from None
    return factory()
