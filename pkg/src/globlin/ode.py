"""Adaptive integration of autonomous ODEs with dense output and level events.

Two explicit embedded Runge-Kutta pairs are available: Dormand-Prince 8(5,3)
with its seventh-order interpolant (the default) and Dormand-Prince 5(4)
with Shampine's fourth-order interpolant. Backward integration integrates
``-f`` forward and records the direction, so crossing times come out signed.

Error control is purely relative by default (``abs_tol`` is a tiny floor).
Conjugacies to linear flows can be Hoelder with a small exponent along fast
directions (``|x|^(1/100)`` for rates 1 and 100), so an absolute floor such
as 1e-12 destroys the information that ``h`` depends on.
"""

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    EvalDomainError,
    LeftDomain,
    NoCrossing,
    NotAnEquilibrium,
    StepLimitExceeded,
    StepSizeUnderflow,
)
from .expr import numeric_jacobian
from .rootfind import brent

try:
    from scipy.integrate._ivp import dop853_coefficients as _D8
except ImportError:  # pragma: no cover
    _D8 = None

__all__ = [
    "DenseSolution",
    "EventResult",
    "IntegratorConfig",
    "VectorField",
    "flow",
    "flow_to_level",
    "integrate",
]

_EPS = np.finfo(float).eps

# Dormand-Prince 5(4) tableau (autonomous, so the nodes are not needed).
_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Dense output: y(s + theta*h) = y + h * K.T @ _P @ [theta, theta^2, theta^3, theta^4].
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class VectorField:
    """Right-hand side ``f`` of ``x' = f(x)`` with a declared equilibrium.

    Parameters
    ----------
    rhs : callable
        Maps a state (1-D array) to its time derivative.
    equilibrium : array_like
        The equilibrium ``x*``; checked to satisfy
        ``|f(x*)| <= 1e-9 * (1 + |x*|)``.
    jacobian : callable, optional
        Analytic Jacobian; central differences are used otherwise, with
        entries below ``1e-8`` (relative) set to zero.

    Notes
    -----
    Solutions are assumed unique (e.g. ``f`` locally Lipschitz). This cannot
    be checked numerically; for non-unique fields the computed flow is just
    one of the solutions.
    """

    def __init__(self, rhs, equilibrium, jacobian=None, name=""):
        self.rhs = rhs
        self.equilibrium = np.atleast_1d(np.asarray(equilibrium, dtype=float)).copy()
        self.equilibrium.setflags(write=False)
        self.jacobian = jacobian
        self.name = name
        f0 = self(self.equilibrium)
        if f0.shape != self.equilibrium.shape:
            raise ValueError(f"rhs returns shape {f0.shape}, expected {self.equilibrium.shape}")
        scale = 1e-9 * (1.0 + np.linalg.norm(self.equilibrium))
        if np.linalg.norm(f0) > scale:
            raise NotAnEquilibrium(f"|f(x*)| = {np.linalg.norm(f0):.3e} exceeds {scale:.3e}")

    @property
    def dimension(self):
        return self.equilibrium.size

    def __call__(self, x):
        return np.asarray(self.rhs(x), dtype=float).reshape(-1)

    def jacobian_at(self, x=None):
        x = self.equilibrium if x is None else np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.atleast_2d(np.asarray(self.jacobian(x), dtype=float))
        J = numeric_jacobian(self, x)
        # Entries below the finite-difference noise floor are zero, so that a
        # nonhyperbolic equilibrium is not mistaken for a weakly stable one.
        J[np.abs(J) <= 1e-8 * max(1.0, float(np.abs(J).max()))] = 0.0
        return J

    def __repr__(self):
        label = self.name or getattr(self.rhs, "__name__", "rhs")
        return f"VectorField({label}, n={self.dimension})"


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    ``method`` is ``"DOP853"`` or ``"DP5"``. The default ``abs_tol`` is a
    floor that only matters for components that are exactly zero.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-300
    max_step: float = math.inf
    t_max: float = 1e3
    max_steps: int = 200_000
    method: str = "DOP853"

    def __post_init__(self):
        if self.method not in _METHODS or (self.method == "DOP853" and _D8 is None):
            raise ValueError(f"unknown integration method {self.method!r}")
        for name in ("rel_tol", "abs_tol", "max_step", "t_max", "max_steps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rel_tol < 1e-14:
            raise ValueError("rel_tol must be at least 1e-14")


@dataclass(frozen=True)
class EventResult:
    t_hit: float
    x_hit: np.ndarray
    residual: float
    bracket_width: float


class _Dp5Step:
    """One accepted step in the integration variable ``s`` (always increasing)."""

    __slots__ = ("s", "h", "y", "y_new", "K", "_Q")

    def __init__(self, s, h, y, y_new, K, fun):
        self.s, self.h, self.y, self.y_new, self.K = s, h, y, y_new, K
        self._Q = None

    def __call__(self, s):
        if self._Q is None:
            self._Q = self.K.T @ _P
        theta = (s - self.s) / self.h
        return self.y + self.h * (self._Q @ np.array([theta, theta**2, theta**3, theta**4]))


class _Dop853Step:
    """Accepted DOP853 step; the 7th-order interpolant costs three extra stages."""

    __slots__ = ("s", "h", "y", "y_new", "K", "_F", "_fun")

    def __init__(self, s, h, y, y_new, K, fun):
        self.s, self.h, self.y, self.y_new, self.K = s, h, y, y_new, K
        self._fun = fun
        self._F = None

    def _build(self):
        h, y = self.h, self.y
        K = np.empty((_D8.N_STAGES_EXTENDED, y.size))
        K[: _D8.N_STAGES + 1] = self.K
        for s in range(_D8.N_STAGES + 1, _D8.N_STAGES_EXTENDED):
            K[s] = self._fun(y + h * (_D8.A[s, :s] @ K[:s]))
        dy = self.y_new - y
        F = np.empty((_D8.INTERPOLATOR_POWER, y.size))
        F[0] = dy
        F[1] = h * K[0] - dy
        F[2] = 2 * dy - h * (self.K[-1] + K[0])
        F[3:] = h * (_D8.D @ K)
        self._F = F

    def __call__(self, s):
        if self._F is None:
            self._build()
        x = (s - self.s) / self.h
        y = np.zeros_like(self.y)
        for i, f in enumerate(self._F[::-1]):
            y += f
            y *= x if i % 2 == 0 else 1.0 - x
        return y + self.y


def _rms(v):
    m = float(np.max(np.abs(v)))
    if m == 0.0 or not math.isfinite(m):
        return m
    v = v / m
    return m * math.sqrt(float(np.dot(v, v)) / v.size)


def _initial_step(fun, y, f0, order, s_end, cfg):
    """Starting step size (Hairer, Norsett & Wanner, II.4).

    Components that are exactly zero borrow the magnitude of the whole state,
    so pure relative control does not force a vanishing first step.
    """
    mag = np.abs(y)
    mag = np.where(mag > 0, mag, mag.max())
    scale = cfg.abs_tol + mag * cfg.rel_tol
    d0, d1 = _rms(y / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, s_end)
    f1 = fun(y + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1, cfg.max_step)


def _dp5_attempt(fun, y, h, K, cfg):
    for i, a in enumerate(_A, start=1):
        K[i] = fun(y + h * (a @ K[:i]))
    y_new = y + h * (_B @ K[:6])
    K[6] = fun(y_new)
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    return y_new, _rms(h * (_E @ K) / scale)


def _dop853_attempt(fun, y, h, K, cfg):
    A = _D8.A
    for s in range(1, _D8.N_STAGES):
        K[s] = fun(y + h * (A[s, :s] @ K[:s]))
    y_new = y + h * (_D8.B @ K[: _D8.N_STAGES])
    K[_D8.N_STAGES] = fun(y_new)
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    err5 = (_D8.E5 @ K) / scale
    err3 = (_D8.E3 @ K) / scale
    m = float(max(np.max(np.abs(err5)), np.max(np.abs(err3))))
    if m == 0.0 or not math.isfinite(m):
        return y_new, m
    err5, err3 = err5 / m, err3 / m
    e5, e3 = float(err5 @ err5), float(err3 @ err3)
    return y_new, m * abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * y.size)


# method -> (stages incl. FSAL row, error exponent order, attempt, step class)
_METHODS = {
    "DP5": (7, 4, _dp5_attempt, _Dp5Step),
    "DOP853": (_D8.N_STAGES + 1, 7, _dop853_attempt, _Dop853Step),
}


def _steps(fun, y0, s_end, cfg):
    """Generate accepted steps from ``s = 0`` up to ``s_end``.

    ``fun`` is the (possibly sign-flipped) right-hand side. The generator's
    ``send`` accepts a cap on the next step size.
    """
    n_rows, err_order, attempt, step_cls = _METHODS[cfg.method]
    exponent = -1.0 / (err_order + 1)
    y = np.array(y0, dtype=float)
    K = np.empty((n_rows, y.size))
    K[0] = fun(y)
    h = _initial_step(fun, y, K[0], err_order, s_end, cfg)

    s = 0.0
    n_steps = 0
    while s < s_end:
        if n_steps >= cfg.max_steps:
            raise StepLimitExceeded(f"more than {cfg.max_steps} steps")
        h = min(h, cfg.max_step)
        last = h >= s_end - s
        if last:
            h = s_end - s
        elif h <= 10 * _EPS * abs(s) or h < 1e-300:
            raise StepSizeUnderflow(f"step size {h:.3e} underflow at s = {s:.6g}")
        y_new, err = attempt(fun, y, h, K, cfg)
        if not math.isfinite(err):
            h *= 0.2
            continue
        if err > 1.0:
            h *= max(0.2, 0.9 * err**exponent)
            continue

        n_steps += 1
        s_new = s_end if last else s + h
        step = step_cls(s, s_new - s, y, y_new, K.copy(), fun)
        factor = 10.0 if err == 0.0 else min(10.0, 0.9 * err**exponent)
        cap = yield step
        h *= factor
        if cap is not None:
            h = min(h, cap)
        s, y = s_new, y_new
        K[0] = K[-1]


class DenseSolution:
    """Piecewise-polynomial trajectory returned by :func:`integrate`.

    Evaluating at ``t`` outside ``[min(t0, t1), max(t0, t1)]`` raises.
    """

    def __init__(self, t0, direction, steps, y0):
        self.t0 = float(t0)
        self.direction = direction
        self._steps = steps
        self._s_knots = [st.s for st in steps]
        self.y0 = np.array(y0, dtype=float)

    @property
    def t_final(self):
        if not self._steps:
            return self.t0
        last = self._steps[-1]
        return self.t0 + self.direction * (last.s + last.h)

    @property
    def y_final(self):
        return self._steps[-1].y_new if self._steps else self.y0

    @property
    def t_knots(self):
        s = self._s_knots + [self._steps[-1].s + self._steps[-1].h] if self._steps else [0.0]
        return self.t0 + self.direction * np.array(s)

    @property
    def y_knots(self):
        if not self._steps:
            return self.y0[None, :]
        return np.array([st.y for st in self._steps] + [self._steps[-1].y_new])

    @property
    def n_steps(self):
        return len(self._steps)

    def __call__(self, t):
        s = self.direction * (float(t) - self.t0)
        if not self._steps:
            if s == 0.0:
                return self.y0.copy()
            raise ValueError("time outside the integrated interval")
        end = self._steps[-1].s + self._steps[-1].h
        tol = 1e-12 * (1.0 + end)
        if s < -tol or s > end + tol:
            raise ValueError(f"time {t} outside the integrated interval")
        k = max(0, min(bisect_right(self._s_knots, s) - 1, len(self._steps) - 1))
        return self._steps[k](min(max(s, 0.0), end))


def _signed_rhs(field, direction):
    rhs = field.rhs
    if direction > 0:
        return lambda y: np.asarray(rhs(y), dtype=float)
    return lambda y: -np.asarray(rhs(y), dtype=float)


def integrate(field, x0, t0, t1, config=None, guard=None):
    """Integrate ``x' = f(x)``, ``x(t0) = x0`` up to ``t1`` (either order).

    ``guard(x) -> bool`` may veto states; a False raises :class:`LeftDomain`.
    """
    config = config or IntegratorConfig()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    span = float(t1) - float(t0)
    direction = 1 if span >= 0 else -1
    steps = []
    if span != 0.0:
        fun = _signed_rhs(field, direction)
        for step in _steps(fun, x0, abs(span), config):
            if guard is not None and not guard(step.y_new):
                raise LeftDomain(f"trajectory left the domain near t = {t0 + direction * step.s:.6g}")
            steps.append(step)
    return DenseSolution(t0, direction, steps, x0)


def flow(field, x0, t, config=None, guard=None):
    """Final state ``Phi^t(x0)`` without keeping the dense trajectory."""
    config = config or IntegratorConfig()
    y = np.asarray(x0, dtype=float).reshape(-1)
    t = float(t)
    if t == 0.0:
        return y.copy()
    direction = 1 if t > 0 else -1
    for step in _steps(_signed_rhs(field, direction), y, abs(t), config):
        y = step.y_new
        if guard is not None and not guard(y):
            raise LeftDomain(f"trajectory left the domain near t = {direction * step.s:.6g}")
        if not np.all(np.isfinite(y)):
            raise LeftDomain("trajectory diverged")
    return y


def flow_to_level(field, value, level, x0, config=None):
    """Signed time at which the trajectory through ``x0`` reaches ``value == level``.

    Integrates forward when ``value(x0) > level`` and backward otherwise, so
    the returned ``t_hit`` is negative for starting points below the level.
    The crossing is located by Brent's method on the step interpolant.
    """
    config = config or IntegratorConfig()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    level = float(level)
    tol = 1e-12 * (1.0 + abs(level))
    g0 = value(x0) - level
    if abs(g0) <= tol:
        return EventResult(0.0, x0.copy(), abs(g0), 0.0)
    direction = 1 if g0 > 0 else -1
    sign0 = 1.0 if g0 > 0 else -1.0
    gap0 = abs(g0)
    lo_band, hi_band = 0.5 * level, 2.0 * level

    gen = _steps(_signed_rhs(field, direction), x0, config.t_max, config)
    g_old = g0
    cap = None
    try:
        while True:
            try:
                step = gen.send(cap)
            except StopIteration:
                break
            y_new = step.y_new
            if not np.all(np.isfinite(y_new)):
                break
            try:
                g_new = value(y_new) - level
            except EvalDomainError:
                break
            if g_new * sign0 <= 0.0:
                return _locate(step, value, level, g_old, g_new, direction)
            # Guard against skipping a double crossing inside one step.
            cap = None
            v = g_new + level
            if not (lo_band <= v <= hi_band) and abs(g_new - g_old) > 0.2 * gap0:
                cap = 0.9 * step.h * 0.2 * gap0 / abs(g_new - g_old)
            g_old = g_new
    finally:
        gen.close()
    raise NoCrossing(
        f"no crossing of level {level:.6g} within |t| <= {config.t_max:g}; the start may lie "
        "outside the basin, or t_max is too small for a slowly converging (nonhyperbolic) system"
    )


def _locate(step, value, level, g_lo, g_hi, direction):
    def g(s):
        return value(step(s)) - level

    s_hi = step.s + step.h
    res = brent(g, step.s, s_hi, fa=g_lo, fb=g_hi, xtol=1e-15)
    s_hit = res.root
    x_hit = step(s_hit) if s_hit != s_hi else step.y_new.copy()
    return EventResult(direction * s_hit, x_hit, abs(value(x_hit) - level), res.bracket_width)
