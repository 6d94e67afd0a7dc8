"""Strict Lyapunov functions, their validation on a box, and level selection."""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .exceptions import DegenerateLevel, NotHurwitzError, SingularSystem, ValidationFailed
from .linalg import solve_lyapunov

__all__ = [
    "DomainBox",
    "LyapunovFunction",
    "ValidationReport",
    "choose_level",
    "quadratic_lyapunov_from_jacobian",
    "validate",
]


class DomainBox:
    """Axis-aligned box standing in for (a piece of) the basin of attraction.

    Parameters
    ----------
    lower, upper : array_like
        Per-axis bounds; ``lower < upper`` componentwise.
    samples : int
        Default number of validation samples.
    """

    def __init__(self, lower, upper, samples=1024):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float)).copy()
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float)).copy()
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be 1-D and of equal length")
        if not np.all(self.lower < self.upper):
            raise ValueError("box must have nonempty interior")
        self.samples = int(samples)

    @classmethod
    def from_bounds(cls, bounds, samples=1024):
        """Build from ``[(lo1, hi1), (lo2, hi2), ...]``."""
        bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
        return cls(bounds[:, 0], bounds[:, 1], samples)

    @property
    def dimension(self):
        return self.lower.size

    @property
    def half_widths(self):
        return 0.5 * (self.upper - self.lower)

    def contains(self, x, strict=False):
        x = np.asarray(x, dtype=float)
        if strict:
            return bool(np.all(x > self.lower) and np.all(x < self.upper))
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def sample(self, count, seed=0, center=None, exclude_radius=0.0):
        """Scrambled Halton points in the box, optionally avoiding a ball."""
        sampler = qmc.Halton(d=self.dimension, scramble=True, seed=seed)
        out = []
        while len(out) < count:
            pts = qmc.scale(sampler.random(max(64, 2 * (count - len(out)))), self.lower, self.upper)
            if center is not None and exclude_radius > 0:
                keep = np.linalg.norm(pts - np.asarray(center), axis=1) >= exclude_radius
                pts = pts[keep]
            out.extend(pts)
        return np.array(out[:count])

    def boundary_samples(self, per_face=None):
        """Grid points on every face of the box (face centers included)."""
        n = self.dimension
        if n == 1:
            return np.array([[self.lower[0]], [self.upper[0]]])
        if per_face is None:
            per_face = max(3, int(round(4096 ** (1.0 / (n - 1)))))
        per_face += 1 - per_face % 2  # odd, so face centers are on the grid
        axes = [np.linspace(lo, hi, per_face) for lo, hi in zip(self.lower, self.upper)]
        faces = []
        for k in range(n):
            others = [axes[j] for j in range(n) if j != k]
            grid = np.array(list(itertools.product(*others)))
            for bound in (self.lower[k], self.upper[k]):
                pts = np.insert(grid, k, bound, axis=1)
                faces.append(pts)
        return np.vstack(faces)

    def distance_along(self, origin, u):
        """Largest ``s`` with ``origin + s*u`` still in the box."""
        origin = np.asarray(origin, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):  # inf is the right answer for tiny u_i
            hi = np.where(u > 0, (self.upper - origin) / u, np.inf)
            lo = np.where(u < 0, (self.lower - origin) / u, np.inf)
        return float(min(hi.min(), lo.min()))

    def to_dict(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def __repr__(self):
        return f"DomainBox({self.lower.tolist()}, {self.upper.tolist()})"


class LyapunovFunction:
    """A candidate strict Lyapunov function ``V`` centred at the equilibrium.

    ``gradient`` falls back to central differences with step
    ``1e-6 * (1 + |x|)`` when not supplied. ``level`` is the value ``c``
    defining the level set ``V = c``; it may be left unset and chosen later.
    """

    def __init__(self, value, center, gradient=None, level=None, name="", matrix=None):
        self.value = value
        self.center = np.atleast_1d(np.asarray(center, dtype=float)).copy()
        self._gradient = gradient
        self.level = None if level is None else float(level)
        if self.level is not None and not self.level > 0:
            raise ValueError("level must be positive")
        self.name = name
        self.matrix = matrix

    def __call__(self, x):
        return float(self.value(x))

    @property
    def has_gradient(self):
        return self._gradient is not None

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self._gradient is not None:
            return np.asarray(self._gradient(x), dtype=float).reshape(-1)
        step = 1e-6 * (1.0 + np.linalg.norm(x))
        g = np.empty(x.size)
        for j in range(x.size):
            e = np.zeros(x.size)
            e[j] = step
            g[j] = (self(x + e) - self(x - e)) / (2.0 * step)
        return g

    def with_level(self, level):
        return LyapunovFunction(self.value, self.center, self._gradient, level, self.name, self.matrix)

    def __repr__(self):
        return f"LyapunovFunction({self.name or 'V'}, level={self.level})"


def quadratic_lyapunov_from_jacobian(field, Q=None):
    """Quadratic ``V(x) = (x - x*)^T P (x - x*)`` with ``J^T P + P J = -Q``.

    ``J`` is the Jacobian of ``field`` at its equilibrium. Raises
    :class:`NotHurwitzError` when ``J`` is not Hurwitz (nonhyperbolic or
    unstable linearization); a Lyapunov function must then be supplied.
    """
    J = field.jacobian_at()
    Q = np.eye(J.shape[0]) if Q is None else np.asarray(Q, dtype=float)
    try:
        P = solve_lyapunov(J, Q)
    except SingularSystem as exc:
        raise NotHurwitzError(f"Jacobian at the equilibrium is not Hurwitz ({exc})") from exc
    center = field.equilibrium.copy()

    def value(x):
        d = np.asarray(x, dtype=float) - center
        return float(d @ P @ d)

    def gradient(x):
        return 2.0 * P @ (np.asarray(x, dtype=float) - center)

    return LyapunovFunction(value, center, gradient, name="quadratic", matrix=P)


@dataclass
class ValidationReport:
    passed: bool
    worst_positive_margin: float
    worst_decrease_margin: float
    violations: list = field(default_factory=list)
    samples: int = 0
    seed: int = 0
    value_at_equilibrium: float = 0.0
    box: dict = None  # the region the certificate covers; nothing is claimed outside it

    def to_dict(self):
        return {
            "passed": self.passed,
            "worst_positive_margin": self.worst_positive_margin,
            "worst_decrease_margin": self.worst_decrease_margin,
            "violations": [list(map(float, v)) for v in self.violations],
            "samples": self.samples,
            "seed": self.seed,
            "value_at_equilibrium": self.value_at_equilibrium,
            "box": self.box,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def validate(lyapunov, field, box, samples=None, seed=0, exclude_radius=None,
             extra_points=None, raise_on_failure=True):
    """Spot-check that ``V > 0`` and ``<grad V, f> < 0`` on quasi-random box samples.

    Samples within ``exclude_radius`` (default 1% of the smallest box
    half-width) of the equilibrium are skipped. Raises
    :class:`ValidationFailed` with the report attached unless
    ``raise_on_failure`` is False.
    """
    center = lyapunov.center
    samples = max(1000, box.samples if samples is None else int(samples))
    if exclude_radius is None:
        exclude_radius = 0.01 * float(box.half_widths.min())
    pts = box.sample(samples, seed=seed, center=center, exclude_radius=exclude_radius)
    if extra_points is not None:
        extra = np.atleast_2d(np.asarray(extra_points, dtype=float))
        extra = extra[np.linalg.norm(extra - center, axis=1) >= exclude_radius]
        pts = np.vstack([pts, extra])

    v0 = lyapunov(center)
    worst_pos, worst_dec = np.inf, -np.inf
    violations = []
    for x in pts:
        v = lyapunov(x)
        dv = float(lyapunov.gradient(x) @ field(x))
        worst_pos = min(worst_pos, v)
        worst_dec = max(worst_dec, dv)
        if not (v > 0.0 and dv < 0.0):
            violations.append(x)
    passed = not violations and abs(v0) <= 1e-12
    report = ValidationReport(passed, float(worst_pos), float(worst_dec), violations,
                              len(pts), seed, float(v0), box.to_dict())
    if not passed and raise_on_failure:
        where = f" e.g. at {violations[0].tolist()}" if violations else f"; V(x*) = {v0:.3e}"
        raise ValidationFailed(f"{len(violations)} of {len(pts)} samples violate strictness{where}", report)
    return report


def choose_level(lyapunov, box):
    """Half the minimum of ``V`` over the box boundary.

    The sublevel set ``{V <= c}`` then stays away from every boundary sample,
    so it is closed in the box.
    """
    if not box.contains(lyapunov.center, strict=True):
        raise DegenerateLevel("the box does not contain the equilibrium in its interior")
    values = np.array([lyapunov(p) for p in box.boundary_samples()])
    c = 0.5 * float(values.min())
    if not (c > 0 and np.isfinite(c)):
        raise DegenerateLevel(f"no positive level found (boundary minimum {2 * c:.3e})")
    return c
