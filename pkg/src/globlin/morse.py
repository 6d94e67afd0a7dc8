"""Generalized Morse normal form ``T`` with ``V(T^{-1}(y)) = gamma(|y|)``.

``T`` straightens a strict Lyapunov function with a single critical point
into a radially symmetric well. The angular part comes from following the
gradient flow ``x' = -grad V(x)`` to the level set ``V = c`` and projecting
radially; the radial part is ``gamma^{-1}(V(x))``.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .conjugacy import SNAP, SphereChart, sphere_directions
from .exceptions import (
    GloblinError,
    GradientVanishes,
    NoCrossing,
    NotStarShaped,
    TimeCapExceeded,
)
from .lyapunov import DomainBox, choose_level
from .ode import IntegratorConfig, VectorField, flow_to_level

__all__ = [
    "GammaSpec",
    "MorseNormalForm",
    "NormalFormReport",
    "annulus_grid",
    "morse_forward",
    "morse_inverse",
    "verify_normal_form",
]


@dataclass(frozen=True)
class GammaSpec:
    """A class-K-infinity profile ``gamma`` with its inverse.

    The default is ``gamma(s) = s^2 / 2``.
    """

    forward: object = None
    inverse: object = None
    note: str = ""

    def __post_init__(self):
        if (self.forward is None) != (self.inverse is None):
            raise ValueError("give both gamma and its inverse, or neither")
        if self.forward is None:
            object.__setattr__(self, "forward", lambda s: 0.5 * s * s)
            object.__setattr__(self, "inverse", lambda r: math.sqrt(2.0 * r))
            object.__setattr__(self, "note", self.note or "s^2/2, smooth")

    def __call__(self, s):
        return float(self.forward(float(s)))

    def inv(self, r):
        return float(self.inverse(float(r)))

    def check(self, grid=None, big=(1e2, 1e4, 1e6)):
        """Verify ``gamma(0) = 0``, monotonicity, inverse consistency and growth.

        Returns a list of problems (empty when all checks pass).
        """
        grid = np.linspace(0.0, 10.0, 1001) if grid is None else np.asarray(grid, dtype=float)
        problems = []
        if self(0.0) != 0.0:
            problems.append(f"gamma(0) = {self(0.0)!r}")
        vals = np.array([self(s) for s in grid])
        if np.any(np.diff(vals) <= 0):
            problems.append("gamma is not strictly increasing on the grid")
        for r in vals[1:]:
            if abs(self(self.inv(r)) - r) > 1e-12 * r:
                problems.append(f"gamma(gamma^-1({r!r})) != {r!r}")
                break
        growth = [self(s) for s in big]
        if not all(b > a for a, b in zip(growth, growth[1:])) or growth[-1] < vals[-1] * 10:
            problems.append("gamma does not grow without bound on large arguments")
        return problems


def _gradient_field(lyap):
    center = lyap.center
    radius = SNAP * (1.0 + float(np.linalg.norm(center)))

    def rhs(x):
        g = lyap.gradient(x)
        if not np.any(g) and np.linalg.norm(np.asarray(x) - center) > radius:
            raise GradientVanishes(f"grad V vanishes at {np.asarray(x).tolist()}, away from the minimum")
        return -g

    return VectorField(rhs, center, name="-grad V")


class MorseNormalForm(TransformerMixin, BaseEstimator):
    """Homeomorphism ``T`` with ``T(x*) = 0`` and ``V(T^{-1}(y)) = gamma(|y|)``.

    Parameters
    ----------
    lyapunov : LyapunovFunction
        ``V``; its only critical point must be its centre.
    gamma : GammaSpec, optional
        Radial profile, ``s^2/2`` by default.
    level : float or "auto", optional
        Level of the chart ``V = c``; the Lyapunov function's own level,
        else half the minimum of ``V`` on the box boundary.
    box : DomainBox or sequence of (lo, hi)
    integrator : IntegratorConfig, optional
        Settings for the gradient flow.
    check : bool
        Run the star-shape check during ``fit``.
    n_directions : int, optional
    """

    def __init__(self, lyapunov=None, gamma=None, level=None, box=None, integrator=None,
                 check=True, n_directions=None):
        self.lyapunov = lyapunov
        self.gamma = gamma
        self.level = level
        self.box = box
        self.integrator = integrator
        self.check = check
        self.n_directions = n_directions

    def fit(self, X=None, y=None):
        if self.lyapunov is None or self.box is None:
            raise ValueError("a Lyapunov function and a box are required")
        box = self.box if isinstance(self.box, DomainBox) else DomainBox.from_bounds(self.box)
        lyap = self.lyapunov
        level = self.level if self.level is not None else lyap.level
        if level is None or (isinstance(level, str) and level == "auto"):
            level = choose_level(lyap, box)
        self.level_ = float(level)
        self.lyapunov_ = lyap.with_level(self.level_)
        self.gamma_ = self.gamma or GammaSpec()
        self.box_ = box
        self.chart_ = SphereChart(self.lyapunov_, box)
        if self.check:
            report = self.chart_.check(self.n_directions or max(64, 8 * box.dimension))
            self.star_report_ = report
            if not report.passed:
                raise NotStarShaped(
                    f"level set V = {self.level_:g} is not star-shaped about the minimum "
                    f"({len(report.failures)} of {report.num_directions} rays fail)", report)
        self.gradient_field_ = _gradient_field(self.lyapunov_)
        self.integrator_ = self.integrator or IntegratorConfig()
        self.n_features_in_ = box.dimension
        return self

    def _near_center(self, x):
        center = self.lyapunov_.center
        return np.linalg.norm(x - center) <= SNAP * (1.0 + float(np.linalg.norm(center)))

    def evaluate(self, x):
        """``(T(x), t, rho)``: ``t`` is the signed gradient-flow time to ``V = c``.

        ``t`` and ``rho`` are None at the minimum.
        """
        check_is_fitted(self, "chart_")
        x = np.asarray(x, dtype=float).reshape(-1)
        if self._near_center(x):
            return np.zeros_like(x), None, None
        if not np.any(self.lyapunov_.gradient(x)):
            raise GradientVanishes(f"grad V vanishes at {x.tolist()}, away from the minimum")
        ev = flow_to_level(self.gradient_field_, self.lyapunov_, self.level_, x, self.integrator_)
        r = self.gamma_.inv(self.lyapunov_(x))
        return r * self.chart_.forward(ev.x_hit), ev.t_hit, ev.x_hit

    def forward(self, x):
        """``T(x)``."""
        return self.evaluate(x)[0]

    def inverse(self, y):
        """``T^{-1}(y)``: follow the gradient flow from the chart to ``V = gamma(|y|)``."""
        check_is_fitted(self, "chart_")
        y = np.asarray(y, dtype=float).reshape(-1)
        r = float(np.linalg.norm(y))
        if r == 0.0:
            return self.lyapunov_.center.copy()
        ell = self.chart_.inverse(y / r)
        v = self.gamma_(r)
        try:
            ev = flow_to_level(self.gradient_field_, self.lyapunov_, v, ell, self.integrator_)
        except NoCrossing as exc:
            raise TimeCapExceeded(f"V = {v:g} not reached along the gradient flow: {exc}") from exc
        return ev.x_hit

    def transform(self, X):
        check_is_fitted(self, "chart_")
        X = check_array(X)
        return np.array([self.forward(x) for x in X])

    def inverse_transform(self, X):
        check_is_fitted(self, "chart_")
        X = check_array(X)
        return np.array([self.inverse(y) for y in X])


def morse_forward(gm, x):
    return gm.forward(x)


def morse_inverse(gm, y):
    return gm.inverse(y)


@dataclass
class NormalFormReport:
    samples: int
    radii: list
    max_defect: float
    max_roundtrip: float
    max_norm_defect: float
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures

    def to_dict(self):
        return {
            "samples": self.samples,
            "radii": list(self.radii),
            "max_defect": self.max_defect,
            "max_roundtrip": self.max_roundtrip,
            "max_norm_defect": self.max_norm_defect,
            "failures": self.failures,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def annulus_grid(gm, n_radii=8, n_directions=None, inner=0.05, outer=0.9):
    """Points ``y`` on spheres between ``gamma^{-1}(inner*c)`` and ``gamma^{-1}(outer*m)``.

    ``m`` is the minimum of ``V`` on the box boundary, so every preimage
    stays inside the box. Returns ``(radii, points)``.
    """
    check_is_fitted(gm, "chart_")
    n = gm.n_features_in_
    boundary_min = min(gm.lyapunov_(p) for p in gm.box_.boundary_samples())
    r_lo = gm.gamma_.inv(inner * gm.level_)
    r_hi = gm.gamma_.inv(outer * boundary_min)
    radii = np.linspace(r_lo, r_hi, n_radii)
    if n_directions is None:
        n_directions = {1: 2, 2: 16, 3: 32}.get(n, 8 * n)
    dirs = sphere_directions(n, n_directions)
    pts = np.array([r * u for r in radii for u in dirs])
    return radii, pts


def verify_normal_form(gm, n_radii=8, n_directions=None):
    """Check ``|V(T^{-1}(y)) - gamma(|y|)|`` and ``|T(T^{-1}(y)) - y|`` on an annulus grid.

    Also records the relative norm defect ``|gamma(|T(x)|) - V(x)| / V(x)``
    at the preimages.
    """
    radii, pts = annulus_grid(gm, n_radii, n_directions)
    defects, trips, norms, failures = [], [], [], []
    for y in pts:
        try:
            x = gm.inverse(y)
            target = gm.gamma_(np.linalg.norm(y))
            v = gm.lyapunov_(x)
            defects.append(abs(v - target))
            back = gm.forward(x)
            trips.append(float(np.linalg.norm(back - y)))
            norms.append(abs(gm.gamma_(np.linalg.norm(back)) - v) / v)
        except GloblinError as exc:
            failures.append({"y": y.tolist(), "error": exc.name, "detail": str(exc)})
    return NormalFormReport(
        samples=len(pts),
        radii=[float(r) for r in radii],
        max_defect=float(max(defects, default=0.0)),
        max_roundtrip=float(max(trips, default=0.0)),
        max_norm_defect=float(max(norms, default=0.0)),
        failures=failures,
    )
