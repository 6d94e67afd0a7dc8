"""Global linearization of a flow near an asymptotically stable equilibrium.

For a strict Lyapunov function ``V`` and a level ``c`` every nonequilibrium
trajectory in the basin crosses ``L = {V = c}`` exactly once. Writing
``tau(x)`` for the signed time at which the trajectory through ``x`` hits
``L`` and ``rho(x)`` for the hitting point, the map

    h(x) = exp(tau(x)) * P(rho(x)),    h(x*) = 0,

conjugates the flow to ``y' = -y``: ``h(Phi^t(x)) = exp(-t) h(x)``. Here
``P`` is the radial projection of ``L`` onto the unit sphere, which needs
``L`` to be star-shaped about ``x*``.

A general Hurwitz target ``A`` is reached by composing with the inverse of
the same construction applied to ``y' = A y``, whose level set is an
ellipsoid and whose chart inverse has a closed form.
"""

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    AtEquilibrium,
    GloblinError,
    LeftDomain,
    MultipleCrossings,
    NoCrossing,
    NoRayCrossing,
    NotOnLevelSet,
    NotStarShaped,
    OutOfDomain,
    TimeCapExceeded,
)
from .linalg import expm, require_hurwitz
from .lyapunov import DomainBox, choose_level, quadratic_lyapunov_from_jacobian, validate
from .ode import IntegratorConfig, flow, flow_to_level
from .rootfind import brent

__all__ = [
    "ConjugacyReport",
    "GlobalLinearizer",
    "HurwitzTarget",
    "SphereChart",
    "StarShapeReport",
    "check_star_shaped",
    "delinearize",
    "linearize",
    "restrict_to_sublevel",
    "retarget",
    "sphere_forward",
    "sphere_inverse",
    "tau_rho",
    "verify_conjugacy",
    "verify_conjugacy_targets",
]

SNAP = 1e-13
LEVEL_TOL = 1e-11


def _norm(v):
    """Euclidean norm that neither underflows nor overflows (images of ``h`` can be tiny)."""
    v = np.asarray(v, dtype=float)
    m = float(np.max(np.abs(v), initial=0.0))
    if m == 0.0 or not math.isfinite(m):
        return m
    return m * float(np.sqrt(np.sum((v / m) ** 2)))


def _snap_radius(center):
    return SNAP * (1.0 + float(np.linalg.norm(center)))


def sphere_directions(n, count):
    """Deterministic, roughly uniform unit vectors in ``R^n``."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if n == 3:
        # Fibonacci lattice.
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + 5**0.5) * k
        r = np.sqrt(1 - z**2)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    from scipy.stats import norm, qmc
    g = norm.ppf(qmc.Halton(d=n, scramble=True, seed=0).random(count))
    g = np.vstack([g, np.eye(n), -np.eye(n)])
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass
class StarShapeReport:
    passed: bool
    num_directions: int
    counts: list
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {
            "passed": self.passed,
            "num_directions": self.num_directions,
            "counts": list(self.counts),
            "failures": [{"direction": list(map(float, u)), "count": int(c)} for u, c in self.failures],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


class SphereChart:
    """Radial chart between the level set ``V = c`` and the unit sphere.

    Parameters
    ----------
    lyapunov : LyapunovFunction
        Must carry its level ``c``.
    box : DomainBox, optional
        Bounds the ray search; without it rays are searched out to ``s_max``.
    growth : float
        Geometric bracket expansion factor for the ray search.
    """

    def __init__(self, lyapunov, box=None, growth=2.0, s_max=1e6):
        if lyapunov.level is None:
            raise ValueError("the Lyapunov function needs a level")
        self.lyapunov = lyapunov
        self.center = lyapunov.center
        self.level = lyapunov.level
        self.box = box
        self.growth = float(growth)
        self.s_max = float(s_max)
        self.certificate = None

    def ray_bound(self, u):
        if self.box is None:
            return self.s_max
        return self.box.distance_along(self.center, u)

    def forward(self, ell):
        ell = np.asarray(ell, dtype=float)
        if abs(self.lyapunov(ell) - self.level) > LEVEL_TOL * (1.0 + self.level):
            raise NotOnLevelSet(f"V(l) = {self.lyapunov(ell)!r} differs from level {self.level!r}")
        d = ell - self.center
        r = np.linalg.norm(d)
        if r == 0.0:
            raise NotOnLevelSet("the equilibrium is not on the level set")
        return d / r

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ValueError("u must be a unit vector")
        V, c, x0 = self.lyapunov, self.level, self.center

        def g(s):
            return V(x0 + s * u) - c

        bound = self.ray_bound(u)
        s = bound / 64.0
        gs = g(s)
        if gs > 0:
            for _ in range(200):
                lo = s / 4.0
                glo = g(lo)
                if glo < 0:
                    break
                s, gs = lo, glo
            else:
                raise NoRayCrossing("level set not reached from inside along the ray")
        else:
            lo, glo = s, gs
            while gs <= 0:
                lo, glo = s, gs
                s *= self.growth
                if s > 4.0 * bound:
                    raise NoRayCrossing(f"no crossing of V = {c:g} within distance {4 * bound:g}")
                gs = g(s)
        hi, ghi = s, gs
        for k in range(1, 9):
            probe = hi * (1.0 + k / 8.0)
            if probe > bound:
                break
            if g(probe) < 0:
                raise MultipleCrossings(f"ray in direction {u.tolist()} re-enters the sublevel set")
        res = brent(g, lo, hi, fa=glo, fb=ghi)
        return x0 + res.root * u

    def check(self, num_directions=None, resolution=2048):
        """Count sign changes of ``V(x* + s u) - c`` along rays up to the box."""
        n = self.center.size
        num_directions = 64 if num_directions is None else int(num_directions)
        if num_directions < 2 * n:
            raise ValueError("num_directions must be at least 2n")
        dirs = sphere_directions(n, num_directions)
        counts, failures = [], []
        for u in dirs:
            bound = self.ray_bound(u)
            s = bound * np.arange(1, resolution + 1) / resolution
            vals = np.array([self.lyapunov(self.center + si * u) for si in s]) - self.level
            # V = c counts as reached, so a level set touching the box still passes
            seq = np.where(np.concatenate([[-1.0], vals]) >= 0, 1.0, -1.0)
            count = int(np.count_nonzero(np.diff(seq)))
            counts.append(count)
            if count != 1:
                failures.append((u, count))
        report = StarShapeReport(not failures, len(dirs), counts, failures)
        self.certificate = report
        return report


class HurwitzTarget:
    """Target matrix ``A`` together with its linear conjugacy to ``z' = -z``.

    The linear flow ``e^{At}`` crosses the ellipsoid ``y^T Pn y = 1`` once per
    trajectory, where ``Pn`` solves ``A^T P + P A = -I`` rescaled to unit
    determinant (so ``A = -a I`` gives the unit sphere).
    """

    def __init__(self, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self.certificate = require_hurwitz(A)
        self.A = A
        n = A.shape[0]
        self.is_minus_identity = bool(np.array_equal(A, -np.eye(n)))
        L = self.certificate.factor
        det_root = float(np.prod(np.diag(L)) ** (2.0 / n))
        self.ellipsoid = self.certificate.matrix / det_root

    @classmethod
    def coerce(cls, target, n):
        if isinstance(target, HurwitzTarget):
            return target
        if target is None or (isinstance(target, str) and target == "minus_identity"):
            return cls(0.0 - np.eye(n))
        return cls(target)

    @property
    def dimension(self):
        return self.A.shape[0]

    def propagator(self, t):
        if self.is_minus_identity:
            return math.exp(-t) * np.eye(self.dimension)
        return expm(self.A, t)

    def _q(self, y, t):
        w = expm(self.A, t) @ y
        return float(w @ self.ellipsoid @ w) - 1.0

    def to_standard(self, y):
        """Linear conjugacy ``y' = A y  ->  z' = -z``."""
        y = np.asarray(y, dtype=float)
        if self.is_minus_identity:
            return y.copy()
        m = float(np.max(np.abs(y), initial=0.0))
        if m == 0.0:
            return np.zeros_like(y)
        ys = y / m
        t0 = math.log(m) + 0.5 * math.log(float(ys @ self.ellipsoid @ ys))
        width = 1.0
        lo, hi = t0 - width, t0 + width
        qlo, qhi = self._q(y, lo), self._q(y, hi)
        while qlo < 0:
            width *= 2.0
            lo = t0 - width
            qlo = self._q(y, lo)
        while qhi > 0:
            width *= 2.0
            hi = t0 + width
            qhi = self._q(y, hi)
        tau = brent(lambda t: self._q(y, t), lo, hi, fa=qlo, fb=qhi).root
        ell = expm(self.A, tau) @ y
        return math.exp(tau) * ell / _norm(ell)

    def from_standard(self, z):
        """Inverse of :meth:`to_standard`, in closed form."""
        z = np.asarray(z, dtype=float)
        if self.is_minus_identity:
            return z.copy()
        r = _norm(z)
        if r == 0.0:
            return np.zeros_like(z)
        u = z / r
        ell = u / math.sqrt(float(u @ self.ellipsoid @ u))
        return expm(self.A, -math.log(r)) @ ell


class GlobalLinearizer(TransformerMixin, BaseEstimator):
    """Homeomorphism ``h`` conjugating a nonlinear flow to ``y' = A y``.

    ``transform`` evaluates ``h`` row by row and ``inverse_transform``
    evaluates ``h^{-1}``.

    Parameters
    ----------
    field : VectorField
        The system, with its asymptotically stable equilibrium.
    lyapunov : LyapunovFunction, optional
        Strict Lyapunov function. Defaults to the quadratic one built from
        the Jacobian at the equilibrium (hyperbolic case only).
    level : float or "auto", optional
        Level ``c`` of ``L = {V = c}``. Defaults to the Lyapunov function's
        own level, else ``"auto"`` (half the minimum of ``V`` on the box
        boundary).
    target : array_like, "minus_identity" or HurwitzTarget, optional
        Hurwitz matrix ``A`` of the linear model; ``-I`` by default.
    box : DomainBox or sequence of (lo, hi)
        Working domain used for validation, level choice and ray bounds.
    integrator : IntegratorConfig, optional
    domain_level : float, optional
        When set, evaluation is restricted to ``{V < domain_level}``.
    check : bool
        Run Lyapunov validation and the star-shape check during ``fit``.
    n_directions : int, optional
        Directions used by the star-shape check.
    random_state : int
        Seed of the validation sampler.
    """

    def __init__(self, field=None, lyapunov=None, level=None, target=None, box=None,
                 integrator=None, domain_level=None, check=True, n_directions=None,
                 random_state=0):
        self.field = field
        self.lyapunov = lyapunov
        self.level = level
        self.target = target
        self.box = box
        self.integrator = integrator
        self.domain_level = domain_level
        self.check = check
        self.n_directions = n_directions
        self.random_state = random_state

    # -- fitting ---------------------------------------------------------------

    def fit(self, X=None, y=None):
        """Validate ``V``, fix the level, build the sphere chart and the target.

        ``X`` (optional) adds extra points to the Lyapunov validation.
        """
        if self.field is None:
            raise ValueError("a vector field is required")
        if self.box is None:
            raise ValueError("a working-domain box is required")
        field_ = self.field
        n = field_.dimension
        box = self.box if isinstance(self.box, DomainBox) else DomainBox.from_bounds(self.box)
        if box.dimension != n:
            raise ValueError(f"box has dimension {box.dimension}, system has {n}")
        lyap = self.lyapunov if self.lyapunov is not None else quadratic_lyapunov_from_jacobian(field_)
        extra = None if X is None else check_array(X, ensure_min_samples=1)
        if self.check:
            self.validation_report_ = validate(lyap, field_, box, seed=self.random_state,
                                               extra_points=extra)
        level = self.level if self.level is not None else lyap.level
        if level is None or (isinstance(level, str) and level == "auto"):
            level = choose_level(lyap, box)
        self.level_ = float(level)
        self.lyapunov_ = lyap.with_level(self.level_)
        self.box_ = box
        self.chart_ = SphereChart(self.lyapunov_, box)
        if self.check:
            report = self.chart_.check(self.n_directions or max(64, 8 * n))
            self.star_report_ = report
            if not report.passed:
                raise NotStarShaped(
                    f"level set V = {self.level_:g} is not star-shaped about the equilibrium "
                    f"({len(report.failures)} of {report.num_directions} rays fail)", report)
        self.target_ = HurwitzTarget.coerce(self.target, n)
        if self.target_.dimension != n:
            raise ValueError("target matrix dimension does not match the system")
        self.integrator_ = self.integrator or IntegratorConfig()
        self.n_features_in_ = n
        return self

    # -- pointwise evaluation ----------------------------------------------------

    def _check_domain(self, x):
        if self.domain_level is not None and self.lyapunov_(x) >= self.domain_level:
            raise OutOfDomain(
                f"V(x) = {self.lyapunov_(x):.6g} is not below the restriction level {self.domain_level:g}")

    def tau_rho(self, x):
        """Signed crossing time ``tau(x)`` and crossing point ``rho(x)`` on ``L``."""
        check_is_fitted(self, "chart_")
        x = np.asarray(x, dtype=float).reshape(-1)
        center = self.lyapunov_.center
        if np.linalg.norm(x - center) <= _snap_radius(center):
            raise AtEquilibrium("tau is undefined at the equilibrium (it tends to -inf)")
        ev = flow_to_level(self.field, self.lyapunov_, self.level_, x, self.integrator_)
        return ev.t_hit, ev.x_hit

    def _standard(self, x):
        """``h`` for the target ``-I``, with tau and rho (None at the equilibrium)."""
        center = self.lyapunov_.center
        if np.linalg.norm(x - center) <= _snap_radius(center):
            return np.zeros_like(x), None, None
        tau, rho = self.tau_rho(x)
        return math.exp(tau) * self.chart_.forward(rho), tau, rho

    def evaluate(self, x):
        """``(h(x), tau(x), rho(x))``; tau and rho are None at the equilibrium."""
        check_is_fitted(self, "chart_")
        x = np.asarray(x, dtype=float).reshape(-1)
        self._check_domain(x)
        z, tau, rho = self._standard(x)
        return self.target_.from_standard(z), tau, rho

    def linearize(self, x):
        """``h(x)`` for a single state."""
        return self.evaluate(x)[0]

    def delinearize(self, y):
        """``h^{-1}(y)`` for a single point of the linear coordinates."""
        check_is_fitted(self, "chart_")
        y = np.asarray(y, dtype=float).reshape(-1)
        return self._unstandard(self.target_.to_standard(y))

    def _unstandard(self, z):
        """Inverse of ``h`` for the target ``-I``."""
        r = _norm(z)
        if r == 0.0:
            return self.lyapunov_.center.copy()
        t = -math.log(r)
        if abs(t) > self.integrator_.t_max:
            raise TimeCapExceeded(f"|log |z|| = {abs(t):.3g} exceeds t_max = {self.integrator_.t_max:g}")
        ell = self.chart_.inverse(z / r)
        x = flow(self.field, ell, t, self.integrator_)
        self._check_domain(x)
        return x

    def flow(self, x, t, guard=None):
        """The system flow ``Phi^t(x)``."""
        check_is_fitted(self, "chart_")
        return flow(self.field, x, t, self.integrator_, guard=guard)

    # -- array API ---------------------------------------------------------------

    def transform(self, X):
        check_is_fitted(self, "chart_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return np.array([self.linearize(x) for x in X])

    def inverse_transform(self, X):
        check_is_fitted(self, "chart_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return np.array([self.delinearize(y) for y in X])


# -- functional interface ----------------------------------------------------------


def tau_rho(lin, x):
    return lin.tau_rho(x)


def linearize(lin, x):
    return lin.linearize(x)


def delinearize(lin, y):
    return lin.delinearize(y)


def sphere_forward(chart, ell):
    return chart.forward(ell)


def sphere_inverse(chart, u):
    return chart.inverse(u)


def check_star_shaped(chart, num_directions):
    return chart.check(num_directions)


def retarget(lin, A):
    """Copy of a fitted map whose linear model is ``y' = A y``."""
    check_is_fitted(lin, "chart_")
    new = copy.copy(lin)
    new.target = A
    new.target_ = HurwitzTarget.coerce(A, lin.n_features_in_)
    return new


def restrict_to_sublevel(lin, c_local):
    """Copy of a fitted map restricted to the sublevel set ``{V < c_local}``."""
    check_is_fitted(lin, "chart_")
    if not 0 < c_local <= lin.level_:
        raise ValueError(f"c_local must lie in (0, {lin.level_:g}]")
    new = copy.copy(lin)
    new.domain_level = float(c_local)
    return new


@dataclass
class ConjugacyReport:
    samples: int
    seed: int
    times: list
    max_residual: float
    mean_residual: float
    max_roundtrip: float
    max_tau_defect: float
    max_rho_defect: float
    max_component_residual: list
    evaluated: int
    skipped: int
    failures: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def to_dict(self, diagnostics=False):
        out = {
            "samples": self.samples,
            "seed": self.seed,
            "times": list(self.times),
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "max_roundtrip": self.max_roundtrip,
            "max_tau_defect": self.max_tau_defect,
            "max_rho_defect": self.max_rho_defect,
            "max_component_residual": list(self.max_component_residual),
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "failures": self.failures,
        }
        if diagnostics:
            out["diagnostics"] = self.diagnostics
        return out

    def to_json(self, diagnostics=False):
        return json.dumps(self.to_dict(diagnostics), sort_keys=True)


def verify_conjugacy(lin, box=None, times=(-1.0, -0.25, 0.5, 2.0), samples=100, seed=0,
                     exclude_fraction=0.05, n_jobs=None):
    """Sampled witness of ``h(Phi^t(x)) = e^{At} h(x)``.

    Each sample evaluates both sides with independent integrations. Times for
    which the trajectory leaves ``box`` are skipped and counted; errors are
    recorded as failures. Samples closer to the equilibrium than
    ``exclude_fraction`` of the smallest box half-width are not drawn, since
    there ``tau`` runs into the time cap for nonhyperbolic systems.
    """
    check_is_fitted(lin, "chart_")
    return verify_conjugacy_targets(lin, [lin.target_], box, times, samples, seed,
                                    exclude_fraction, n_jobs)[0]


def verify_conjugacy_targets(lin, targets, box=None, times=(-1.0, -0.25, 0.5, 2.0), samples=100,
                             seed=0, exclude_fraction=0.05, n_jobs=None):
    """:func:`verify_conjugacy` for several linear targets on one sample set.

    The nonlinear part of ``h`` (``tau``, ``rho`` and the flow) does not
    depend on the target, so it is integrated once per sample and time and
    shared; every target still gets its own round trip. Returns one
    :class:`ConjugacyReport` per target, in order.
    """
    check_is_fitted(lin, "chart_")
    n = lin.n_features_in_
    targets = [HurwitzTarget.coerce(A, n) for A in targets]
    box = lin.box_ if box is None else box
    center = lin.lyapunov_.center
    pts = box.sample(samples, seed=seed, center=center,
                     exclude_radius=exclude_fraction * float(box.half_widths.min()))
    times = [float(t) for t in times]
    if n_jobs is not None and n_jobs != 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(
            delayed(_verify_sample)(lin, x, times, box, targets) for x in pts)
    else:
        results = [_verify_sample(lin, x, times, box, targets) for x in pts]
    return [_collect(results, k, len(pts), seed, times) for k in range(len(targets))]


def _collect(results, k, n_samples, seed, times):
    diagnostics, failures, residuals, taus, rhos, trips = [], [], [], [], [], []
    components = None
    skipped = 0
    for per_target in results:
        diag, fails, records = per_target[k]
        diagnostics.append(diag)
        failures.extend(fails)
        skipped += len(diag["skipped_times"])
        if "roundtrip" in diag:
            trips.append(diag["roundtrip"])
        for r, dt, dr, comp in records:
            residuals.append(r)
            taus.append(dt)
            rhos.append(dr)
            components = comp if components is None else np.maximum(components, comp)
    return ConjugacyReport(
        samples=n_samples,
        seed=seed,
        times=times,
        max_residual=float(max(residuals, default=0.0)),
        mean_residual=float(np.mean(residuals)) if residuals else 0.0,
        max_roundtrip=float(max(trips, default=0.0)),
        max_tau_defect=float(max(taus, default=0.0)),
        max_rho_defect=float(max(rhos, default=0.0)),
        max_component_residual=[] if components is None else [float(v) for v in components],
        evaluated=len(residuals),
        skipped=skipped,
        failures=failures,
        diagnostics=diagnostics,
    )


def _failure(x, t, exc):
    return {"x": x.tolist(), "t": t, "error": exc.name, "detail": str(exc)}


def _verify_sample(lin, x, times, box, targets):
    """Per-target ``(diagnostics, failures, records)`` for one sample."""
    out = [({"x": x.tolist(), "residuals": [], "skipped_times": []}, [], []) for _ in targets]
    try:
        lin._check_domain(x)
        z, tau, rho = lin._standard(x)
    except GloblinError as exc:
        for _, fails, _ in out:
            fails.append(_failure(x, None, exc))
        return out
    hx = [T.from_standard(z) for T in targets]
    for T, hA, (diag, fails, _) in zip(targets, hx, out):
        try:
            back = lin._unstandard(T.to_standard(hA))
            diag["roundtrip"] = float(np.linalg.norm(back - x))
        except GloblinError as exc:
            fails.append(_failure(x, None, exc))
    for t in times:
        try:
            xt = lin.flow(x, t, guard=box.contains)
        except LeftDomain:
            for diag, _, _ in out:
                diag["skipped_times"].append(t)
            continue
        try:
            lin._check_domain(xt)
            zt, tau_t, rho_t = lin._standard(xt)
        except GloblinError as exc:
            for _, fails, _ in out:
                fails.append(_failure(x, t, exc))
            continue
        tau_def = abs(tau_t - (tau - t)) if tau is not None and tau_t is not None else 0.0
        rho_def = float(np.linalg.norm(rho_t - rho)) if rho is not None and rho_t is not None else 0.0
        for T, hA, (diag, _, records) in zip(targets, hx, out):
            diff = np.abs(T.from_standard(zt) - T.propagator(t) @ hA)
            resid = float(np.linalg.norm(diff))
            diag["residuals"].append(resid)
            records.append((resid, tau_def, rho_def, diff))
    return out
