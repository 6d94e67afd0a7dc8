"""Koopman eigenfunctions from a linearizing map with diagonal target, and grid export.

With ``A = diag(lambda_1, ..., lambda_n)`` the components of ``h`` satisfy
``psi_i(Phi^t(x)) = exp(lambda_i t) psi_i(x)``.
"""

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .conjugacy import retarget
from .exceptions import GloblinError, LeftDomain, NotHurwitzError

__all__ = [
    "EigenfunctionReport",
    "EigenfunctionSet",
    "eigenfunctions",
    "export_grid",
    "grid_rows",
    "verify_eigenfunctions",
]


class EigenfunctionSet:
    """Eigenfunctions ``psi_i = h_i`` of a map retargeted to ``diag(lambdas)``.

    Attributes
    ----------
    eigenvalues : ndarray
    linearizer : GlobalLinearizer
        The retargeted map; ``psi(x)`` is exactly its ``linearize(x)``.
    """

    def __init__(self, linearizer, eigenvalues):
        self.linearizer = linearizer
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)

    @property
    def dimension(self):
        return self.eigenvalues.size

    def __call__(self, x):
        """All components ``(psi_1(x), ..., psi_n(x))``."""
        return self.linearizer.linearize(x)

    def component(self, i, x):
        return float(self(x)[i])

    def evaluate(self, x):
        return self.linearizer.evaluate(x)

    def __repr__(self):
        return f"EigenfunctionSet(eigenvalues={self.eigenvalues.tolist()})"


def eigenfunctions(lin, lambdas):
    """Retarget ``lin`` to ``diag(lambdas)`` and expose the components as eigenfunctions.

    Raises :class:`NotHurwitzError` when some ``lambda_i >= 0``.
    """
    check_is_fitted(lin, "chart_")
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if lambdas.ndim != 1 or lambdas.size != lin.n_features_in_:
        raise ValueError(f"need {lin.n_features_in_} eigenvalues, got {lambdas.size}")
    bad = [float(v) for v in lambdas if not v < 0]
    if bad:
        raise NotHurwitzError(f"eigenvalues must be negative, got {bad}")
    return EigenfunctionSet(retarget(lin, np.diag(lambdas)), lambdas)


@dataclass
class EigenfunctionReport:
    eigenvalues: list
    per_component_max_defect: list
    times: list
    samples: int
    seed: int
    evaluated: int
    skipped: int
    failures: list = field(default_factory=list)

    @property
    def max_defect(self):
        return max(self.per_component_max_defect, default=0.0)

    def to_dict(self):
        return {
            "eigenvalues": list(self.eigenvalues),
            "per_component_max_defect": list(self.per_component_max_defect),
            "max_defect": self.max_defect,
            "times": list(self.times),
            "samples": self.samples,
            "seed": self.seed,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "failures": self.failures,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_sample(efs, x, times, box):
    lin = efs.linearizer
    failures, defects = [], []
    skipped = 0
    try:
        psi = efs(x)
    except GloblinError as exc:
        return [{"x": x.tolist(), "t": None, "error": exc.name, "detail": str(exc)}], [], 0
    for t in times:
        try:
            xt = lin.flow(x, t, guard=box.contains)
        except LeftDomain:
            skipped += 1
            continue
        try:
            psi_t = efs(xt)
        except GloblinError as exc:
            failures.append({"x": x.tolist(), "t": t, "error": exc.name, "detail": str(exc)})
            continue
        defects.append(np.abs(psi_t - np.exp(efs.eigenvalues * t) * psi))
    return failures, defects, skipped


def verify_eigenfunctions(efs, box=None, times=(-1.0, -0.25, 0.5, 2.0), samples=100, seed=0,
                          exclude_fraction=0.05, n_jobs=None):
    """Per-component ``max |psi_i(Phi^t(x)) - exp(lambda_i t) psi_i(x)|`` over samples and times.

    Sampling and skipping follow :func:`verify_conjugacy`.
    """
    lin = efs.linearizer
    box = lin.box_ if box is None else box
    pts = box.sample(samples, seed=seed, center=lin.lyapunov_.center,
                     exclude_radius=exclude_fraction * float(box.half_widths.min()))
    times = [float(t) for t in times]
    if n_jobs is not None and n_jobs != 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(delayed(_check_sample)(efs, x, times, box) for x in pts)
    else:
        results = [_check_sample(efs, x, times, box) for x in pts]
    worst = np.zeros(efs.dimension)
    failures, evaluated, skipped = [], 0, 0
    for fails, defects, skip in results:
        failures.extend(fails)
        skipped += skip
        for d in defects:
            worst = np.maximum(worst, d)
            evaluated += 1
    return EigenfunctionReport(
        eigenvalues=[float(v) for v in efs.eigenvalues],
        per_component_max_defect=[float(v) for v in worst],
        times=times,
        samples=len(pts),
        seed=seed,
        evaluated=evaluated,
        skipped=skipped,
        failures=failures,
    )


def _fmt(v):
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _grid_row(obj, lyap, x):
    n = x.size
    try:
        v = _fmt(lyap(x))
    except GloblinError:
        v = "nan"
    try:
        y, tau, _ = obj.evaluate(x)
    except GloblinError as exc:
        return [_fmt(c) for c in x] + ["nan"] * n + [v, "nan", exc.name]
    ys = [_fmt(c) for c in y]
    if tau is None:
        return [_fmt(c) for c in x] + ys + [v, "nan", "AtEquilibrium"]
    return [_fmt(c) for c in x] + ys + [v, _fmt(tau), "ok"]


def grid_rows(obj, box, resolution, n_jobs=None):
    """Header and rows of the grid table for a linearizer, eigenfunction set or normal form.

    Each row is ``x1..xn, y1..yn, V, tau, status`` with floats in shortest
    round-trip form; ``tau`` is ``nan`` at the equilibrium and wherever
    evaluation fails, and ``status`` is ``ok``, ``AtEquilibrium`` or the
    error name.
    """
    n = box.dimension
    if n not in (1, 2, 3):
        raise ValueError("grid export supports dimensions 1, 2 and 3")
    resolution = int(resolution)
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    lyap = obj.linearizer.lyapunov_ if isinstance(obj, EigenfunctionSet) else obj.lyapunov_
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(box.lower, box.upper)]
    pts = [np.array(p) for p in itertools.product(*axes)]
    if n_jobs is not None and n_jobs != 1:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=n_jobs)(delayed(_grid_row)(obj, lyap, x) for x in pts)
    else:
        rows = [_grid_row(obj, lyap, x) for x in pts]
    header = [f"x{i}" for i in range(1, n + 1)] + [f"y{i}" for i in range(1, n + 1)]
    return header + ["V", "tau", "status"], rows


def export_grid(obj, box, resolution, out=None, n_jobs=None):
    """Write the grid table as CSV to ``out`` (path or text stream).

    Returns the CSV text when ``out`` is None.
    """
    header, rows = grid_rows(obj, box, resolution, n_jobs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if out is None:
        return text
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
