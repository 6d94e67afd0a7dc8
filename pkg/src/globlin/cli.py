"""Command-line front end: ``globlin <subcommand> [flags]``.

Exit codes: 0 success, 1 tolerance breach, 2 validation failure (Lyapunov
strictness, Hurwitz or star-shape hypotheses), 3 construction or evaluation
failure, 4 usage error. Every error prints one JSON object with fields
``error``, ``module`` and ``detail`` on standard error.
"""

import argparse
import configparser
import json
import os
import sys

import numpy as np

from .conjugacy import GlobalLinearizer, verify_conjugacy
from .exceptions import (
    ExprError,
    GloblinError,
    NotAnEquilibrium,
    NotHurwitzError,
    NotStarShaped,
    SingularSystem,
    UnknownSystem,
    ValidationFailed,
)
from .expr import CompiledField, compile_expr, parse
from .koopman import eigenfunctions, export_grid, verify_eigenfunctions
from .lyapunov import DomainBox, LyapunovFunction, quadratic_lyapunov_from_jacobian
from .morse import MorseNormalForm, verify_normal_form
from .ode import VectorField
from .zoo import get_zoo, list_zoo

EXIT_OK, EXIT_TOLERANCE, EXIT_VALIDATION, EXIT_CONSTRUCTION, EXIT_USAGE = 0, 1, 2, 3, 4

_VALIDATION_ERRORS = (ValidationFailed, NotHurwitzError, NotStarShaped, NotAnEquilibrium, SingularSystem)
_USAGE_ERRORS = (ExprError, UnknownSystem)

DEFAULTS = {
    "samples": 100,
    "times": "-1,-0.25,0.5,2",
    "seed": 0,
    "tol": 1e-5,
    "res": 11,
}
_LIST_KEYS = ("f", "point")


class UsageError(GloblinError):
    module = "cli"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- parsing of flag values ------------------------------------------------------------


def _floats(text, what):
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise UsageError(f"cannot read {what} from {text!r}") from None


def parse_vector(text, what="vector"):
    """``"0.3,0.4"`` -> array."""
    vals = _floats(text, what)
    if not vals:
        raise UsageError(f"empty {what}")
    return np.array(vals)


def parse_box(text):
    """``"lo1:hi1,lo2:hi2"`` or JSON ``[[lo1, hi1], [lo2, hi2]]``."""
    text = str(text).strip()
    try:
        if text.startswith("["):
            bounds = np.asarray(json.loads(text), dtype=float)
        else:
            bounds = np.array([[float(a) for a in part.split(":")] for part in text.split(",")])
        return DomainBox.from_bounds(bounds)
    except (ValueError, TypeError, IndexError):
        raise UsageError(f"cannot read box from {text!r}; use lo:hi,lo:hi") from None


def parse_target(text, n):
    """``minus_identity``, ``diag:l1,l2,...``, ``a,b;c,d`` or JSON ``[[a, b], [c, d]]``.

    Returns a square array, or None for ``minus_identity``.
    """
    text = str(text).strip()
    if text == "minus_identity":
        return None
    try:
        if text.startswith("diag:"):
            A = np.diag(_floats(text[5:], "target"))
        elif text.startswith("["):
            A = np.atleast_2d(np.asarray(json.loads(text), dtype=float))
        else:
            A = np.array([_floats(row, "target") for row in text.split(";")])
    except (ValueError, TypeError):
        raise UsageError(f"cannot read target from {text!r}") from None
    if A.ndim != 2 or A.shape != (n, n):
        raise UsageError(f"target must be {n}x{n}, got shape {A.shape}")
    return A


def _unquote(value):
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def read_config(path):
    """Flatten a ``key = value`` file into a dict of flag values.

    Section names are free-form; keys are flag names (dashes or underscores).
    List-valued keys (``f``, ``point``) take one item per line or items
    separated by ``;``. Values may be quoted.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from None
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if key in out:
                raise UsageError(f"config key {key!r} given twice")
            if key in _LIST_KEYS:
                items = [_unquote(v) for line in raw.splitlines() for v in line.split(";")]
                out[key] = [v for v in items if v]
            else:
                out[key] = _unquote(raw)
    return out


# -- argument parser -------------------------------------------------------------------------


def _common_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("system")
    g.add_argument("--system", help="zoo system name (see `globlin zoo list`)")
    g.add_argument("--f", action="append", metavar="EXPR",
                   help="right-hand side component in x1..xn; repeat once per component")
    g.add_argument("--equilibrium", metavar="X",
                   help="equilibrium coordinates, comma separated (default: origin)")
    g.add_argument("--lyapunov", metavar="V",
                   help="Lyapunov function: an expression, or 'quadratic' (from the Jacobian); "
                        "zoo systems default to their recommended V")
    g.add_argument("--level", help="level c of V = c, a number or 'auto'")
    g.add_argument("--target", metavar="A",
                   help="Hurwitz target: 'minus_identity', 'diag:l1,l2', 'a,b;c,d' or JSON")
    g.add_argument("--box", help="working domain lo1:hi1,lo2:hi2 or JSON [[lo, hi], ...]")
    r = p.add_argument_group("run")
    r.add_argument("--point", action="append", metavar="X",
                   help="evaluation point, comma separated; repeatable")
    r.add_argument("--res", type=int, help=f"grid points per axis (default {DEFAULTS['res']})")
    r.add_argument("--samples", type=int, help=f"verification samples (default {DEFAULTS['samples']})")
    r.add_argument("--times", help="comma-separated verification times; use --times=-1,0.5 "
                                   f"for negative values (default {DEFAULTS['times']})")
    r.add_argument("--seed", type=int, help="sampling seed (default 0)")
    r.add_argument("--tol", type=float, help=f"pass threshold (default {DEFAULTS['tol']:g})")
    r.add_argument("--threads", type=int, help="worker processes (default: available CPUs)")
    r.add_argument("--out", help="output file (default: standard output)")
    r.add_argument("--config", help="key = value config file; flags override its values")
    return p


def build_parser():
    parser = _Parser(prog="globlin", description="Global linearization of stable equilibria.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    common = _common_flags()
    sub.add_parser("linearize", parents=[common], help="evaluate h at points or on a grid",
                   description="Build h and evaluate it at --point values (JSON) or on a --res grid (CSV).")
    sub.add_parser("verify", parents=[common], help="sampled conjugacy check",
                   description="Check h(Phi^t x) = exp(A t) h(x) on seeded samples; exit 1 above --tol.")
    sub.add_parser("morse", parents=[common], help="Morse normal form check",
                   description="Check V(T^-1(y)) = |y|^2/2 on an annulus grid; exit 1 above --tol.")
    sub.add_parser("koopman-check", parents=[common], help="Koopman eigenfunction check",
                   description="Check psi_i(Phi^t x) = exp(l_i t) psi_i(x) for A = diag(l) "
                               "(from --target diag:..., default -1, -2, ...).")
    sub.add_parser("export-grid", parents=[common], help="CSV grid of h",
                   description="Write x, h(x), V, tau and status over a --res grid as CSV.")
    z = sub.add_parser("zoo", help="example systems")
    z.add_argument("action", choices=["list"])
    return parser


def _settings(args):
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for key, val in vars(args).items():
        if val is not None:
            values[key] = val
    for key, val in DEFAULTS.items():
        values.setdefault(key, val)
    return values


# -- construction ------------------------------------------------------------------------------


def _expr_lyapunov(source, center, n):
    tree = parse(source, n_vars=n)
    fn = compile_expr(tree)
    return LyapunovFunction(fn, center, name=source)


def build_problem(s):
    """``(field, lyapunov, box, level)`` from merged settings."""
    f_list = s.get("f")
    if isinstance(f_list, str):
        f_list = [f_list]
    lyap_src = s.get("lyapunov")
    if f_list:
        n = len(f_list)
        eq = parse_vector(s["equilibrium"], "equilibrium") if s.get("equilibrium") else np.zeros(n)
        if eq.size != n:
            raise UsageError(f"equilibrium has {eq.size} coordinates, f has {n} components")
        for src in f_list:
            parse(src, n_vars=n)
        field = VectorField(CompiledField(f_list, n), eq, name="f")
        if not s.get("box"):
            raise UsageError("--box is required with --f")
        box = parse_box(s["box"])
        if lyap_src in (None, "quadratic"):
            lyap = quadratic_lyapunov_from_jacobian(field)
        else:
            lyap = _expr_lyapunov(lyap_src, eq, n)
        level = "auto"
    elif s.get("system"):
        if s.get("equilibrium"):
            raise UsageError("--equilibrium applies only to systems given with --f")
        entry = get_zoo(s["system"])
        field, box = entry.field, entry.box
        n = entry.dimension
        if lyap_src is None:
            lyap, level = entry.lyapunov, entry.level
        elif lyap_src == "quadratic":
            lyap, level = quadratic_lyapunov_from_jacobian(field), "auto"
        else:
            lyap, level = _expr_lyapunov(lyap_src, field.equilibrium, n), "auto"
        if s.get("box"):
            box = parse_box(s["box"])
    else:
        raise UsageError("give --system NAME or --f EXPR (once per component)")
    if box.dimension != n:
        raise UsageError(f"box has dimension {box.dimension}, system has {n}")
    if s.get("level") is not None and str(s["level"]) != "auto":
        try:
            level = float(s["level"])
        except ValueError:
            raise UsageError(f"--level must be a number or 'auto', got {s['level']!r}") from None
    elif s.get("level") is not None:
        level = "auto"
    return field, lyap, box, level


def build_linearizer(s, target=None):
    field, lyap, box, level = build_problem(s)
    if target is None and s.get("target"):
        target = parse_target(s["target"], field.dimension)
    lin = GlobalLinearizer(field, lyap, level=level, target=target, box=box,
                           random_state=int(s["seed"]))
    return lin.fit()


def _threads(s):
    t = s.get("threads")
    t = (os.cpu_count() or 1) if t is None else int(t)
    if t < 1:
        raise UsageError("--threads must be positive")
    return t


def _emit(text, s):
    out = s.get("out")
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _header(lin):
    return {
        "dimension": lin.n_features_in_,
        "level": lin.level_,
        "target": lin.target_.A.tolist(),
        "box": lin.box_.to_dict(),
    }


# -- subcommands --------------------------------------------------------------------------------


def cmd_linearize(s):
    lin = build_linearizer(s)
    points = s.get("point")
    if not points:
        _emit(export_grid(lin, lin.box_, int(s["res"]), n_jobs=_threads(s)), s)
        return EXIT_OK
    if isinstance(points, str):
        points = [points]
    results = []
    for text in points:
        x = parse_vector(text, "point")
        if x.size != lin.n_features_in_:
            raise UsageError(f"point {text!r} has {x.size} coordinates, expected {lin.n_features_in_}")
        y, tau, _ = lin.evaluate(x)
        results.append({"x": x.tolist(), "y": y.tolist(), "tau": tau,
                        "status": "ok" if tau is not None else "AtEquilibrium"})
    _emit(_dump({**_header(lin), "results": results}), s)
    return EXIT_OK


def cmd_verify(s):
    lin = build_linearizer(s)
    tol = float(s["tol"])
    report = verify_conjugacy(lin, times=_floats(s["times"], "times"), samples=int(s["samples"]),
                              seed=int(s["seed"]), n_jobs=_threads(s))
    passed = not report.failures and report.max_residual < tol
    out = {**_header(lin), "conjugacy": report.to_dict(), "tol": tol}
    A = lin.target_.A
    if np.count_nonzero(A - np.diag(np.diag(A))) == 0:
        # With a diagonal target each component of h is a Koopman eigenfunction.
        out["eigenfunctions"] = {
            "eigenvalues": np.diag(A).tolist(),
            "per_component_max_defect": report.max_component_residual,
        }
    out["passed"] = passed
    _emit(_dump(out), s)
    return EXIT_OK if passed else EXIT_TOLERANCE


def cmd_morse(s):
    field, lyap, box, level = build_problem(s)
    gm = MorseNormalForm(lyap, level=level, box=box).fit()
    tol = float(s["tol"])
    report = verify_normal_form(gm)
    out = {"dimension": gm.n_features_in_, "level": gm.level_, "box": box.to_dict(),
           "normal_form": report.to_dict(), "tol": tol}
    points = s.get("point") or []
    if isinstance(points, str):
        points = [points]
    if points:
        out["results"] = [{"x": parse_vector(p, "point").tolist(),
                           "y": gm.forward(parse_vector(p, "point")).tolist()} for p in points]
    passed = not report.failures and report.max_defect < tol
    out["passed"] = passed
    _emit(_dump(out), s)
    return EXIT_OK if passed else EXIT_TOLERANCE


def cmd_koopman_check(s):
    lin = build_linearizer(s, target=None if s.get("target") else "minus_identity")
    n = lin.n_features_in_
    if s.get("target"):
        A = lin.target_.A
        if np.count_nonzero(A - np.diag(np.diag(A))):
            raise UsageError("koopman-check needs a diagonal target (diag:l1,...)")
        lambdas = np.diag(A)
    else:
        lambdas = -np.arange(1.0, n + 1.0)
    efs = eigenfunctions(lin, lambdas)
    tol = float(s["tol"])
    report = verify_eigenfunctions(efs, times=_floats(s["times"], "times"),
                                   samples=int(s["samples"]), seed=int(s["seed"]),
                                   n_jobs=_threads(s))
    passed = not report.failures and report.max_defect < tol
    out = {**_header(efs.linearizer), "eigenfunctions": report.to_dict(), "tol": tol, "passed": passed}
    _emit(_dump(out), s)
    return EXIT_OK if passed else EXIT_TOLERANCE


def cmd_export_grid(s):
    lin = build_linearizer(s)
    _emit(export_grid(lin, lin.box_, int(s["res"]), n_jobs=_threads(s)), s)
    return EXIT_OK


def cmd_zoo(s):
    for name, description in list_zoo():
        sys.stdout.write(f"{name}\t{description}\n")
    return EXIT_OK


_COMMANDS = {
    "linearize": cmd_linearize,
    "verify": cmd_verify,
    "morse": cmd_morse,
    "koopman-check": cmd_koopman_check,
    "export-grid": cmd_export_grid,
    "zoo": cmd_zoo,
}


def _report_error(exc, code):
    name = exc.name if isinstance(exc, GloblinError) else type(exc).__name__
    module = exc.module if isinstance(exc, GloblinError) else "cli"
    detail = exc.detail if isinstance(exc, GloblinError) else str(exc)
    sys.stderr.write(json.dumps({"error": name, "module": module, "detail": detail}, sort_keys=True) + "\n")
    return code


# Flags whose values may start with "-" (expressions, negative coordinates, boxes).
_VALUE_FLAGS = ("--f", "--equilibrium", "--lyapunov", "--level", "--target", "--box", "--point", "--times")


def _attach_values(argv):
    """Rewrite ``--flag VALUE`` as ``--flag=VALUE`` so values like ``-x1`` are not read as options."""
    out, it = [], iter(argv)
    for arg in it:
        if arg in _VALUE_FLAGS:
            value = next(it, None)
            out.append(arg if value is None else f"{arg}={value}")
        else:
            out.append(arg)
    return out


def main(argv=None):
    """Run the command line; returns the exit status."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_attach_values(argv))
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(_COMMANDS))
        settings = _settings(args) if args.command != "zoo" else {}
        return _COMMANDS[args.command](settings)
    except UsageError as exc:
        return _report_error(exc, EXIT_USAGE)
    except _USAGE_ERRORS as exc:
        return _report_error(exc, EXIT_USAGE)
    except _VALIDATION_ERRORS as exc:
        return _report_error(exc, EXIT_VALIDATION)
    except GloblinError as exc:
        return _report_error(exc, EXIT_CONSTRUCTION)
    except OSError as exc:
        return _report_error(exc, EXIT_CONSTRUCTION)
    except ValueError as exc:
        return _report_error(exc, EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
