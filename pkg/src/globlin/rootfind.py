"""Bracketing scalar root finder (Brent's method).

Used for event location on dense-output interpolants, for the radial sphere
chart and for the linear-target crossing time.
"""

from dataclasses import dataclass

import numpy as np

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class RootResult:
    root: float
    value: float
    bracket_width: float
    iterations: int


def brent(f, a, b, fa=None, fb=None, xtol=1e-15, rtol=2 * _EPS, maxiter=200):
    """Find a root of ``f`` in ``[a, b]`` where ``f(a)`` and ``f(b)`` differ in sign.

    Returns the best iterate together with the width of the final sign-change
    bracket (zero when an exact root is hit).
    """
    fa = f(a) if fa is None else fa
    fb = f(b) if fb is None else fb
    if fa == 0.0:
        return RootResult(a, fa, 0.0, 0)
    if fb == 0.0:
        return RootResult(b, fb, 0.0, 0)
    if np.sign(fa) == np.sign(fb):
        raise ValueError("root is not bracketed")

    c, fc = a, fa
    d = e = b - a
    for it in range(1, maxiter + 1):
        if np.sign(fb) == np.sign(fc):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * rtol * abs(b) + 0.5 * xtol
        m = 0.5 * (c - b)
        if abs(m) <= tol1 or fb == 0.0:
            return RootResult(b, fb, 0.0 if fb == 0.0 else abs(c - b), it)
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0.0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * m * q - abs(tol1 * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m
        else:
            d = e = m
        a, fa = b, fb
        if abs(d) > tol1:
            b += d
        else:
            b += tol1 if m > 0 else -tol1
        fb = f(b)
    return RootResult(b, fb, 0.0 if fb == 0.0 else abs(c - b), maxiter)
