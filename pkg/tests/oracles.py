"""Independent reference computations used only by the tests."""
from __future__ import annotations

import math

import mpmath
import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import solve_banded


def widom_mp(h_mp, dps: int = 30) -> float:
    """I(h) by tanh-sinh quadrature in extended precision after lam = t^2 on both halves.

    ``h_mp`` takes and returns mpmath numbers; it is independent of the
    package's numpy implementations.
    """
    with mpmath.workdps(dps):
        c = h_mp(mpmath.mpf(1))

        def lower(t):
            lam = t * t
            return 2 * (h_mp(lam) - lam * c) / (t * (1 - lam))

        def upper(t):
            s = t * t
            lam = 1 - s
            return 2 * (h_mp(lam) - lam * c) / (t * lam)

        b = mpmath.sqrt(mpmath.mpf(1) / 2)
        total = mpmath.quad(lower, [0, b]) + mpmath.quad(upper, [0, b])
        return float(total / (4 * mpmath.pi ** 2))


def renyi_mp(alpha):
    alpha = mpmath.mpf(alpha)

    def h(lam):
        if lam <= 0 or lam >= 1:
            return mpmath.mpf(0)
        if alpha == 1:
            return -lam * mpmath.log(lam) - (1 - lam) * mpmath.log(1 - lam)
        return mpmath.log(lam ** alpha + (1 - lam) ** alpha) / (1 - alpha)

    return h


def chain_projection_columns(V, E: float, h: float, W: float, cols, nq: int = 64):
    """Columns of the Fermi projection of the infinite finite-difference chain.

    Sites sit at (j + 1/2) h inside [-W, W]; the two semi-infinite free leads
    enter through their exact self-energy, so there is no box.  The projection
    is (1/pi) Im of the resolvent integrated along the upper half of a circle
    that crosses the real axis below the spectrum and at E.
    Returns the site coordinates and P[:, cols].
    """
    n = int(round(2 * W / h))
    x = -W + (np.arange(n) + 0.5) * h
    t = -1.0 / h ** 2
    eps0 = 2.0 / h ** 2
    diag = eps0 + V(x)
    emin = min(float(np.min(V(x))), 0.0) - 1.0
    centre, radius = 0.5 * (E + emin), 0.5 * (E - emin)
    th, wt = leggauss(nq)
    th = 0.5 * math.pi * (th + 1.0)
    wt = 0.5 * math.pi * wt
    cols = np.asarray(cols)
    rhs = np.zeros((n, cols.size), complex)
    rhs[cols, np.arange(cols.size)] = 1.0
    acc = np.zeros((n, cols.size))
    for theta, w in zip(th, wt):
        z = centre + radius * np.exp(1j * theta)
        dz = 1j * radius * np.exp(1j * theta)
        w2 = z - eps0
        root = np.sqrt(w2 * w2 - 4.0 * t * t)
        g = (w2 - root) / (2.0 * t * t)
        if abs(g) > 1.0 / abs(t):
            g = (w2 + root) / (2.0 * t * t)
        sigma = t * t * g
        ab = np.zeros((3, n), complex)
        ab[0, 1:] = -t
        ab[2, :-1] = -t
        ab[1] = z - diag
        ab[1, 0] -= sigma
        ab[1, -1] -= sigma
        G = solve_banded((1, 1), ab, rhs)
        acc += (w * G * dz).imag
    return x, acc / math.pi
