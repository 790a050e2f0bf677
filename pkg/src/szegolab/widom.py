"""Closed-form coefficients of the two-term trace asymptotics.

    tr h(P_L) ~ N0(E) h(1) |Lambda| L^d + Sigma0(E) I(h) |dLambda| L^(d-1) ln L

All logarithms of L are natural; a test function's own log base only enters
through h itself.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .model import Domain
from .testfn import TestFunction, renyi

N0_CONVENTIONS = ("weyl", "as_printed")
# decided by the eigenvalue-counting arbitration (lattice.ids_estimate)
DEFAULT_N0_CONVENTION = "weyl"


class WidomError(ValueError):
    pass


class QuadratureError(WidomError):
    """Adaptive quadrature failed; ``partial`` holds the last estimate."""

    def __init__(self, message: str, partial: float):
        super().__init__(message)
        self.partial = partial


def n0(E: float, d: int, convention: str = DEFAULT_N0_CONVENTION) -> float:
    """Integrated density of states of -Laplace below E (per unit volume).

    ``weyl`` uses Gamma(d/2 + 1); ``as_printed`` uses Gamma((d + 1)/2).  The two
    differ for every d; eigenvalue counting on the lattice selects ``weyl``.
    """
    if E < 0.0:
        raise WidomError(f"E must be >= 0, got {E}")
    if convention == "weyl":
        g = math.gamma(d / 2.0 + 1.0)
    elif convention == "as_printed":
        g = math.gamma((d + 1) / 2.0)
    else:
        raise WidomError(f"unknown N0 convention {convention!r}; expected one of {N0_CONVENTIONS}")
    return (E / (4.0 * math.pi)) ** (d / 2.0) / g


def sigma0(E: float, d: int) -> float:
    """Surface factor 2/Gamma((d+1)/2) (E/4pi)^((d-1)/2)."""
    if E <= 0.0:
        raise WidomError(f"E must be > 0, got {E}")
    return 2.0 / math.gamma((d + 1) / 2.0) * (E / (4.0 * math.pi)) ** ((d - 1) / 2.0)


def _half_integrals(h: TestFunction, c: float, tol: float, limit: int, power: int):
    f = h.func

    def numerator(lam):
        return f(np.array([lam]))[0] - lam * c

    # lam = t^p near 0 and 1 - lam = t^p near 1: an O(lam^a) numerator
    # becomes an O(t^(p*a - 1)) integrand
    def lower(t):
        lam = t ** power
        if lam == 0.0:
            return 0.0
        return power * numerator(lam) / (t * (1.0 - lam))

    def upper(t):
        s = t ** power
        if s == 0.0:
            return 0.0
        lam = 1.0 - s
        if h.symmetric:
            # h(1 - s) = h(s): avoids losing s below the spacing of floats near 1
            return power * (f(np.array([s]))[0] - lam * c) / (t * lam)
        return power * numerator(lam) / (t * lam)

    b = 0.5 ** (1.0 / power)
    out = []
    for g in (lower, upper):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(g, 0.0, b, epsabs=tol, epsrel=0.0, limit=limit)
            except integrate.IntegrationWarning as exc:
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(g, 0.0, b, epsabs=tol, epsrel=0.0, limit=limit)
                raise QuadratureError(f"I({h.label}) quadrature did not converge: {exc}", val) from None
        out.append((val, err))
    return out


def widom_functional(h: TestFunction, tol: float = 1e-10, limit: int = 500) -> float:
    """I(h) = (1/4pi^2) int_0^1 (h(lam) - lam h(1)) / (lam (1 - lam)) dlam.

    ``tol`` bounds the absolute error of the returned value.
    """
    c = h.at_one
    scale = 4.0 * math.pi ** 2
    # each half gets half the budget, measured before the 1/4pi^2 prefactor;
    # stronger endpoint substitutions are tried when the square-root one stalls
    for power in (2, 4, 8):
        try:
            parts = _half_integrals(h, c, 0.5 * tol * scale, limit, power)
            break
        except QuadratureError as exc:
            failure = exc
    else:
        raise failure
    total = sum(v for v, _ in parts) / scale
    err = sum(e for _, e in parts) / scale
    if not math.isfinite(total) or err > tol:
        raise QuadratureError(f"I({h.label}) error estimate {err:.2e} exceeds {tol:.1e}", total)
    return total


@dataclass(frozen=True)
class AsymptoticPrediction:
    a_pred: float
    b_pred: float
    E: float
    d: int
    h: str
    convention: str

    def to_dict(self) -> dict:
        return asdict(self)


def predict_trace(h: TestFunction, E: float, domain: Domain,
                  convention: str = DEFAULT_N0_CONVENTION, tol: float = 1e-10) -> AsymptoticPrediction:
    """Coefficients of L^d and L^(d-1) ln L for the *unscaled* domain."""
    dom = domain.unscaled if domain.scale != 1.0 else domain
    d = dom.d
    h1 = h.at_one
    a = n0(E, d, convention) * h1 * dom.volume if h1 != 0.0 else 0.0
    b = sigma0(E, d) * widom_functional(h, tol) * dom.surface
    return AsymptoticPrediction(a, b, E, d, h.label, convention)


def entropy_slope(alpha: float, E: float, domain: Domain, log_base: str = "nats",
                  tol: float = 1e-10) -> float:
    """Limit of S_alpha(Lambda_L) / (L^(d-1) ln L); needs d > 1/alpha."""
    d = domain.d
    if not d > 1.0 / alpha:
        raise WidomError(
            f"Renyi index {alpha} in d={d}: h_alpha lies in H_d if and only if d > 1/alpha")
    h = renyi(alpha, log_base)
    return predict_trace(h, E, domain, tol=tol).b_pred
