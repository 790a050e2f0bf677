"""Trace functionals, Schatten quasi-norms and the Q-block inequalities.

All block quantities use the factored projections ``P = V V^T`` of the lattice
engine.  Any product ``A B^T`` of tall factors has the same nonzero singular
values as ``R_A R_B^T`` after thin QR decompositions, so the Schatten norms
below are exact dense-SVD values obtained from small matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import FermiProjection, LatticeOperator, region_mask, truncated_eigenvalues
from .model import Domain
from .spectrum import TruncatedSpectrum, clip_unit
from .testfn import TestFunction, poly_basis

DEFAULT_S_LIST = (0.6, 0.8, 1.0)


class SchattenError(ValueError):
    pass


def trace_h(spectrum, h: TestFunction) -> float:
    """sum_i h(lambda_i); h(0) = 0 and entropy functions vanish exactly at 1."""
    ev = spectrum.eigenvalues if isinstance(spectrum, TruncatedSpectrum) else np.asarray(spectrum, dtype=float)
    vals = np.asarray(h(ev), dtype=float)
    if h.is_entropy:
        vals = np.where((ev == 0.0) | (ev == 1.0), 0.0, vals)
    if not np.all(np.isfinite(vals)):
        raise SchattenError(f"test function {h.label} is not finite on the spectrum")
    return float(np.sum(vals))


def schatten_qnorm(sigma, p: float) -> tuple[float, float]:
    """(||.||_p, ||.||_p^p) for singular values ``sigma``."""
    if not p > 0.0:
        raise SchattenError(f"Schatten index must be positive, got {p}")
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0.0):
        raise SchattenError("singular values must be non-negative")
    pp = float(np.sum(sigma ** p))
    return pp ** (1.0 / p), pp


def _product_singular_values(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Singular values of A @ B.T for tall A, B with the same column count."""
    if A.shape[0] == 0 or B.shape[0] == 0 or A.shape[1] == 0:
        return np.zeros(0)
    Ra = np.linalg.qr(A, mode="r")
    Rb = np.linalg.qr(B, mode="r")
    return np.linalg.svd(Ra @ Rb.T, compute_uv=False)


def _split(fp: FermiProjection, region: Domain, op: LatticeOperator):
    mask = region_mask(op, region)
    if np.all(mask):
        raise SchattenError("the complement of the region in the box is empty")
    return fp.vectors[mask], fp.vectors[~mask]


def q_block(fp: FermiProjection, region: Domain, op: LatticeOperator) -> np.ndarray:
    """Singular values of Q_L = 1_{complement} P 1_{region}."""
    inside, outside = _split(fp, region, op)
    return _product_singular_values(outside, inside)


def q_difference(fp: FermiProjection, fp0: FermiProjection, region: Domain,
                 op: LatticeOperator) -> np.ndarray:
    """Singular values of Q_L - Q_{L,0} (exactly none when both are the same projection)."""
    if fp is fp0:
        return np.zeros(0)
    vi, vo = _split(fp, region, op)
    ui, uo = _split(fp0, region, op)
    return _product_singular_values(np.hstack([vo, -uo]), np.hstack([vi, ui]))


def p_difference(fp: FermiProjection, fp0: FermiProjection, region: Domain,
                 op: LatticeOperator) -> np.ndarray:
    """Eigenvalues of P_L - P_{L,0} (nonzero part)."""
    if fp is fp0:
        return np.zeros(0)
    mask = region_mask(op, region)
    vi, ui = fp.vectors[mask], fp0.vectors[mask]
    m, m0 = vi.shape[1], ui.shape[1]
    if m + m0 == 0:
        return np.zeros(0)
    R = np.linalg.qr(np.hstack([vi, ui]), mode="r")
    sign = np.concatenate([np.ones(m), -np.ones(m0)])
    return np.linalg.eigvalsh((R * sign) @ R.T)


@dataclass(frozen=True)
class NormReport:
    """Block norms for one region scale.

    ``pdiff2`` is the Hilbert-Schmidt norm ||P_L - P_{L,0}||_2 (not squared);
    ``qdiff2s`` maps s to ||Q_L - Q_{L,0}||_{2s}^{2s}.  ``count_shift`` is the
    difference in the number of box eigenvalues below E with and without V; a
    nonzero value means one box state has no infinite-volume counterpart and
    contaminates the difference quantities by O(L/R).
    """

    L: float
    q2: float
    qdiff2s: dict
    pdiff2: float
    trdiff: float
    phi: float
    q0_hs: float = 0.0
    qdiff_hs: float = 0.0
    count_shift: int = 0
    qdiff_sigma: np.ndarray = field(default=None, repr=False, compare=False)


def diff_stats(fp: FermiProjection, fp0: FermiProjection, region: Domain, op: LatticeOperator,
               s_list=DEFAULT_S_LIST) -> NormReport:
    if fp.n_sites != fp0.n_sites or fp.n_sites != op.n_sites:
        raise SchattenError("projections come from different lattice geometries")
    q = q_block(fp, region, op)
    q0 = q_block(fp0, region, op)
    dq = q_difference(fp, fp0, region, op)
    dp = p_difference(fp, fp0, region, op)
    mask = region_mask(op, region)
    trdiff = float(np.sum(fp.vectors[mask] ** 2) - np.sum(fp0.vectors[mask] ** 2))
    dq_hs = schatten_qnorm(dq, 2.0)[0]
    q0_hs = schatten_qnorm(q0, 2.0)[0]
    return NormReport(
        L=region.scale,
        q2=schatten_qnorm(q, 2.0)[1],
        qdiff2s={float(s): schatten_qnorm(dq, 2.0 * s)[1] for s in s_list},
        pdiff2=schatten_qnorm(np.abs(dp), 2.0)[0],
        trdiff=trdiff,
        phi=dq_hs ** 2 + 2.0 * dq_hs * q0_hs,
        q0_hs=q0_hs,
        qdiff_hs=dq_hs,
        count_shift=fp.count - fp0.count,
        qdiff_sigma=dq,
    )


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool


def interpolation_check(sigma, p0: float, p1: float, theta: float) -> InequalityCheck:
    """||s||_{p_theta} <= ||s||_{p0}^(1-theta) ||s||_{p1}^theta, 1/p_theta = theta/p1 + (1-theta)/p0."""
    if not (0.0 < p0 <= p1 and math.isfinite(p1)):
        raise SchattenError(f"need 0 < p0 <= p1 < inf, got p0={p0}, p1={p1}")
    if not 0.0 <= theta <= 1.0:
        raise SchattenError(f"theta must lie in [0, 1], got {theta}")
    p_theta = 1.0 / (theta / p1 + (1.0 - theta) / p0)
    lhs = schatten_qnorm(sigma, p_theta)[0]
    rhs = schatten_qnorm(sigma, p0)[0] ** (1.0 - theta) * schatten_qnorm(sigma, p1)[0] ** theta
    return InequalityCheck(lhs, rhs, bool(lhs <= rhs * (1.0 + 1e-12)))


def telescope_bound_check(fp: FermiProjection, fp0: FermiProjection, region: Domain,
                          op: LatticeOperator, n: int) -> InequalityCheck:
    """|tr s_n(P_L) - tr s_n(P_{L,0})| <= n phi(L).

    The left side comes from the truncated spectra, the right side from
    singular values of the Q blocks.
    """
    if int(n) != n or n < 1:
        raise SchattenError("n must be a positive integer")
    mask = region_mask(op, region)
    s_n = poly_basis(int(n))
    ev = clip_unit(truncated_eigenvalues(fp.vectors[mask]))
    ev0 = clip_unit(truncated_eigenvalues(fp0.vectors[mask]))
    lhs = abs(trace_h(ev, s_n) - trace_h(ev0, s_n))
    dq = schatten_qnorm(q_difference(fp, fp0, region, op), 2.0)[0]
    q0 = schatten_qnorm(q_block(fp0, region, op), 2.0)[0]
    rhs = n * (dq * dq + 2.0 * dq * q0)
    return InequalityCheck(lhs, rhs, bool(lhs <= rhs * (1.0 + 1e-10) + 1e-12))


def block_exponent(s: float, d: int, p0: float | None = None) -> float:
    """Growth exponent 2d(1-s)/(2-p0) of ||Q_L - Q_{L,0}||_{2s}^{2s}; p0 defaults to min(1, 2s)."""
    if not 0.0 < s <= 1.0:
        raise SchattenError("s must lie in (0, 1]")
    p0 = min(1.0, 2.0 * s) if p0 is None else p0
    if not 0.0 < p0 <= min(1.0, 2.0 * s):
        raise SchattenError(f"p0 must lie in (0, min(1, 2s)], got {p0}")
    return 2.0 * d * (1.0 - s) / (2.0 - p0)


@dataclass(frozen=True)
class BoundShape:
    exponent: float
    constant: float
    worst_ratio: float   # max over validation rows of value / (C L^exponent)
    holds: bool


def bound_shape_check(L, values, s: float, d: int, p0: float | None = None,
                      fit_fraction: float = 1.0 / 3.0) -> BoundShape:
    """Fit C = max value / L^exponent on the first rows, then validate on the rest."""
    L = np.asarray(L, dtype=float)
    values = np.asarray(values, dtype=float)
    g = block_exponent(s, d, p0)
    k = max(1, int(math.ceil(fit_fraction * L.size)))
    scaled = values / L ** g
    C = float(np.max(scaled[:k]))
    rest = scaled[k:]
    worst = float(np.max(rest) / C) if rest.size and C > 0 else 0.0
    return BoundShape(g, C, worst, bool(worst <= 1.0 + 1e-12))
