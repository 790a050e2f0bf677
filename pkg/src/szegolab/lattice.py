"""Finite-difference realisation of H = -Laplace + V on a Dirichlet box.

The box is ``[-R, R]^d`` with interior sites ``-R + j*h``, ``j = 1 .. 2R/h - 1``
per axis; for d = 2 site ``(i, k)`` has flat index ``i * n + k``.  Fermi
projections are kept in factored form ``P = V V^T`` with ``V`` the occupied
eigenvectors, which is all the truncation and Schatten code needs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .cache import EigenCache, content_key
from .model import Domain, ModelConfig, ModelError, Potential, scale_domain
from .spectrum import TruncatedSpectrum, clip_unit

log = logging.getLogger(__name__)

DEFAULT_SITE_CAP = {1: 200_000, 2: 12_000}
DEGENERACY_RTOL = 1e-9


class LatticeError(RuntimeError):
    pass


class DegenerateFermiLevel(LatticeError):
    pass


@dataclass(frozen=True, eq=False)
class LatticeOperator:
    d: int
    spacing: float
    R: float
    n_side: int
    potential: Potential

    @property
    def n_sites(self) -> int:
        return self.n_side ** self.d

    @property
    def axis(self) -> np.ndarray:
        return -self.R + self.spacing * np.arange(1, self.n_side + 1)

    @property
    def coords(self) -> np.ndarray:
        ax = self.axis
        if self.d == 1:
            return ax
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def offdiag(self) -> float:
        return -1.0 / self.spacing ** 2

    def diagonal(self) -> np.ndarray:
        return 2.0 * self.d / self.spacing ** 2 + self.potential(self.coords)

    def matrix(self) -> np.ndarray:
        """Dense symmetric matrix of -Laplace_h + V."""
        n = self.n_side
        t = np.diag(np.full(n - 1, self.offdiag), 1)
        t = t + t.T
        if self.d == 2:
            eye = np.eye(n)
            t = np.kron(t, eye) + np.kron(eye, t)
        return t + np.diag(self.diagonal())

    def key(self) -> dict:
        return {"d": self.d, "h": repr(self.spacing), "R": repr(self.R), "n": self.n_side,
                "V": self.potential.describe()}


def build_hamiltonian(config: ModelConfig, L: float = 1.0, R: float | None = None,
                      site_cap: int | None = None) -> LatticeOperator:
    """Lattice Hamiltonian whose box covers ``L * Lambda`` plus the margin."""
    h = config.spacing
    if math.sqrt(config.E) * h > 0.15 + 1e-12:
        raise ModelError("sqrt(E)*h exceeds 0.15")
    R = config.box_for(L) if R is None else float(R)
    return lattice_operator(config.d, h, R, config.potential,
                            site_cap or config.site_cap or DEFAULT_SITE_CAP[config.d])


def lattice_operator(d: int, spacing: float, R: float, potential: Potential,
                     site_cap: int | None = None) -> LatticeOperator:
    n_side = int(round(2.0 * R / spacing)) - 1
    if abs((n_side + 1) * spacing - 2.0 * R) > 1e-9 * R:
        raise ModelError(f"box half-width {R} is not a multiple of the spacing {spacing}")
    if n_side < 1:
        raise ModelError("box has no interior sites")
    cap = site_cap or DEFAULT_SITE_CAP[d]
    if n_side ** d > cap:
        raise ModelError(
            f"{n_side ** d} lattice sites exceed the cap of {cap}; shrink the box R or raise the spacing h")
    return LatticeOperator(d, spacing, R, n_side, potential)


def _dirichlet_modes(n: int, h: float):
    j = np.arange(1, n + 1)
    ev = (4.0 / h ** 2) * np.sin(j * np.pi / (2.0 * (n + 1))) ** 2
    return j, ev


def _dirichlet_vectors(n: int, j: np.ndarray) -> np.ndarray:
    i = np.arange(1, n + 1)
    return math.sqrt(2.0 / (n + 1)) * np.sin(np.outer(i, j) * (np.pi / (n + 1)))


@dataclass(frozen=True, eq=False)
class FermiProjection:
    """P = vectors @ vectors.T for the eigenpairs below E."""

    vectors: np.ndarray
    energies: np.ndarray
    E: float
    method: str = "lapack"
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.energies.size)

    @property
    def n_sites(self) -> int:
        return int(self.vectors.shape[0])

    def matrix(self) -> np.ndarray:
        return self.vectors @ self.vectors.T

    @property
    def orthonormality_defect(self) -> float:
        V = self.vectors
        if V.shape[1] == 0:
            return 0.0
        return float(np.max(np.abs(V.T @ V - np.eye(V.shape[1]))))

    def residuals(self) -> tuple[float, float]:
        """(max|P^2 - P|, max|P - P^T|) from the dense matrix."""
        P = self.matrix()
        return float(np.max(np.abs(P @ P - P))), float(np.max(np.abs(P - P.T)))


def _solve_lapack(op: LatticeOperator, upper: float):
    if op.d == 1:
        diag = op.diagonal()
        off = np.full(op.n_side - 1, op.offdiag)
        if op.n_side == 1:
            ev = diag.copy()
            vec = np.ones((1, 1))
            keep = ev <= upper
            return ev[keep], vec[:, keep]
        return sla.eigh_tridiagonal(diag, off, select="v", select_range=(-np.inf, upper))
    return sla.eigh(op.matrix(), subset_by_value=(-np.inf, upper), driver="evr")


def _solve_free(op: LatticeOperator, upper: float):
    n, h = op.n_side, op.spacing
    j, ev1 = _dirichlet_modes(n, h)
    if op.d == 1:
        keep = ev1 <= upper
        return ev1[keep], _dirichlet_vectors(n, j[keep])
    tot = ev1[:, None] + ev1[None, :]
    a, b = np.nonzero(tot <= upper)
    order = np.lexsort((b, a, tot[a, b]))
    a, b = a[order], b[order]
    modes = _dirichlet_vectors(n, j)
    vecs = (modes[:, a][:, None, :] * modes[:, b][None, :, :]).reshape(n * n, a.size)
    return tot[a, b], vecs


def fermi_projection(op: LatticeOperator, E: float, method: str = "auto",
                     cache: EigenCache | None = None) -> FermiProjection:
    """Occupied eigenpairs of the lattice Hamiltonian below E.

    ``method="auto"`` uses the closed-form Dirichlet modes when V = 0 and
    LAPACK (tridiagonal for d = 1, dense MRRR for d = 2) otherwise.
    """
    if method == "auto":
        method = "closed_form" if op.potential.is_zero else "lapack"
    if method not in ("closed_form", "lapack"):
        raise ValueError(f"unknown eigensolver method {method!r}")
    if method == "closed_form" and not op.potential.is_zero:
        raise LatticeError("closed-form modes exist only for V = 0")
    guard = DEGENERACY_RTOL * max(abs(E), 1.0)
    key = content_key(kind="fermi", method=method, E=repr(E), **op.key()) if cache else None
    stored = cache.load(key) if cache else None
    if stored is not None:
        ev, vecs = stored["energies"], stored["vectors"]
    else:
        solver = _solve_free if method == "closed_form" else _solve_lapack
        try:
            ev, vecs = solver(op, E + guard)
        except np.linalg.LinAlgError as exc:
            raise LatticeError(f"eigensolver did not converge: {exc}") from exc
        if np.any(np.abs(ev - E) <= guard):
            raise DegenerateFermiLevel(
                f"an eigenvalue lies within {guard:.1e} of the Fermi energy {E}; shift E or the box")
        keep = ev < E
        ev, vecs = np.ascontiguousarray(ev[keep]), np.ascontiguousarray(vecs[:, keep])
        if cache:
            cache.store(key, energies=ev, vectors=vecs)
    return FermiProjection(vecs, ev, E, method, {"n_sites": op.n_sites, "R": op.R, "h": op.spacing})


def region_mask(op: LatticeOperator, region: Domain) -> np.ndarray:
    if region.d != op.d:
        raise ModelError("region and lattice dimensions differ")
    if region.extent >= op.R:
        raise ModelError(f"region extent {region.extent} does not fit inside the box R={op.R}")
    return region.contains(op.coords, rtol=1e-9 * op.spacing / max(1.0, region.extent))


def truncated_eigenvalues(V_region: np.ndarray) -> np.ndarray:
    """Spectrum of V_region V_region^T (zeros included) via the smaller Gram matrix."""
    n, m = V_region.shape
    if n >= m:
        ev = np.linalg.eigvalsh(V_region.T @ V_region)
        return np.concatenate([np.zeros(n - m), ev])
    return np.linalg.eigvalsh(V_region @ V_region.T)


def truncate_spectrum(fp: FermiProjection, region: Domain, op: LatticeOperator) -> TruncatedSpectrum:
    """Eigenvalues of the principal submatrix of P on the sites in ``region``."""
    mask = region_mask(op, region)
    ev = clip_unit(truncated_eigenvalues(fp.vectors[mask]))
    return TruncatedSpectrum(ev, region.scale, "lattice", region,
                             {"h": op.spacing, "R": op.R, "sites": int(mask.sum()), "method": fp.method})


def sturm_count(diag: np.ndarray, off: float, E: float) -> int:
    """Number of eigenvalues below E of a symmetric tridiagonal matrix (inertia)."""
    count = 0
    q = 1.0
    off2 = off * off
    for i, a in enumerate(diag):
        q = (a - E) - (off2 / q if i else 0.0)
        if q == 0.0:
            q = 1e-300
        if q < 0.0:
            count += 1
    return count


def _box_density(d: int, h: float, R: float, E: float) -> float:
    R = math.ceil(R / h - 1e-9) * h
    op = lattice_operator(1, h, R, Potential(1, "zero"), site_cap=10 ** 7)
    if d == 1:
        count = sturm_count(op.diagonal(), op.offdiag, E)
    else:
        # the 2D stencil is the tensor sum of two 1D stencils
        ev1 = sla.eigvalsh_tridiagonal(op.diagonal(), np.full(op.n_side - 1, op.offdiag))
        count = int(np.sum(np.searchsorted(ev1, E - ev1, side="left")))
    return count / (2.0 * R) ** d


def ids_estimate(E: float, d: int = 1, spacing: float | None = None, R: float | None = None) -> float:
    """Eigenvalue-counting density of -Laplace_h below E per unit volume.

    Counts on a Dirichlet box at spacings h and h/2 and removes the O(h^2)
    dispersion error by Richardson extrapolation.  In d = 1 the count is a
    Sturm sequence.  In d = 2 it pairs the eigenvalues of the 1D stencil, and
    the O(1/R) perimeter deficit of the box is removed by a second
    extrapolation between R and 2R.
    """
    if E < 0.0:
        raise ValueError("E must be >= 0")
    if d not in (1, 2):
        raise ValueError("ids_estimate supports d = 1 and d = 2")
    if E == 0.0:
        return 0.0
    k = math.sqrt(E)
    h = spacing or 0.1 / k
    if R is None:
        R = 1000.0 / k if d == 1 else 60.0 / k

    def at(RR):
        return (4.0 * _box_density(d, h / 2.0, RR, E) - _box_density(d, h, RR, E)) / 3.0

    if d == 1:
        return at(R)
    return 2.0 * at(2.0 * R) - at(R)


@dataclass(frozen=True)
class BlockDecay:
    centres: np.ndarray          # cube centres (per axis for d = 1)
    norms: np.ndarray            # Frobenius norms of the (n, m) blocks
    exponent: float              # fitted decay exponent of (|n| + |m|)
    constant: float              # fitted c2
    used_pairs: int


def block_norm_decay(fp: FermiProjection, fp0: FermiProjection, op: LatticeOperator,
                     inner: float | None = None, outer: float | None = None,
                     min_cubes: int = 20) -> BlockDecay:
    """Unit-cube block norms of P - P0 and a fit c2 / ((|n||m|)^((d-1)/2) (|n| + |m|)^g).

    Cubes with centre norm below ``inner`` (default: support radius + 1) or above
    ``outer`` (default: R minus the margin) are excluded from the fit.
    """
    if op.d != 1:
        raise LatticeError("block_norm_decay is implemented for d = 1")
    x = op.coords
    cell = np.floor(x).astype(int)
    cells = np.unique(cell)
    centres = cells + 0.5
    inner = op.potential.support + 1.0 if inner is None else inner
    outer = op.R - max(5.0, 8.0 / math.sqrt(fp.E)) if outer is None else outer
    far = (np.abs(centres) >= inner) & (np.abs(centres) <= outer)
    per_side = min(np.sum(far & (centres > 0)), np.sum(far & (centres < 0)))
    if per_side < min_cubes:
        raise LatticeError(f"only {per_side} unit cubes per side beyond supp V; need {min_cubes}")
    index = np.searchsorted(cells, cell)
    # ||1_n (P - P0) 1_m||_F with P - P0 = [V, V0] diag(1, -1) [V, V0]^T
    nc = cells.size
    norms = np.zeros((nc, nc))
    V, V0 = fp.vectors, fp0.vectors
    groups = [np.nonzero(index == c)[0] for c in range(nc)]
    for a in range(nc):
        rows = groups[a]
        block_rows = V[rows] @ V.T - V0[rows] @ V0.T
        sq = block_rows ** 2
        norms[a] = np.sqrt(np.bincount(index, weights=sq.sum(axis=0), minlength=nc))
    n_abs = np.abs(centres)
    A, B = np.meshgrid(n_abs, n_abs, indexing="ij")
    sel = np.outer(far, far) & (norms > 0.0)
    if not np.any(sel):
        return BlockDecay(centres, norms, math.nan, 0.0, 0)
    y = np.log(norms[sel])
    X = np.column_stack([np.ones(y.size), -np.log(A[sel] + B[sel])])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return BlockDecay(centres, norms, float(coef[1]), float(math.exp(coef[0])), int(y.size))


def lattice_row(config: ModelConfig, L: float, cache: EigenCache | None = None,
                R: float | None = None):
    """Operator, projection and (for V != 0) free projection for one sweep row."""
    op = build_hamiltonian(config, L, R)
    fp = fermi_projection(op, config.E, cache=cache)
    if config.potential.is_zero:
        return op, fp, fp
    op0 = LatticeOperator(op.d, op.spacing, op.R, op.n_side, Potential(op.d, "zero"))
    fp0 = fermi_projection(op0, config.E, cache=cache)
    return op, fp, fp0


def region_for(config: ModelConfig, L: float) -> Domain:
    return scale_domain(config.domain, L)
