"""Continuum Fermi-projection kernels and their Nystroem truncation.

Free kernels are closed-form (sine kernel for d = 1, Bessel J1 kernel for
d = 2).  For a compactly supported 1D potential the projection kernel is built
from bound states plus left and right scattering states,

    K(x, y) = sum_b psi_b(x) psi_b(y)
              + (1/2pi) int_0^kF Re[phiL_k(x) phiL_k(y)* + phiR_k(x) phiR_k(y)*] dk,

and is stored as a real feature map ``F`` with ``K = F F^T``; the Nystroem
matrix is then a Gram product instead of a pointwise kernel evaluation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .model import Domain, ModelError, Potential
from .spectrum import TruncatedSpectrum, clip_unit

log = logging.getLogger(__name__)

ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
SINC_SERIES_CUTOFF = 1e-4
K_PANEL_ORDER = 64
K_PANEL_PHASE = 40.0
MIN_NODES_PER_WAVELENGTH = 6.0


class ContinuumError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# real fundamental solutions across the support of V
# --------------------------------------------------------------------------

def _segments(potential: Potential) -> list[tuple[float, float]]:
    bp = potential.breakpoints()
    return list(zip(bp[:-1], bp[1:]))


@dataclass(frozen=True, eq=False)
class _Fundamental:
    """u, v solving -y'' + V y = k2 y on [xl, xr] with u = 1, u' = 0, v = 0, v' = 1 at xl."""

    k2: np.ndarray
    xl: float
    xr: float
    pieces: tuple  # (lo, hi, OdeSolution) per segment
    end: np.ndarray  # (4, n): u, u', v, v' at xr

    def at(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """u(x), v(x) for xl <= x <= xr, shape (len(x), n)."""
        n = self.k2.size
        x = np.asarray(x, dtype=float)
        u = np.empty((x.size, n))
        v = np.empty((x.size, n))
        done = np.zeros(x.size, dtype=bool)
        for lo, hi, sol in self.pieces:
            m = (x >= lo) & (x <= hi) & ~done
            if np.any(m):
                y = sol(x[m]).reshape(4, n, -1)
                u[m] = y[0].T
                v[m] = y[2].T
                done |= m
        if not np.all(done):
            raise ContinuumError("interior evaluation outside the support of V")
        return u, v


def _fundamental(potential: Potential, k2: np.ndarray, rtol: float = ODE_RTOL,
                 atol: float = ODE_ATOL) -> _Fundamental:
    k2 = np.atleast_1d(np.asarray(k2, dtype=float))
    n = k2.size
    y = np.concatenate([np.ones(n), np.zeros(n), np.zeros(n), np.ones(n)])
    pieces = []
    segs = _segments(potential)
    for lo, hi in segs:
        eps = 1e-12 * (hi - lo)

        def rhs(x, state, lo=lo, hi=hi, eps=eps):
            # V sampled strictly inside the segment so jumps sit on segment ends
            c = float(potential(np.array([min(max(x, lo + eps), hi - eps)]))[0]) - k2
            s = state.reshape(4, n)
            return np.concatenate([s[1], c * s[0], s[3], c * s[2]])

        sol = solve_ivp(rhs, (lo, hi), y, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        if not sol.success:
            raise ContinuumError(f"ODE integration across [{lo}, {hi}] failed: {sol.message}")
        pieces.append((lo, hi, sol.sol))
        y = sol.y[:, -1]
    return _Fundamental(k2, segs[0][0], segs[-1][1], tuple(pieces), y.reshape(4, n))


# --------------------------------------------------------------------------
# scattering states
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _ScatteringBatch:
    k: np.ndarray
    t: np.ndarray
    r: np.ndarray
    t_right: np.ndarray
    r_right: np.ndarray
    coef_left: np.ndarray   # (2, n): interior phiL = c0 u + c1 v
    coef_right: np.ndarray
    fund: _Fundamental | None

    def states(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """phiL and phiR at points x, shape (len(x), n), complex."""
        x = np.asarray(x, dtype=float).reshape(-1)
        k = self.k[None, :]
        X = x[:, None]
        if self.fund is None:
            return np.exp(1j * k * X), np.exp(-1j * k * X)
        xl, xr = self.fund.xl, self.fund.xr
        left = x < xl
        right = x > xr
        mid = ~left & ~right
        pl = np.empty((x.size, self.k.size), dtype=complex)
        pr = np.empty_like(pl)
        eL, eR = np.exp(1j * k * X[left]), np.exp(1j * k * X[right])
        pl[left] = eL + self.r * np.conj(eL)
        pr[left] = self.t_right * np.conj(eL)
        pl[right] = self.t * eR
        pr[right] = np.conj(eR) + self.r_right * eR
        if np.any(mid):
            u, v = self.fund.at(x[mid])
            pl[mid] = u * self.coef_left[0] + v * self.coef_left[1]
            pr[mid] = u * self.coef_right[0] + v * self.coef_right[1]
        return pl, pr


def _scatter(potential: Potential, k: np.ndarray) -> _ScatteringBatch:
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if np.any(k <= 0.0):
        raise ContinuumError("scattering wavenumbers must be positive")
    if potential.d != 1:
        raise ContinuumError("scattering states are implemented for d = 1 only")
    if potential.is_zero:
        one, zero = np.ones(k.size, complex), np.zeros(k.size, complex)
        return _ScatteringBatch(k, one, zero, one, zero, np.zeros((2, k.size)), np.zeros((2, k.size)), None)
    f = _fundamental(potential, k * k)
    u, up, v, vp = f.end
    det = u * vp - v * up
    xl, xr = f.xl, f.xr
    ik = 1j * k
    # left-incident: unit outgoing wave on the right, propagated back to xl
    er = np.exp(ik * xr)
    p = (vp * er - v * ik * er) / det
    q = (-up * er + u * ik * er) / det
    A = 0.5 * (p + q / ik) * np.exp(-ik * xl)
    B = 0.5 * (p - q / ik) * np.exp(ik * xl)
    coef_left = np.vstack([p, q]) / A
    # right-incident: unit outgoing wave on the left, propagated forward to xr
    el = np.exp(-ik * xl)
    p2, q2 = el, -ik * el
    P = u * p2 + v * q2
    Q = up * p2 + vp * q2
    C = 0.5 * (P + Q / ik) * np.exp(-ik * xr)
    D = 0.5 * (P - Q / ik) * np.exp(ik * xr)
    coef_right = np.vstack([p2 * np.ones_like(k), q2]) / D
    return _ScatteringBatch(k, 1.0 / A, B / A, 1.0 / D, C / D, coef_left, coef_right, f)


@dataclass(frozen=True, eq=False)
class ScatteringSolution:
    """Left- and right-incident scattering states at one wavenumber.

    ``phi_left`` is e^{ikx} + r e^{-ikx} to the left of supp V and t e^{ikx}
    to the right; ``phi_right`` is the mirror construction.
    """

    k: float
    r: complex
    t: complex
    r_right: complex
    t_right: complex
    _batch: _ScatteringBatch = field(repr=False)

    def phi_left(self, x) -> np.ndarray:
        return self._batch.states(x)[0][:, 0]

    def phi_right(self, x) -> np.ndarray:
        return self._batch.states(x)[1][:, 0]

    @property
    def flux_defect(self) -> float:
        return abs(abs(self.r) ** 2 + abs(self.t) ** 2 - 1.0)


def solve_scattering(potential: Potential, k: float) -> ScatteringSolution:
    b = _scatter(potential, np.array([float(k)]))
    return ScatteringSolution(float(k), complex(b.r[0]), complex(b.t[0]), complex(b.r_right[0]),
                              complex(b.t_right[0]), b)


# --------------------------------------------------------------------------
# bound states
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundState:
    energy: float
    kappa: float
    scale: float          # 1 / sqrt(int psi^2) for the unnormalised shooting solution
    unreliable: bool
    _fund: _Fundamental = field(repr=False)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        f, kap = self._fund, self.kappa
        out = np.empty(x.size)
        left, right = x < f.xl, x > f.xr
        mid = ~left & ~right
        u_r, up_r, v_r, vp_r = f.end[:, 0]
        psi_r = u_r + kap * v_r
        out[left] = np.exp(kap * (x[left] - f.xl))
        out[right] = psi_r * np.exp(-kap * (x[right] - f.xr))
        if np.any(mid):
            u, v = f.at(x[mid])
            out[mid] = u[:, 0] + kap * v[:, 0]
        return self.scale * out


def _matching(potential: Potential, kappa: np.ndarray) -> np.ndarray:
    f = _fundamental(potential, -kappa * kappa)
    u, up, v, vp = f.end
    # psi = u + kappa v decays to the left; demand psi' + kappa psi = 0 at xr
    return (up + kappa * vp) + kappa * (u + kappa * v)


def bound_states(potential: Potential, grid_points: int = 400, xtol: float = 1e-12) -> list[BoundState]:
    """All negative eigenvalues of -d^2/dx^2 + V, ordered by energy."""
    if potential.d != 1:
        raise ContinuumError("bound states are implemented for d = 1 only")
    vmin = potential.min_value
    if potential.is_zero or vmin >= 0.0:
        return []
    kmax = math.sqrt(-vmin)
    grid = np.linspace(0.0, kmax, grid_points + 1)[1:]
    g = _matching(potential, grid)
    # rescale to tame exponential growth; only signs matter
    s = np.sign(g)
    roots = []
    for i in np.nonzero(s[:-1] * s[1:] < 0)[0]:
        roots.append(brentq(lambda kp: float(_matching(potential, np.array([kp]))[0]),
                            grid[i], grid[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    out = []
    for kap in sorted(roots, reverse=True):
        f = _fundamental(potential, np.array([-kap * kap]))
        interior = _interior_norm(potential, kap)
        u_r, _, v_r, _ = f.end[:, 0]
        psi_r = u_r + kap * v_r
        total = interior + (1.0 + psi_r ** 2) / (2.0 * kap)
        energy = -kap * kap
        out.append(BoundState(energy, kap, 1.0 / math.sqrt(total), abs(energy) < 1e-8, f))
    return out


def _interior_norm(potential: Potential, kappa: float) -> float:
    y = np.array([1.0, kappa, 0.0])
    for lo, hi in _segments(potential):
        eps = 1e-12 * (hi - lo)

        def rhs(x, s, lo=lo, hi=hi, eps=eps):
            c = float(potential(np.array([min(max(x, lo + eps), hi - eps)]))[0]) + kappa * kappa
            return np.array([s[1], c * s[0], s[0] * s[0]])

        sol = solve_ivp(rhs, (lo, hi), y, method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL)
        if not sol.success:
            raise ContinuumError(f"normalisation integral failed: {sol.message}")
        y = sol.y[:, -1]
    return float(y[2])


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

def _sine_kernel(diff: np.ndarray, kF: float) -> np.ndarray:
    z = kF * np.asarray(diff, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < SINC_SERIES_CUTOFF
    zs = z[small]
    out[small] = 1.0 - zs * zs / 6.0
    zb = z[~small]
    out[~small] = np.sin(zb) / zb
    return out * (kF / math.pi)


def _bessel_kernel(dist: np.ndarray, kF: float) -> np.ndarray:
    z = kF * np.asarray(dist, dtype=float)
    out = np.empty_like(z)
    small = z < SINC_SERIES_CUTOFF
    zs = z[small]
    # 2 J1(z)/z = 1 - z^2/8 + ...
    out[small] = 1.0 - zs * zs / 8.0
    zb = z[~small]
    out[~small] = 2.0 * special.j1(zb) / zb
    return out * (kF * kF / (4.0 * math.pi))


@dataclass(frozen=True, eq=False)
class KernelEvaluator:
    """Integral kernel of the Fermi projection below E.

    ``kind`` is ``"free"`` or ``"scattering"``; scattering kernels carry their
    potential, bound states and the largest |x| for which the k-quadrature was
    validated.
    """

    d: int
    E: float
    kind: str
    potential: Potential | None = None
    bound: tuple[BoundState, ...] = ()
    extent: float = math.inf
    k_nodes: np.ndarray | None = field(default=None, repr=False)
    k_weights: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)
    _batch: _ScatteringBatch | None = field(default=None, repr=False)

    @property
    def k_fermi(self) -> float:
        return math.sqrt(self.E)

    def features(self, x) -> np.ndarray:
        """Real feature matrix F(x) with K(x, y) = F(x) . F(y)."""
        if self.kind != "scattering":
            raise ContinuumError("feature maps exist only for scattering kernels")
        x = np.asarray(x, dtype=float).reshape(-1)
        pl, pr = self._batch.states(x)
        sw = np.sqrt(self.k_weights / (2.0 * math.pi))
        cols = [b(x)[:, None] for b in self.bound]
        cols += [pl.real * sw, pl.imag * sw, pr.real * sw, pr.imag * sw]
        return np.hstack(cols)

    def __call__(self, x, y) -> np.ndarray:
        """K at paired points (broadcast over leading shape)."""
        kF = self.k_fermi
        if self.kind == "free":
            x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
            if self.d == 1:
                return _sine_kernel(x - y, kF)
            return _bessel_kernel(np.linalg.norm(x - y, axis=-1), kF)
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        shape = x.shape
        return np.sum(self.features(x.ravel()) * self.features(y.ravel()), axis=1).reshape(shape)

    def matrix(self, x, y=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = x if y is None else np.asarray(y, dtype=float)
        if self.kind == "scattering":
            Fx = self.features(x)
            Fy = Fx if y is x else self.features(y)
            return Fx @ Fy.T
        if self.d == 1:
            return self(x[:, None], y[None, :])
        return self(x[:, None, :], y[None, :, :])


def free_kernel(E: float, d: int) -> KernelEvaluator:
    if not E > 0.0:
        raise ModelError("E must be positive")
    if d not in (1, 2):
        raise ModelError("free kernels are available for d = 1 and d = 2")
    return KernelEvaluator(d, float(E), "free")


def _k_panels(kF: float, extent: float, potential: Potential, panel_phase: float,
              spike_factor: float = 10.0) -> np.ndarray:
    """Panel edges on [0, kF]; phase per panel <= panel_phase, extra edges at |dr/dk| spikes."""
    span = 2.0 * max(extent, potential.support, 1.0)
    n = max(1, math.ceil(kF * span / panel_phase))
    edges = set(np.linspace(0.0, kF, n + 1).tolist())
    if not potential.is_zero:
        ks = np.linspace(kF / 512, kF, 512)
        r = _scatter(potential, ks).r
        slope = np.abs(np.diff(r)) / np.diff(ks)
        med = np.median(slope)
        for i in np.nonzero(slope > spike_factor * max(med, 1e-12))[0]:
            edges.add(float(0.5 * (ks[i] + ks[i + 1])))
    return np.array(sorted(edges))


def _gauss_panels(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    return (0.5 * (hi - lo) * t + 0.5 * (hi + lo)).ravel(), (0.5 * (hi - lo) * w).ravel()


def _scattering_kernel(potential, E, extent, edges, order, bound) -> KernelEvaluator:
    k, w = _gauss_panels(edges, order)
    batch = _scatter(potential, k)
    return KernelEvaluator(1, E, "scattering", potential, tuple(bound), float(extent), k, w,
                           {"k_panels": int(edges.size - 1), "k_order": order}, batch)


def perturbed_kernel(potential: Potential, E: float, extent: float = 10.0,
                     rel_tol: float = 1e-7, order: int = K_PANEL_ORDER,
                     panel_phase: float = K_PANEL_PHASE, max_refinements: int = 3,
                     check_pairs: int = 64) -> KernelEvaluator:
    """Fermi-projection kernel of -d^2/dx^2 + V valid for |x|, |y| <= extent.

    The k-integral is accepted once halving every panel changes the kernel on
    ``check_pairs`` sample pairs by less than ``rel_tol`` relative to kF/pi.
    """
    if potential.d != 1:
        raise ContinuumError("perturbed kernels are implemented for d = 1 only")
    if not E > 0.0:
        raise ModelError("E must be positive")
    kF = math.sqrt(E)
    bound = bound_states(potential)
    edges = _k_panels(kF, extent, potential, panel_phase)
    rng = np.random.default_rng(12345)
    xs = rng.uniform(-extent, extent, (check_pairs, 2))
    xs[: check_pairs // 4, 1] = xs[: check_pairs // 4, 0]
    scale = kF / math.pi
    K = _scattering_kernel(potential, E, extent, edges, order, bound)
    for _ in range(max_refinements + 1):
        fine = np.sort(np.concatenate([edges, 0.5 * (edges[:-1] + edges[1:])]))
        K2 = _scattering_kernel(potential, E, extent, fine, order, bound)
        err = float(np.max(np.abs(K(xs[:, 0], xs[:, 1]) - K2(xs[:, 0], xs[:, 1])))) / scale
        if err <= rel_tol:
            K.meta["k_check_error"] = err
            return K
        log.info("k-quadrature change %.2e > %.1e; refining to %d panels", err, rel_tol, fine.size - 1)
        edges, K = fine, K2
    raise ContinuumError(f"k-quadrature did not converge: change {err:.2e} > {rel_tol:.1e}")


# --------------------------------------------------------------------------
# Nystroem discretisation
# --------------------------------------------------------------------------

def panel_nodes(lo: float, hi: float, kF: float, order: int = 16, nodes_per_wavelength: float = 10.0,
                breakpoints=()) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on [lo, hi] with panel edges at ``breakpoints``."""
    if nodes_per_wavelength < MIN_NODES_PER_WAVELENGTH:
        raise ContinuumError(
            f"{nodes_per_wavelength} nodes per Fermi wavelength is below the minimum of {MIN_NODES_PER_WAVELENGTH:g}")
    cuts = sorted({lo, hi, *[b for b in breakpoints if lo < b < hi]})
    wavelength = 2.0 * math.pi / kF
    edges = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(1, math.ceil((b - a) / wavelength * nodes_per_wavelength / order))
        edges.append(np.linspace(a, b, n + 1)[:-1])
    edges = np.concatenate(edges + [np.array([hi])])
    return _gauss_panels(edges, order)


def _gram_eigenvalues(G: np.ndarray) -> np.ndarray:
    n, m = G.shape
    if m < n:
        return np.concatenate([np.zeros(n - m), np.linalg.eigvalsh(G.T @ G)])
    return np.linalg.eigvalsh(G @ G.T)


def _square_sector_eigenvalues(kernel: KernelEvaluator, x: np.ndarray, w: np.ndarray,
                               chunk: int = 512) -> np.ndarray:
    """Free 2D kernel on a centred square via the four reflection-parity sectors."""
    kF = kernel.k_fermi
    X, Y = np.meshgrid(x, x, indexing="ij")
    X, Y = X.ravel(), Y.ravel()
    sw = np.sqrt(np.outer(w, w).ravel())
    n = X.size
    out = []
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            M = np.empty((n, n))
            for s in range(0, n, chunk):
                rows = slice(s, min(s + chunk, n))
                dx0 = X[rows, None] - X[None, :]
                dxs = X[rows, None] + X[None, :]
                dy0 = Y[rows, None] - Y[None, :]
                dys = Y[rows, None] + Y[None, :]
                blk = _bessel_kernel(np.hypot(dx0, dy0), kF)
                blk += sx * _bessel_kernel(np.hypot(dxs, dy0), kF)
                blk += sy * _bessel_kernel(np.hypot(dx0, dys), kF)
                blk += sx * sy * _bessel_kernel(np.hypot(dxs, dys), kF)
                M[rows] = blk * sw[rows, None] * sw[None, :]
            out.append(np.linalg.eigvalsh(M))
            del M
    return np.concatenate(out)


def _disk_eigenvalues(kernel: KernelEvaluator, radius: float, order: int, ppw: float) -> np.ndarray:
    """Free 2D kernel on a disk: polar product rule, block-diagonal in the angular mode."""
    kF = kernel.k_fermi
    r, wr = panel_nodes(0.0, radius, kF, order, ppw)
    m = max(8, math.ceil(radius * kF * ppw))
    phi = 2.0 * math.pi * np.arange(m) / m
    # distance between (r_i, 0) and (r_j, phi_q)
    d2 = r[:, None, None] ** 2 + r[None, :, None] ** 2 - 2.0 * np.outer(r, r)[:, :, None] * np.cos(phi)
    Kq = _bessel_kernel(np.sqrt(np.maximum(d2, 0.0)), kF)
    # circulant in the angle: eigenvalues per angular mode from a real FFT
    modes = np.fft.fft(Kq, axis=2).real
    sw = np.sqrt(wr * r * (2.0 * math.pi / m))
    out = [np.linalg.eigvalsh(modes[:, :, l] * sw[:, None] * sw[None, :]) for l in range(m)]
    return np.concatenate(out)


def nystrom_spectrum(kernel: KernelEvaluator, domain: Domain, order: int = 16,
                     nodes_per_wavelength: float = 10.0) -> TruncatedSpectrum:
    """Eigenvalues of the kernel restricted to ``domain`` by panel Gauss-Legendre Nystroem."""
    if kernel.d != domain.d:
        raise ModelError("kernel and domain dimensions differ")
    kF = kernel.k_fermi
    meta = {"order": order, "nodes_per_wavelength": nodes_per_wavelength, "kernel": kernel.kind}
    if domain.d == 1:
        a, b = domain.params
        if max(-a, b) > kernel.extent * (1.0 + 1e-12):
            raise ContinuumError(f"domain reaches |x| = {max(-a, b)} but the kernel is valid up to {kernel.extent}")
        bps = kernel.potential.breakpoints() if kernel.potential is not None else ()
        x, w = panel_nodes(a, b, kF, order, nodes_per_wavelength, bps)
        sw = np.sqrt(w)
        if kernel.kind == "scattering":
            ev = _gram_eigenvalues(kernel.features(x) * sw[:, None])
        else:
            ev = np.linalg.eigvalsh(kernel.matrix(x) * sw[:, None] * sw[None, :])
        meta["nodes"] = int(x.size)
    elif domain.kind == "square":
        (half,) = domain.params
        x, w = panel_nodes(0.0, half, kF, order, nodes_per_wavelength)
        ev = _square_sector_eigenvalues(kernel, x, w)
        meta["nodes"] = int(4 * x.size ** 2)
    else:
        (radius,) = domain.params
        ev = _disk_eigenvalues(kernel, radius, order, nodes_per_wavelength)
        meta["nodes"] = int(ev.size)
    return TruncatedSpectrum(clip_unit(ev), domain.scale, "continuum", domain, meta)
