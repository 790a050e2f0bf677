"""Spatial domains, compactly supported potentials and the model configuration.

Domains are centred so that the origin is an interior point.  Measures are
exact: ``volume`` is the Lebesgue measure of the region and ``surface`` the
(d-1)-dimensional measure of its boundary, which for ``d == 1`` is the number
of endpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

DOMAIN_KINDS = ("interval", "square", "disk")
POTENTIAL_KINDS = ("zero", "square", "bump", "wells")
ENGINES = ("lattice", "continuum")


class ModelError(ValueError):
    """Invalid geometry, potential or configuration."""


@dataclass(frozen=True)
class Domain:
    """Bounded region ``L * Lambda`` with ``Lambda`` one of the supported shapes.

    ``params`` holds the *scaled* shape parameters: ``(a, b)`` for an interval,
    ``(w,)`` (half-width) for a square and ``(r,)`` for a disk.  ``scale`` is the
    accumulated factor relative to the unscaled shape.
    """

    d: int
    kind: str
    params: tuple[float, ...]
    scale: float = 1.0

    @property
    def volume(self) -> float:
        if self.kind == "interval":
            a, b = self.params
            return b - a
        if self.kind == "square":
            (w,) = self.params
            return (2.0 * w) ** 2
        (r,) = self.params
        return math.pi * r * r

    @property
    def surface(self) -> float:
        if self.kind == "interval":
            return 2.0
        if self.kind == "square":
            (w,) = self.params
            return 8.0 * w
        (r,) = self.params
        return 2.0 * math.pi * r

    @property
    def extent(self) -> float:
        """Largest sup-norm |x| over the closed region."""
        if self.kind == "interval":
            return max(-self.params[0], self.params[1])
        return self.params[0]

    @property
    def unscaled(self) -> "Domain":
        return scale_domain(self, 1.0 / self.scale, _allow_shrink=True)

    def contains(self, x: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
        """Membership of points in the closed region (small outward tolerance)."""
        x = np.asarray(x, dtype=float)
        tol = rtol * max(1.0, self.extent)
        if self.d == 1:
            x = x.reshape(-1) if x.ndim <= 1 else x[..., 0]
            a, b = self.params
            return (x >= a - tol) & (x <= b + tol)
        x = x.reshape(-1, 2)
        if self.kind == "square":
            return np.max(np.abs(x), axis=1) <= self.params[0] + tol
        return np.hypot(x[:, 0], x[:, 1]) <= self.params[0] + tol

    def describe(self) -> dict:
        return {"d": self.d, "kind": self.kind, "params": list(self.params), "scale": self.scale}


def make_domain(kind: str, *params: float) -> Domain:
    """Build an unscaled domain.

    ``make_domain("interval", -1, 1)``, ``make_domain("square", 1.0)`` (half-width)
    and ``make_domain("disk", 1.0)`` (radius) are the supported forms.
    """
    if kind not in DOMAIN_KINDS:
        raise ModelError(f"unknown domain kind {kind!r}; expected one of {DOMAIN_KINDS}")
    vals = tuple(float(p) for p in params)
    if not all(math.isfinite(v) for v in vals):
        raise ModelError("domain parameters must be finite")
    if kind == "interval":
        if len(vals) != 2:
            raise ModelError("interval needs two endpoints a < 0 < b")
        a, b = vals
        if not a < 0.0 < b:
            raise ModelError(f"interval [{a}, {b}] must contain 0 in its interior")
        return Domain(1, kind, (a, b))
    if len(vals) != 1 or vals[0] <= 0.0:
        raise ModelError(f"{kind} needs one positive size parameter")
    return Domain(2, kind, vals)


def scale_domain(dom: Domain, L: float, _allow_shrink: bool = False) -> Domain:
    """Return ``L * dom``; sweeps only grow, so ``L < 1`` is rejected."""
    L = float(L)
    if not math.isfinite(L) or L <= 0.0 or (L < 1.0 and not _allow_shrink):
        raise ModelError(f"scale factor must be >= 1, got {L}")
    if L == 1.0:
        return dom
    return Domain(dom.d, dom.kind, tuple(p * L for p in dom.params), dom.scale * L)


@dataclass(frozen=True)
class Potential:
    """Bounded potential supported in the sup-norm ball of radius ``support``.

    ``wells`` is a tuple of ``(centre, v0, half_width)`` triples; the single
    ``square`` and ``bump`` kinds are centred at the origin.
    """

    d: int
    kind: str
    v0: float = 0.0
    a: float = 0.0
    wells: tuple[tuple[float, float, float], ...] = ()

    @property
    def support(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "wells":
            return max(abs(c) + w for c, _, w in self.wells)
        return self.a

    @property
    def sup_norm(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "wells":
            return float(sum(abs(v) for _, v, _ in self.wells))
        return abs(self.v0)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def min_value(self) -> float:
        """Lower bound for V (exact for the single-well kinds)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "wells":
            return float(sum(min(v, 0.0) for _, v, _ in self.wells))
        return min(self.v0, 0.0)

    def breakpoints(self) -> tuple[float, ...]:
        """Sorted points where a 1D potential (or its support) has edges."""
        if self.kind == "zero":
            return ()
        if self.kind == "wells":
            pts = {p for c, _, w in self.wells for p in (c - w, c + w)}
            return tuple(sorted(pts))
        return (-self.a, self.a)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            r_inf = np.abs(x)
        else:
            r_inf = np.max(np.abs(x), axis=-1)
        if self.kind == "zero":
            return np.zeros_like(r_inf)
        if self.kind == "square":
            return np.where(r_inf <= self.a, self.v0, 0.0)
        if self.kind == "bump":
            if self.d == 1:
                r = r_inf
            else:
                r = np.sqrt(np.sum(x * x, axis=-1))
            u = np.clip(r / self.a, 0.0, 1.0)
            inside = u < 1.0
            out = np.zeros_like(u)
            ui = u[inside]
            out[inside] = self.v0 * np.exp(1.0 - 1.0 / (1.0 - ui * ui))
            return out
        # wells: 1D sum of square wells, or d = 2 with sup-norm squares at c*(1, 0)
        out = np.zeros_like(r_inf)
        for c, v, w in self.wells:
            if self.d == 1:
                out = out + np.where(np.abs(x - c) <= w, v, 0.0)
            else:
                shifted = x - np.array([c, 0.0])
                out = out + np.where(np.max(np.abs(shifted), axis=-1) <= w, v, 0.0)
        return out

    def describe(self) -> dict:
        out: dict = {"d": self.d, "kind": self.kind}
        if self.kind in ("square", "bump"):
            out.update(v0=self.v0, a=self.a)
        elif self.kind == "wells":
            out["wells"] = [list(w) for w in self.wells]
        return out


def make_potential(kind: str, d: int = 1, v0: float = 0.0, a: float = 0.0,
                   wells: Sequence[Sequence[float]] = ()) -> Potential:
    """Validated constructor; unbounded or non-compact potentials are rejected."""
    if kind not in POTENTIAL_KINDS:
        raise ModelError(f"unknown potential kind {kind!r}; expected one of {POTENTIAL_KINDS}")
    if d not in (1, 2):
        raise ModelError(f"dimension must be 1 or 2, got {d}")
    if kind == "zero":
        return Potential(d, "zero")
    if kind == "wells":
        ws = tuple((float(c), float(v), float(w)) for c, v, w in wells)
        if not ws:
            raise ModelError("wells potential needs at least one (centre, v0, half_width)")
        for c, v, w in ws:
            if not (math.isfinite(c) and math.isfinite(v) and math.isfinite(w)):
                raise ModelError("potential must be bounded with compact support")
            if w <= 0.0:
                raise ModelError("well half-width must be positive")
        return Potential(d, "wells", wells=ws)
    v0, a = float(v0), float(a)
    if not math.isfinite(v0):
        raise ModelError("potential must be bounded (finite v0)")
    if not math.isfinite(a):
        raise ModelError("potential must have compact support (finite radius)")
    if a <= 0.0:
        raise ModelError("support radius must be positive")
    return Potential(d, kind, v0=v0, a=a)


def box_margin(E: float, potential: Potential) -> float:
    """Minimal distance between the region and the edge of the lattice box."""
    return max(8.0 / math.sqrt(E), 2.0 * potential.support, 5.0)


@dataclass(frozen=True)
class ModelConfig:
    """Physical model plus discretisation parameters for one engine.

    ``box_half_width`` fixes the lattice box; when ``None`` it is chosen per
    ``L`` as ``box_factor * L * extent + margin``.  A fixed box must still
    satisfy ``R >= L * extent + margin`` for every ``L`` it is used with.
    """

    E: float
    domain: Domain
    potential: Potential | None = None   # None means V = 0 in the domain's dimension
    engine: str = "continuum"
    spacing: float = 0.05
    box_half_width: float | None = None
    box_factor: float = 6.0
    quad_order: int = 16
    nodes_per_wavelength: float = 10.0
    site_cap: int | None = None

    def __post_init__(self):
        if self.potential is None:
            object.__setattr__(self, "potential", Potential(self.domain.d, "zero"))
        if not (math.isfinite(self.E) and self.E > 0.0):
            raise ModelError(f"Fermi energy must be positive, got {self.E}")
        if self.engine not in ENGINES:
            raise ModelError(f"unknown engine {self.engine!r}; expected one of {ENGINES}")
        if self.potential.d != self.domain.d:
            raise ModelError("potential and domain dimensions differ")
        if self.engine == "lattice":
            if self.spacing <= 0.0:
                raise ModelError("grid spacing must be positive")
            if math.sqrt(self.E) * self.spacing > 0.15 + 1e-12:
                raise ModelError(
                    f"sqrt(E)*h = {math.sqrt(self.E) * self.spacing:.3g} exceeds 0.15 "
                    "(lattice dispersion guard); reduce the spacing")
        if self.box_factor < 1.0:
            raise ModelError("box_factor must be >= 1")
        if self.quad_order < 2:
            raise ModelError("quad_order must be >= 2")
        if self.nodes_per_wavelength < 6.0:
            raise ModelError("need at least 6 quadrature nodes per Fermi wavelength")

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def k_fermi(self) -> float:
        return math.sqrt(self.E)

    def box_for(self, L: float) -> float:
        """Lattice box half-width for region scale ``L``, rounded to the grid."""
        need = L * self.domain.extent + box_margin(self.E, self.potential)
        if self.box_half_width is None:
            R = self.box_factor * L * self.domain.extent + box_margin(self.E, self.potential)
        else:
            R = float(self.box_half_width)
            if R < need - 1e-9:
                raise ModelError(
                    f"box half-width {R} too small for L={L}: need >= {need:.6g} "
                    "(region extent plus margin)")
        return math.ceil(R / self.spacing - 1e-9) * self.spacing

    def with_potential(self, potential: Potential) -> "ModelConfig":
        return replace(self, potential=potential)

    def free(self) -> "ModelConfig":
        return replace(self, potential=Potential(self.d, "zero"))
