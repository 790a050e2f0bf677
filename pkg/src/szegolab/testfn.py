"""Test functions h : [0, 1] -> R entering tr h(P_L).

Built-ins are addressable by name: ``renyi:<alpha>:bits|nats``, ``s:<n>``,
``a:<n>`` and ``id``.  Evaluators are vectorised and picklable (module-level
functions bound with ``functools.partial``) so sweeps can ship them to worker
processes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

# dyadic grid 2^-5 ... 2^-30 used for all endpoint asymptotics
MEMBERSHIP_GRID = 2.0 ** -np.arange(5, 31)
SLOPE_TOL = 0.05


class TestFunctionError(ValueError):
    """Bad test-function name or a non-finite evaluation."""


@dataclass(frozen=True)
class TestFunction:
    label: str
    func: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    holder: float | None = None
    symmetric: bool = False
    log_base: str | None = None

    def __call__(self, lam):
        return self.func(np.asarray(lam, dtype=float))

    @property
    def at_one(self) -> float:
        return float(self.func(np.array([1.0]))[0])

    @property
    def is_entropy(self) -> bool:
        return self.log_base is not None


def _renyi_eval(lam: np.ndarray, alpha: float, log_base: str) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    # evaluate on the lower half so that h(lam) == h(1 - lam) bit for bit
    u = np.minimum(lam, 1.0 - lam)
    out = np.zeros_like(u)
    m = u > 0.0
    um = u[m]
    if alpha == 1.0:
        out[m] = -um * np.log(um) - (1.0 - um) * np.log1p(-um)
    else:
        # log(u^a + (1-u)^a) = log1p(u^a + expm1(a*log1p(-u)))
        inner = um ** alpha + np.expm1(alpha * np.log1p(-um))
        out[m] = np.log1p(inner) / (1.0 - alpha)
    if log_base == "bits":
        out = out / math.log(2.0)
    return out


def renyi(alpha: float, log_base: str = "nats") -> TestFunction:
    """Renyi entropy function h_alpha (von Neumann for alpha == 1), 0 log 0 := 0."""
    alpha = float(alpha)
    if not alpha > 0.0 or not math.isfinite(alpha):
        raise TestFunctionError(f"Renyi index must be positive, got {alpha}")
    if log_base not in ("bits", "nats"):
        raise TestFunctionError(f"log base must be 'bits' or 'nats', got {log_base!r}")
    # the von Neumann case is O(lam^a) for every a < 1 but not for a = 1
    holder = None if alpha == 1.0 else min(alpha, 1.0)
    return TestFunction(f"renyi:{alpha:g}:{log_base}", partial(_renyi_eval, alpha=alpha, log_base=log_base),
                        holder=holder, symmetric=True, log_base=log_base)


def _s_eval(lam, n):
    return (lam * (1.0 - lam)) ** n


def _a_eval(lam, n):
    return lam * (lam * (1.0 - lam)) ** n


def _identity(lam):
    return np.array(lam, dtype=float, copy=True)


def poly_basis(n: int, kind: str = "s") -> TestFunction:
    """s_n = [lam(1-lam)]^n (symmetric) or a_n = lam * s_n."""
    if int(n) != n or n < 1:
        raise TestFunctionError(f"polynomial index must be >= 1, got {n} (s_0 = 1 has h(0) != 0)")
    n = int(n)
    if kind == "s":
        return TestFunction(f"s:{n}", partial(_s_eval, n=n), holder=1.0, symmetric=True)
    if kind == "a":
        return TestFunction(f"a:{n}", partial(_a_eval, n=n), holder=1.0, symmetric=False)
    raise TestFunctionError(f"polynomial kind must be 's' or 'a', got {kind!r}")


def identity() -> TestFunction:
    return TestFunction("id", _identity, holder=1.0, symmetric=False)


def _shifted(lam, func, c):
    return func(lam) - c * lam


def shift_to_vanishing(h: TestFunction) -> TestFunction:
    """h - h(1) id, which vanishes at both endpoints."""
    c = h.at_one
    if c == 0.0:
        return h
    return TestFunction(f"{h.label}-({c:g})id", partial(_shifted, func=h.func, c=c),
                        holder=h.holder, symmetric=False)


def _linear(lam, funcs, coeffs):
    out = np.zeros_like(np.asarray(lam, dtype=float))
    for f, c in zip(funcs, coeffs):
        out = out + c * f(lam)
    return out


def linear_combination(coeffs, funcs, label: str | None = None) -> TestFunction:
    """sum_i c_i h_i as a new test function."""
    funcs = tuple(funcs)
    coeffs = tuple(float(c) for c in coeffs)
    holders = [f.holder for f in funcs if f.holder is not None]
    lbl = label or "+".join(f"{c:g}*{f.label}" for c, f in zip(coeffs, funcs))
    return TestFunction(lbl, partial(_linear, funcs=tuple(f.func for f in funcs), coeffs=coeffs),
                        holder=min(holders) if len(holders) == len(funcs) else None,
                        symmetric=all(f.symmetric for f in funcs))


def from_name(name: str) -> TestFunction:
    """Resolve a built-in test function by its config name."""
    parts = name.strip().split(":")
    try:
        if parts == ["id"]:
            return identity()
        if parts[0] == "renyi" and len(parts) in (2, 3):
            return renyi(float(parts[1]), parts[2] if len(parts) == 3 else "nats")
        if parts[0] in ("s", "a") and len(parts) == 2:
            return poly_basis(int(parts[1]), parts[0])
    except (ValueError, TestFunctionError) as exc:
        raise TestFunctionError(f"bad test function {name!r}: {exc}") from None
    raise TestFunctionError(f"unknown test function {name!r}")


@dataclass(frozen=True)
class MembershipReport:
    d: int
    in_H_d: bool
    in_H_d0: bool
    estimated_alpha: float | None
    declared_alpha: float | None
    symmetric: bool | None
    log_ratio_limit: float | None = None
    cross_check_ok: bool = True
    notes: tuple[str, ...] = ()


def _loglog_slope(lam: np.ndarray, vals: np.ndarray) -> float:
    vals = np.abs(vals)
    if np.all(vals == 0.0):
        return math.inf
    if np.any(vals == 0.0):
        # zero on part of the grid: vanishes faster than any power there
        keep = vals > 0.0
        lam, vals = lam[keep], vals[keep]
        if lam.size < 2:
            return math.inf
    slope, _ = np.polyfit(np.log(lam), np.log(vals), 1)
    return float(slope)


def _evaluate(h: TestFunction, lam: np.ndarray) -> np.ndarray:
    vals = np.asarray(h(lam))
    if not np.all(np.isfinite(vals)):
        raise TestFunctionError(f"test function {h.label} returned non-finite values")
    return vals


def check_membership(h: TestFunction, d: int) -> MembershipReport:
    """Numerical membership test for the classes H_d and H_{d,0}.

    For ``d >= 2`` the Hoelder exponent is estimated as the least-squares
    log-log slope of ``|h(lam)|`` and ``|h(1) - h(1 - lam)|`` over the dyadic
    grid and compared with ``1/d`` (a declared exponent overrides the estimate
    after a cross-check).  For ``d == 1`` membership needs mirror symmetry and
    ``h(lam)/(lam ln lam) -> 0``; the limit is extrapolated linearly in
    ``1/|ln lam|`` from the points with ``lam <= 2^-15``.
    """
    if d < 1:
        raise TestFunctionError(f"dimension must be >= 1, got {d}")
    lam = MEMBERSHIP_GRID
    vals = _evaluate(h, lam)
    h0 = _evaluate(h, np.array([0.0]))[0]
    h1 = _evaluate(h, np.array([1.0]))[0]
    notes = []
    vanishes_at_0 = abs(h0) <= 1e-14
    if not vanishes_at_0:
        notes.append("h(0) != 0")
    upper = h1 - _evaluate(h, 1.0 - lam)

    if d == 1:
        grid = np.linspace(0.0, 1.0, 1001)
        sym = bool(np.max(np.abs(_evaluate(h, grid) - _evaluate(h, 1.0 - grid))) <= 1e-12)
        if not sym:
            notes.append("not mirror symmetric")
        ratio = np.abs(vals / (lam * np.log(lam)))
        u = 1.0 / np.abs(np.log(lam))
        # extrapolate from the fine half of the grid, away from power-law corrections
        fine = lam <= 2.0 ** -15
        limit = float(np.polyfit(u[fine], ratio[fine], 1)[1])
        vanish_fast = abs(limit) <= SLOPE_TOL * max(float(np.max(ratio)), 1e-300) or np.all(ratio == 0.0)
        if not vanish_fast:
            notes.append(f"h(lam)/(lam ln lam) -> {limit:.3g}, not 0")
        in_h = bool(vanishes_at_0 and sym and vanish_fast)
        est = min(_loglog_slope(lam, vals), _loglog_slope(lam, upper))
        return MembershipReport(d, in_h, bool(in_h and abs(h1) <= 1e-12), est, h.holder, sym,
                                log_ratio_limit=limit, notes=tuple(notes))

    est = min(_loglog_slope(lam, vals), _loglog_slope(lam, upper))
    alpha = est
    cross_ok = True
    if h.holder is not None:
        # a power law with exponent >= 1 cannot be resolved beyond the linear term
        cross_ok = abs(min(est, 1.0) - min(h.holder, 1.0)) <= SLOPE_TOL
        if not cross_ok:
            notes.append(f"declared alpha {h.holder} disagrees with estimate {est:.3f}")
        alpha = h.holder
    in_h = bool(vanishes_at_0 and alpha > 1.0 / d)
    return MembershipReport(d, in_h, bool(in_h and abs(h1) <= 1e-12), est, h.holder, None,
                            cross_check_ok=cross_ok, notes=tuple(notes))
