"""Named pass/fail/inconclusive checks run by ``szegolab verify``.

Every check is a zero-argument callable returning a ``CheckResult``; ``run_checks``
isolates them so one exception never hides the verdicts of the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import lattice
from .asymptotics import SweepTable, lattice_projections, non_increasing, stability_report, top_half
from .model import ModelConfig, scale_domain
from .schatten import (bound_shape_check, diff_stats, interpolation_check, telescope_bound_check,
                       trace_h)
from .testfn import poly_basis
from .widom import N0_CONVENTIONS, n0

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
PLATEAU_FACTOR = 1.1
IDENTITY_RTOL = 1e-10


@dataclass(frozen=True)
class CheckResult:
    status: str
    detail: str = ""
    data: dict | None = None

    def to_dict(self) -> dict:
        out = {"status": self.status, "detail": self.detail}
        if self.data:
            out["data"] = self.data
        return out


def _verdict(ok: bool) -> str:
    return PASS if ok else FAIL


def run_checks(checks: dict[str, Callable[[], CheckResult]]) -> dict[str, CheckResult]:
    out = {}
    for name, fn in checks.items():
        try:
            out[name] = fn()
        except Exception as exc:  # isolate: report and continue with the next check
            out[name] = CheckResult(FAIL, f"{type(exc).__name__}: {exc}")
    return out


# --------------------------------------------------------------------------
# individual checks
# --------------------------------------------------------------------------

def stability_check(table_V: SweepTable, table_0: SweepTable, label: str) -> CheckResult:
    rep = stability_report(table_V, table_0, label)
    return CheckResult(rep.verdict,
                       f"b_V={rep.b_V:.6g} b_0={rep.b_0:.6g} tol={rep.b_tolerance:.2g} "
                       f"ratio non-increasing on top half: {rep.ratio_non_increasing}",
                       rep.to_dict())


def prediction_check(b_hat: float, b_pred: float, rtol: float = 0.05) -> CheckResult:
    if b_pred == 0.0:
        return CheckResult(INCONCLUSIVE, "predicted coefficient is zero; relative match undefined")
    rel = (b_hat - b_pred) / b_pred
    return CheckResult(_verdict(abs(rel) <= rtol), f"b_hat={b_hat:.6g} b_pred={b_pred:.6g} rel={rel:+.3%}",
                       {"b_hat": b_hat, "b_pred": b_pred, "rel_err": rel})


def ids_arbitration(E: float, d: int, convention: str) -> CheckResult:
    """The configured N0 convention must be the one closest to eigenvalue counting."""
    est = lattice.ids_estimate(E, d)
    vals = {c: n0(E, d, c) for c in N0_CONVENTIONS}
    best = min(vals, key=lambda c: abs(vals[c] - est))
    return CheckResult(_verdict(best == convention),
                       f"counting density {est:.6g}; " + ", ".join(f"{c}={v:.6g}" for c, v in vals.items())
                       + f"; closest: {best}", {"estimate": est, **vals, "selected": best})


@dataclass(frozen=True)
class BlockRow:
    L: float
    q2: float
    tr_s1: float
    pdiff2: float
    trdiff: float
    qdiff_hs: float
    qdiff2s: dict
    telescope: tuple
    sigma: np.ndarray
    count_shift: int


def block_rows(config: ModelConfig, L_grid, s_list, telescope_n=(1, 2, 3, 4)) -> list[BlockRow]:
    rows = []
    s1 = poly_basis(1)
    for L in L_grid:
        op, fp, fp0 = lattice_projections(config, float(L), None)
        region = scale_domain(config.domain, float(L))
        rep = diff_stats(fp, fp0, region, op, s_list)
        spectrum = lattice.truncate_spectrum(fp, region, op)
        tel = tuple(telescope_bound_check(fp, fp0, region, op, n) for n in telescope_n)
        rows.append(BlockRow(float(L), rep.q2, trace_h(spectrum, s1), rep.pdiff2, rep.trdiff, rep.qdiff_hs,
                             rep.qdiff2s, tel, rep.qdiff_sigma, rep.count_shift))
    return rows


def identity_check(rows: list[BlockRow]) -> CheckResult:
    err = max(abs(r.q2 - r.tr_s1) / max(abs(r.tr_s1), 1e-300) for r in rows)
    return CheckResult(_verdict(err <= IDENTITY_RTOL), f"max relative deviation {err:.2e}", {"max_rel": err})


def telescope_check(rows: list[BlockRow]) -> CheckResult:
    bad = [(r.L, i + 1) for r in rows for i, c in enumerate(r.telescope) if not c.holds]
    worst = max(c.lhs / c.rhs if c.rhs > 0 else (0.0 if c.lhs == 0 else math.inf)
                for r in rows for c in r.telescope)
    return CheckResult(_verdict(not bad), f"max lhs/rhs {worst:.3g}; violations {bad}", {"worst": worst})


def plateau_check(L, values, factor: float = PLATEAU_FACTOR) -> CheckResult:
    """Over the top half of the sweep the value stays below factor x its value at the half-way row."""
    values = np.asarray(values, dtype=float)
    top = values[top_half(values.size)]
    ref = top[0]
    ok = bool(np.max(top) <= factor * ref)
    return CheckResult(_verdict(ok), f"top-half max {np.max(top):.6g} vs {factor} x {ref:.6g}",
                       {"values": values.tolist()})


def log_ratio_check(L, values, require_decrease: bool) -> CheckResult:
    """values/ln L bounded (top-half max <= overall bottom-half max) and optionally non-increasing."""
    L = np.asarray(L, dtype=float)
    ratio = np.abs(np.asarray(values, dtype=float)) / np.log(L)
    half = top_half(L.size)
    bounded = bool(np.max(ratio[half]) <= np.max(ratio[: half.start]) * (1.0 + 1e-9))
    mono = non_increasing(ratio[half])
    if not bounded:
        status = FAIL
    elif require_decrease and not mono:
        status = FAIL
    else:
        status = PASS
    return CheckResult(status, f"ratio {ratio[0]:.4g} -> {ratio[-1]:.4g}; bounded {bounded}; "
                               f"top half non-increasing {mono}", {"ratio": ratio.tolist()})


def interpolation_suite(sigmas, n_random: int = 200, seed: int = 2024) -> CheckResult:
    rng = np.random.default_rng(seed)
    failures = 0
    total = 0
    for _ in range(n_random):
        sig = rng.lognormal(-1.0, 1.5, rng.integers(1, 60))
        p0 = rng.uniform(0.05, 2.0)
        p1 = rng.uniform(p0, 6.0)
        total += 1
        failures += not interpolation_check(sig, p0, p1, rng.uniform()).holds
    for sig in sigmas:
        for s in (0.6, 0.8, 1.0):
            for p0 in (0.1, 0.5, min(1.0, 2.0 * s)):
                theta = 1.0 - (p0 / s) * (1.0 - s) / (2.0 - p0)
                total += 1
                failures += not interpolation_check(sig, p0, 2.0, theta).holds
    return CheckResult(_verdict(failures == 0), f"{failures} violations in {total} instances")


def bound_shape_suite(L, rows: list[BlockRow], s_list, d: int) -> CheckResult:
    out = {}
    ok = True
    for s in s_list:
        b = bound_shape_check(L, [r.qdiff2s[float(s)] for r in rows], s, d)
        out[f"{s:g}"] = {"exponent": b.exponent, "constant": b.constant, "worst_ratio": b.worst_ratio}
        ok &= b.holds
    return CheckResult(_verdict(ok), "; ".join(f"s={k}: C={v['constant']:.4g} worst={v['worst_ratio']:.3g}"
                                               for k, v in out.items()), out)


def small_o_trend(L, rows: list[BlockRow], s_list, d: int) -> CheckResult:
    """||Q_L - Q_{L,0}||_{2s}^{2s} / L^(d-1) non-increasing over the top half (s > 1/d)."""
    L = np.asarray(L, dtype=float)
    bad = []
    for s in s_list:
        if not s > 1.0 / d:
            continue
        v = np.array([r.qdiff2s[float(s)] for r in rows]) / L ** (d - 1)
        if not non_increasing(v[top_half(L.size)]):
            bad.append(s)
    return CheckResult(PASS if not bad else INCONCLUSIVE, f"non-monotone for s in {bad}" if bad else "")


def block_checks(config: ModelConfig, L_grid, s_list) -> dict[str, Callable[[], CheckResult]]:
    """All block-norm checks of a lattice sweep (rows computed once, lazily)."""
    memo: dict = {}

    def rows():
        if "rows" not in memo:
            memo["rows"] = block_rows(config, L_grid, s_list)
        return memo["rows"]

    L = np.asarray(L_grid, dtype=float)
    checks = {
        "identity_q2_trace_s1": lambda: identity_check(rows()),
        "telescope_bound": lambda: telescope_check(rows()),
        "interpolation_inequality": lambda: interpolation_suite([r.sigma for r in rows()]),
        "qdiff_hs_plateau": lambda: plateau_check(L, [r.qdiff_hs for r in rows()]),
        "pdiff_hs2_over_lnL": lambda: log_ratio_check(L, [r.pdiff2 ** 2 for r in rows()], True),
        "trdiff_over_lnL": lambda: log_ratio_check(L, [r.trdiff for r in rows()], False),
        "qdiff_bound_shape": lambda: bound_shape_suite(L, rows(), s_list, config.d),
        "box_count_match": lambda: _count_match(rows()),
    }
    if config.d >= 2:
        checks["qdiff_small_o_trend"] = lambda: small_o_trend(L, rows(), s_list, config.d)
    return checks


def _count_match(rows: list[BlockRow]) -> CheckResult:
    shifts = sorted({r.count_shift for r in rows})
    if shifts == [0]:
        return CheckResult(PASS, "box holds equally many states below E with and without V")
    return CheckResult(INCONCLUSIVE, f"box state counts differ by {shifts}; difference norms carry an "
                                     "O(L/R) box contribution")
