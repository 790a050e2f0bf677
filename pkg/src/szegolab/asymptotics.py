"""L-sweeps, coefficient fits and the V-independence verdict.

A sweep evaluates tr h(P_L) (and, on the lattice, the block norms) on a
geometric grid of scales.  Rows are independent, so they run in a process pool;
every worker pins its BLAS to one thread, which makes the numbers independent of
the worker count.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import continuum, lattice
from .cache import EigenCache
from .model import ModelConfig, ModelError, scale_domain
from .schatten import DEFAULT_S_LIST, NormReport, diff_stats, trace_h
from .testfn import TestFunction
from .widom import AsymptoticPrediction

log = logging.getLogger(__name__)

GRID_RATIO_RANGE = (1.15, 1.6)
MIN_GRID_POINTS = 8


class SweepError(RuntimeError):
    pass


class SweepAborted(SweepError):
    """A row failed; ``table`` holds the rows finished before it."""

    def __init__(self, message: str, table: "SweepTable"):
        super().__init__(message)
        self.table = table


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

def geometric_grid(kl_min: float, kl_max: float, points: int, k_fermi: float) -> np.ndarray:
    """Scales L with k_F L geometric between the two bounds."""
    if points < 2 or not 0.0 < kl_min < kl_max:
        raise ModelError("grid needs 0 < kl_min < kl_max and at least two points")
    return np.geomspace(kl_min, kl_max, points) / k_fermi


def validate_grid(L) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if L.ndim != 1 or L.size < MIN_GRID_POINTS:
        raise ModelError(f"an L-grid needs at least {MIN_GRID_POINTS} points, got {L.size}")
    if np.any(L < 1.0):
        raise ModelError("all scales must satisfy L >= 1")
    ratio = L[1:] / L[:-1]
    lo, hi = GRID_RATIO_RANGE
    if np.any(ratio < lo - 1e-9) or np.any(ratio > hi + 1e-9):
        raise ModelError(
            f"consecutive L ratios must lie in [{lo}, {hi}], got {ratio.min():.4g} .. {ratio.max():.4g}")
    return L


def phase_offsets(samples: int, k_fermi: float) -> np.ndarray:
    """Centred shifts of L spanning one period pi/k_F of the 2 k_F L oscillation.

    Averaging over ``samples >= 2`` equally spaced phases cancels the
    harmonics cos(2 m k_F L) for m = 1 .. samples - 1.
    """
    if samples < 1:
        raise ModelError("phase_samples must be >= 1")
    return (np.arange(samples) - 0.5 * (samples - 1)) * math.pi / (samples * k_fermi)


# --------------------------------------------------------------------------
# sweep rows
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    L: float
    traces: dict
    norms: NormReport | None
    seconds: float


@dataclass
class SweepTable:
    config: ModelConfig
    labels: tuple[str, ...]
    s_list: tuple[float, ...]
    rows: list[SweepRow] = field(default_factory=list)
    phase_samples: int = 1

    @property
    def engine(self) -> str:
        return self.config.engine

    @property
    def L(self) -> np.ndarray:
        return np.array([r.L for r in self.rows])

    def trace(self, label: str) -> np.ndarray:
        if label not in self.labels:
            raise KeyError(f"no trace column for {label!r}")
        return np.array([r.traces[label] for r in self.rows])

    def norm(self, name: str, s: float | None = None) -> np.ndarray:
        out = []
        for r in self.rows:
            if r.norms is None:
                out.append(math.nan)
            elif name == "qdiff2s":
                out.append(r.norms.qdiff2s[float(s)])
            else:
                out.append(getattr(r.norms, name))
        return np.array(out)

    def columns(self) -> list[str]:
        return (["L"] + [f"trace_{lab}" for lab in self.labels] + ["q2"]
                + [f"qdiff2s_{s:g}" for s in self.s_list] + ["pdiff2", "trdiff", "phi"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for r in self.rows:
            n = r.norms
            vals = [r.L] + [r.traces[lab] for lab in self.labels]
            if n is None:
                vals += [math.nan] * (1 + len(self.s_list) + 3)
            else:
                vals += [n.q2] + [n.qdiff2s[float(s)] for s in self.s_list] + [n.pdiff2, n.trdiff, n.phi]
            w.writerow([_fmt(v) for v in vals])
        return buf.getvalue()

    def timings(self) -> list[float]:
        return [r.seconds for r in self.rows]


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else format(float(v), ".17g")


def read_csv(text: str) -> tuple[list[str], np.ndarray]:
    """Header and float data of a sweep CSV."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SweepError("empty sweep file")
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    return header, data


_PROJECTION_MEMO: dict = {}


def lattice_projections(config: ModelConfig, L: float, cache: EigenCache | None):
    op = lattice.build_hamiltonian(config, L)
    key = (op.R, op.spacing, repr(op.potential), config.E)
    hit = _PROJECTION_MEMO.get(key)
    if hit is None:
        _PROJECTION_MEMO.clear()
        fp = lattice.fermi_projection(op, config.E, cache=cache)
        if op.potential.is_zero:
            fp0 = fp
        else:
            op0 = lattice.lattice_operator(op.d, op.spacing, op.R, config.free().potential, op.n_sites)
            fp0 = lattice.fermi_projection(op0, config.E, cache=cache)
        hit = _PROJECTION_MEMO[key] = (op, fp, fp0)
    return hit


def _continuum_spectrum(config: ModelConfig, L: float):
    dom = scale_domain(config.domain, L)
    if config.potential.is_zero:
        kernel = continuum.free_kernel(config.E, config.d)
    elif config.d == 1:
        kernel = continuum.perturbed_kernel(config.potential, config.E, extent=dom.extent)
    else:
        raise ModelError("the continuum engine handles V != 0 only in d = 1; use the lattice engine")
    return continuum.nystrom_spectrum(kernel, dom, config.quad_order, config.nodes_per_wavelength)


def compute_row(config: ModelConfig, L: float, hs: tuple[TestFunction, ...],
                s_list=DEFAULT_S_LIST, phase_samples: int = 1,
                cache_dir: str | None = None) -> SweepRow:
    """One sweep row: traces averaged over the phase offsets, norms at L itself."""
    start = time.perf_counter()
    cache = EigenCache.from_config(cache_dir)
    sums = {h.label: 0.0 for h in hs}
    norms = None
    offsets = phase_offsets(phase_samples, config.k_fermi)
    for shift in offsets:
        Ls = L + shift
        if config.engine == "lattice":
            op, fp, fp0 = lattice_projections(config, Ls, cache)
            spectrum = lattice.truncate_spectrum(fp, scale_domain(config.domain, Ls), op)
        else:
            spectrum = _continuum_spectrum(config, Ls)
        for h in hs:
            sums[h.label] += trace_h(spectrum, h)
    if config.engine == "lattice":
        op, fp, fp0 = lattice_projections(config, L, cache)
        norms = diff_stats(fp, fp0, scale_domain(config.domain, L), op, s_list)
    traces = {k: v / offsets.size for k, v in sums.items()}
    return SweepRow(float(L), traces, norms, time.perf_counter() - start)


def _row_task(args):
    with threadpool_limits(limits=1):
        return compute_row(*args)


def run_sweep(config: ModelConfig, L_grid, hs, s_list=DEFAULT_S_LIST, workers: int = 1,
              phase_samples: int = 1, cache_dir: str | None = None,
              check_grid: bool = True) -> SweepTable:
    """Evaluate every row of the grid.  Raises SweepAborted with the finished rows on failure."""
    L = validate_grid(L_grid) if check_grid else np.asarray(L_grid, dtype=float)
    if np.any(np.diff(L) <= 0.0):
        raise ModelError("L-grid must be strictly increasing")
    hs = tuple(hs)
    labels = tuple(h.label for h in hs)
    if len(set(labels)) != len(labels):
        raise ModelError("duplicate test functions in the h-list")
    s_list = tuple(float(s) for s in s_list)
    # fail fast on scale-independent preconditions
    if config.engine == "lattice":
        config.box_for(float(L[-1]) + abs(phase_offsets(phase_samples, config.k_fermi)[0]))
    table = SweepTable(config, labels, s_list, phase_samples=phase_samples)
    tasks = [(config, float(x), hs, s_list, phase_samples, cache_dir) for x in L]
    try:
        if workers <= 1:
            for t in tasks:
                table.rows.append(_row_task(t))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for row in pool.map(_row_task, tasks):
                    table.rows.append(row)
    except (ModelError, KeyboardInterrupt):
        raise
    except Exception as exc:
        raise SweepAborted(f"sweep aborted at row {len(table.rows)} (L = {L[len(table.rows)]:.6g}): {exc}",
                           table) from exc
    return table


# --------------------------------------------------------------------------
# fits
# --------------------------------------------------------------------------

def basis_labels(d: int) -> tuple[str, ...]:
    if d == 1:
        return ("L", "ln L", "1")
    return (f"L^{d}", f"L^{d - 1} ln L", f"L^{d - 1}", "1")


def _basis_column(label: str, L: np.ndarray, d: int) -> np.ndarray:
    full = basis_labels(d)
    if label == full[0]:
        return L ** d
    if label == full[1]:
        return L ** (d - 1) * np.log(L)
    if label == "1":
        return np.ones_like(L)
    if d > 1 and label == full[2]:
        return L ** (d - 1)
    raise ModelError(f"unknown basis function {label!r} for d={d}; choose from {full}")


@dataclass(frozen=True)
class FitResult:
    label: str
    d: int
    basis: tuple[str, ...]
    coefficients: tuple[float, ...]
    uncertainty: tuple[float, ...]   # leave-one-out (jackknife) spread
    residual_norm: float
    condition: float
    prediction: AsymptoticPrediction | None = None

    def coef(self, name: str) -> float:
        return self.coefficients[self.basis.index(name)] if name in self.basis else 0.0

    def sigma(self, name: str) -> float:
        return self.uncertainty[self.basis.index(name)] if name in self.basis else 0.0

    @property
    def a_hat(self) -> float:
        return self.coef(basis_labels(self.d)[0])

    @property
    def b_hat(self) -> float:
        return self.coef(basis_labels(self.d)[1])

    @property
    def b_sigma(self) -> float:
        return self.sigma(basis_labels(self.d)[1])

    @property
    def rel_err_a(self) -> float:
        if self.prediction is None or self.prediction.a_pred == 0.0:
            return math.nan
        return (self.a_hat - self.prediction.a_pred) / self.prediction.a_pred

    @property
    def rel_err_b(self) -> float:
        if self.prediction is None or self.prediction.b_pred == 0.0:
            return math.nan
        return (self.b_hat - self.prediction.b_pred) / self.prediction.b_pred

    def evaluate(self, L) -> np.ndarray:
        L = np.asarray(L, dtype=float)
        return sum(c * _basis_column(b, L, self.d) for b, c in zip(self.basis, self.coefficients))

    def to_dict(self) -> dict:
        out = {"h": self.label, "d": self.d, "basis": list(self.basis),
               "coefficients": list(self.coefficients), "uncertainty": list(self.uncertainty),
               "residual_norm": self.residual_norm, "condition": self.condition,
               "a_hat": self.a_hat, "b_hat": self.b_hat}
        if self.prediction is not None:
            out.update(prediction=self.prediction.to_dict(), rel_err_a=_nan_none(self.rel_err_a),
                       rel_err_b=_nan_none(self.rel_err_b))
        return out


def _nan_none(x: float):
    return None if math.isnan(x) else x


def _lstsq(X: np.ndarray, y: np.ndarray):
    scale = np.max(np.abs(X), axis=0)
    Xs = X / scale
    coef, _, rank, sv = np.linalg.lstsq(Xs, y, rcond=None)
    if rank < X.shape[1]:
        raise SweepError("rank-deficient fit design matrix")
    return coef / scale, float(sv[0] / sv[-1])


def fit_asymptotics(L, values, d: int, label: str = "", basis=None,
                    prediction: AsymptoticPrediction | None = None) -> FitResult:
    """Least-squares fit of values(L) on the asymptotic basis.

    Columns are scaled to unit max-norm before solving; ``condition`` is the
    2-norm condition number of the scaled design matrix.
    """
    L = np.asarray(L, dtype=float)
    y = np.asarray(values, dtype=float)
    basis = tuple(basis) if basis is not None else basis_labels(d)
    if L.size < len(basis) + 2:
        raise SweepError(f"need at least {len(basis) + 2} rows to fit {len(basis)} coefficients, got {L.size}")
    if not np.all(np.isfinite(y)):
        raise SweepError("non-finite values in the fit data")
    X = np.column_stack([_basis_column(b, L, d) for b in basis])
    coef, cond = _lstsq(X, y)
    resid = float(np.linalg.norm(X @ coef - y))
    loo = np.array([_lstsq(np.delete(X, i, axis=0), np.delete(y, i))[0] for i in range(L.size)])
    n = L.size
    spread = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return FitResult(label, d, basis, tuple(float(c) for c in coef), tuple(float(s) for s in spread),
                     resid, cond, prediction)


def fit_table(table: SweepTable, label: str, basis=None,
              prediction: AsymptoticPrediction | None = None) -> FitResult:
    return fit_asymptotics(table.L, table.trace(label), table.config.d, label, basis, prediction)


# --------------------------------------------------------------------------
# stability verdict
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    label: str
    L: np.ndarray
    delta: np.ndarray
    ratio: np.ndarray            # |delta| / (L^(d-1) ln L)
    ratio_non_increasing: bool
    b_V: float
    b_0: float
    b_tolerance: float
    coefficients_agree: bool
    verdict: str                 # pass | fail | inconclusive

    def to_dict(self) -> dict:
        return {"h": self.label, "L": self.L.tolist(), "delta": self.delta.tolist(),
                "ratio": self.ratio.tolist(), "ratio_non_increasing": self.ratio_non_increasing,
                "b_V": self.b_V, "b_0": self.b_0, "b_tolerance": self.b_tolerance,
                "coefficients_agree": self.coefficients_agree, "verdict": self.verdict}


def top_half(n: int) -> slice:
    return slice(n // 2, n)


def non_increasing(x: np.ndarray, rtol: float = 1e-12) -> bool:
    x = np.asarray(x, dtype=float)
    slack = rtol * max(float(np.max(np.abs(x))) if x.size else 0.0, 1e-300)
    return bool(np.all(np.diff(x) <= slack))


def stability_from_arrays(L, trace_V, trace_0, d: int, label: str = "",
                          rel_floor: float = 0.05, sigmas: float = 2.0) -> StabilityReport:
    """Verdict on tr h(P_L) - tr h(P_{L,0}) = o(L^(d-1) ln L).

    Coefficients agree when |b_V - b_0| <= max(sigmas * combined jackknife
    spread, rel_floor * |b_0|).  A ratio that fails to decrease over the top
    half of the sweep makes the verdict inconclusive rather than failed.
    """
    L = np.asarray(L, dtype=float)
    tV, t0 = np.asarray(trace_V, dtype=float), np.asarray(trace_0, dtype=float)
    if L.shape != tV.shape or L.shape != t0.shape:
        raise SweepError("stability inputs must share the L-grid")
    delta = tV - t0
    ratio = np.abs(delta) / (L ** (d - 1) * np.log(L))
    mono = non_increasing(ratio[top_half(L.size)])
    fV = fit_asymptotics(L, tV, d, label)
    f0 = fit_asymptotics(L, t0, d, label)
    tol = max(sigmas * math.hypot(fV.b_sigma, f0.b_sigma), rel_floor * abs(f0.b_hat))
    agree = abs(fV.b_hat - f0.b_hat) <= tol
    verdict = "fail" if not agree else ("pass" if mono else "inconclusive")
    return StabilityReport(label, L, delta, ratio, mono, fV.b_hat, f0.b_hat, tol, bool(agree), verdict)


def stability_report(table_V: SweepTable, table_0: SweepTable, label: str, **kw) -> StabilityReport:
    a, b = table_V.config, table_0.config
    if (not np.array_equal(table_V.L, table_0.L) or a.E != b.E or a.domain != b.domain
            or a.engine != b.engine):
        raise SweepError("stability tables must share the L-grid, E, domain and engine")
    return stability_from_arrays(table_V.L, table_V.trace(label), table_0.trace(label), a.d, label, **kw)
