"""Command-line driver: ``szegolab {predict,sweep,verify,plotdata,check-testfn}``.

Exit codes: 0 success, 1 numerical failure, 2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import SweepAborted, SweepError, SweepTable, basis_labels, fit_asymptotics, fit_table, read_csv, run_sweep
from .config import ConfigError, ExperimentConfig, load
from .continuum import ContinuumError
from .lattice import LatticeError
from .model import ModelError
from .spectrum import SpectrumError
from .testfn import TestFunctionError, check_membership, from_name
from .verification import (FAIL, CheckResult, ids_arbitration, block_checks, prediction_check, run_checks,
                           stability_check)
from .widom import WidomError, predict_trace

log = logging.getLogger("szegolab")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
USER_ERRORS = (ConfigError, ModelError, TestFunctionError, FileNotFoundError)
NUMERIC_ERRORS = (SweepError, ContinuumError, LatticeError, SpectrumError, WidomError, np.linalg.LinAlgError)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _predictions(cfg: ExperimentConfig) -> dict:
    model = cfg.model()
    return {h.label: predict_trace(h, cfg.E, model.domain, cfg.n0_convention) for h in cfg.test_functions()}


# --------------------------------------------------------------------------
# predict
# --------------------------------------------------------------------------

def cmd_predict(args) -> int:
    cfg = load(args.config)
    out = [p.to_dict() for p in _predictions(cfg).values()]
    print(_json(out), end="")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------

def _sidecar(cfg: ExperimentConfig, table: SweepTable, preds: dict, partial: bool = False) -> dict:
    fits = {}
    for lab in table.labels:
        try:
            fits[lab] = fit_table(table, lab, prediction=preds.get(lab)).to_dict()
        except SweepError as exc:
            fits[lab] = {"error": str(exc)}
    return {
        "config_text": cfg.emit(),
        "config": cfg.to_dict(),
        "engine": table.engine,
        "d": table.config.d,
        "n0_convention": cfg.n0_convention,
        "phase_samples": table.phase_samples,
        "partial": partial,
        "rows": [{"L": r.L, "seconds": r.seconds} for r in table.rows],
        "predictions": {k: v.to_dict() for k, v in preds.items()},
        "fits": fits,
    }


def _sweep_one(cfg: ExperimentConfig, stem: str, outdir: Path) -> SweepTable:
    preds = _predictions(cfg)
    model = cfg.model()
    try:
        table = run_sweep(model, cfg.grid(), cfg.test_functions(), cfg.s_list, workers=cfg.threads,
                          phase_samples=cfg.phase_samples, cache_dir=cfg.cache_dir or None)
    except SweepAborted as exc:
        _write(outdir / f"{stem}.csv.partial", exc.table.to_csv())
        _write(outdir / f"{stem}.json.partial", _json(_sidecar(cfg, exc.table, preds, partial=True)))
        raise
    _write(outdir / f"{stem}.csv", table.to_csv())
    _write(outdir / f"{stem}.json", _json(_sidecar(cfg, table, preds)))
    log.info("wrote %s (%d rows)", outdir / f"{stem}.csv", len(table.rows))
    return table


def sweep_pair(cfg: ExperimentConfig, outdir: Path) -> tuple[SweepTable, SweepTable | None]:
    """Sweep the configured potential and, when V != 0 and enabled, the V = 0 reference."""
    table = _sweep_one(cfg, cfg.name, outdir)
    ref = None
    if cfg.potential != "zero" and cfg.reference:
        ref = _sweep_one(cfg.with_changes(potential="zero", v0=0.0, a=0.0, wells=()), f"{cfg.name}__v0", outdir)
    return table, ref


def _outdir(cfg: ExperimentConfig, args) -> Path:
    return Path(args.out) if getattr(args, "out", None) else Path(cfg.output_dir)


def cmd_sweep(args) -> int:
    cfg = load(args.config)
    if args.threads:
        cfg = cfg.with_changes(threads=args.threads)
    sweep_pair(cfg, _outdir(cfg, args))
    return EXIT_OK


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------

def verify_checks(cfg: ExperimentConfig, table: SweepTable, ref: SweepTable | None) -> dict:
    model = cfg.model()
    preds = _predictions(cfg)
    base = ref if ref is not None else table
    checks = {}
    for lab in table.labels:
        checks[f"stability[{lab}]"] = (lambda lab=lab: stability_check(table, base, lab))
        checks[f"coefficient[{lab}]"] = (
            lambda lab=lab: prediction_check(fit_table(table, lab).b_hat, preds[lab].b_pred))
    checks["n0_arbitration"] = lambda: ids_arbitration(cfg.E, model.d, cfg.n0_convention)
    if model.engine == "lattice":
        checks.update(block_checks(model, table.L, cfg.s_list))
    return checks


def format_report(name: str, results: dict[str, CheckResult]) -> str:
    width = max(len(k) for k in results) if results else 0
    lines = [f"verification of {name}"]
    for k, r in results.items():
        lines.append(f"  {k.ljust(width)}  {r.status.upper():12s} {r.detail}")
    n_fail = sum(r.status == FAIL for r in results.values())
    lines.append(f"{len(results)} checks, {n_fail} failed")
    return "\n".join(lines) + "\n"


def cmd_verify(args) -> int:
    cfg = load(args.config)
    if args.threads:
        cfg = cfg.with_changes(threads=args.threads)
    outdir = _outdir(cfg, args)
    table, ref = sweep_pair(cfg, outdir)
    results = run_checks(verify_checks(cfg, table, ref))
    _write(outdir / f"{cfg.name}__verify.json",
           _json({"config_text": cfg.emit(), "checks": {k: v.to_dict() for k, v in results.items()}}))
    sys.stdout.write(format_report(cfg.name, results))
    return EXIT_NUMERIC if any(r.status == FAIL for r in results.values()) else EXIT_OK


# --------------------------------------------------------------------------
# plotdata
# --------------------------------------------------------------------------

def _safe(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label)


def cmd_plotdata(args) -> int:
    outdir = Path(args.out) if args.out else None
    for name in args.files:
        path = Path(name)
        if not path.exists():
            raise FileNotFoundError(f"sweep file {path} not found")
        header, data = read_csv(path.read_text())
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        d = int(meta.get("d", args.dim))
        preds = meta.get("predictions", {})
        available = [c[len("trace_"):] for c in header if c.startswith("trace_")]
        labels = available if args.h is None else [s.strip() for s in args.h.split(",") if s.strip()]
        for lab in labels:
            if lab not in available:
                raise TestFunctionError(f"{path} has no trace column for {lab!r}")
        L = data[:, 0]
        target = outdir or path.parent
        table_lines = ["# h a_hat b_hat a_pred b_pred rel_err_b"]
        for lab in labels:
            y = data[:, header.index(f"trace_{lab}")]
            fit = fit_asymptotics(L, y, d, lab)
            curve = fit.evaluate(L)
            lines = [f"# {path.name} h={lab} basis={','.join(basis_labels(d))}", "# L trace fit residual"]
            lines += [f"{a:.17g} {b:.17g} {c:.17g} {b - c:.17g}" for a, b, c in zip(L, y, curve)]
            _write(target / f"{path.stem}__{_safe(lab)}.dat", "\n".join(lines) + "\n")
            p = preds.get(lab, {})
            bp = p.get("b_pred", math.nan)
            rel = (fit.b_hat - bp) / bp if bp else math.nan
            table_lines.append(f"{lab} {fit.a_hat:.17g} {fit.b_hat:.17g} {p.get('a_pred', math.nan):.17g} "
                               f"{bp:.17g} {rel:.17g}")
        _write(target / f"{path.stem}__coefficients.dat", "\n".join(table_lines) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# check-testfn
# --------------------------------------------------------------------------

def cmd_check_testfn(args) -> int:
    h = from_name(args.name)
    rep = check_membership(h, args.dim)
    print(_json(asdict(rep)), end="")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="szegolab", description="Truncated Fermi projection spectra and "
                                "two-term trace asymptotics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("predict", help="closed-form coefficients as JSON")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_predict)

    for name, func, text in (("sweep", cmd_sweep, "run the L-sweep(s) and write CSV + JSON"),
                             ("verify", cmd_verify, "sweep and run every check")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--threads", type=int, help="worker processes (overrides threads)")
        sp.set_defaults(func=func)

    sp = sub.add_parser("plotdata", help="gnuplot-ready .dat files from sweep CSVs")
    sp.add_argument("files", nargs="+")
    sp.add_argument("--h", help="comma-separated labels (default: every trace column; '' for none)")
    sp.add_argument("--dim", type=int, default=1, help="dimension when no JSON sidecar is present")
    sp.add_argument("--out", help="output directory (default: next to each CSV)")
    sp.set_defaults(func=cmd_plotdata)

    sp = sub.add_parser("check-testfn", help="membership of a named test function in H_d")
    sp.add_argument("name")
    sp.add_argument("--dim", type=int, default=1)
    sp.set_defaults(func=cmd_check_testfn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"szegolab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"szegolab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
