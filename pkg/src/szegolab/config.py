"""Experiment configuration files.

An experiment is an INI-style file with ``[experiment]``, ``[model]`` and
``[sweep]`` sections, one ``key = value`` assignment per line::

    [experiment]
    name = well
    output_dir = out

    [model]
    E = 4
    engine = continuum
    domain = interval -1 1
    potential = square
    v0 = -5
    a = 1

    [sweep]
    h = renyi:1:nats, s:1
    kl_min = 25
    kl_max = 400
    points = 12

``ExperimentConfig.emit`` writes every field in a fixed order, so
``parse(emit(c)) == c`` for every parsed ``c``.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .asymptotics import geometric_grid
from .model import ENGINES, ModelConfig, ModelError, make_domain, make_potential
from .schatten import DEFAULT_S_LIST
from .testfn import TestFunction, TestFunctionError, from_name
from .widom import DEFAULT_N0_CONVENTION, N0_CONVENTIONS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    E: float
    domain: tuple  # (kind, *params)
    potential: str = "zero"
    v0: float = 0.0
    a: float = 0.0
    wells: tuple = ()
    engine: str = "continuum"
    spacing: float = 0.05
    box_half_width: float | None = None
    box_factor: float = 6.0
    quad_order: int = 16
    nodes_per_wavelength: float = 10.0
    site_cap: int | None = None
    h: tuple[str, ...] = ("renyi:1:nats",)
    kl_min: float = 25.0
    kl_max: float = 400.0
    points: int = 12
    L: tuple[float, ...] = ()    # explicit grid; overrides kl_min/kl_max/points
    s_list: tuple[float, ...] = DEFAULT_S_LIST
    phase_samples: int = 1
    reference: bool = True       # also sweep V = 0 when V != 0
    output_dir: str = "."
    cache_dir: str = ""
    threads: int = 1
    n0_convention: str = DEFAULT_N0_CONVENTION

    # ------------------------------------------------------------------
    def model(self) -> ModelConfig:
        kind, *params = self.domain
        dom = make_domain(kind, *params)
        pot = make_potential(self.potential, dom.d, self.v0, self.a, self.wells)
        return ModelConfig(E=self.E, domain=dom, potential=pot, engine=self.engine, spacing=self.spacing,
                           box_half_width=self.box_half_width, box_factor=self.box_factor,
                           quad_order=self.quad_order, nodes_per_wavelength=self.nodes_per_wavelength,
                           site_cap=self.site_cap)

    def test_functions(self) -> tuple[TestFunction, ...]:
        return tuple(from_name(n) for n in self.h)

    def grid(self) -> np.ndarray:
        if self.L:
            return np.array(self.L, dtype=float)
        return geometric_grid(self.kl_min, self.kl_max, self.points, math.sqrt(self.E))

    def with_changes(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    # ------------------------------------------------------------------
    def emit(self) -> str:
        def num(x):
            return repr(float(x))

        lines = ["[experiment]", f"name = {self.name}", f"output_dir = {self.output_dir}",
                 f"cache_dir = {self.cache_dir}", f"threads = {self.threads}",
                 f"n0_convention = {self.n0_convention}", "",
                 "[model]", f"E = {num(self.E)}", f"engine = {self.engine}",
                 "domain = " + " ".join([self.domain[0]] + [num(p) for p in self.domain[1:]]),
                 f"potential = {self.potential}", f"v0 = {num(self.v0)}", f"a = {num(self.a)}",
                 "wells = " + "; ".join(" ".join(num(x) for x in w) for w in self.wells),
                 f"spacing = {num(self.spacing)}",
                 "box_half_width = " + ("" if self.box_half_width is None else num(self.box_half_width)),
                 f"box_factor = {num(self.box_factor)}", f"quad_order = {self.quad_order}",
                 f"nodes_per_wavelength = {num(self.nodes_per_wavelength)}",
                 "site_cap = " + ("" if self.site_cap is None else str(self.site_cap)), "",
                 "[sweep]", "h = " + ", ".join(self.h), f"kl_min = {num(self.kl_min)}",
                 f"kl_max = {num(self.kl_max)}", f"points = {self.points}",
                 "L = " + ", ".join(num(x) for x in self.L),
                 "s_list = " + ", ".join(num(s) for s in self.s_list),
                 f"phase_samples = {self.phase_samples}", f"reference = {'yes' if self.reference else 'no'}"]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_KNOWN = {
    "experiment": {"name", "output_dir", "cache_dir", "threads", "n0_convention"},
    "model": {"e", "engine", "domain", "potential", "v0", "a", "wells", "spacing", "box_half_width",
              "box_factor", "quad_order", "nodes_per_wavelength", "site_cap"},
    "sweep": {"h", "kl_min", "kl_max", "points", "l", "s_list", "phase_samples", "reference"},
}


def _floats(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    return tuple(float(p) for p in parts)


def parse(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for sec in cp.sections():
        if sec not in _KNOWN:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _KNOWN[sec]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec}]")
    for sec in ("experiment", "model"):
        if sec not in cp:
            raise ConfigError(f"{source}: missing section [{sec}]")
    ex, mo = cp["experiment"], cp["model"]
    sw = cp["sweep"] if "sweep" in cp else {}

    def get(sec, key, default=""):
        v = sec.get(key, default)
        return v.strip() if isinstance(v, str) else v

    try:
        name = get(ex, "name")
        if not name:
            raise ConfigError("experiment name is required")
        if "E" not in mo:
            raise ConfigError("[model] needs the Fermi energy E")
        dom = get(mo, "domain", "interval -1 1").split()
        domain = (dom[0],) + tuple(float(p) for p in dom[1:])
        wells_txt = get(mo, "wells")
        wells = tuple(tuple(float(x) for x in w.split()) for w in wells_txt.split(";") if w.strip())
        if any(len(w) != 3 for w in wells):
            raise ConfigError("each well is 'centre v0 half_width'")
        box = get(mo, "box_half_width")
        cap = get(mo, "site_cap")
        h = tuple(p.strip() for p in get(sw, "h", "renyi:1:nats").split(",") if p.strip())
        ref = get(sw, "reference", "yes").lower()
        if ref not in ("yes", "no", "true", "false", "1", "0"):
            raise ConfigError(f"reference must be yes or no, got {ref!r}")
        cfg = ExperimentConfig(
            name=name,
            E=float(get(mo, "E")),
            domain=domain,
            potential=get(mo, "potential", "zero"),
            v0=float(get(mo, "v0", "0") or 0),
            a=float(get(mo, "a", "0") or 0),
            wells=wells,
            engine=get(mo, "engine", "continuum"),
            spacing=float(get(mo, "spacing", "0.05")),
            box_half_width=float(box) if box else None,
            box_factor=float(get(mo, "box_factor", "6")),
            quad_order=int(get(mo, "quad_order", "16")),
            nodes_per_wavelength=float(get(mo, "nodes_per_wavelength", "10")),
            site_cap=int(cap) if cap else None,
            h=h,
            kl_min=float(get(sw, "kl_min", "25")),
            kl_max=float(get(sw, "kl_max", "400")),
            points=int(get(sw, "points", "12")),
            L=_floats(get(sw, "L", "")),
            s_list=_floats(get(sw, "s_list", "")) or DEFAULT_S_LIST,
            phase_samples=int(get(sw, "phase_samples", "1")),
            reference=ref in ("yes", "true", "1"),
            output_dir=get(ex, "output_dir", "."),
            cache_dir=get(ex, "cache_dir", ""),
            threads=int(get(ex, "threads", "1")),
            n0_convention=get(ex, "n0_convention", DEFAULT_N0_CONVENTION),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise ConfigError(f"{source}: {exc}") from None
        raise ConfigError(f"{source}: malformed value: {exc}") from None
    validate(cfg, source)
    return cfg


def validate(cfg: ExperimentConfig, source: str = "<config>") -> None:
    if cfg.engine not in ENGINES:
        raise ConfigError(f"{source}: unknown engine {cfg.engine!r}")
    if cfg.n0_convention not in N0_CONVENTIONS:
        raise ConfigError(f"{source}: unknown N0 convention {cfg.n0_convention!r}")
    if cfg.threads < 1:
        raise ConfigError(f"{source}: threads must be >= 1")
    if any(not 0.0 < s <= 1.0 for s in cfg.s_list):
        raise ConfigError(f"{source}: every s in s_list must lie in (0, 1]")
    try:
        cfg.model()
        cfg.test_functions()
    except TestFunctionError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except ModelError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse(text, str(path))
