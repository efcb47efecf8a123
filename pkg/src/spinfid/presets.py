"""Experiment configurations, the preset registry, and the config file format.

Configs are plain-text INI files with sections [experiment], [lattice],
[coupling], [spin], [run], [analysis], [output]; every preset can be
dumped to that format and re-read bit-identically, and a sha256 of the
canonical dump serves as the config hash in run manifests.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .lattice import (CouplingTable, DipolarConstants, FieldDirection, LatticeSpec,
                      build_dipolar_couplings, build_nearest_neighbor,
                      rescale_to_classical)

_RESCALE = {"1": math.sqrt(0.75), "2": math.sqrt(2.0), "5": math.sqrt(35.0 / 4.0)}


@dataclass
class ExperimentConfig:
    name: str = "custom"
    dimensions: tuple[int, ...] = (12,)
    coupling_kind: str = "nearest"        # nearest | dipolar
    jx: float = 0.0
    jy: float = 0.0
    jz: float = 0.0
    direction: str = "100"
    g: float = 25166.2
    a0: float = 2.72
    spin_kind: str = "classical"          # classical | quantum
    two_s: int = 1                        # evolved spin (quantum) or modeled spin (classical)
    method: str = "auto"                  # auto | typicality | exact
    dt: float = 0.05
    duration: float = 200.0
    t_max: float | None = None
    realizations: int = 10_000
    samples: int = 16
    seed: int = 0
    stage_tol: float = 1e-9
    workers: int = 1
    fit: bool = True
    physical_units: bool = False
    out_dir: str = "out"

    def validate(self) -> None:
        if self.spin_kind not in ("classical", "quantum"):
            raise ConfigError(f"spin kind must be classical or quantum, got {self.spin_kind!r}")
        if self.coupling_kind not in ("nearest", "dipolar"):
            raise ConfigError(f"coupling kind must be nearest or dipolar, got {self.coupling_kind!r}")
        if self.method not in ("auto", "typicality", "exact"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.spin_kind == "classical" and self.method == "exact":
            raise ConfigError("the exact oracle applies to quantum runs only")
        if self.two_s < 1:
            raise ConfigError("two_s must be >= 1")
        if self.dt <= 0 or self.duration <= 0:
            raise ConfigError("dt and duration must be positive")
        if self.samples < 1 or self.realizations < 1:
            raise ConfigError("samples and realizations must be >= 1")
        LatticeSpec(self.dimensions)
        if self.coupling_kind == "dipolar":
            FieldDirection(self.direction)
            DipolarConstants(self.g, self.a0)

    def build_table(self) -> CouplingTable:
        self.validate()
        spec = LatticeSpec(self.dimensions)
        if self.coupling_kind == "nearest":
            two_s = self.two_s if self.spin_kind == "quantum" else None
            return build_nearest_neighbor(spec, self.jx, self.jy, self.jz, two_s=two_s)
        table = build_dipolar_couplings(spec, FieldDirection(self.direction),
                                        DipolarConstants(self.g, self.a0))
        if self.spin_kind == "classical":
            table = rescale_to_classical(table)
        elif self.two_s != 1:
            raise ConfigError("dipolar tables model spin-1/2 nuclei")
        return table

    @property
    def constants(self) -> DipolarConstants:
        return DipolarConstants(self.g, self.a0)


def _chain_quantum(name, two_s, n_sites, dt, t_max, samples) -> ExperimentConfig:
    f = _RESCALE[str(two_s)]
    return ExperimentConfig(
        name=name, dimensions=(n_sites,), coupling_kind="nearest",
        jx=-0.41 / f, jy=-0.41 / f, jz=0.82 / f, spin_kind="quantum", two_s=two_s,
        dt=dt, t_max=t_max, samples=samples)


def _square_quantum(name, jx, jy, jz, samples) -> ExperimentConfig:
    f = _RESCALE["1"]
    return ExperimentConfig(
        name=name, dimensions=(5, 5), coupling_kind="nearest",
        jx=jx / f, jy=jy / f, jz=jz / f, spin_kind="quantum", two_s=1,
        dt=0.1, t_max=8.0, samples=samples)


def _classical_twin(cfg: ExperimentConfig) -> ExperimentConfig:
    f = math.sqrt((cfg.two_s / 2.0) * (cfg.two_s / 2.0 + 1.0))
    return replace(cfg, name=cfg.name + "-classical", spin_kind="classical",
                   jx=cfg.jx * f, jy=cfg.jy * f, jz=cfg.jz * f,
                   duration=200.0, realizations=10_000, method="auto")


def _caf2(direction: str) -> ExperimentConfig:
    return ExperimentConfig(
        name=f"caf2-{direction}", dimensions=(9, 9, 9), coupling_kind="dipolar",
        direction=direction, spin_kind="classical", two_s=1, dt=0.05,
        duration=200.0, t_max=10.0, realizations=10_000, physical_units=True)


def _registry() -> dict:
    presets = {}
    for d in ("100", "110", "111"):
        cfg = _caf2(d)
        presets[cfg.name] = cfg
    quantum = [
        _chain_quantum("chain12-s1/2", 1, 12, 0.05, 30.0, 32),
        _chain_quantum("chain12-s1", 2, 12, 0.1, 15.0, 4),
        _chain_quantum("chain9-s5/2", 5, 9, 0.2, 12.0, 2),
        _square_quantum("square5-a", -0.41, -0.41, 0.82, 8),
        _square_quantum("square5-b", 0.0, -1.0, 1.0, 8),
    ]
    for cfg in quantum:
        presets[cfg.name] = cfg
        twin = _classical_twin(cfg)
        presets[twin.name] = twin
    return presets


PRESETS = _registry()


def get_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return replace(PRESETS[name])


def dump_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser()
    cp["experiment"] = {"name": cfg.name}
    cp["lattice"] = {"dimensions": " ".join(str(d) for d in cfg.dimensions)}
    coupling = {"kind": cfg.coupling_kind}
    if cfg.coupling_kind == "nearest":
        coupling.update(jx=repr(cfg.jx), jy=repr(cfg.jy), jz=repr(cfg.jz))
    else:
        coupling.update(direction=cfg.direction, g=repr(cfg.g), a0=repr(cfg.a0))
    cp["coupling"] = coupling
    cp["spin"] = {"kind": cfg.spin_kind, "two_s": str(cfg.two_s)}
    run = {"dt": repr(cfg.dt), "duration": repr(cfg.duration),
           "realizations": str(cfg.realizations), "samples": str(cfg.samples),
           "seed": str(cfg.seed), "method": cfg.method,
           "stage_tol": repr(cfg.stage_tol), "workers": str(cfg.workers)}
    if cfg.t_max is not None:
        run["t_max"] = repr(cfg.t_max)
    cp["run"] = run
    cp["analysis"] = {"fit": str(cfg.fit).lower(),
                      "physical_units": str(cfg.physical_units).lower()}
    cp["output"] = {"out_dir": cfg.out_dir}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = ExperimentConfig()
    try:
        if cp.has_section("experiment"):
            cfg.name = cp.get("experiment", "name", fallback=cfg.name)
        if cp.has_section("lattice"):
            dims = cp.get("lattice", "dimensions")
            cfg.dimensions = tuple(int(x) for x in dims.split())
        if cp.has_section("coupling"):
            cfg.coupling_kind = cp.get("coupling", "kind", fallback=cfg.coupling_kind)
            for key in ("jx", "jy", "jz", "g", "a0"):
                if cp.has_option("coupling", key):
                    setattr(cfg, key, cp.getfloat("coupling", key))
            cfg.direction = cp.get("coupling", "direction", fallback=cfg.direction).strip("[]")
        if cp.has_section("spin"):
            cfg.spin_kind = cp.get("spin", "kind", fallback=cfg.spin_kind)
            cfg.two_s = cp.getint("spin", "two_s", fallback=cfg.two_s)
        if cp.has_section("run"):
            sec = cp["run"]
            cfg.dt = sec.getfloat("dt", cfg.dt)
            cfg.duration = sec.getfloat("duration", cfg.duration)
            if "t_max" in sec:
                cfg.t_max = sec.getfloat("t_max")
            cfg.realizations = sec.getint("realizations", cfg.realizations)
            cfg.samples = sec.getint("samples", cfg.samples)
            cfg.seed = sec.getint("seed", cfg.seed)
            cfg.method = sec.get("method", cfg.method)
            cfg.stage_tol = sec.getfloat("stage_tol", cfg.stage_tol)
            cfg.workers = sec.getint("workers", cfg.workers)
        if cp.has_section("analysis"):
            cfg.fit = cp.getboolean("analysis", "fit", fallback=cfg.fit)
            cfg.physical_units = cp.getboolean("analysis", "physical_units",
                                               fallback=cfg.physical_units)
        if cp.has_section("output"):
            cfg.out_dir = cp.get("output", "out_dir", fallback=cfg.out_dir)
    except ValueError as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    cfg.validate()
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the result-affecting fields (output path and worker count excluded)."""
    canon = replace(cfg, out_dir="", workers=1)
    return hashlib.sha256(dump_config(canon).encode()).hexdigest()[:16]
