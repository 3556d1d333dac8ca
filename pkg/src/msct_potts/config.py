"""Experiment configuration files.

A configuration is an INI file with the sections ``phantom``, ``geometry``,
``spectrum`` (optional), ``noise``, ``solver``, ``bench`` (optional),
``output`` and any number of ``run.<name>`` sections holding per-run solver
overrides for ``bench``.  Lengths carry an explicit ``_cm`` suffix and
energies ``_kev``.
"""
from dataclasses import dataclass, field, fields, replace
import configparser
import io

from .projector import Geometry
from .solvers.params import SolverConfig
from .spectral_sim import PHANTOMS, SpectrumSpec

__all__ = ["ConfigError", "ExperimentConfig", "RunSpec", "load_config", "parse_config", "dump_config"]

METHODS = ("admm", "scg", "penalty", "s_landweber", "cg_plain",
           "scg_basic_nonascending", "scg_basic_prox")
NOISE_MODELS = ("none", "poisson", "gaussian")
LOG_REFERENCES = ("left_endpoint", "bin_total")


class ConfigError(ValueError):
    """Invalid configuration; the message names the section and key."""


@dataclass(frozen=True)
class RunSpec:
    """One labelled solver run of a benchmark."""

    name: str
    method: str
    overrides: tuple = ()      # (key, value) pairs applied to the base SolverConfig

    def solver_config(self, base):
        return replace(base, **dict(self.overrides))


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: str = "organic_spheres_like"
    labels_file: str = ""
    lac_table: str = ""
    size_px: int = 64
    oversample: int = 2
    geometry: Geometry = field(default_factory=Geometry)
    spectrum: SpectrumSpec = None
    log_reference: str = "left_endpoint"
    noise: str = "poisson"
    sigma: float = 0.0
    seed: int = 0
    method: str = "admm"
    solver: SolverConfig = field(default_factory=SolverConfig)
    runs: tuple = ()
    timing: bool = False

    def bench_runs(self):
        """Benchmark runs, defaulting to the single configured method."""
        return self.runs or (RunSpec(self.method, self.method),)


_GEOMETRY_KEYS = {
    "mode": ("mode", str),
    "detectors": ("detectors", int),
    "angles": ("angles", int),
    "domain_width_cm": ("domain_width", float),
    "detector_width_cm": ("detector_width", float),
    "source_to_center_cm": ("source_to_center", float),
    "source_to_detector_cm": ("source_to_detector", float),
}

_SPECTRUM_KEYS = {
    "energy_min_kev": ("lo", float),
    "energy_max_kev": ("hi", float),
    "delta_kev": ("delta", float),
    "kvp_kev": ("kvp", float),
    "channels": ("channels", int),
    "flux_total": ("total", float),
}

_SOLVER_TYPES = {f.name: f.type for f in fields(SolverConfig)}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _solver_value(key, text):
    kind = _SOLVER_TYPES[key]
    if key == "perturb_first":
        return None if text.strip().lower() in ("", "default", "none") else _parse_bool(text)
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return text.strip()


def _bins(text):
    out = []
    for part in text.split(","):
        lo, hi = part.strip().split("-")
        out.append((int(lo), int(hi)))
    return tuple(out)


def _where(cp, section, key):
    # configparser does not keep line numbers; point at section/key instead
    return f"[{section}] {key} = {cp.get(section, key, fallback='')!r}"


def _solver_overrides(cp, section, source):
    items = []
    for key in cp.options(section):
        if key == "method":
            continue
        if key not in _SOLVER_TYPES:
            raise ConfigError(f"{source}: [{section}] unknown solver key {key!r}")
        try:
            items.append((key, _solver_value(key, cp.get(section, key))))
        except ValueError as exc:
            raise ConfigError(f"{source}: {_where(cp, section, key)}: {exc}") from None
    return tuple(items)


def parse_config(text, source="<config>"):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    known = {"phantom", "geometry", "spectrum", "noise", "solver", "bench", "output"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith("run."):
            raise ConfigError(f"{source}: unknown section [{sec}]")
    kw = {}

    def get(section, key, conv, default=None):
        if not cp.has_option(section, key):
            return default
        try:
            return conv(cp.get(section, key))
        except ValueError as exc:
            raise ConfigError(f"{source}: {_where(cp, section, key)}: {exc}") from None

    def check(section, allowed):
        if cp.has_section(section):
            for key in cp.options(section):
                if key not in allowed:
                    raise ConfigError(f"{source}: [{section}] unknown key {key!r}")

    check("phantom", {"name", "labels_file", "lac_table", "size_px", "oversample"})
    kw["phantom"] = get("phantom", "name", str.strip, "organic_spheres_like")
    kw["labels_file"] = get("phantom", "labels_file", str.strip, "")
    kw["lac_table"] = get("phantom", "lac_table", str.strip, "")
    kw["size_px"] = get("phantom", "size_px", int, 64)
    kw["oversample"] = get("phantom", "oversample", int, 2)
    if not kw["labels_file"] and kw["phantom"] not in PHANTOMS:
        raise ConfigError(f"{source}: [phantom] name {kw['phantom']!r} is not a built-in phantom "
                          f"({', '.join(PHANTOMS)})")
    if bool(kw["labels_file"]) != bool(kw["lac_table"]):
        raise ConfigError(f"{source}: [phantom] labels_file and lac_table must be given together")
    if kw["size_px"] < 1 or kw["oversample"] < 1:
        raise ConfigError(f"{source}: [phantom] size_px and oversample must be >= 1")

    check("geometry", set(_GEOMETRY_KEYS))
    gkw = {}
    for key, (attr, conv) in _GEOMETRY_KEYS.items():
        val = get("geometry", key, conv)
        if val is not None:
            gkw[attr] = val
    try:
        kw["geometry"] = Geometry(n=kw["size_px"], **gkw)
    except ValueError as exc:
        raise ConfigError(f"{source}: [geometry] {exc}") from None

    check("spectrum", set(_SPECTRUM_KEYS) | {"bins_kev", "log_reference"})
    kw["log_reference"] = get("spectrum", "log_reference", str.strip, "left_endpoint")
    if kw["log_reference"] not in LOG_REFERENCES:
        raise ConfigError(f"{source}: [spectrum] log_reference must be one of {LOG_REFERENCES}")
    skw = {}
    for key, (attr, conv) in _SPECTRUM_KEYS.items():
        val = get("spectrum", key, conv)
        if val is not None:
            skw[attr] = val
    bins = get("spectrum", "bins_kev", _bins)
    if bins is not None:
        skw["bins"] = bins
    if skw:
        missing = {"lo", "hi", "kvp"} - set(skw)
        if missing:
            raise ConfigError(f"{source}: [spectrum] needs energy_min_kev, energy_max_kev and kvp_kev")
        kw["spectrum"] = SpectrumSpec(**skw)

    check("noise", {"model", "sigma", "seed"})
    kw["noise"] = get("noise", "model", str.strip, "poisson")
    if kw["noise"] not in NOISE_MODELS:
        raise ConfigError(f"{source}: [noise] model must be one of {NOISE_MODELS}")
    kw["sigma"] = get("noise", "sigma", float, 0.0)
    kw["seed"] = get("noise", "seed", int, 0)
    if kw["sigma"] < 0 or kw["seed"] < 0:
        raise ConfigError(f"{source}: [noise] sigma and seed must be non-negative")

    if cp.has_section("solver"):
        kw["method"] = get("solver", "method", str.strip, "admm")
        overrides = _solver_overrides(cp, "solver", source)
    else:
        overrides = ()
    if kw.get("method", "admm") not in METHODS:
        raise ConfigError(f"{source}: [solver] method {kw['method']!r} not in {METHODS}")
    try:
        kw["solver"] = SolverConfig(**dict(overrides))
    except ValueError as exc:
        raise ConfigError(f"{source}: [solver] {exc}") from None

    check("bench", {"runs"})
    runs = []
    names = get("bench", "runs", lambda t: [x.strip() for x in t.split(",") if x.strip()], [])
    for name in names:
        sec = f"run.{name}"
        if cp.has_section(sec):
            method = cp.get(sec, "method", fallback=name).strip()
            over = _solver_overrides(cp, sec, source)
        else:
            method, over = name, ()
        if method not in METHODS:
            raise ConfigError(f"{source}: [{sec}] method {method!r} not in {METHODS}")
        try:
            kw["solver"].updated(**dict(over))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: [{sec}] {exc}") from None
        runs.append(RunSpec(name, method, over))
    kw["runs"] = tuple(runs)

    check("output", {"timing"})
    kw["timing"] = get("output", "timing", _parse_bool, False)
    return ExperimentConfig(**kw)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))


def _fmt(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def dump_config(cfg):
    """Serialise ``cfg`` so that ``parse_config(dump_config(cfg)) == cfg``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp["phantom"] = {"name": cfg.phantom, "size_px": str(cfg.size_px),
                     "oversample": str(cfg.oversample)}
    if cfg.labels_file:
        cp["phantom"]["labels_file"] = cfg.labels_file
        cp["phantom"]["lac_table"] = cfg.lac_table
    g = cfg.geometry
    cp["geometry"] = {key: _fmt(getattr(g, attr)) for key, (attr, _) in _GEOMETRY_KEYS.items()}
    spec = {"log_reference": cfg.log_reference}
    if cfg.spectrum is not None:
        s = cfg.spectrum
        spec.update({key: _fmt(getattr(s, attr)) for key, (attr, _) in _SPECTRUM_KEYS.items()})
        if s.bins is not None:
            spec["bins_kev"] = ", ".join(f"{a}-{b}" for a, b in s.bins)
    cp["spectrum"] = spec
    cp["noise"] = {"model": cfg.noise, "sigma": _fmt(cfg.sigma), "seed": str(cfg.seed)}
    solver = {"method": cfg.method}
    for f in fields(SolverConfig):
        val = getattr(cfg.solver, f.name)
        solver[f.name] = "default" if val is None else _fmt(val)
    cp["solver"] = solver
    if cfg.runs:
        cp["bench"] = {"runs": ", ".join(r.name for r in cfg.runs)}
        for r in cfg.runs:
            sec = {"method": r.method}
            sec.update({k: ("default" if v is None else _fmt(v)) for k, v in r.overrides})
            cp[f"run.{r.name}"] = sec
    cp["output"] = {"timing": _fmt(cfg.timing)}
    out = io.StringIO()
    cp.write(out)
    return out.getvalue()
