"""Experiment configuration: INI files with every default materialised.

A config has an ``[experiment]`` section plus ``[phantom]``, ``[geometry]``,
``[noise]`` and one optional section per method.  Unknown sections or keys
are rejected so that typos never silently fall back to defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

METHODS = ("fbp", "landweber", "kaczmarz", "cgls", "l2tv", "satv-ct")

# section -> key -> (type, default); "auto"-able numbers are parsed lazily by the runner
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "experiment": {
        "name": (str, "experiment"),
        "methods": (list, ["satv-ct"]),
        "seed": (int, 0),
        "deterministic": (bool, True),
        "output_dir": (str, "out"),
        "png": (bool, True),
    },
    "phantom": {
        "kind": (str, "head"),
        "n": (int, 128),
        "half_width": (float, 1.0),
        "path": (str, ""),
        "radius": (float, 0.5),
        "value": (float, 1.0),
    },
    "geometry": {
        "kind": (str, "parallel"),
        "n_angles": (int, 45),
        "n_bins": (int, 181),
        "source_radius": (float, 4.0),
        "detector_radius": (float, 2.0),
    },
    "noise": {
        "relative_level": (float, 0.2),
    },
    "fbp": {
        "window": (str, "ram-lak"),
        "nonneg": (bool, True),
    },
    "landweber": {
        "max_iters": (int, 5000),
        "tol": (float, 1e-4),
        "step": (str, "auto"),
        "nonneg": (bool, True),
    },
    "kaczmarz": {
        "max_iters": (int, 200),
        "tol": (float, 1e-4),
        "relaxation": (float, 1.0),
        "randomized": (bool, False),
        "nonneg": (bool, True),
    },
    "cgls": {
        "max_iters": (int, 200),
        "tol": (float, 1e-6),
        "discrepancy_stop": (bool, True),
    },
    "l2tv": {
        "alpha": (str, "grid"),
        "grid_min": (float, 1.0),
        "grid_max": (float, 1000.0),
        "grid_points": (int, 10),
        "max_iters": (int, 3000),
        "tol": (float, 1e-5),
    },
    "satv-ct": {
        "alpha": (str, "auto"),
        "sigma_image": (str, "auto"),
        "k0": (int, 5),
        "tol": (float, 1e-4),
        "max_iters": (int, 100),
        "window": (int, 11),
        "eps": (float, 1e-3),
        "lam_max": (float, 1e4),
        "smooth_lambda": (bool, True),
        "denoise_iters": (int, 500),
        "denoise_tol": (float, 1e-5),
        "cgls_iters": (int, 100),
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is ``section.option`` (or a section name)."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


@dataclass
class ExperimentConfig:
    sections: dict[str, dict[str, object]] = field(default_factory=dict)
    source: str = "<defaults>"

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.sections[section]

    @property
    def methods(self) -> list[str]:
        return list(self.sections["experiment"]["methods"])

    @property
    def name(self) -> str:
        return str(self.sections["experiment"]["name"])

    @property
    def seed(self) -> int:
        return int(self.sections["experiment"]["seed"])


def _convert(key: str, kind: type, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is list:
            return [item.strip() for item in raw.split(",") if item.strip()]
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _validate(cfg: ExperimentConfig) -> None:
    methods = cfg.methods
    if not methods:
        raise ConfigError("experiment.methods", "at least one method is required")
    for m in methods:
        if m not in METHODS:
            raise ConfigError("experiment.methods", f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
    ph, geo = cfg["phantom"], cfg["geometry"]
    if ph["kind"] not in ("head", "disk", "file"):
        raise ConfigError("phantom.kind", f"expected head, disk or file, got {ph['kind']!r}")
    if ph["kind"] == "file" and not ph["path"]:
        raise ConfigError("phantom.path", "required when kind = file")
    if ph["n"] < 1:
        raise ConfigError("phantom.n", "must be >= 1")
    if not ph["half_width"] > 0:
        raise ConfigError("phantom.half_width", "must be positive")
    if geo["kind"] not in ("parallel", "fan"):
        raise ConfigError("geometry.kind", f"expected parallel or fan, got {geo['kind']!r}")
    for key in ("n_angles", "n_bins"):
        if geo[key] < 1:
            raise ConfigError(f"geometry.{key}", "must be >= 1")
    if geo["kind"] == "fan" and "fbp" in methods:
        raise ConfigError("experiment.methods", "fbp is only available for parallel geometry")
    if cfg["noise"]["relative_level"] < 0:
        raise ConfigError("noise.relative_level", "must be >= 0")
    for section, key in (("l2tv", "alpha"), ("satv-ct", "alpha"), ("satv-ct", "sigma_image"),
                         ("landweber", "step")):
        raw = cfg[section][key]
        keyword = {"l2tv": "grid"}.get(section, "auto")
        if raw != keyword:
            try:
                ok = float(raw) > 0
            except ValueError:
                ok = False
            if not ok:
                raise ConfigError(f"{section}.{key}", f"expected a positive number or {keyword!r}, got {raw!r}")
    if "l2tv" in methods and cfg["l2tv"]["alpha"] == "grid" and cfg["l2tv"]["grid_points"] < 1:
        raise ConfigError("l2tv.grid_points", "must be >= 1")
    sv = cfg["satv-ct"]
    if sv["window"] < 3 or sv["window"] % 2 == 0:
        raise ConfigError("satv-ct.window", "must be odd and >= 3")
    if sv["k0"] < 0:
        raise ConfigError("satv-ct.k0", "must be >= 0")
    if not 0 < sv["eps"] <= sv["lam_max"]:
        raise ConfigError("satv-ct.eps", "need 0 < eps <= lam_max")
    if not 0 < cfg["kaczmarz"]["relaxation"] < 2:
        raise ConfigError("kaczmarz.relaxation", "must lie in (0, 2)")
    for section in ("landweber", "kaczmarz", "cgls", "l2tv", "satv-ct"):
        if cfg[section]["max_iters"] < 1:
            raise ConfigError(f"{section}.max_iters", "must be >= 1")
        if not cfg[section]["tol"] > 0:
            raise ConfigError(f"{section}.tol", "must be positive")


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse INI text into a fully resolved :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("<syntax>", str(exc).replace("\n", " ")) from None
    sections: dict[str, dict[str, object]] = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(name, "unknown section")
    for name, keys in SCHEMA.items():
        values = {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in keys.items()}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in keys:
                    raise ConfigError(f"{name}.{key}", "unknown key")
                values[key] = _convert(f"{name}.{key}", keys[key][0], raw)
        sections[name] = values
    cfg = ExperimentConfig(sections, source)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {p}: {exc.strerror}") from None
    return parse_config(text, str(p))


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text with every key written out, suitable for :func:`parse_config`."""
    lines = []
    for name, values in cfg.sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_format(v)}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)


def preset_names() -> list[str]:
    root = resources.files("satvct").joinpath("presets")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> ExperimentConfig:
    if name not in preset_names():
        raise ConfigError("<preset>", f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    text = resources.files("satvct").joinpath("presets", f"{name}.cfg").read_text()
    return parse_config(text, f"preset:{name}")
