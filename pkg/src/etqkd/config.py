"""Scenario text format, presets and serialization.

The format is INI-style::

    q_sift = 0.7            # top-level keys (or a [scenario] section)
    [source]
    signal_wavelength_nm = 810
    ...
    [strategy]
    variant = compensation  # none | compensation | filtering

Presets are looked up by name before a path is tried.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import MISSING, fields
from importlib import resources
from pathlib import Path

from .model import (
    Compensation,
    DetectorSpec,
    FiberSpan,
    Filtering,
    InterferometerSpec,
    ScenarioConfig,
    SourceSpec,
    ValidationError,
)

PRESETS = ("compensation", "filtering", "unmanaged")


class ConfigParseError(ValueError):
    def __init__(self, lineno: int | None, message: str):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(f"{where}{message}")


_SECTION_TYPES = {
    "source": SourceSpec,
    "fiber": FiberSpan,
    "interferometer": InterferometerSpec,
    "detector": DetectorSpec,
}
_STRATEGY_TYPES = {"compensation": Compensation, "filtering": Filtering}
_SCENARIO_KEYS = ("q_sift", "bases_used", "peak_fwhm_ns")


def _required(cls) -> list[str]:
    return [f.name for f in fields(cls) if f.default is MISSING and f.default_factory is MISSING]


def _allowed(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def _parse_phases(text: str) -> tuple[tuple[float, float], ...]:
    pairs = []
    for chunk in text.split(","):
        parts = chunk.split()
        if len(parts) != 2:
            raise ValidationError(
                "interferometer.basis_phases must be 'phiA phiB, phiA phiB' (radians)"
            )
        pairs.append((float(parts[0]), float(parts[1])))
    return tuple(pairs)


def _convert(section: str, key: str, raw: str):
    if section == "interferometer" and key == "basis_phases":
        return _parse_phases(raw)
    if key == "bases_used":
        try:
            return int(raw)
        except ValueError:
            raise ValidationError(f"{key} must be an integer, got {raw!r}") from None
    if raw.lower() == "none" and key in ("peak_fwhm_ns", "pump_wavelength_nm"):
        return None
    try:
        return float(raw)
    except ValueError:
        raise ValidationError(f"{section}.{key} must be a number, got {raw!r}") from None


def _read(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), empty_lines_in_values=False
    )
    parser.optionxform = str
    first = next(
        (ln.strip() for ln in text.splitlines() if ln.strip() and ln.strip()[0] not in "#;"),
        "",
    )
    offset = 0
    if not first.startswith("["):
        text = "[scenario]\n" + text
        offset = 1
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError(exc.lineno - offset, f"expected a [section] header: {exc.line!r}") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigParseError(lineno - offset, f"cannot parse {line!r}") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigParseError(exc.lineno - offset if exc.lineno else None, str(exc.message)) from None
    return parser


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse scenario text; raises ConfigParseError or ValidationError."""
    parser = _read(text)
    known = set(_SECTION_TYPES) | {"strategy", "scenario"}
    unknown = [s for s in parser.sections() if s not in known]
    if unknown:
        raise ValidationError(f"unknown section(s): {', '.join(unknown)}")

    missing = []
    for name, cls in _SECTION_TYPES.items():
        present = parser[name] if parser.has_section(name) else {}
        missing += [f"{name}.{k}" for k in _required(cls) if k not in present]
    if missing:
        raise ValidationError("missing required field(s): " + ", ".join(missing))

    parts = {}
    for name, cls in _SECTION_TYPES.items():
        values = dict(parser[name])
        extra = set(values) - _allowed(cls)
        if extra:
            raise ValidationError(f"unknown key(s) in [{name}]: {', '.join(sorted(extra))}")
        parts[name] = cls(**{k: _convert(name, k, v) for k, v in values.items()})

    strategy = None
    if parser.has_section("strategy"):
        values = dict(parser["strategy"])
        variant = values.pop("variant", "none").strip().lower()
        if variant == "none":
            if values:
                raise ValidationError("strategy.variant = none takes no further keys")
        elif variant in _STRATEGY_TYPES:
            cls = _STRATEGY_TYPES[variant]
            extra = set(values) - _allowed(cls)
            if extra:
                raise ValidationError(f"unknown key(s) for {variant}: {', '.join(sorted(extra))}")
            need = [f"strategy.{k}" for k in _required(cls) if k not in values]
            if need:
                raise ValidationError("missing required field(s): " + ", ".join(need))
            strategy = cls(**{k: _convert("strategy", k, v) for k, v in values.items()})
        else:
            raise ValidationError(
                f"strategy.variant must be none|compensation|filtering, got {variant!r}"
            )

    top = dict(parser["scenario"]) if parser.has_section("scenario") else {}
    extra = set(top) - set(_SCENARIO_KEYS)
    if extra:
        raise ValidationError(f"unknown top-level key(s): {', '.join(sorted(extra))}")
    top = {k: _convert("scenario", k, v) for k, v in top.items()}
    return ScenarioConfig(strategy=strategy, **parts, **top)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_scenario(scenario: ScenarioConfig) -> str:
    """Serialize to the text format; ``parse_scenario(dump_scenario(s)) == s``."""
    lines = [f"{k} = {_fmt(getattr(scenario, k))}" for k in _SCENARIO_KEYS]
    for name in ("source", "fiber", "strategy", "interferometer", "detector"):
        obj = getattr(scenario, name)
        lines += ["", f"[{name}]"]
        if name == "strategy":
            lines.append(f"variant = {obj.variant if obj is not None else 'none'}")
            if obj is None:
                continue
        for f in fields(obj):
            value = getattr(obj, f.name)
            if f.name == "basis_phases":
                text = ", ".join(f"{a!r} {b!r}" for a, b in value)
            else:
                text = _fmt(value)
            lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def preset_text(name: str) -> str:
    return resources.files("etqkd").joinpath(f"presets/{name}.ini").read_text(encoding="utf-8")


def load_scenario(source: str) -> ScenarioConfig:
    """Resolve a preset name, a path to a scenario file, or literal scenario text."""
    if source in PRESETS:
        return parse_scenario(preset_text(source))
    if "\n" not in source and "=" not in source:
        path = Path(source)
        if path.is_file():
            return parse_scenario(path.read_text(encoding="utf-8"))
        if source.strip():
            raise FileNotFoundError(f"no preset or scenario file named {source!r}")
    return parse_scenario(source)


def parameter_hash(scenario: ScenarioConfig) -> str:
    return hashlib.sha256(dump_scenario(scenario).encode()).hexdigest()[:16]

