"""Typed INI configuration with strict keys, line-level diagnostics and materialized defaults.

A config is a set of sections (model, diffusion, grid, time, noise, output).
Missing keys take defaults that depend on ``grid.dims``; unknown sections or
keys are rejected. ``load`` turns a config file into a ``RunSpec``; ``to_mapping``
gives the fully materialized form that is embedded in manifests and can be
fed back in (as JSON) to reproduce a run.
"""

from __future__ import annotations

import configparser
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

from .model import CloudParams, DiffusionParams
from .sim import SimConfig, preset_1d, preset_2d
from .spectral import DEALIAS_RULES, GridSpec
from .kernels import CLAMP_POLICIES

FORMATS = ("text", "binary", "both")


class ConfigError(ValueError):
    def __init__(self, message: str, section: str | None = None, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.section = section
        self.key = key
        self.line = line


def _float(raw) -> float:
    v = float(raw)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(raw) -> int:
    if isinstance(raw, bool):
        raise ValueError("expected an integer")
    if isinstance(raw, int):
        return raw
    text = str(raw).strip()
    if not re.fullmatch(r"[+-]?\d+", text):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(text)


def _floats(raw) -> tuple[float, ...]:
    if isinstance(raw, (list, tuple)):
        return tuple(_float(x) for x in raw)
    text = str(raw).strip()
    if not text:
        return ()
    return tuple(_float(x) for x in re.split(r"[,\s]+", text) if x)


def _choice(options):
    def conv(raw) -> str:
        v = str(raw).strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v

    return conv


def _bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    v = str(raw).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


SCHEMA: dict[str, dict[str, object]] = {
    "model": {k: _float for k in ("c", "a1", "a2", "gamma", "beta_c", "beta_r", "zeta", "d", "B")}
    | {"clamp": _choice(CLAMP_POLICIES)},
    "diffusion": {"d1": _float, "d2": _float},
    "grid": {"dims": _int, "n": _int, "length": _float, "dealias": _choice(DEALIAS_RULES)},
    "time": {"h": _float, "t_end": _float, "snapshot_times": _floats, "diag_interval": _float},
    "noise": {"amplitude": _float, "seed": _int},
    "output": {"format": _choice(FORMATS), "images": _bool, "pattern_std_factor": _float,
               "pattern_peak_factor": _float, "modes_n_max": _int},
}


# run-config field names that differ from their config keys
FIELD_ALIASES = {
    "noise_amplitude": ("noise", "amplitude"),
    "dealias_rule": ("grid", "dealias"),
    "clamp_policy": ("model", "clamp"),
}


@dataclass(frozen=True)
class OutputOptions:
    format: str = "text"
    images: bool = True
    modes_n_max: int = 10


@dataclass(frozen=True)
class RunSpec:
    sim: SimConfig
    output: OutputOptions


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines = {}
    section = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines[(section, "")] = i
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            lines[(section, m.group(1).strip())] = i
    return lines


def parse_ini(text: str) -> tuple[dict[str, dict[str, str]], dict[tuple[str, str], int]]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], line=line) from None
    data = {sec: dict(cp.items(sec)) for sec in cp.sections()}
    return data, _key_lines(text)


def _convert(data: dict, lines: dict) -> dict[str, dict[str, object]]:
    out: dict[str, dict[str, object]] = {}
    for sec, items in data.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section; expected one of {', '.join(SCHEMA)}", sec, None, lines.get((sec, "")))
        for key, raw in items.items():
            line = lines.get((sec, key))
            conv = SCHEMA[sec].get(key)
            if conv is None:
                raise ConfigError(f"unknown key; allowed: {', '.join(SCHEMA[sec])}", sec, key, line)
            try:
                out.setdefault(sec, {})[key] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc), sec, key, line) from None
    return out


def _build(vals: dict[str, dict[str, object]], lines: dict) -> RunSpec:
    dims = vals.get("grid", {}).get("dims", 1)
    if dims not in (1, 2):
        raise ConfigError("dims must be 1 or 2", "grid", "dims", lines.get(("grid", "dims")))
    base = preset_2d() if dims == 2 else preset_1d()

    def get(sec, key, default):
        return vals.get(sec, {}).get(key, default)

    def guarded(sec, fn):
        try:
            return fn()
        except ValueError as exc:
            msg = str(exc)
            # blame the key the message names first, preferring the section being built
            hits = []
            for rank, s in enumerate((sec, *vals)):
                for k in vals.get(s, {}):
                    for word in (k, *(a for a, target in FIELD_ALIASES.items() if target == (s, k))):
                        m = re.search(rf"(?<![A-Za-z_]){re.escape(word)}(?![A-Za-z_])", msg)
                        if m:
                            hits.append((m.start(), rank, s, k))
            if hits:
                _, _, s, k = min(hits)
                raise ConfigError(msg, s, k, lines.get((s, k))) from None
            raise ConfigError(msg, sec, None, lines.get((sec, ""))) from None

    model = vals.get("model", {})
    # physics defaults do not depend on dims, only the numerics do
    params = guarded("model", lambda: CloudParams(**{k: v for k, v in model.items() if k != "clamp"}))
    diff = guarded("diffusion", lambda: DiffusionParams(**vals.get("diffusion", {})))
    grid = guarded("grid", lambda: GridSpec(dims, get("grid", "n", base.grid.n), get("grid", "length", base.grid.length)))
    t_end = get("time", "t_end", base.t_end)
    default_snaps = base.snapshot_times if "t_end" not in vals.get("time", {}) else (t_end,)
    sim = guarded("time", lambda: SimConfig(
        params=params,
        diff=diff,
        grid=grid,
        h=get("time", "h", base.h),
        t_end=t_end,
        snapshot_times=get("time", "snapshot_times", default_snaps),
        noise_amplitude=get("noise", "amplitude", base.noise_amplitude),
        seed=get("noise", "seed", base.seed),
        dealias_rule=get("grid", "dealias", base.dealias_rule),
        clamp_policy=get("model", "clamp", base.clamp_policy),
        diag_interval=get("time", "diag_interval", base.diag_interval),
        pattern_std_factor=get("output", "pattern_std_factor", base.pattern_std_factor),
        pattern_peak_factor=get("output", "pattern_peak_factor", base.pattern_peak_factor),
    ))
    out = OutputOptions(
        format=get("output", "format", "text"),
        images=get("output", "images", True),
        modes_n_max=get("output", "modes_n_max", 10),
    )
    if out.modes_n_max < 1:
        raise ConfigError("must be >= 1", "output", "modes_n_max", lines.get(("output", "modes_n_max")))
    return RunSpec(sim, out)


def loads(text: str) -> RunSpec:
    data, lines = parse_ini(text)
    return _build(_convert(data, lines), lines)


def from_mapping(mapping: dict) -> RunSpec:
    """Build from a ``{section: {key: value}}`` mapping, e.g. the ``config`` block of a manifest."""
    data = {sec: dict(items) for sec, items in mapping.items()}
    return _build(_convert(data, {}), {})


def load(path: str | Path) -> RunSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        return from_mapping(doc.get("config", doc))
    return loads(text)


def to_mapping(spec: RunSpec) -> dict[str, dict[str, object]]:
    s, o = spec.sim, spec.output
    p = s.params
    return {
        "model": {"c": p.c, "a1": p.a1, "a2": p.a2, "gamma": p.gamma, "beta_c": p.beta_c, "beta_r": p.beta_r,
                  "zeta": p.zeta, "d": p.d, "B": p.B, "clamp": s.clamp_policy},
        "diffusion": {"d1": s.diff.d1, "d2": s.diff.d2},
        "grid": {"dims": s.grid.dims, "n": s.grid.n, "length": s.grid.length, "dealias": s.dealias_rule},
        "time": {"h": s.h, "t_end": s.t_end, "snapshot_times": list(s.snapshot_times), "diag_interval": s.diag_interval},
        "noise": {"amplitude": s.noise_amplitude, "seed": s.seed},
        "output": {"format": o.format, "images": o.images, "pattern_std_factor": s.pattern_std_factor,
                   "pattern_peak_factor": s.pattern_peak_factor, "modes_n_max": o.modes_n_max},
    }


def dumps(spec: RunSpec) -> str:
    """Render a resolved config as INI with full-precision numbers."""
    lines = []
    for sec, items in to_mapping(spec).items():
        lines.append(f"[{sec}]")
        for k, v in items.items():
            if isinstance(v, list):
                v = ", ".join(repr(float(x)) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
