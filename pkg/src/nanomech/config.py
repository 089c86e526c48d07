"""Scenario files: sectioned key = value text with units in every key name.

Values are kept in the lab units written in the file, so parse -> serialize
-> parse is exact; SI objects are built on demand. Unknown sections or keys
are errors, reported with the line they occur on.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .cavity import ReadoutGeometry, s_min
from .mechanics import DriveSpec
from .model import TWO_PI, CavityParams, CouplingModel, DomainError, MechanicalMode, coupling_from_geometry
from .readout import NoiseModel

FEEDLINE_OHM = 50.0


class ConfigError(ValueError):
    """Invalid scenario; ``line`` is the 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)


def _float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "lossless"):
        return math.inf
    value = float(t)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _int(text: str) -> int:
    return int(text.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    items = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    return tuple(_float(s) for s in items)


def _str(text: str) -> str:
    return text.strip()


REQUIRED = object()

# section -> key -> (parser, default); REQUIRED marks a mandatory key, None an optional one
SCHEMA: dict[str, dict[str, tuple]] = {
    "cavity": {
        "f_c_ghz": (_float, REQUIRED),
        "q_int": (_float, REQUIRED),
        "q_ext": (_float, REQUIRED),
        "z_line_ohm": (_float, 70.0),
        "power_pw": (_float, 0.0),
        "carrier_v0_v": (_float, None),
        "probe_detuning_khz": (_float, 0.0),
    },
    "mechanics": {
        "f_m_khz": (_float, REQUIRED),
        "mass_pg": (_float, REQUIRED),
        "q_m": (_float, REQUIRED),
        "temperature_mk": (_float, REQUIRED),
    },
    "coupling": {
        "dcb_dx_af_per_um": (_float, 0.0),
        "dcd_dx_af_per_um": (_float, 0.0),
        "g_khz_per_nm": (_float, None),
    },
    "noise": {
        "t_n_k": (_float, 0.0),
        "a_tls": (_float, 0.0),
        "tls_exponent": (_float, 0.5),
        "gain_factor": (_float, 1.0),
    },
    "drive": {
        "v_dc_v": (_float, REQUIRED),
        "v_ac_uv": (_float, REQUIRED),
        "f_drive_khz": (_float, REQUIRED),
    },
    "run": {
        "seed": (_int, None),
        "engine": (_str, "spectral"),
        "averages": (_int, 100),
        "duration_s": (_float, 0.05),
        "dt_s": (_float, None),
        "decimate": (_int, 10),
        "segment_length": (_int, 4096),
        "overlap": (_float, 0.5),
        "grid_f_min_khz": (_float, None),
        "grid_f_max_khz": (_float, None),
        "grid_points": (_int, 801),
        "fit_halfwidth_linewidths": (_float, 10.0),
        "workers": (_int, 1),
    },
    "sweep": {
        "powers_pw": (_floats, ()),
        "temperatures_mk": (_floats, ()),
        "min_temp_mk": (_float, 127.0),
        "base_temp_mk": (_float, 17.0),
        "saturation_mk": (_float, 0.0),
        # optional per-temperature values, aligned with temperatures_mk
        "q_int_per_point": (_floats, ()),
        "q_ext_per_point": (_floats, ()),
        "q_m_per_point": (_floats, ()),
    },
}

OVERRIDES = {"q_int_per_point": ("cavity", "q_int"), "q_ext_per_point": ("cavity", "q_ext"),
             "q_m_per_point": ("mechanics", "q_m")}

OPTIONAL_SECTIONS = {"drive", "run", "sweep", "coupling", "noise"}
ENGINES = ("spectral", "langevin")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def _line_index(text: str) -> dict:
    """Map (section, key) and section headers to 1-based line numbers."""
    index, section = {}, None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            index.setdefault((section, None), n)
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        if section is not None:
            index.setdefault((section, key), n)
    return index


@dataclass(frozen=True, eq=True)
class Scenario:
    values: dict = field(default_factory=dict)
    source: str = "<config>"

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.values == other.values

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    def has(self, section: str) -> bool:
        return section in self.values

    def replace(self, section: str, **updates) -> "Scenario":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals.setdefault(section, {}).update(updates)
        return Scenario(vals, self.source)

    def at_point(self, index: int) -> "Scenario":
        """Scenario with the per-point sweep overrides for temperature ``index`` applied."""
        scn = self
        for key, (section, target) in OVERRIDES.items():
            values = self.sweep(key)
            if values:
                scn = scn.replace(section, **{target: values[index]})
        return scn

    # SI views

    @property
    def cavity(self) -> CavityParams:
        c = self.values["cavity"]
        return CavityParams(
            omega_c=TWO_PI * c["f_c_ghz"] * 1e9,
            q_int=c["q_int"],
            q_ext=c["q_ext"],
            z_line=c["z_line_ohm"],
            power_incident=c["power_pw"] * 1e-12,
        )

    def cavity_at(self, power_w: float) -> CavityParams:
        c = self.cavity
        return CavityParams(c.omega_c, c.q_int, c.q_ext, c.z_line, power_w)

    @property
    def mode(self) -> MechanicalMode:
        m = self.values["mechanics"]
        return MechanicalMode(
            omega_m=TWO_PI * m["f_m_khz"] * 1e3,
            mass=m["mass_pg"] * 1e-15,
            q_m=m["q_m"],
            temperature_bath=m["temperature_mk"] * 1e-3,
        )

    @property
    def g_calibrated(self) -> Optional[float]:
        g = self.get("coupling", "g_khz_per_nm")
        return None if g is None else TWO_PI * g * 1e3 / 1e-9

    @property
    def coupling(self) -> CouplingModel:
        dcb = self.get("coupling", "dcb_dx_af_per_um", 0.0) * 1e-18 / 1e-6
        dcd = self.get("coupling", "dcd_dx_af_per_um", 0.0) * 1e-18 / 1e-6
        g = self.g_calibrated
        if g is None:
            g = coupling_from_geometry(dcb, self.cavity)
        return CouplingModel(dcb, dcd, g)

    @property
    def noise(self) -> NoiseModel:
        n = self.values.get("noise", {})
        d = SCHEMA["noise"]
        return NoiseModel(
            t_n=n.get("t_n_k", d["t_n_k"][1]),
            a_tls=n.get("a_tls", d["a_tls"][1]),
            tls_exponent=n.get("tls_exponent", d["tls_exponent"][1]),
            gain_factor=n.get("gain_factor", d["gain_factor"][1]),
        )

    @property
    def drive(self) -> Optional[DriveSpec]:
        if "drive" not in self.values:
            return None
        d = self.values["drive"]
        return DriveSpec(d["v_dc_v"], d["v_ac_uv"] * 1e-6, TWO_PI * d["f_drive_khz"] * 1e3)

    def carrier_v0(self, power_w: Optional[float] = None) -> float:
        """Off-resonance carrier amplitude; sqrt(2 Z0 P) on a 50 ohm feedline unless set."""
        v0 = self.get("cavity", "carrier_v0_v")
        if v0 is not None:
            return v0
        p = self.cavity.power_incident if power_w is None else power_w
        if p <= 0:
            raise ConfigError("cavity.power_pw must be > 0 when carrier_v0_v is not given", source=self.source)
        return math.sqrt(2.0 * FEEDLINE_OHM * p)

    def geometry(self, power_w: Optional[float] = None) -> ReadoutGeometry:
        cav = self.cavity if power_w is None else self.cavity_at(power_w)
        detuning = TWO_PI * self.get("cavity", "probe_detuning_khz", 0.0) * 1e3
        return ReadoutGeometry(self.carrier_v0(power_w), s_min(cav), detuning)

    def run(self, key: str):
        return self.values.get("run", {}).get(key, SCHEMA["run"][key][1])

    def sweep(self, key: str):
        return self.values.get("sweep", {}).get(key, SCHEMA["sweep"][key][1])

    def grid(self):
        import numpy as np

        mode = self.mode
        f_m = mode.omega_m / TWO_PI
        half = 20.0 * mode.gamma_m / TWO_PI
        lo = self.run("grid_f_min_khz")
        hi = self.run("grid_f_max_khz")
        lo = f_m - half if lo is None else lo * 1e3
        hi = f_m + half if hi is None else hi * 1e3
        if not 0 < lo < hi:
            raise ConfigError("run grid must satisfy 0 < grid_f_min_khz < grid_f_max_khz", source=self.source)
        return np.linspace(lo, hi, self.run("grid_points"))

    def serialize(self) -> str:
        out = []
        for section in SCHEMA:
            if section not in self.values:
                continue
            out.append(f"[{section}]")
            for key in SCHEMA[section]:
                value = self.values[section].get(key)
                if value is None:
                    continue
                out.append(f"{key} = {_format_value(value)}")
            out.append("")
        return "\n".join(out)


def parse_scenario(text: str, source: str = "<config>") -> Scenario:
    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="\x00defaults")
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", exc.lineno, source) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key '{exc.option}' in [{exc.section}]", exc.lineno, source) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, source) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected key = value)", lineno, source) from None

    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        name = section.strip().lower()
        if name not in SCHEMA:
            raise ConfigError(
                f"unknown section [{section}] (known: {', '.join(SCHEMA)})", lines.get((name, None)), source
            )
        schema = SCHEMA[name]
        sec: dict[str, Any] = {}
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(
                    f"unknown key '{key}' in [{name}] (known: {', '.join(schema)})", lines.get((name, key)), source
                )
            conv = schema[key][0]
            try:
                sec[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: invalid value {raw!r} ({exc})", lines.get((name, key)), source) from None
        for key, (_, default) in schema.items():
            if key in sec:
                continue
            if default is REQUIRED:
                raise ConfigError(f"[{name}] missing required key '{key}'", lines.get((name, None)), source)
            if default is not None:
                sec[key] = default
        values[name] = sec

    for name in SCHEMA:
        if name not in values and name not in OPTIONAL_SECTIONS:
            raise ConfigError(f"missing required section [{name}]", None, source)

    scn = Scenario(values, source)
    _validate(scn, lines)
    return scn


def _validate(scn: Scenario, lines: dict):
    """Build every SI object once so physical-domain errors surface with a location."""
    checks = [
        ("cavity", lambda: scn.cavity),
        ("mechanics", lambda: scn.mode),
        ("noise", lambda: scn.noise),
        ("coupling", lambda: scn.coupling),
        ("drive", lambda: scn.drive),
    ]
    for section, build in checks:
        try:
            build()
        except DomainError as exc:
            raise ConfigError(f"[{section}] {exc}", lines.get((section, None)), scn.source) from None
    engine = scn.run("engine")
    if engine not in ENGINES:
        raise ConfigError(f"[run] engine must be one of {ENGINES}, got {engine!r}",
                          lines.get(("run", "engine")), scn.source)
    for key in ("averages", "decimate", "segment_length", "grid_points", "workers"):
        if scn.run(key) < 1:
            raise ConfigError(f"[run] {key} must be >= 1", lines.get(("run", key)), scn.source)
    n_temps = len(scn.sweep("temperatures_mk"))
    for key in OVERRIDES:
        n = len(scn.sweep(key))
        if n and n != n_temps:
            raise ConfigError(f"[sweep] {key} has {n} values but temperatures_mk has {n_temps}",
                              lines.get(("sweep", key)), scn.source)
    for index in range(n_temps if any(scn.sweep(k) for k in OVERRIDES) else 0):
        point = scn.at_point(index)
        try:
            point.cavity, point.mode
        except DomainError as exc:
            raise ConfigError(f"[sweep] point {index}: {exc}", lines.get(("sweep", None)), scn.source) from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_scenario(text, source=str(path))
