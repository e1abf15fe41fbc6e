"""INI run configuration with strict key checking.

Sections are ``[plant]``, ``[loop]``, ``[scenario]`` and ``[sweep]``.
Unknown sections or keys are errors reported with their line number.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

from .blocks import DESK_SHORT_PERIOD, GustSpec, LoopConfig, NoiseSpec, PlantModel, make_roll, make_short_period
from .tf_core import DomainError
from .time_sim import KINDS, Battery, default_battery


class ConfigError(ValueError):
    """Bad configuration; message names the offending field."""


PLANT_KEYS = {
    "short_period": ("Z_alpha", "Z_eta", "M_alpha", "M_q", "M_eta"),
    "roll": ("L_p", "L_da"),
}
PLANT_DEFAULTS = {"short_period": DESK_SHORT_PERIOD, "roll": {}}

LOOP_REQUIRED = ("K_p", "K_v", "K_r", "T_act")
LOOP_FLOATS = ("K_p", "K_v", "K_r", "T_act", "B_hat_scale", "tau_a", "T_sensor", "tau_s", "T_diff", "tau_am")
LOOP_BOOLS = ("pch", "comp_filter", "comp_sensor")
LOOP_KEYS = LOOP_FLOATS + LOOP_BOOLS + ("B_hat", "law")

SCENARIO_DEFAULTS = dict(
    dt=1e-4,
    seed=0,
    samples=100,
    V=40.0,
    tracking_duration=12.0,
    amplitude=10.0,
    interval=3.0,
    gust_duration=10.0,
    gust_start=3.0,
    d_x=120.0,
    d_z=80.0,
    u_m=3.5,
    w_m=3.0,
    noise_duration=10.0,
    noise_variance=4.0e-7,
    uncertainty="M_alpha:0.2,M_q:0.2,M_eta:0.2",
    scenarios="tracking,disturbance,noise,robustness",
)
SCENARIO_INTS = ("seed", "samples")
SCENARIO_STRINGS = ("uncertainty", "scenarios")

SWEEP_KEYS = ("param", "values", "param2", "values2", "scenarios")
# sweepable names beyond the plain loop fields
DERIVED_SWEEP = ("B_hat_scale", "actuator_freq", "sensor_freq", "filter_bandwidth")
SWEEPABLE = tuple(k for k in LOOP_FLOATS if k != "B_hat_scale") + DERIVED_SWEEP


@dataclass
class RunConfig:
    """Fully resolved configuration; every default is materialized."""

    plant: dict
    loop: dict
    scenario: dict = field(default_factory=lambda: dict(SCENARIO_DEFAULTS))
    sweep: dict = field(default_factory=dict)

    def plant_model(self) -> PlantModel:
        p = dict(self.plant)
        model = p.pop("model")
        try:
            return make_short_period(**p) if model == "short_period" else make_roll(**p)
        except DomainError as e:
            raise ConfigError(f"plant: {e}") from e

    def loop_config(self, m: PlantModel | None = None, **overrides) -> LoopConfig:
        m = m or self.plant_model()
        d = dict(self.loop)
        d.update(overrides)
        scale = d.pop("B_hat_scale", 1.0)
        b = d.pop("B_hat", "CB")
        base = m.CB if b == "CB" else float(b)
        try:
            return LoopConfig(B_hat=base * scale, **d)
        except DomainError as e:
            raise ConfigError(f"loop: {e}") from e

    def battery(self) -> Battery:
        s = self.scenario
        try:
            b = default_battery(dt=s["dt"], seed=s["seed"], samples=s["samples"], V=s["V"])
            gust = GustSpec(d_x=s["d_x"], d_z=s["d_z"], u_m=s["u_m"], w_m=s["w_m"], V=s["V"], start_time=s["gust_start"])
            b = Battery(
                tracking=b.tracking.replace(duration=s["tracking_duration"], amplitude=s["amplitude"], interval=s["interval"]),
                disturbance=b.disturbance.replace(duration=s["gust_duration"], gust=gust),
                noise=b.noise.replace(duration=s["noise_duration"], noise=NoiseSpec(s["noise_variance"], s["seed"])),
                robustness=b.robustness.replace(
                    duration=s["tracking_duration"],
                    amplitude=s["amplitude"],
                    interval=s["interval"],
                    uncertainty=parse_uncertainty(s["uncertainty"]),
                ),
            )
        except DomainError as e:
            raise ConfigError(f"scenario: {e}") from e
        names = parse_list(s["scenarios"])
        unknown = set(names) - set(KINDS)
        if unknown:
            raise ConfigError(f"scenario.scenarios: unknown scenario(s) {sorted(unknown)}")
        return b.selected(names)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(dict(d["plant"]), dict(d["loop"]), dict(d["scenario"]), dict(d.get("sweep", {})))


def parse_list(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def parse_floats(text: str, where: str) -> list[float]:
    try:
        return [float(t) for t in parse_list(text)]
    except ValueError as e:
        raise ConfigError(f"{where}: expected comma-separated numbers, got {text!r}") from e


def parse_uncertainty(text: str) -> dict[str, float]:
    out = {}
    for item in parse_list(text):
        name, _, width = item.partition(":")
        try:
            out[name.strip()] = float(width)
        except ValueError as e:
            raise ConfigError(f"scenario.uncertainty: bad entry {item!r}") from e
    return out


def _line_index(text: str) -> dict[tuple[str, str], int]:
    # (section, key) -> 1-based line; (section, "") for headers
    idx, section = {}, ""
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if m := re.match(r"\[([^\]]+)\]", s):
            section = m.group(1).strip()
            idx.setdefault((section, ""), n)
        elif (m := re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)) and section:
            idx.setdefault((section, m.group(1)), n)
    return idx


def _parse_bool(v: str, where: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {v!r}")


def load_config(path) -> RunConfig:
    """Read and validate an INI file.

    Raises
    ------
    ConfigError
        Unknown section or key, missing required field, or unparsable value.
        The message carries ``section.key`` and the line number.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from e
    lines = _line_index(text)

    def where(sec, key=""):
        line = lines.get((sec, key))
        name = f"{sec}.{key}" if key else f"[{sec}]"
        return f"{name} (line {line})" if line else name

    allowed_sections = ("plant", "loop", "scenario", "sweep")
    for sec in cp.sections():
        if sec not in allowed_sections:
            raise ConfigError(f"unknown section {where(sec)}")

    def num(sec, key, cast=float):
        raw = cp.get(sec, key)
        try:
            return cast(raw)
        except ValueError as e:
            raise ConfigError(f"{where(sec, key)}: expected a number, got {raw!r}") from e

    # plant
    if not cp.has_section("plant"):
        raise ConfigError("missing section [plant]")
    model = cp.get("plant", "model", fallback="short_period")
    if model not in PLANT_KEYS:
        raise ConfigError(f"{where('plant', 'model')}: model must be one of {sorted(PLANT_KEYS)}")
    plant = {"model": model}
    for key in cp.options("plant"):
        if key != "model" and key not in PLANT_KEYS[model]:
            raise ConfigError(f"unknown key {where('plant', key)} for model {model}")
    for key in PLANT_KEYS[model]:
        if cp.has_option("plant", key):
            plant[key] = num("plant", key)
        elif key in PLANT_DEFAULTS[model]:
            plant[key] = PLANT_DEFAULTS[model][key]
        else:
            raise ConfigError(f"missing required field plant.{key}")

    # loop
    if not cp.has_section("loop"):
        raise ConfigError("missing section [loop]")
    loop = dict(B_hat="CB", B_hat_scale=1.0, tau_a=0.0, T_sensor=0.0, tau_s=0.0, T_diff=0.0, tau_am=0.0,
                law="modified", pch=False, comp_filter=False, comp_sensor=False)
    for key in cp.options("loop"):
        if key not in LOOP_KEYS:
            raise ConfigError(f"unknown key {where('loop', key)}")
        if key in LOOP_FLOATS:
            loop[key] = num("loop", key)
        elif key in LOOP_BOOLS:
            loop[key] = _parse_bool(cp.get("loop", key), where("loop", key))
        elif key == "B_hat":
            raw = cp.get("loop", key).strip()
            loop[key] = raw if raw == "CB" else num("loop", key)
        else:
            loop[key] = cp.get("loop", key).strip()
    for key in LOOP_REQUIRED:
        if key not in loop:
            raise ConfigError(f"missing required field loop.{key}")

    # scenario
    scenario = dict(SCENARIO_DEFAULTS)
    if cp.has_section("scenario"):
        for key in cp.options("scenario"):
            if key not in SCENARIO_DEFAULTS:
                raise ConfigError(f"unknown key {where('scenario', key)}")
            if key in SCENARIO_STRINGS:
                scenario[key] = cp.get("scenario", key).strip()
            else:
                scenario[key] = num("scenario", key, int if key in SCENARIO_INTS else float)

    # sweep
    sweep = {}
    if cp.has_section("sweep"):
        for key in cp.options("sweep"):
            if key not in SWEEP_KEYS:
                raise ConfigError(f"unknown key {where('sweep', key)}")
            sweep[key] = cp.get("sweep", key).strip()

    rc = RunConfig(plant, loop, scenario, sweep)
    rc.loop_config()  # validate early
    rc.battery()
    return rc
