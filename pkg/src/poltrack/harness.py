"""Scenario configuration, experiment presets, CSV emission, and summaries.

A scenario is described by a flat INI-style config file (``key = value`` under
named sections); every key has an embedded default and the fully resolved
config is written next to each run's outputs, so a run is reproducible from
its output directory alone.  Runs are pure functions of their config: the
same seed gives byte-identical CSV output.

Output layout per run: ``series.csv``, ``summary.txt``, ``config.resolved``.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .feedback import ControllerConfig, ControllerState, World, track
from .optics import (
    DEFAULT_AXIS_DRIFT_SIGMA,
    DEFAULT_GAIN,
    DEFAULT_GAIN_JITTER,
    DEFAULT_MAX_AXIS_WANDER,
    DEFAULT_V_MAX,
    DEFAULT_V_MIN,
    LinkBudget,
    RandomWalkChannel,
    ScramblerChannel,
    StaticChannel,
    default_epc,
    transmittance,
)
from .photon_sim import SourceParams
from .poincare import StokesVector, rotation_from_axis_angle
from .stats import delta_table
from .timeseries import TimeSeries, TimeSeriesRow

SCENARIO_KINDS = ("static", "drift", "scramble", "sample-size-table")

CSV_HEADER = "cycle,t_seconds,qber_est,e_z,e_x,v1,v2,v3,v4,v5,v6,v7,v8,recenter,converged"


class ConfigError(ValueError):
    """Invalid scenario configuration; messages carry section.key context."""


@dataclass(frozen=True)
class EpcParams:
    """Construction parameters of one EPC (both arms use the same)."""

    gain: float = DEFAULT_GAIN
    gain_jitter: float = DEFAULT_GAIN_JITTER
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX
    axis_drift_sigma: float = DEFAULT_AXIS_DRIFT_SIGMA
    max_axis_wander: float = DEFAULT_MAX_AXIS_WANDER


@dataclass(frozen=True)
class ChannelParams:
    """Flat bag of channel-model parameters; ``model`` picks which apply."""

    model: str = "random_walk"  # static | random_walk | scrambler
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    angle_deg: float = 30.0  # static model
    step_sigma: float = 0.012  # random walk, rad per cycle
    axis_resample_period: int = 1  # random walk
    rate_deg_per_cycle: float = 0.2  # scrambler


@dataclass(frozen=True)
class TableParams:
    """Grid of the estimator-error table."""

    mu: float = 0.1
    eta: float = 0.1
    qber_values: tuple[float, ...] = (0.01, 0.02, 0.03)
    b_values: tuple[int, ...] = (250, 500, 1000, 2500, 5000, 10000, 25000, 50000, 100000)


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "drift"
    duration: int = 7200
    fc_seconds: float = 12.0
    seed: int = 12345
    control_enabled: bool = True
    link: LinkBudget = field(default_factory=lambda: LinkBudget(0.2, 0.0, 1.0))
    source: SourceParams = field(default_factory=lambda: SourceParams(mu=0.5))
    epc: EpcParams = field(default_factory=EpcParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    controller_z: ControllerConfig = field(default_factory=ControllerConfig)
    controller_x: ControllerConfig = field(default_factory=ControllerConfig)
    table: TableParams = field(default_factory=TableParams)


@dataclass(frozen=True)
class Summary:
    """Run-level statistics of a time series."""

    cycles: int
    mean_qber: float
    std_qber: float
    max_qber: float
    recenter_events: int
    nonconverged_cycles: int


# ---------------------------------------------------------------------------
# config file parsing and emission

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def config_to_ini(cfg: ScenarioConfig) -> str:
    """Canonical INI rendering; section and key order is fixed."""
    lines = [
        "[scenario]",
        f"kind = {cfg.kind}",
        f"duration = {cfg.duration}",
        f"fc_seconds = {_fmt(cfg.fc_seconds)}",
        f"seed = {cfg.seed}",
        f"control_enabled = {_fmt(cfg.control_enabled)}",
        "",
        "[link]",
        f"alpha_db_per_km = {_fmt(cfg.link.alpha)}",
        f"length_km = {_fmt(cfg.link.length)}",
        f"eta_bob = {_fmt(cfg.link.eta_bob)}",
        "",
        "[source]",
        f"mean_photons = {_fmt(cfg.source.mu)}",
        f"rep_rate_hz = {_fmt(cfg.source.rep_rate)}",
        f"dark_count_prob = {_fmt(cfg.source.dark_count_prob)}",
        f"misalignment_floor = {_fmt(cfg.source.misalignment_floor)}",
        "",
        "[epc]",
        f"gain_rad_per_volt = {_fmt(cfg.epc.gain)}",
        f"gain_jitter = {_fmt(cfg.epc.gain_jitter)}",
        f"v_min = {_fmt(cfg.epc.v_min)}",
        f"v_max = {_fmt(cfg.epc.v_max)}",
        f"axis_drift_sigma_rad = {_fmt(cfg.epc.axis_drift_sigma)}",
        f"max_axis_wander_rad = {_fmt(cfg.epc.max_axis_wander)}",
        "",
        "[channel]",
        f"model = {cfg.channel.model}",
        f"axis = {_fmt(cfg.channel.axis)}",
        f"angle_deg = {_fmt(cfg.channel.angle_deg)}",
        f"step_sigma_rad = {_fmt(cfg.channel.step_sigma)}",
        f"axis_resample_period = {cfg.channel.axis_resample_period}",
        f"rate_deg_per_cycle = {_fmt(cfg.channel.rate_deg_per_cycle)}",
        "",
        "[controller_z]",
        *_controller_lines(cfg.controller_z),
        "",
        "[controller_x]",
        *_controller_lines(cfg.controller_x),
        "",
        "[table]",
        f"mu = {_fmt(cfg.table.mu)}",
        f"eta = {_fmt(cfg.table.eta)}",
        f"qber_values = {_fmt(cfg.table.qber_values)}",
        f"b_values = {_fmt(cfg.table.b_values)}",
    ]
    return "\n".join(lines) + "\n"


def _controller_lines(c: ControllerConfig) -> list[str]:
    return [
        f"dither_volts = {_fmt(c.dither)}",
        f"tau = {_fmt(c.tau)}",
        f"e_threshold = {_fmt(c.e_threshold)}",
        f"sample_fraction = {_fmt(c.sample_fraction)}",
        f"max_cycles_per_correction = {c.max_cycles_per_correction}",
        f"batch_pulses = {c.batch_pulses}",
    ]


_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


class _SectionReader:
    """Typed key lookup over one INI section, collecting per-key errors."""

    def __init__(self, name: str, raw: dict[str, str], errors: list[str]):
        self.name = name
        self.raw = raw
        self.errors = errors
        self.seen: set[str] = set()

    def _get(self, key: str) -> str | None:
        self.seen.add(key)
        return self.raw.get(key)

    def _parse(self, key: str, conv, default):
        text = self._get(key)
        if text is None:
            return default
        try:
            return conv(text)
        except (ValueError, TypeError) as exc:
            self.errors.append(f"{self.name}.{key}: {exc}")
            return default

    def str_(self, key, default):
        return self._parse(key, str, default)

    def int_(self, key, default):
        return self._parse(key, int, default)

    def float_(self, key, default):
        return self._parse(key, float, default)

    def bool_(self, key, default):
        def conv(text: str) -> bool:
            try:
                return _BOOL_VALUES[text.strip().lower()]
            except KeyError:
                raise ValueError(f"expected a boolean, got {text!r}") from None

        return self._parse(key, conv, default)

    def floats(self, key, default):
        return self._parse(key, lambda t: tuple(float(x) for x in t.split(",")), default)

    def ints(self, key, default):
        return self._parse(key, lambda t: tuple(int(x) for x in t.split(",")), default)

    def check_unknown(self) -> None:
        for key in self.raw:
            if key not in self.seen:
                self.errors.append(f"{self.name}.{key}: unknown key")


def parse_config(text: str, defaults: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse an INI config, overlaying the given (or built-in) defaults.

    Raises ConfigError with one line per offending field.
    """
    base = defaults if defaults is not None else ScenarioConfig()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None

    errors: list[str] = []
    known = {
        "scenario", "link", "source", "epc", "channel",
        "controller", "controller_z", "controller_x", "table",
    }
    for section in parser.sections():
        if section not in known:
            errors.append(f"{section}: unknown section")

    def reader(section: str) -> _SectionReader:
        raw = dict(parser[section]) if parser.has_section(section) else {}
        return _SectionReader(section, raw, errors)

    sc = reader("scenario")
    kind = sc.str_("kind", base.kind)
    duration = sc.int_("duration", base.duration)
    fc_seconds = sc.float_("fc_seconds", base.fc_seconds)
    seed = sc.int_("seed", base.seed)
    control_enabled = sc.bool_("control_enabled", base.control_enabled)
    sc.check_unknown()

    li = reader("link")
    link_vals = (
        li.float_("alpha_db_per_km", base.link.alpha),
        li.float_("length_km", base.link.length),
        li.float_("eta_bob", base.link.eta_bob),
    )
    li.check_unknown()

    so = reader("source")
    source_vals = (
        so.float_("mean_photons", base.source.mu),
        so.float_("rep_rate_hz", base.source.rep_rate),
        so.float_("dark_count_prob", base.source.dark_count_prob),
        so.float_("misalignment_floor", base.source.misalignment_floor),
    )
    so.check_unknown()

    ep = reader("epc")
    epc = EpcParams(
        gain=ep.float_("gain_rad_per_volt", base.epc.gain),
        gain_jitter=ep.float_("gain_jitter", base.epc.gain_jitter),
        v_min=ep.float_("v_min", base.epc.v_min),
        v_max=ep.float_("v_max", base.epc.v_max),
        axis_drift_sigma=ep.float_("axis_drift_sigma_rad", base.epc.axis_drift_sigma),
        max_axis_wander=ep.float_("max_axis_wander_rad", base.epc.max_axis_wander),
    )
    ep.check_unknown()

    ch = reader("channel")
    channel = ChannelParams(
        model=ch.str_("model", base.channel.model),
        axis=ch.floats("axis", base.channel.axis),
        angle_deg=ch.float_("angle_deg", base.channel.angle_deg),
        step_sigma=ch.float_("step_sigma_rad", base.channel.step_sigma),
        axis_resample_period=ch.int_("axis_resample_period", base.channel.axis_resample_period),
        rate_deg_per_cycle=ch.float_("rate_deg_per_cycle", base.channel.rate_deg_per_cycle),
    )
    ch.check_unknown()

    controller_keys = {
        "dither_volts": ("dither", float),
        "tau": ("tau", float),
        "e_threshold": ("e_threshold", float),
        "sample_fraction": ("sample_fraction", float),
        "max_cycles_per_correction": ("max_cycles_per_correction", int),
        "batch_pulses": ("batch_pulses", int),
    }

    def controller_overrides(section: str) -> dict:
        co = reader(section)
        out = {}
        for key, (field_name, conv) in controller_keys.items():
            raw = co._get(key)
            if raw is not None:
                try:
                    out[field_name] = conv(raw)
                except ValueError as exc:
                    errors.append(f"{section}.{key}: {exc}")
        co.check_unknown()
        return out

    def apply_overrides(section: str, base_ctrl: ControllerConfig, over: dict) -> ControllerConfig:
        try:
            return replace(base_ctrl, **over)
        except ValueError as exc:
            errors.append(f"{section}: {exc}")
            return base_ctrl

    # [controller] sets both arms; [controller_z] / [controller_x] override it.
    shared = controller_overrides("controller")
    controller_z = apply_overrides(
        "controller_z", base.controller_z, {**shared, **controller_overrides("controller_z")}
    )
    controller_x = apply_overrides(
        "controller_x", base.controller_x, {**shared, **controller_overrides("controller_x")}
    )

    ta = reader("table")
    table = TableParams(
        mu=ta.float_("mu", base.table.mu),
        eta=ta.float_("eta", base.table.eta),
        qber_values=ta.floats("qber_values", base.table.qber_values),
        b_values=ta.ints("b_values", base.table.b_values),
    )
    ta.check_unknown()

    if errors:
        raise ConfigError("\n".join(errors))

    cfg = ScenarioConfig(
        kind=kind,
        duration=duration,
        fc_seconds=fc_seconds,
        seed=seed,
        control_enabled=control_enabled,
        link=_build("link", LinkBudget, link_vals),
        source=_build("source", SourceParams, source_vals),
        epc=epc,
        channel=channel,
        controller_z=controller_z,
        controller_x=controller_x,
        table=table,
    )
    validate_config(cfg)
    return cfg


def _build(section: str, cls, vals):
    try:
        return cls(*vals)
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def validate_config(cfg: ScenarioConfig) -> None:
    """Cross-field checks with field-level messages."""
    errors = []
    if cfg.kind not in SCENARIO_KINDS:
        errors.append(f"scenario.kind: must be one of {', '.join(SCENARIO_KINDS)}")
    if cfg.kind != "sample-size-table" and cfg.duration < 1:
        errors.append("scenario.duration: must be at least 1")
    if not (cfg.fc_seconds > 0.0):
        errors.append("scenario.fc_seconds: must be positive")
    if cfg.channel.model not in ("static", "random_walk", "scrambler"):
        errors.append("channel.model: must be static, random_walk, or scrambler")
    if len(cfg.channel.axis) != 3 or all(a == 0.0 for a in cfg.channel.axis):
        errors.append("channel.axis: need a non-zero 3-vector")
    if cfg.channel.axis_resample_period < 1:
        errors.append("channel.axis_resample_period: must be at least 1")
    if not (0.0 <= cfg.epc.gain_jitter < 1.0):
        errors.append("epc.gain_jitter: must be in [0, 1)")
    if not (cfg.epc.gain > 0.0):
        errors.append("epc.gain_rad_per_volt: must be positive")
    if not (cfg.epc.v_min < cfg.epc.v_max):
        errors.append("epc.v_min/v_max: empty voltage range")
    if cfg.epc.axis_drift_sigma < 0.0:
        errors.append("epc.axis_drift_sigma_rad: must be non-negative")
    if errors:
        raise ConfigError("\n".join(errors))


# ---------------------------------------------------------------------------
# presets

PRESET_NAMES = ("static", "drift24h", "scramble02", "scramble04", "scramble06", "table")

# Hardware-scale settings: 50 km of fiber at 0.2 dB/km into 10% detectors,
# 0.1 photons per pulse, and one full 12 s pulse train per evaluation with
# 10% of the sifted bits revealed.  Slow; desk-scale presets compress the
# batch.
_FULL_LINK = LinkBudget(0.2, 50.0, 0.1)
_FULL_SOURCE = SourceParams(mu=0.1)
_FULL_CONTROLLER = ControllerConfig(sample_fraction=0.1, batch_pulses=30_000_000)


def preset_config(name: str, *, full: bool = False) -> ScenarioConfig:
    """Named experiment presets reproducing the reference scenarios at desk scale."""
    base = ScenarioConfig()
    if full:
        base = replace(
            base,
            link=_FULL_LINK,
            source=_FULL_SOURCE,
            controller_z=_FULL_CONTROLLER,
            controller_x=_FULL_CONTROLLER,
        )
    if name == "static":
        return replace(
            base,
            kind="static",
            duration=300,
            channel=ChannelParams(model="static", axis=(0.0, 1.0, 0.0), angle_deg=30.0),
        )
    if name == "drift24h":
        return replace(
            base,
            kind="drift",
            duration=7200,
            channel=ChannelParams(model="random_walk", step_sigma=0.012, axis_resample_period=1),
        )
    if name.startswith("scramble") and name in PRESET_NAMES:
        rate = {"scramble02": 0.2, "scramble04": 0.4, "scramble06": 0.6}[name]
        # scrambling keeps the controller busy nearly every cycle; a smaller
        # batch and sweep cap keep desk runs quick at a small noise cost
        ctrl_z = replace(base.controller_z, max_cycles_per_correction=3, batch_pulses=15_000)
        ctrl_x = replace(base.controller_x, max_cycles_per_correction=3, batch_pulses=15_000)
        return replace(
            base,
            kind="scramble",
            duration=3000,
            channel=ChannelParams(model="scrambler", axis=(0.0, 0.0, 1.0), rate_deg_per_cycle=rate),
            controller_z=ctrl_z,
            controller_x=ctrl_x,
        )
    if name == "table":
        return replace(base, kind="sample-size-table")
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")


# ---------------------------------------------------------------------------
# running

def build_channel(cfg: ScenarioConfig):
    axis = StokesVector.unit(*cfg.channel.axis)
    if cfg.channel.model == "static":
        return StaticChannel(rotation_from_axis_angle(axis, math.radians(cfg.channel.angle_deg)))
    if cfg.channel.model == "scrambler":
        return ScramblerChannel(axis=axis, rate=cfg.channel.rate_deg_per_cycle)
    return RandomWalkChannel(
        step_sigma=cfg.channel.step_sigma,
        axis_resample_period=cfg.channel.axis_resample_period,
    )


def run_scenario(cfg: ScenarioConfig) -> tuple[TimeSeries, Summary]:
    """Execute a simulation scenario; pure function of the config."""
    validate_config(cfg)
    if cfg.kind == "sample-size-table":
        raise ConfigError(
            "scenario.kind: sample-size-table emits a table, not a time series; "
            "use the table command"
        )
    ss = np.random.SeedSequence(cfg.seed)
    ss_epc_z, ss_epc_x, ss_track = ss.spawn(3)

    def make_epc(child: np.random.SeedSequence):
        return default_epc(
            np.random.Generator(np.random.Philox(child)),
            gain=cfg.epc.gain,
            gain_jitter=cfg.epc.gain_jitter,
            v_min=cfg.epc.v_min,
            v_max=cfg.epc.v_max,
        )

    world = World(
        channel=build_channel(cfg),
        source=cfg.source,
        eta=transmittance(cfg.link),
        axis_drift_sigma=cfg.epc.axis_drift_sigma,
        max_axis_wander=cfg.epc.max_axis_wander,
    )
    series = track(
        ControllerState(epc=make_epc(ss_epc_z)),
        ControllerState(epc=make_epc(ss_epc_x)),
        cfg.controller_z,
        cfg.controller_x,
        world,
        cfg.duration,
        fc_seconds=cfg.fc_seconds,
        control_enabled=cfg.control_enabled,
        seed=ss_track,
    )
    return series, summarize(series)


def summarize(series: TimeSeries) -> Summary:
    """Mean, population standard deviation, and flag counts of a series."""
    if len(series) == 0:
        raise ValueError("cannot summarize an empty series")
    q = np.array(series.column("qber_est"))
    return Summary(
        cycles=len(series),
        mean_qber=float(np.mean(q)),
        std_qber=float(np.std(q)),
        max_qber=float(np.max(q)),
        recenter_events=int(sum(series.column("recenter"))),
        nonconverged_cycles=sum(1 for c in series.column("converged") if not c),
    )


def summary_to_text(summary: Summary) -> str:
    return (
        f"cycles = {summary.cycles}\n"
        f"mean_qber = {summary.mean_qber:.9g}\n"
        f"std_qber = {summary.std_qber:.9g}\n"
        f"max_qber = {summary.max_qber:.9g}\n"
        f"recenter_events = {summary.recenter_events}\n"
        f"nonconverged_cycles = {summary.nonconverged_cycles}\n"
    )


# ---------------------------------------------------------------------------
# CSV emission

def series_to_csv(series: TimeSeries) -> str:
    """Render a series with the fixed header and 9-significant-digit floats."""
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for r in series:
        fields = [
            str(r.cycle),
            f"{r.t_seconds:.9g}",
            f"{r.qber_est:.9g}",
            f"{r.e_z:.9g}",
            f"{r.e_x:.9g}",
            *(f"{v:.9g}" for v in r.voltages),
            str(r.recenter),
            "1" if r.converged else "0",
        ]
        out.write(",".join(fields) + "\n")
    return out.getvalue()


def series_from_csv(text: str) -> TimeSeries:
    """Parse a series CSV; emit(parse(text)) reproduces the text byte for byte."""
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"bad or missing CSV header; expected {CSV_HEADER!r}")
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 15:
            raise ValueError(f"line {n}: expected 15 fields, got {len(parts)}")
        rows.append(
            TimeSeriesRow(
                cycle=int(parts[0]),
                t_seconds=float(parts[1]),
                qber_est=float(parts[2]),
                e_z=float(parts[3]),
                e_x=float(parts[4]),
                voltages=tuple(float(p) for p in parts[5:13]),
                recenter=int(parts[13]),
                converged=parts[14] == "1",
            )
        )
    return TimeSeries(tuple(rows))


# ---------------------------------------------------------------------------
# estimator-error table emission

def table_to_csv(qber_values, b_values, cells: np.ndarray) -> str:
    """Table CSV with a ``B,<qber>...`` header; full-precision floats."""
    lines = ["B," + ",".join(repr(float(q)) for q in qber_values)]
    for i, b in enumerate(b_values):
        lines.append(str(int(b)) + "," + ",".join(repr(float(x)) for x in cells[i]))
    return "\n".join(lines) + "\n"


def table_from_csv(text: str):
    """Parse a table CSV back into (qber_values, b_values, cells)."""
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split(",")
    if header[0] != "B":
        raise ValueError("bad table header")
    qber_values = tuple(float(q) for q in header[1:])
    b_values = []
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        b_values.append(int(parts[0]))
        rows.append([float(x) for x in parts[1:]])
    return qber_values, tuple(b_values), np.array(rows)


def emit_sample_size_table(mu, eta, qber_values, b_values, output_path) -> np.ndarray:
    """Compute the estimator-error table and write it as CSV."""
    cells = delta_table(qber_values, b_values, mu, eta)
    with open(output_path, "w", encoding="utf-8") as fh:
        fh.write(table_to_csv(qber_values, b_values, cells))
    return cells
