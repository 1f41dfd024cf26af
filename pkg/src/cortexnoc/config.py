"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .accel import MODES
from .cla_ref import CortexConfig
from .errors import ConfigError
from .noc import NetConfig
from .sdr import SdrParams


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "run"
    # cortex
    columns: int = 512
    cells: int = 16
    density: float = 0.02
    activation_threshold: int = 5
    match_threshold: int = 3
    max_level: int = 15
    sp_inc: float = 0.08
    sp_dec: float = 0.003
    tm_inc: float = 0.1
    tm_dec: float = 0.1
    learning: bool = True
    cortex_seed: int = 1
    # encoder
    k: int = 2045
    w: int = 40
    encoder_seed: int = 0
    # network
    dims: tuple[int, int] = (4, 4)
    link_width: int = 16
    buffer_bytes: int = 160
    max_packet_bytes: int = 80
    router_pipeline: int = 4
    watchdog_cycles: int = 200_000
    trace: bool = False
    # machine
    mode: str = "pipelined"
    coalescing: bool = True
    zones: int = 1
    verify: bool = False
    # workload
    workload: str = "synthetic"
    series: int = 4
    reps: int = 5
    csv_path: str = ""
    csv_column: str = "value"
    levels: int = 130
    probation: float = 0.1
    # output
    out_dir: str = "out"

    def validate(self) -> "ExperimentConfig":
        """Build every derived object once so that all errors surface up front."""
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}", field="mode")
        if self.workload not in ("synthetic", "csv"):
            raise ConfigError("workload must be 'synthetic' or 'csv'", field="workload")
        if self.workload == "csv" and not self.csv_path:
            raise ConfigError("csv workload needs csv_path", field="csv_path")
        for name in ("series", "reps", "zones"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1", field=name)
        if not 1 <= self.levels <= 130:
            raise ConfigError("levels must be in [1, 130]", field="levels")
        if not 0 < self.probation <= 1:
            raise ConfigError("probation must be in (0, 1]", field="probation")
        if not self.name or any(c in self.name for c in "/\\"):
            raise ConfigError("name must be a plain file stem", field="name")
        from .accel import map_cortex
        map_cortex(self.cortex(), self.net(), self.zones)
        return self

    def cortex(self) -> CortexConfig:
        return CortexConfig(
            num_columns=self.columns, cells=self.cells, density=self.density,
            activation_threshold=self.activation_threshold, match_threshold=self.match_threshold,
            max_level=self.max_level, sp_inc=self.sp_inc, sp_dec=self.sp_dec,
            tm_inc=self.tm_inc, tm_dec=self.tm_dec, learning=self.learning, seed=self.cortex_seed,
            sdr=SdrParams(self.k, self.w, self.encoder_seed))

    def net(self) -> NetConfig:
        return NetConfig(dims=self.dims, link_width=self.link_width, buffer_bytes=self.buffer_bytes,
                         max_packet_bytes=self.max_packet_bytes,
                         router_pipeline=self.router_pipeline, coalescing=self.coalescing,
                         watchdog_cycles=self.watchdog_cycles, trace=self.trace)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def items(self) -> list[tuple[str, str]]:
        return [(f.name, format_value(getattr(self, f.name))) for f in fields(self)]

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())


PAPER_PRESET = dict(dims=(16, 16), columns=2025, cells=32, activation_threshold=20,
                    match_threshold=10)

_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_DEFAULTS = ExperimentConfig()


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return "x".join(str(x) for x in v)
    return str(v)


def parse_value(key: str, text: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}", field=key)
    kind = type(getattr(_DEFAULTS, key))
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is tuple:
            parts = text.lower().split("x")
            if len(parts) != 2:
                raise ValueError(text)
            return (int(parts[0]), int(parts[1]))
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key}", field=key) from None


def parse_assignments(pairs, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, val = pair.split("=", 1)
        key = key.strip()
        updates[key] = parse_value(key, val)
    try:
        return dataclasses.replace(base, **updates)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        pairs.append(line)
    return parse_assignments(pairs, base)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text)


def paper(base: ExperimentConfig | None = None) -> ExperimentConfig:
    return dataclasses.replace(base or ExperimentConfig(), **PAPER_PRESET)
