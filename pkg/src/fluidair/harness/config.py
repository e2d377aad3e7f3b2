"""Experiment configuration and its INI text format.

Every key has a default, so an empty file is a valid configuration. Each
section maps to one dataclass; ``[pdd]`` and ``[channel]`` reuse the solver
and channel configs directly.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from fluidair.channel import ChannelConfig
from fluidair.errors import InvalidArgumentError
from fluidair.pdd import PddConfig

METHODS = ("pdd_fa", "select_all", "mrt", "rfa", "aps")
EXTERNAL_METHODS = ("dc",)  # reported, never run


@dataclass(frozen=True)
class ExperimentSection:
    methods: tuple[str, ...] = ("pdd_fa", "select_all", "mrt", "rfa", "aps")
    realizations: int = 16
    master_seed: int = 0
    users: int = 20
    workers: int = 1
    out_dir: str = "results"


@dataclass(frozen=True)
class OtaSection:
    p_a_dbm: float = 0.0
    sigma_n2_dbm: float = -20.0


@dataclass(frozen=True)
class FedSection:
    rounds: int = 25
    lr: float = 0.05
    l2: float = 1e-3
    dataset: str = "synthetic"
    samples_per_user: int = 270
    n_classes: int = 10
    n_features: int = 20
    class_sep: float = 1.0
    test_size: int = 2000
    mnist_dir: str = ""
    resolve_each_round: bool = False


@dataclass(frozen=True)
class BaselineSection:
    aps_grid_step: float = 0.25  # in wavelengths
    aps_rounds: int = 2
    rfa_max_tries: int = 10000
    rfa_redraw: str = "per_run"


SECTIONS = {
    "experiment": ExperimentSection,
    "channel": ChannelConfig,
    "ota": OtaSection,
    "pdd": PddConfig,
    "fedsim": FedSection,
    "baselines": BaselineSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    channel: ChannelConfig = field(default_factory=lambda: ChannelConfig(link_gain_db=DEFAULT_LINK_GAIN_DB))
    ota: OtaSection = field(default_factory=OtaSection)
    pdd: PddConfig = field(default_factory=lambda: PddConfig(align_start=True))
    fedsim: FedSection = field(default_factory=FedSection)
    baselines: BaselineSection = field(default_factory=BaselineSection)

    def __post_init__(self):
        validate(self)

    def with_overrides(self, **sections) -> "ExperimentConfig":
        parts = {name: getattr(self, name) for name in SECTIONS}
        for name, changes in sections.items():
            parts[name] = replace(parts[name], **changes)
        return ExperimentConfig(**parts)


# Extra gain on every channel power. With the path-loss model alone the
# received SNR is far below any usable level; see the README.
DEFAULT_LINK_GAIN_DB = 65.0


def validate(cfg: ExperimentConfig) -> None:
    e = cfg.experiment
    if e.realizations < 1:
        raise InvalidArgumentError("need at least one realization")
    if not e.methods:
        raise InvalidArgumentError("method list is empty")
    unknown = [m for m in e.methods if m not in METHODS + EXTERNAL_METHODS]
    if unknown:
        raise InvalidArgumentError(f"unknown methods: {', '.join(unknown)}")
    if e.users < 1 or e.workers < 1:
        raise InvalidArgumentError("users and workers must be positive")
    if cfg.fedsim.dataset not in ("synthetic", "mnist"):
        raise InvalidArgumentError(f"unknown dataset {cfg.fedsim.dataset!r}")
    if cfg.fedsim.rounds < 1 or cfg.fedsim.lr <= 0:
        raise InvalidArgumentError("need rounds >= 1 and lr > 0")
    if cfg.baselines.rfa_redraw not in ("per_run", "per_round"):
        raise InvalidArgumentError("rfa_redraw must be per_run or per_round")
    if cfg.baselines.aps_grid_step <= 0 or cfg.baselines.aps_rounds < 1:
        raise InvalidArgumentError("APS grid step and rounds must be positive")
    if cfg.channel.mode not in ("los", "rayleigh"):
        raise InvalidArgumentError(f"unknown channel mode {cfg.channel.mode!r}")


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(p.strip() for p in text.split(",") if p.strip())
    return text


def to_ini(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for name in SECTIONS:
        section = getattr(cfg, name)
        parser[name] = {f.name: _format(getattr(section, f.name)) for f in fields(section)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def from_ini(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidArgumentError(f"malformed config: {exc}") from exc
    base = ExperimentConfig()
    parts = {}
    for name, cls in SECTIONS.items():
        current = getattr(base, name)
        changes = {}
        if parser.has_section(name):
            known = {f.name for f in fields(cls)}
            for key, raw in parser[name].items():
                if key not in known:
                    raise InvalidArgumentError(f"[{name}] unknown key {key!r}")
                try:
                    changes[key] = _parse(raw, getattr(current, key))
                except ValueError as exc:
                    raise InvalidArgumentError(f"[{name}] {key}: {exc}") from exc
        try:
            parts[name] = replace(current, **changes)
        except ValueError as exc:
            raise InvalidArgumentError(f"[{name}] {exc}") from exc
    extra = set(parser.sections()) - set(SECTIONS)
    if extra:
        raise InvalidArgumentError(f"unknown sections: {', '.join(sorted(extra))}")
    return ExperimentConfig(**parts)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read {path}: {exc}") from exc
    return from_ini(text)
