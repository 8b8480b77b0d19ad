"""Run configuration: one JSON document covering every tunable.

Files carry a ``format``/``version`` header.  Missing keys take the library
defaults, unknown keys are rejected so typos fail loudly, and the effective
configuration of every run is written next to its outputs.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .. import gridworld as gw
from ..hrl import HrlConfig
from ..nn.policy import NetConfig
from ..ppo import PpoConfig

__all__ = ["ALGORITHMS", "RunConfig", "ConfigError", "load_config", "save_config", "CONFIG_FORMAT", "CONFIG_VERSION"]

CONFIG_FORMAT = "hrlnav-config"
CONFIG_VERSION = 1
ALGORITHMS = ("flat_ppo", "hrl4in", "hrl4in_no_embodiment")


class ConfigError(ValueError):
    pass


def _build(cls, overrides: dict, what: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    if cls is NetConfig:
        return NetConfig.from_dict(overrides)
    return cls(**overrides)


@dataclasses.dataclass
class RunConfig:
    algorithm: str = "hrl4in"
    layout: str = "toy11"  # builtin layout name or path to a layout file
    seeds: tuple[int, ...] = (0,)
    total_updates: int = 1000
    n_envs: int = 8
    eval_every: int = 25  # update cycles between greedy evaluations, 0 disables
    eval_episodes: int = 100
    checkpoint_every: int = 100
    stop_success: float | None = None  # stop a seed once greedy success reaches this
    random_goal: bool = False
    precision: str = "float32"
    out_dir: str = "runs/default"
    ppo: PpoConfig = dataclasses.field(default_factory=PpoConfig)
    hrl: HrlConfig = dataclasses.field(default_factory=HrlConfig)
    net: NetConfig = dataclasses.field(default_factory=NetConfig)

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)

    def validate(self) -> RunConfig:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {list(self.seeds)}")
        if self.total_updates < 1 or self.n_envs < 1:
            raise ConfigError("total_updates and n_envs must be positive")
        if self.eval_every < 0 or self.eval_episodes < 1 or self.checkpoint_every < 1:
            raise ConfigError("eval_every >= 0, eval_episodes >= 1 and checkpoint_every >= 1 are required")
        if self.precision not in ("float32", "float64"):
            raise ConfigError("precision must be float32 or float64")
        self.load_layout()
        self.ppo.validate()
        return self

    def load_layout(self) -> gw.GridLayout:
        path = Path(self.layout)
        if path.is_file():
            return gw.load_layout(path)
        try:
            return gw.builtin_layout(self.layout)
        except gw.LayoutError:
            raise ConfigError(f"layout {self.layout!r} is neither an existing file nor a builtin name") from None

    def hrl_config(self) -> HrlConfig:
        """The HRL settings with the embodiment ablation applied."""
        if self.algorithm == "hrl4in_no_embodiment":
            return dataclasses.replace(self.hrl, embodiment_selection=False)
        return self.hrl

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return {"format": CONFIG_FORMAT, "version": CONFIG_VERSION, **d}

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        d = dict(d)
        fmt, ver = d.pop("format", CONFIG_FORMAT), d.pop("version", CONFIG_VERSION)
        if fmt != CONFIG_FORMAT:
            raise ConfigError(f"not a run config (format {fmt!r})")
        if ver != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {ver}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        ppo = _build(PpoConfig, d.pop("ppo", {}), "ppo")
        hrl = _build(HrlConfig, d.pop("hrl", {}), "hrl")
        net = _build(NetConfig, d.pop("net", {}), "net")
        return cls(**d, ppo=ppo, hrl=hrl, net=net)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


def load_config(path) -> RunConfig:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    return RunConfig.from_dict(data).validate()


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
