"""Experiment configuration: parsing and validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

from ..protocols.lossy import BYZ_STRATEGIES, check_resilience
from ..sim.adversary import ADVERSARIES
from ..sim.engine import DEFAULT_EVENT_BUDGET

MAC_PROTOCOLS = ("store-collect", "adopt-commit", "rbc", "rbc2", "first-mover", "mac-ac", "mac-ac2")
LOSSY_PROTOCOLS = ("small-ac", "small-bac")
PROTOCOLS = MAC_PROTOCOLS + LOSSY_PROTOCOLS


class ConfigError(ValueError):
    """The configuration is malformed or violates a protocol precondition."""


def parse_number(x) -> Fraction:
    """Exact value of ``0.01``, ``1/64``, ``2^-6`` or a number."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, float)):
        return Fraction(str(x)) if isinstance(x, float) else Fraction(x)
    s = str(x).strip().replace(" ", "")
    if s.startswith("2^"):
        k = int(s[2:])
        return Fraction(2) ** k
    try:
        return Fraction(s)
    except ValueError:
        raise ConfigError(f"not a number: {x!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    n: int
    f: int = 0
    epsilon: Fraction = Fraction(1, 64)
    delta: float = 0.1
    n0: int = 1
    c: float = 4.0
    n_est: int | None = None
    transport: str = "mac"
    t: int | None = None
    Delta: int | None = None
    drop: float = 0.0
    drop_policy: str = "iid"
    duplicate: float = 0.0
    adversary: str = "random"
    crash_rate: float = 0.0
    byz: str = "silent"
    include_self_value: bool = True
    p_end: int | None = None
    ops_per_node: int = 3
    seeds: tuple = (0,)
    event_budget: int = DEFAULT_EVENT_BUDGET
    output: str | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "epsilon", parse_number(self.epsilon))
        seeds = self.seeds
        if isinstance(seeds, int):
            seeds = tuple(range(seeds))
        object.__setattr__(self, "seeds", tuple(int(s) for s in seeds))
        if self.transport == "mac" and self.protocol in LOSSY_PROTOCOLS:
            object.__setattr__(self, "transport", "lossy")

    # -------------------------------------------------------------- checks

    def validate(self) -> "ExperimentConfig":
        p = self.protocol
        if p not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {p!r}; choose from {', '.join(PROTOCOLS)}")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.f < 0:
            raise ConfigError("f must be non-negative")
        try:
            check_resilience(p, self.n, self.f)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.event_budget <= 0:
            raise ConfigError("event budget must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is needed")
        if self.n0 < 1 or self.c <= 0:
            raise ConfigError("n0 must be positive and c must be positive")
        if self.n_est is not None and self.n_est < self.n:
            raise ConfigError("n_est must be at least n")
        if p in LOSSY_PROTOCOLS:
            if self.transport != "lossy":
                raise ConfigError(f"{p} runs on the lossy transport")
            if not 0 <= self.drop <= 1 or not 0 <= self.duplicate < 1:
                raise ConfigError("drop must lie in [0, 1] and duplicate in [0, 1)")
            try:
                self.lossy()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        elif self.transport != "mac":
            raise ConfigError(f"{p} runs on the MAC transport")
        if p == "small-bac" and self.byz not in BYZ_STRATEGIES:
            raise ConfigError(f"unknown Byzantine strategy {self.byz!r}")
        if p in MAC_PROTOCOLS and self.adversary not in ADVERSARIES:
            raise ConfigError(f"unknown adversary {self.adversary!r}")
        if not 0 <= self.crash_rate < 1:
            raise ConfigError("crash_rate must lie in [0, 1)")
        if self.p_end is not None and self.p_end < 0:
            raise ConfigError("p_end must be non-negative")
        return self

    def lossy(self):
        from ..sim.lossy import default_lossy

        kw: dict[str, Any] = {"policy": self.drop_policy, "duplicate": self.duplicate}
        if self.t is not None:
            kw["t"] = self.t
        if self.Delta is not None:
            kw["Delta"] = self.Delta
        return default_lossy(self.n, self.drop, **kw)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epsilon"] = f"{self.epsilon.numerator}/{self.epsilon.denominator}"
        d["seeds"] = list(self.seeds)
        d.pop("extra")
        return d


_ALIASES = {"eps": "epsilon", "seed": "seeds", "budget": "event_budget", "loss": "drop", "byzantine": "byz"}


def config_from_dict(d: dict) -> ExperimentConfig:
    names = {f.name for f in fields(ExperimentConfig)}
    kw: dict[str, Any] = {}
    for key, value in d.items():
        if key == "seed" and isinstance(value, int):
            value = (value,)
        key = _ALIASES.get(key, key).replace("-", "_")
        if key not in names:
            raise ConfigError(f"unknown config key {key!r}")
        kw[key] = value
    if isinstance(kw.get("transport"), dict):
        tr = kw.pop("transport")
        kw["transport"] = tr.get("kind", "lossy")
        for k in ("t", "Delta", "drop"):
            if k in tr:
                kw[k] = tr[k]
    if "seeds" in kw and isinstance(kw["seeds"], list):
        kw["seeds"] = tuple(kw["seeds"])
    if "protocol" not in kw or "n" not in kw:
        raise ConfigError("config needs at least 'protocol' and 'n'")
    try:
        return ExperimentConfig(**kw).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a JSON config, or YAML when PyYAML is installed."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            import yaml
        except ImportError:
            raise ConfigError(f"{path}: not JSON, and PyYAML is not installed for YAML") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(data)
