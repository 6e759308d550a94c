"""Experiment configuration record and the sectioned key-value file loader.

Config files are INI documents::

    [experiment]
    episodes = 200
    seeds = 0,1,2
    frameworks = dalap,per

    [agent]
    batch_size = 64

    [framework.per]
    loss_kind = mse

``[framework.<name>]`` sections override any experiment/agent key for one
framework. Unknown keys and sections are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import ConfigurationError

FRAMEWORKS = ("uniform", "per", "lap", "pser", "alap", "dalap")

# framework -> (sampling mode, default loss)
FRAMEWORK_DEFAULTS = {
    "uniform": ("uniform", "mse"),
    "per": ("per", "mse"),
    "lap": ("lap", "huber"),
    "pser": ("per", "mse"),
    "alap": ("lap", "huber"),
    "dalap": ("per", "huber"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    framework: str = "dalap"
    env: str = "cartpole"
    chain_length: int = 20
    episodes: int = 200
    budget_steps: int = 40_000
    seed: int = 0

    batch_size: int = 64
    step_size: float = 1e-3
    replay_period: int = 1
    capacity: int = 20_000
    alpha: float = 0.6
    beta0: float = 0.4
    gamma: float = 0.99
    priority_eps: float = 1e-4
    rho0: float = 0.65
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_steps: Optional[int] = None
    target_sync_interval: int = 1
    loss_kind: Optional[str] = None
    hidden_sizes: Tuple[int, ...] = (24, 24, 24)
    attention_dim: int = 8

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise ConfigurationError(
                f"unknown framework {self.framework!r}; valid frameworks: {', '.join(FRAMEWORKS)}"
            )
        if self.env not in ("cartpole", "chain"):
            raise ConfigurationError(f"unknown env {self.env!r}; expected cartpole or chain")
        for name in ("chain_length", "episodes", "budget_steps", "batch_size", "replay_period",
                     "capacity", "target_sync_interval", "attention_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.batch_size > self.capacity:
            raise ConfigurationError("batch_size must not exceed capacity")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta0 < 1.0:
            raise ConfigurationError(f"beta0 must lie in [0, 1), got {self.beta0}")
        if not 0.0 <= self.rho0 < 1.0:
            raise ConfigurationError(f"rho0 must lie in [0, 1), got {self.rho0}")
        if not (self.step_size > 0 and self.priority_eps > 0):
            raise ConfigurationError("step_size and priority_eps must be positive")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ConfigurationError("exploration schedule needs 0 <= eps_end <= eps_start <= 1")
        if self.eps_decay_steps is not None and self.eps_decay_steps < 1:
            raise ConfigurationError("eps_decay_steps must be positive")
        if self.loss_kind not in (None, "mse", "huber"):
            raise ConfigurationError(f"unknown loss_kind {self.loss_kind!r}; expected mse or huber")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigurationError(f"invalid hidden_sizes {self.hidden_sizes}")

    @property
    def sampling_mode(self) -> str:
        return FRAMEWORK_DEFAULTS[self.framework][0]

    @property
    def resolved_loss_kind(self) -> str:
        return self.loss_kind or FRAMEWORK_DEFAULTS[self.framework][1]

    @property
    def exploration_decay_steps(self) -> int:
        if self.eps_decay_steps is not None:
            return self.eps_decay_steps
        return max(1, self.budget_steps // 2)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


EXPERIMENT_KEYS = ("framework", "env", "chain_length", "episodes", "budget_steps", "seed")
SUITE_KEYS = ("seeds", "frameworks", "success_threshold", "jobs")
AGENT_KEYS = tuple(
    f.name for f in dataclasses.fields(ExperimentConfig) if f.name not in EXPERIMENT_KEYS
)


@dataclass
class SuiteConfig:
    base: ExperimentConfig = field(default_factory=ExperimentConfig)
    overrides: Dict[str, Dict[str, object]] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=lambda: [0])
    frameworks: List[str] = field(default_factory=lambda: ["dalap"])
    success_threshold: float = 195.0
    jobs: int = 1
    experiment_id: str = "adhoc"

    def config_for(self, framework: str, seed: int) -> ExperimentConfig:
        if framework not in FRAMEWORKS:
            raise ConfigurationError(
                f"unknown framework {framework!r}; valid frameworks: {', '.join(FRAMEWORKS)}"
            )
        changes = dict(self.overrides.get(framework, {}))
        changes["framework"] = framework
        changes["seed"] = derive_seed(self.base.seed, framework, seed)
        return self.base.replace(**changes)


def derive_seed(base_seed: int, framework: str, ordinal: int) -> int:
    """Stable 63-bit run seed from the config seed, framework name and run seed label."""
    digest = hashlib.sha256(f"{base_seed}:{framework}:{ordinal}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _field_types() -> Dict[str, object]:
    return {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str, where: str):
    kind = _field_types().get(name)
    raw = raw.strip()
    try:
        if name == "hidden_sizes":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind in ("Optional[int]", "Optional[str]") and raw.lower() in ("", "none"):
            return None
        if kind in ("int", "Optional[int]"):
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"{where}: cannot parse {name} = {raw!r} ({exc})") from None


def _line_of(text: str, section: str, key: str) -> Optional[int]:
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.match(r"\[(.+)\]$", stripped)
        if header:
            current = header.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", stripped):
            return number
    return None


def _where(text: str, path: str, section: str, key: str) -> str:
    line = _line_of(text, section, key)
    loc = f"{path}:{line}" if line else path
    return f"{loc} [{section}] {key}"


def parse_config(text: str, path: str = "<config>") -> SuiteConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None

    base: Dict[str, object] = {}
    suite: Dict[str, object] = {}
    overrides: Dict[str, Dict[str, object]] = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            where = _where(text, path, section, key)
            if section == "experiment":
                if key in SUITE_KEYS:
                    suite[key] = raw
                elif key in EXPERIMENT_KEYS:
                    base[key] = _coerce(key, raw, where)
                else:
                    raise ConfigurationError(f"{where}: unknown key")
            elif section == "agent":
                if key not in AGENT_KEYS:
                    raise ConfigurationError(f"{where}: unknown key")
                base[key] = _coerce(key, raw, where)
            elif section.startswith("framework."):
                name = section.split(".", 1)[1]
                if name not in FRAMEWORKS:
                    raise ConfigurationError(
                        f"{path} [{section}]: unknown framework {name!r}; "
                        f"valid frameworks: {', '.join(FRAMEWORKS)}"
                    )
                if key in ("framework", "seed") or key not in _field_types():
                    raise ConfigurationError(f"{where}: unknown key")
                overrides.setdefault(name, {})[key] = _coerce(key, raw, where)
            else:
                raise ConfigurationError(f"{path}: unknown section [{section}]")

    base_config = ExperimentConfig(**base)
    for name, changes in overrides.items():
        base_config.replace(framework=name, **changes)  # validate eagerly

    config = SuiteConfig(base=base_config, overrides=overrides)
    if "seeds" in suite:
        config.seeds = parse_int_list(str(suite["seeds"]))
    if "frameworks" in suite:
        config.frameworks = parse_framework_list(str(suite["frameworks"]))
    if "success_threshold" in suite:
        config.success_threshold = float(suite["success_threshold"])
    if "jobs" in suite:
        config.jobs = int(suite["jobs"])
    config.experiment_id = hashlib.sha256(text.encode()).hexdigest()[:12]
    return config


def load_config(path) -> SuiteConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def parse_int_list(raw: str) -> List[int]:
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated integers, got {raw!r}") from None


def parse_framework_list(raw: str) -> List[str]:
    names = [v.strip() for v in raw.split(",") if v.strip()]
    for name in names:
        if name not in FRAMEWORKS:
            raise ConfigurationError(
                f"unknown framework {name!r}; valid frameworks: {', '.join(FRAMEWORKS)}"
            )
    return names
