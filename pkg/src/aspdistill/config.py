"""Layered configuration: built-in defaults < INI file < environment < command-line flags."""

from __future__ import annotations

import configparser
import os
import shlex
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

from .distiller import DistillParams
from .solver import SolverConfig

ENV_PREFIX = "ASP_DISTILL_"

# section -> key -> parser
_KEYS = {
    "solver": {"path": str, "flags": str, "timeout_ms": int, "answer_predicate": str},
    "llm": {"endpoint": str, "model": str, "temperature": float, "max_retries": int, "api_key_env": str},
    "distill": {"r": int, "m": int, "mending": "bool", "batch": int, "no_facts_guard": "bool"},
    "run": {"seeds": str, "jobs": int, "log_dir": str},
}
_SECRET_WORDS = ("key", "token", "secret", "password")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.0
    max_retries: int = 3
    api_key_env: str = "LLM_API_KEY"


@dataclass(frozen=True)
class AppConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    defaults: DistillParams = field(default_factory=DistillParams)
    seeds: tuple = (0, 1, 2, 3, 4)
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)
    log_dir: Optional[str] = None

    def to_dict(self) -> dict:
        """Everything except credentials, which never live here anyway."""
        solver = asdict(self.solver)
        solver["flags"] = list(solver["flags"])
        return {
            "solver": solver,
            "llm": asdict(self.llm),
            "defaults": asdict(self.defaults),
            "seeds": list(self.seeds),
            "jobs": self.jobs,
            "log_dir": self.log_dir,
        }


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(section: str, key: str, raw: str):
    kind = _KEYS[section][key]
    try:
        if kind == "bool":
            return _parse_bool(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


def _from_file(path) -> dict:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _KEYS[section]:
                if any(word in key for word in _SECRET_WORDS):
                    raise ConfigError(f"{section}.{key}: credentials belong in the environment, not in config files")
                raise ConfigError(f"unknown config key {section}.{key}")
            values[(section, key)] = _convert(section, key, raw)
    return values


def _from_env(env: Mapping[str, str]) -> dict:
    values = {}
    for section, keys in _KEYS.items():
        for key in keys:
            name = f"{ENV_PREFIX}{section.upper()}_{key.upper()}"
            if name in env:
                values[(section, key)] = _convert(section, key, env[name])
    return values


def load_config(path=None, env: Optional[Mapping[str, str]] = None, overrides: Optional[Mapping] = None) -> AppConfig:
    """Merge the layers.  ``overrides`` maps ``(section, key)`` to a value from flags."""
    merged: dict = {}
    if path is not None:
        merged.update(_from_file(path))
    merged.update(_from_env(os.environ if env is None else env))
    for (section, key), value in (overrides or {}).items():
        if section not in _KEYS or key not in _KEYS[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        if value is not None:
            merged[(section, key)] = _convert(section, key, value) if isinstance(value, str) else value

    def get(section, key, default):
        return merged.get((section, key), default)

    base = AppConfig()
    try:
        solver = SolverConfig(
            executable=get("solver", "path", base.solver.executable),
            flags=tuple(shlex.split(get("solver", "flags", ""))),
            timeout_ms=get("solver", "timeout_ms", base.solver.timeout_ms),
            answer_predicate=get("solver", "answer_predicate", base.solver.answer_predicate),
        )
        llm = LlmConfig(
            endpoint=get("llm", "endpoint", base.llm.endpoint),
            model=get("llm", "model", base.llm.model),
            temperature=get("llm", "temperature", base.llm.temperature),
            max_retries=get("llm", "max_retries", base.llm.max_retries),
            api_key_env=get("llm", "api_key_env", base.llm.api_key_env),
        )
        defaults = DistillParams(
            r=get("distill", "r", base.defaults.r),
            m=get("distill", "m", base.defaults.m),
            mending_enabled=get("distill", "mending", base.defaults.mending_enabled),
            batch_size=get("distill", "batch", base.defaults.batch_size),
            no_facts_guard=get("distill", "no_facts_guard", base.defaults.no_facts_guard),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    seeds = base.seeds
    if ("run", "seeds") in merged:
        seeds = parse_seeds(merged[("run", "seeds")])
    jobs = get("run", "jobs", base.jobs)
    if jobs < 1:
        raise ConfigError("run.jobs must be at least 1")
    return AppConfig(solver, llm, defaults, seeds, jobs, get("run", "log_dir", None))


def parse_seeds(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(s) for s in text)
    try:
        return tuple(int(s) for s in str(text).replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}") from exc
