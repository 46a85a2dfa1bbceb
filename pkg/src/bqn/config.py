"""Flat `key = value` config files with bracketed sections.

Parsing keeps everything as strings; RunConfig applies types and
defaults. Re-serialization is canonical: sections and keys sorted,
one `key = value` per line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from bqn.presets import PRESETS

SYNC_FULL_PRECISION = "full-precision"
SYNC_ABLATION = "binarized-ablation"
SYNC_MODES = (SYNC_FULL_PRECISION, SYNC_ABLATION)


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current: dict[str, str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}: empty section name")
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in current:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        current[key] = value
    return sections


def canonical_config_text(sections: dict[str, dict[str, str]]) -> str:
    lines = []
    for name in sorted(sections):
        lines.append(f"[{name}]")
        for key in sorted(sections[name]):
            lines.append(f"{key} = {sections[name][key]}")
        lines.append("")
    return "\n".join(lines)


def load_config_file(path: str) -> dict[str, dict[str, str]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


_FIELD_MAP = {
    # dataclass field -> (section, key)
    "env_name": ("run", "env"),
    "env_size": ("run", "size"),
    "preset": ("run", "preset"),
    "seed": ("run", "seed"),
    "out_dir": ("run", "out_dir"),
    "gamma": ("train", "gamma"),
    "sync_every": ("train", "sync_every"),
    "batch_size": ("train", "batch_size"),
    "buffer_capacity": ("train", "buffer_capacity"),
    "prefill": ("train", "prefill"),
    "max_steps": ("train", "max_steps"),
    "frame_skip": ("train", "frame_skip"),
    "sync_mode": ("train", "sync_mode"),
    "checkpoint_every_episodes": ("train", "checkpoint_every_episodes"),
    "init_scale": ("train", "init_scale"),
    "calibration_batch": ("train", "calibration_batch"),
    "head_gain": ("train", "head_gain"),
    "train_scales": ("train", "train_scales"),
    "calibration_margin": ("train", "calibration_margin"),
    "polish_margin": ("train", "polish_margin"),
    "eps_start": ("epsilon", "start"),
    "eps_end": ("epsilon", "end"),
    "eps_decay_steps": ("epsilon", "decay_steps"),
    "lr": ("optimizer", "lr"),
    "rho": ("optimizer", "rho"),
    "eps_opt": ("optimizer", "eps"),
    "eval_every_steps": ("eval", "every_steps"),
    "eval_episodes": ("eval", "episodes"),
    "eval_epsilon": ("eval", "epsilon"),
    "stop_at_return": ("eval", "stop_at_return"),
}


@dataclass
class RunConfig:
    """Everything one training run needs; mirrors the config file layout."""

    env_name: str = "catch"
    env_size: int = 10
    preset: str = "bqn-small"
    seed: int = 7
    out_dir: str = ""
    gamma: float = 0.99
    sync_every: int = 1000
    batch_size: int = 32
    buffer_capacity: int = 50_000
    prefill: int = 5_000
    max_steps: int = 200_000
    frame_skip: int = 1
    sync_mode: str = "full-precision"
    checkpoint_every_episodes: int = 0
    init_scale: float = 0.1
    calibration_batch: int = 256
    head_gain: float = 0.1
    train_scales: bool = False
    calibration_margin: float = 0.25
    polish_margin: float = 0.0
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_steps: int = 15_000
    lr: float = 2.5e-4
    rho: float = 0.95
    eps_opt: float = 1e-2
    eval_every_steps: int = 0
    eval_episodes: int = 200
    eval_epsilon: float = 0.05
    stop_at_return: float = field(default=float("inf"))  # inf = no early stop

    def validate(self):
        if self.env_name not in ("catch", "gridworld"):
            raise ConfigError(f"unknown env {self.env_name!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if self.sync_mode not in SYNC_MODES:
            raise ConfigError(
                f"unknown sync_mode {self.sync_mode!r}; choose from {SYNC_MODES}"
            )
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must be in [0, 1)")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigError("need batch_size >= 1 and buffer_capacity >= batch_size")
        if self.prefill < self.batch_size:
            raise ConfigError("prefill must be >= batch_size")
        if self.frame_skip < 1 or self.sync_every < 1:
            raise ConfigError("frame_skip and sync_every must be >= 1")
        if self.init_scale <= 0 or self.init_scale > 1:
            raise ConfigError("init_scale must be in (0, 1]")
        return self

    @classmethod
    def from_sections(cls, sections: dict[str, dict[str, str]]) -> "RunConfig":
        kwargs = {}
        known = {f.name: f for f in fields(cls)}
        seen = set()
        for name, (section, key) in _FIELD_MAP.items():
            if section in sections and key in sections[section]:
                seen.add((section, key))
                raw = sections[section][key]
                ftype = known[name].type
                try:
                    if ftype == "int":
                        kwargs[name] = int(raw)
                    elif ftype == "float":
                        kwargs[name] = float(raw)
                    elif ftype == "bool":
                        if raw.lower() not in ("true", "false"):
                            raise ValueError(f"expected true/false, got {raw!r}")
                        kwargs[name] = raw.lower() == "true"
                    else:
                        kwargs[name] = raw
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from exc
        for section, keys in sections.items():
            for key in keys:
                if (section, key) not in seen:
                    raise ConfigError(f"unknown config key [{section}] {key}")
        return cls(**kwargs).validate()

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        return cls.from_sections(load_config_file(path))

    def to_sections(self) -> dict[str, dict[str, str]]:
        sections: dict[str, dict[str, str]] = {}
        for name, (section, key) in _FIELD_MAP.items():
            value = getattr(self, name)
            if isinstance(value, float):
                rendered = repr(value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            else:
                rendered = str(value)
            sections.setdefault(section, {})[key] = rendered
        return sections
