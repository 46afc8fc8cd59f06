"""
Configuration parsing utilities for tprseg.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict

logger = logging.getLogger(__name__)

DEFAULT_BOUNDARY_CHARS = '`"_.!?:=@$%&*()[]{}'

# Activity unit colours, plus the keystroke/fixation/segment layers of the progression graph
DEFAULT_COLORS = {
    "T1": "blue",
    "T2": "lightgreen",
    "T4": "yellow",
    "T5": "red",
    "T6": "darkgreen",
    "T8": "black",
    "insertion": "black",
    "deletion": "red",
    "fix_source": "blue",
    "fix_target": "green",
    "segment": "gray",
    "task": "darkgray",
    "tsp": "violet",
}


class ConfigError(ValueError):
    pass


def parse_config_file(config_path="config.ini"):
    """Parse simple key=value config file"""
    config = {}
    config_file = Path(config_path)

    if not config_file.exists():
        raise FileNotFoundError(f"Config file {config_path} not found")

    with open(config_file, 'r', encoding='utf-8') as f:
        for line_num, line in enumerate(f, 1):
            line = line.strip()

            # Skip empty lines and comments
            if not line or line.startswith('#'):
                continue

            if '=' not in line:
                raise ValueError(f"Invalid config line {line_num}: {line}")

            key, value = line.split('=', 1)
            key = key.strip()
            value = value.strip()

            # Remove quotes if present
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
                value = value[1:-1]

            config[key] = value

    return config


@dataclass
class RunConfig:
    delay_threshold: int = 200
    boundary_chars: str = DEFAULT_BOUNDARY_CHARS
    word_final: str = "separate"
    rsp_multiplier: float = 2.0
    tsp_multiplier: float = 3.0
    rsp_floor: int = 200
    ks_alpha: float = 0.05
    ks_rule: str = "conventional"
    ks_exact_max: int = 25
    identify_same_sample: str = "all"
    identify_postedit_sample: str = "within_word"
    au_silence: int = 1000
    au_min_duration: int = 40
    orientation_min: int = 2500
    hesitation_deletion_share: float = 0.4
    unassigned_policy: str = "nearest"
    top_k: int = 6
    float_digits: int = 6
    figure_width: float = 12.0
    figure_height: float = 6.0
    font_size: float = 9.0
    session_glob: str = "**/*.session.tsv"
    annotation_suffix: str = ".hof.tsv"
    colors: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_COLORS))
    columns: Dict[str, str] = field(default_factory=dict)
    kinds: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, config):
        """Convert the flat key=value mapping into a typed run configuration"""
        config_obj = cls()
        types = {f.name: f.type for f in fields(cls)}

        for key, value in config.items():
            prefix, _, name = key.partition(".")
            if name and prefix == "color":
                config_obj.colors[name] = value
            elif name and prefix == "column":
                config_obj.columns[name] = value
            elif name and prefix == "kind":
                config_obj.kinds[name] = value
            elif key in types and types[key] in (int, float, str):
                try:
                    setattr(config_obj, key, types[key](value))
                except ValueError:
                    raise ConfigError(f"Invalid value for {key}: {value!r}")
            else:
                logger.warning(f"Ignoring unknown config key {key!r}")

        config_obj.validate()
        return config_obj

    @classmethod
    def load(cls, config_path=None):
        """Read the config file if given (or if config.ini exists), else use the defaults."""
        if config_path is None:
            if not Path("config.ini").exists():
                return cls()
            config_path = "config.ini"
        return cls.from_mapping(parse_config_file(config_path))

    def override(self, **values):
        for key, value in values.items():
            if value is not None:
                setattr(self, key, value)
        self.validate()
        return self

    def validate(self):
        if self.rsp_multiplier <= 0 or self.tsp_multiplier <= 0:
            raise ConfigError("rsp_multiplier and tsp_multiplier must be > 0")
        if not 0 < self.ks_alpha < 1:
            raise ConfigError(f"ks_alpha must lie in (0, 1), got {self.ks_alpha}")
        for name in ("delay_threshold", "au_silence", "orientation_min", "ks_exact_max", "top_k", "float_digits"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.rsp_floor < 0 or self.au_min_duration < 0:
            raise ConfigError("rsp_floor and au_min_duration must be >= 0")
        if not 0 <= self.hesitation_deletion_share <= 1:
            raise ConfigError("hesitation_deletion_share must lie in [0, 1]")
        if not self.boundary_chars:
            raise ConfigError("boundary_chars must not be empty")

        choices = {
            "word_final": ("separate", "within_word"),
            "ks_rule": ("conventional", "inverted"),
            "identify_same_sample": ("all", "within_word"),
            "identify_postedit_sample": ("all", "within_word"),
            "unassigned_policy": ("nearest", "previous"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {', '.join(allowed)}")

    @property
    def fold_word_final(self):
        return self.word_final == "within_word"

    def todict(self):
        return asdict(self)

    def digest(self):
        canonical = json.dumps(self.todict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
