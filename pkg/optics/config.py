"""
Scene config files.

Line-based `key = value` text, UTF-8, `#` comments. Lengths carry the unit in the key
name (mm, nm). Omitted keys take BENCH_DEFAULTS; an omitted z2_mm means z - z1.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from optics.errors import ConfigError
from optics.scene import BENCH_DEFAULTS, Scene, TestArmMethod, scene_from_parameters

logger = logging.getLogger(__name__)

FLOAT_KEYS = {
    "wavelength_nm", "z_mm", "z1_mm", "z2_mm", "a_mm", "g0",
    "slit_width_mm", "slit_pitch_mm", "u1_mm", "detector_halfspan_mm",
    "amplitude", "resolution_scale",
}
INT_KEYS = {"slit_count", "detector_points"}
CHOICE_KEYS = {"test_arm_method": {m.value for m in TestArmMethod}}

KNOWN_KEYS = FLOAT_KEYS | INT_KEYS | set(CHOICE_KEYS)


@dataclass
class SceneConfig:
    """Parsed config: only the keys the file set, plus where it came from"""
    values: Dict[str, Any] = field(default_factory=dict)
    source_path: Optional[str] = None

    def resolved(self) -> Dict[str, Any]:
        """All scene parameters, defaults filled in (z2_mm stays None when derived)."""
        params = dict(BENCH_DEFAULTS)
        params["z2_mm"] = None
        params.update(self.values)
        return params


def _coerce(key: str, raw: str, line_number: int) -> Any:
    if key in INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {raw!r}", line_number) from None
    if key in FLOAT_KEYS:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got {raw!r}", line_number) from None
    choices = CHOICE_KEYS[key]
    if raw not in choices:
        raise ConfigError(f"{key} must be one of {sorted(choices)}, got {raw!r}", line_number)
    return raw


def parse_scene_config(text: str, source_path: Optional[str] = None) -> SceneConfig:
    config = SceneConfig(source_path=source_path)
    seen: Dict[str, int] = {}

    for line_number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"expected 'key = value', got {content!r}", line_number)

        key, raw = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", line_number)
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", line_number)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", line_number)
        if not raw:
            raise ConfigError(f"missing value for {key!r}", line_number)

        seen[key] = line_number
        config.values[key] = _coerce(key, raw, line_number)

    return config


def load_scene_config(path: str) -> SceneConfig:
    """Read and parse a config file. A missing file is a ConfigError, not an OSError."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as f:
        raw = f.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line_number = raw[:e.start].count(b"\n") + 1
        raise ConfigError(f"invalid UTF-8 byte 0x{raw[e.start]:02x} in {path}", line_number) from e
    config = parse_scene_config(text, source_path=path)
    logger.debug(f"Loaded {len(config.values)} key(s) from {path}")
    return config


def scene_from_config(config: SceneConfig) -> Scene:
    try:
        return scene_from_parameters(config.resolved())
    except ValueError as e:
        # OpticalLayout rejects inconsistent distances before validate_scene can run
        raise ConfigError(str(e)) from e
