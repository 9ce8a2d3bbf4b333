"""Pipeline configuration loaded from an INI file.

Sections ``[camera]``, ``[recon]``, ``[display]`` and ``[run]``; keys are the
field names of :class:`~nrhdr.sensor.CameraModel`,
:class:`~nrhdr.recon.ReconstructionConfig`, :class:`~nrhdr.metrics.DisplayModel`
and :class:`PipelineConfig`. Missing keys keep their defaults, unknown keys
are an error.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from nrhdr.metrics import DEFAULT_PU21_VARIANT, DisplayModel
from nrhdr.recon import ReconstructionConfig
from nrhdr.sensor import CameraModel

LAYOUT_CHOICES = ("regular", "nonregular", "both")
EMIT_FLAGS = ("emit_pfm", "emit_tonemap", "emit_mask", "emit_spectrum", "emit_csv")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one run needs.

    ``source`` is a PFM path or one of the synthetic generators
    ``zoneplate`` / ``stripes``. ``normalize`` rescales file inputs so their
    99.9th percentile maps to 1.0 (``p99.9``) or leaves them as is (``none``).
    """

    source: str = "zoneplate"
    size: int = 512
    stripe_period: int = 2
    layouts: str = "both"
    seed: int = 0
    noise_seed: int = 0
    regular_corner: int = 1
    normalize: str = "p99.9"
    out: str = "out"
    emit_pfm: bool = True
    emit_tonemap: bool = True
    emit_mask: bool = True
    emit_spectrum: bool = False
    emit_csv: bool = True
    workers: int = 1
    pu21_variant: str = DEFAULT_PU21_VARIANT
    camera: CameraModel = field(default_factory=CameraModel)
    recon: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    display: DisplayModel = field(default_factory=DisplayModel)

    def __post_init__(self):
        if self.layouts not in LAYOUT_CHOICES:
            raise ConfigError(f"layouts must be one of {LAYOUT_CHOICES}, got {self.layouts!r}")
        if self.normalize not in ("p99.9", "none"):
            raise ConfigError(f"normalize must be 'p99.9' or 'none', got {self.normalize!r}")
        if not any(getattr(self, f) for f in EMIT_FLAGS):
            raise ConfigError("at least one emit flag must be set")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def layout_kinds(self) -> tuple[str, ...]:
        return ("regular", "nonregular") if self.layouts == "both" else (self.layouts,)

    def replace(self, **changes) -> PipelineConfig:
        return dataclasses.replace(self, **changes)


def _convert(raw: str, default, name: str):
    text = raw.strip()
    try:
        if default is None:
            if text.lower() in ("", "none"):
                return None
            return int(text) if name == "fft_size" else text
        if isinstance(default, bool):
            return configparser.ConfigParser.BOOLEAN_STATES[text.lower()]
        return type(default)(text)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value {raw!r} for {name}") from exc


def _section(ini, name: str, cls, exclude=()):
    if name not in ini:
        return cls()
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)} - set(exclude)
    kwargs = {}
    for key, raw in ini[name].items():
        if key not in known:
            raise ConfigError(f"unknown key [{name}] {key}")
        kwargs[key] = _convert(raw, getattr(defaults, key), key)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def load_config(path) -> PipelineConfig:
    ini = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            ini.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    extra = set(ini.sections()) - {"camera", "recon", "display", "run"}
    if extra:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(extra))}")
    camera = _section(ini, "camera", CameraModel)
    recon = _section(ini, "recon", ReconstructionConfig)
    display_keys = {}
    if "display" in ini:
        display_keys = dict(ini["display"])
    variant = display_keys.pop("pu21_variant", DEFAULT_PU21_VARIANT).strip()
    tmp = configparser.ConfigParser()
    tmp["display"] = display_keys
    display = _section(tmp, "display", DisplayModel)
    run = _section(ini, "run", PipelineConfig, exclude=("camera", "recon", "display", "pu21_variant"))
    return run.replace(camera=camera, recon=recon, display=display, pu21_variant=variant)


def example_config_text() -> str:
    return Path(__file__).with_name("data").joinpath("example.ini").read_text(encoding="utf-8")
