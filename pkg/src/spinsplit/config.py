"""Run configuration: nested dataclasses loaded from one YAML/JSON file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .imaging import CloudDensity, DetectionNoiseModel, Geometry, PsfModel


class ConfigError(ValueError):
    pass


@dataclass
class StateConfig:
    kind: str = "squeezed"  # "css" or "squeezed"
    n_atoms: int = 590
    n_atoms_sigma: float = 30.0
    mu: float | None = None  # None: tune to target_db at n_atoms
    target_db: float = -3.8
    phase_noise: float = 0.0  # rad rms, shot-to-shot rotation about z

    def validate(self):
        if self.kind not in ("css", "squeezed"):
            raise ConfigError(f"state.kind must be 'css' or 'squeezed', not {self.kind!r}")
        if self.n_atoms < 1:
            raise ConfigError("state.n_atoms must be >= 1")
        if self.n_atoms_sigma < 0 or self.phase_noise < 0:
            raise ConfigError("state.n_atoms_sigma and state.phase_noise must be >= 0")
        if self.mu is not None and self.mu < 0:
            raise ConfigError("state.mu must be >= 0")


@dataclass
class ImagingConfig:
    width: int = 41
    height: int = 49
    cloud_size_2: tuple = (3.0, 3.2)
    cloud_size_1: tuple = (3.06, 4.0)
    psf_2: tuple = (1.4, 2.0)
    psf_1: tuple = (1.4, 2.1)
    noise_sigma_1: float = 3.5
    noise_sigma_2: float = 3.3
    noise: bool = True

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("imaging.width and imaging.height must be positive")
        for name in ("cloud_size_1", "cloud_size_2", "psf_1", "psf_2"):
            val = getattr(self, name)
            if len(val) != 2 or min(val) <= 0:
                raise ConfigError(f"imaging.{name} must be two positive numbers")
        if self.noise_sigma_1 < 0 or self.noise_sigma_2 < 0:
            raise ConfigError("noise sigmas must be >= 0")

    @property
    def geometry(self) -> Geometry:
        return Geometry(self.width, self.height)

    def density(self) -> CloudDensity:
        c = self.geometry.center
        return CloudDensity(
            centers={1: c, 2: c},
            sizes={1: tuple(self.cloud_size_1), 2: tuple(self.cloud_size_2)},
        )

    def psf(self) -> PsfModel:
        return PsfModel({1: tuple(self.psf_1), 2: tuple(self.psf_2)})

    def noise_model(self) -> DetectionNoiseModel:
        return DetectionNoiseModel(self.noise_sigma_1, self.noise_sigma_2, self.noise)


@dataclass
class AcquisitionConfig:
    plus_x: int = 4
    minus_x: int = 4
    y: int = 70
    z: int = 60
    n_subsets: int = 40
    store_truth: bool = False

    def counts(self) -> dict:
        return {"plus_x": self.plus_x, "minus_x": self.minus_x, "y": self.y, "z": self.z}

    def validate(self):
        if self.n_subsets < 1:
            raise ConfigError("acquisition.n_subsets must be >= 1")
        if min(self.counts().values()) < 0:
            raise ConfigError("acquisition counts must be >= 0")


@dataclass
class SweepConfig:
    orientation: str = "horizontal"
    gap_positions: list | None = None  # None: every position with ratio in [0.08, 0.92]
    gap_widths: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 7, 8, 9])
    target_ratio: float = 0.40
    patterns: list | None = None  # None: built-in library

    def validate(self):
        if self.orientation not in ("horizontal", "vertical"):
            raise ConfigError("sweep.orientation must be 'horizontal' or 'vertical'")
        if any(w < 1 for w in self.gap_widths):
            raise ConfigError("gap widths must be >= 1")


@dataclass
class RunConfig:
    state: StateConfig = field(default_factory=StateConfig)
    imaging: ImagingConfig = field(default_factory=ImagingConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: int = 20180427
    out_dir: str = "runs/default"

    def validate(self) -> "RunConfig":
        for part in (self.state, self.imaging, self.acquisition, self.sweep):
            part.validate()
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        return self

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, data or {}).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def dump(self, path):
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def _build(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value)
        elif isinstance(value, list) and name in ("cloud_size_1", "cloud_size_2", "psf_1", "psf_2"):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)
