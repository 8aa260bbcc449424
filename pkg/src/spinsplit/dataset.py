"""Shot datasets and their on-disk format.

A dataset directory holds

``manifest.json``
    format version, geometry, run config snapshot, seed, one record per shot
    (id, subset, axis, atom number, frame order) and the size and SHA-256 of
    the frame file.
``frames.f32``
    all frames as row-major little-endian float32, shot-major, frame2 then
    frame1 for each shot: shape ``(n_shots, 2, height, width)``.
``truth.npz``
    optional per-atom positions and outcomes, concatenated over shots.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acquisition import iter_shots, resolve_mu
from .config import RunConfig
from .imaging import Geometry, cloud_truncated

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
FRAMES = "frames.f32"
TRUTH = "truth.npz"


class DatasetCorruptError(ValueError):
    pass


@dataclass
class ShotDataset:
    config: RunConfig
    axes: np.ndarray  # str labels
    subsets: np.ndarray
    n_atoms: np.ndarray
    frames2: np.ndarray  # (shots, h, w) float32
    frames1: np.ndarray
    mu: float = 0.0
    truncated: bool = False
    truth: dict | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.axes)

    @property
    def geometry(self) -> Geometry:
        _, h, w = self.frames1.shape
        return Geometry(w, h)

    def manifest(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "geometry": {"width": self.geometry.width, "height": self.geometry.height},
            "dtype": "float32-le",
            "frame_order": ["frame2", "frame1"],
            "n_shots": len(self),
            "seed": self.config.seed,
            "seed_schedule": "numpy SeedSequence(seed).spawn(n_shots)[shot_id]",
            "mu": self.mu,
            "truncated": self.truncated,
            "config": self.config.to_dict(),
            "shots": [
                {"id": i, "subset": int(s), "axis": str(a), "n_atoms": int(n), "states": [2, 1]}
                for i, (s, a, n) in enumerate(zip(self.subsets, self.axes, self.n_atoms))
            ],
        }

    def select(self, axis: str) -> np.ndarray:
        return np.flatnonzero(self.axes == axis)


def run_acquisition(config: RunConfig, axes: dict | None = None) -> ShotDataset:
    """Simulate every shot of the configured acquisition protocol."""
    config.validate()
    keep = config.acquisition.store_truth
    shots = list(iter_shots(config, axes, keep))
    geom = config.imaging.geometry
    truth = None
    if keep:
        truth = {
            "offsets": np.cumsum([0] + [s.n_atoms for s in shots]),
            "positions": np.concatenate([s.positions for s in shots]) if shots else np.empty((0, 2)),
            "outcomes": np.concatenate([s.outcomes for s in shots]) if shots else np.empty(0),
        }
    empty = np.empty((0, geom.height, geom.width), dtype="<f4")
    return ShotDataset(
        config=config,
        axes=np.array([s.axis for s in shots], dtype=str),
        subsets=np.array([s.subset for s in shots], dtype=int),
        n_atoms=np.array([s.n_atoms for s in shots], dtype=int),
        frames2=np.stack([s.frame2 for s in shots]) if shots else empty,
        frames1=np.stack([s.frame1 for s in shots]) if shots else empty,
        mu=resolve_mu(config),
        truncated=cloud_truncated(config.imaging.density(), config.imaging.psf(), geom),
        truth=truth,
    )


def _frame_bytes(ds: ShotDataset) -> bytes:
    stacked = np.stack([ds.frames2, ds.frames1], axis=1).astype("<f4", copy=False)
    return np.ascontiguousarray(stacked).tobytes()


def save(ds: ShotDataset, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = _frame_bytes(ds)
    (path / FRAMES).write_bytes(blob)
    manifest = ds.manifest()
    manifest["frames_bytes"] = len(blob)
    manifest["frames_sha256"] = hashlib.sha256(blob).hexdigest()
    manifest["has_truth"] = ds.truth is not None
    if ds.truth is not None:
        np.savez(path / TRUTH, **ds.truth)
    (path / MANIFEST).write_text(json.dumps(manifest, indent=1))
    return path


def load(path) -> ShotDataset:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except FileNotFoundError as exc:
        raise DatasetCorruptError(f"missing manifest in {path}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetCorruptError(f"corrupt manifest: {exc}") from exc
    try:
        if manifest["format_version"] != FORMAT_VERSION:
            raise DatasetCorruptError(f"unsupported format version {manifest['format_version']}")
        w, h = manifest["geometry"]["width"], manifest["geometry"]["height"]
        n = manifest["n_shots"]
        shots = manifest["shots"]
        expected = manifest["frames_bytes"]
        digest = manifest["frames_sha256"]
    except (KeyError, TypeError) as exc:
        raise DatasetCorruptError(f"manifest missing field {exc}") from exc
    if len(shots) != n:
        raise DatasetCorruptError(f"manifest lists {len(shots)} shots, header says {n}")
    if expected != n * 2 * h * w * 4:
        raise DatasetCorruptError("frame size in manifest does not match its geometry")
    try:
        blob = (path / FRAMES).read_bytes()
    except FileNotFoundError as exc:
        raise DatasetCorruptError(f"missing frame file in {path}") from exc
    if len(blob) != expected:
        raise DatasetCorruptError(f"frame file holds {len(blob)} bytes, expected {expected} (truncated?)")
    if hashlib.sha256(blob).hexdigest() != digest:
        raise DatasetCorruptError("frame file checksum mismatch")
    frames = np.frombuffer(blob, dtype="<f4").reshape(n, 2, h, w)
    truth = None
    if manifest.get("has_truth"):
        with np.load(path / TRUTH) as z:
            truth = {k: z[k] for k in z.files}
    return ShotDataset(
        config=RunConfig.from_dict(manifest["config"]),
        axes=np.array([s["axis"] for s in shots], dtype=str),
        subsets=np.array([s["subset"] for s in shots], dtype=int),
        n_atoms=np.array([s["n_atoms"] for s in shots], dtype=int),
        frames2=frames[:, 0].copy(),
        frames1=frames[:, 1].copy(),
        mu=manifest.get("mu", 0.0),
        truncated=manifest.get("truncated", False),
        truth=truth,
    )
