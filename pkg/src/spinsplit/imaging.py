"""Atom positions, point-spread-function blur and two-frame absorption images.

Pixel ``(row, col)`` covers ``x in [col, col + 1)`` and ``y in [row, row + 1)``;
x is horizontal, y vertical. State labels are 1 and 2; frame2 is recorded
first.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

# Rb-87 D2 cycling transition
RB87_GAMMA = 2 * np.pi * 6.0666e6  # 1/s
RB87_RECOIL_VELOCITY = 6.62607015e-34 / (1.443160648e-25 * 780.241209686e-9)  # m/s
PIXEL_SIZE = 1.3e-6  # m per pixel
IMAGING_PULSE = 50e-6  # s
OPTICAL_RMS_HOR = 1.1  # px, in-situ small-cloud fit
OPTICAL_RMS_VERT = 1.2  # px
BLURRED_RMS_HOR = 1.4  # px, optics + photon-recoil blur

TRUNCATION_SIGMAS = 5.0


class Geometry(NamedTuple):
    width: int
    height: int

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return self.width / 2, self.height / 2


DEFAULT_GEOMETRY = Geometry(41, 49)


def blur_rms(gamma: float, s: float, v_rec: float, dt_pulse: float) -> float:
    """Upper bound on the time-averaged rms transverse displacement from photon recoils.

    Averages the instantaneous random-walk spread ``(gamma/18) s/(1+s) v_rec^2 t^3``
    over a square pulse of length ``dt_pulse``. ``s = inf`` gives the saturated limit.
    """
    for name, val in (("gamma", gamma), ("s", s), ("v_rec", v_rec), ("dt_pulse", dt_pulse)):
        if val < 0:
            raise ValueError(f"{name} must be >= 0")
    sat = 1.0 if np.isinf(s) else s / (1.0 + s)
    return float(np.sqrt(gamma / 72.0 * sat * v_rec**2 * dt_pulse**3))


def invert_saturation(
    total_px: float = BLURRED_RMS_HOR,
    optical_px: float = OPTICAL_RMS_HOR,
    gamma: float = RB87_GAMMA,
    v_rec: float = RB87_RECOIL_VELOCITY,
    dt_pulse: float = IMAGING_PULSE,
    pixel_size: float = PIXEL_SIZE,
) -> float:
    """Saturation parameter for which optics and blur add in quadrature to ``total_px``."""
    needed = (total_px**2 - optical_px**2) * pixel_size**2
    if needed < 0:
        raise ValueError("total width smaller than the optical width")
    saturated = blur_rms(gamma, np.inf, v_rec, dt_pulse) ** 2
    frac = needed / saturated
    if frac >= 1.0:
        raise ValueError("target blur exceeds the saturated-transition limit")
    return float(frac / (1.0 - frac))


def combined_width_px(s: float, optical_px: float = OPTICAL_RMS_HOR) -> float:
    blur = blur_rms(RB87_GAMMA, s, RB87_RECOIL_VELOCITY, IMAGING_PULSE) / PIXEL_SIZE
    return float(np.hypot(optical_px, blur))


@dataclass(frozen=True)
class CloudDensity:
    """Per-state atom density after time of flight.

    Gaussian by default. ``grids`` optionally maps a state label to a
    non-negative array of the frame's shape, read as piecewise constant per
    pixel; it then replaces the Gaussian for that state.
    """

    centers: dict = field(default_factory=lambda: {2: (20.5, 24.5), 1: (20.5, 24.5)})
    sizes: dict = field(default_factory=lambda: {2: (3.0, 3.2), 1: (3.06, 4.0)})
    grids: dict | None = None

    def __post_init__(self):
        for st, (sx, sy) in self.sizes.items():
            if sx <= 0 or sy <= 0:
                raise ValueError(f"cloud size for state {st} must be positive")
        if self.grids:
            normed = {}
            for st, g in self.grids.items():
                g = np.asarray(g, dtype=float)
                if np.any(g < 0) or g.sum() <= 0:
                    raise ValueError(f"density grid for state {st} must be non-negative and non-zero")
                normed[st] = g / g.sum()
            object.__setattr__(self, "grids", normed)

    def cell_masses(self, state: int, geometry: Geometry, supersample: int = 1):
        """Probability mass per sub-pixel cell and the cell-center coordinates."""
        n = supersample
        xs = (np.arange(geometry.width * n) + 0.5) / n
        ys = (np.arange(geometry.height * n) + 0.5) / n
        if self.grids and state in self.grids:
            g = self.grids[state]
            if g.shape != (geometry.height, geometry.width):
                raise ValueError("density grid does not match the geometry")
            w = np.kron(g, np.ones((n, n))) / n**2
            return xs, ys, w
        (cx, cy), (sx, sy) = self.centers[state], self.sizes[state]
        ex = np.diff(ndtr((np.arange(geometry.width * n + 1) / n - cx) / sx))
        ey = np.diff(ndtr((np.arange(geometry.height * n + 1) / n - cy) / sy))
        return xs, ys, np.outer(ey, ex)


def sample_positions(
    density: CloudDensity, n_atoms: int, state_label: int, rng: np.random.Generator
) -> np.ndarray:
    """``(n_atoms, 2)`` array of i.i.d. (x, y) positions for one internal state."""
    if n_atoms < 0:
        raise ValueError("n_atoms must be >= 0")
    if n_atoms == 0:
        return np.empty((0, 2))
    if density.grids and state_label in density.grids:
        g = density.grids[state_label]
        idx = rng.choice(g.size, size=n_atoms, p=g.ravel())
        rows, cols = np.unravel_index(idx, g.shape)
        return np.column_stack([cols, rows]) + rng.random((n_atoms, 2))
    center = np.asarray(density.centers[state_label], dtype=float)
    size = np.asarray(density.sizes[state_label], dtype=float)
    return center + size * rng.standard_normal((n_atoms, 2))


@dataclass(frozen=True)
class PsfModel:
    """Per-state Gaussian blur widths (sigma_hor, sigma_vert) in pixels."""

    widths: dict = field(default_factory=lambda: {2: (1.4, 2.0), 1: (1.4, 2.1)})

    def __post_init__(self):
        for st, (sx, sy) in self.widths.items():
            if sx < 0 or sy < 0:
                raise ValueError(f"PSF width for state {st} must be >= 0")


def pixel_integrals(centers: np.ndarray, sigma: float, n_pixels: int) -> np.ndarray:
    """Mass of a 1-D Gaussian kernel in each unit pixel, shape ``(len(centers), n_pixels)``.

    ``sigma = 0`` is a delta kernel.
    """
    centers = np.atleast_1d(np.asarray(centers, dtype=float))
    edges = np.arange(n_pixels + 1, dtype=float)
    if sigma == 0:
        return ((edges[:-1] <= centers[:, None]) & (centers[:, None] < edges[1:])).astype(float)
    cdf = ndtr((edges[None, :] - centers[:, None]) / sigma)
    return cdf[:, 1:] - cdf[:, :-1]


@dataclass(frozen=True)
class DetectionNoiseModel:
    """Whole-frame detection noise, spread as i.i.d. Gaussian per pixel."""

    sigma1: float = 3.5
    sigma2: float = 3.3
    enabled: bool = True

    def frame_sigma(self, state: int) -> float:
        if not self.enabled:
            return 0.0
        return {1: self.sigma1, 2: self.sigma2}[state]

    def pixel_sigma(self, state: int, geometry: Geometry) -> float:
        return self.frame_sigma(state) / np.sqrt(geometry.n_pixels)

    def region_variance(self, state: int, n_region_pixels: int, geometry: Geometry) -> float:
        """Variance of the noise summed over ``n_region_pixels`` pixels."""
        return n_region_pixels * self.pixel_sigma(state, geometry) ** 2


@dataclass
class ImagePair:
    frame2: np.ndarray
    frame1: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        if self.frame1.shape != self.frame2.shape:
            raise ValueError("frames must have equal dimensions")

    @property
    def geometry(self) -> Geometry:
        h, w = self.frame1.shape
        return Geometry(w, h)

    def frame(self, state: int) -> np.ndarray:
        return {1: self.frame1, 2: self.frame2}[state]


def render_frame(positions: np.ndarray, psf_width, geometry: Geometry) -> np.ndarray:
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(positions) == 0:
        return np.zeros((geometry.height, geometry.width))
    ex = pixel_integrals(positions[:, 0], psf_width[0], geometry.width)
    ey = pixel_integrals(positions[:, 1], psf_width[1], geometry.height)
    return ey.T @ ex


def cloud_truncated(density: CloudDensity, psf: PsfModel, geometry: Geometry) -> bool:
    """True if some state's blurred cloud reaches the frame edge within 5 sigma."""
    if density.grids:
        return False
    for st in (1, 2):
        (cx, cy), (sx, sy) = density.centers[st], density.sizes[st]
        px, py = psf.widths[st]
        rx = TRUNCATION_SIGMAS * np.hypot(sx, px)
        ry = TRUNCATION_SIGMAS * np.hypot(sy, py)
        if cx - rx < 0 or cx + rx > geometry.width or cy - ry < 0 or cy + ry > geometry.height:
            return True
    return False


def render_shot(
    positions: np.ndarray,
    outcomes: np.ndarray,
    psf: PsfModel,
    noise: DetectionNoiseModel,
    geometry: Geometry,
    rng: np.random.Generator,
    density: CloudDensity | None = None,
) -> ImagePair:
    """Render the |2> and |1> frames of one shot.

    Atoms with outcome +1/2 land in frame2, -1/2 in frame1. Each atom deposits
    its pixel-integrated Gaussian kernel; detection noise is added afterwards.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    outcomes = np.asarray(outcomes, dtype=float)
    if len(positions) != len(outcomes):
        raise ValueError("positions and outcomes differ in length")
    up = outcomes > 0
    frames = {}
    for st, sel in ((2, up), (1, ~up)):
        frame = render_frame(positions[sel], psf.widths[st], geometry)
        sigma = noise.pixel_sigma(st, geometry)
        if sigma > 0:
            frame = frame + rng.normal(0.0, sigma, frame.shape)
        frames[st] = frame
    truncated = False
    if density is not None:
        truncated = cloud_truncated(density, psf, geometry)
        if truncated:
            warnings.warn("frame too small to contain the cloud at 5 sigma", stacklevel=2)
    return ImagePair(frames[2], frames[1], truncated)
