"""Region masks, mode overlaps, effective coupling and local spin extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import CloudDensity, DetectionNoiseModel, Geometry, ImagePair, PsfModel, pixel_integrals

STATES = (1, 2)


class UndefinedRegionError(ValueError):
    """A region carries no atom density, so its local spin is undefined."""


@dataclass(frozen=True)
class RegionMask:
    """Pixel set of one region, one boolean grid per internal state."""

    label: str
    pixels: dict
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = {np.shape(p) for p in self.pixels.values()}
        if len(shapes) != 1:
            raise ValueError("per-state masks must share one shape")
        frozen = {}
        for st, p in self.pixels.items():
            arr = np.array(p, dtype=bool)
            arr.setflags(write=False)
            frozen[st] = arr
        object.__setattr__(self, "pixels", frozen)

    @classmethod
    def uniform(cls, label: str, grid: np.ndarray, descriptor: dict | None = None) -> "RegionMask":
        return cls(label, {st: grid for st in STATES}, descriptor or {})

    @classmethod
    def whole_frame(cls, geometry: Geometry, label: str = "all") -> "RegionMask":
        return cls.uniform(label, np.ones((geometry.height, geometry.width), bool), {"kind": "whole"})

    def n_pixels(self, state: int) -> int:
        return int(self.pixels[state].sum())

    @property
    def is_empty(self) -> bool:
        return all(not p.any() for p in self.pixels.values())

    def shifted(self, offsets: dict) -> "RegionMask":
        """Translate each state's grid by an integer (dx, dy); pixels pushed out are dropped."""
        out = {}
        for st, grid in self.pixels.items():
            dx, dy = offsets.get(st, (0, 0))
            out[st] = _shift(grid, int(dx), int(dy))
        return RegionMask(self.label, out, self.descriptor)


def _shift(grid: np.ndarray, dx: int, dy: int) -> np.ndarray:
    h, w = grid.shape
    out = np.zeros_like(grid)
    src = grid[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)]
    out[max(0, dy) : max(0, dy) + src.shape[0], max(0, dx) : max(0, dx) + src.shape[1]] = src
    return out


def _check_pair(a: np.ndarray, b: np.ndarray):
    if np.any(a & b):
        raise ValueError("regions A and B overlap")
    if not a.any() or not b.any():
        raise ValueError("degenerate pattern: region A or B is empty")


def make_split_masks(
    geometry: Geometry, orientation: str, gap_center: int, gap_width: int = 1
) -> tuple[RegionMask, RegionMask]:
    """Split the frame at a straight gap.

    ``horizontal`` places the gap at column ``gap_center`` with A to the left;
    ``vertical`` places it at row ``gap_center`` with A above. A gap of even
    width extends one pixel further right/down.
    """
    if gap_width < 1:
        raise ValueError("gap_width must be >= 1")
    extent = {"horizontal": geometry.width, "vertical": geometry.height}.get(orientation)
    if extent is None:
        raise ValueError(f"orientation must be 'horizontal' or 'vertical', not {orientation!r}")
    start = gap_center - (gap_width - 1) // 2
    stop = start + gap_width
    if start < 0 or stop > extent:
        raise ValueError(f"gap [{start}, {stop}) lies outside the image (extent {extent})")
    coord = np.arange(extent)
    a_line, b_line = coord < start, coord >= stop
    if orientation == "horizontal":
        a = np.broadcast_to(a_line[None, :], (geometry.height, geometry.width))
        b = np.broadcast_to(b_line[None, :], (geometry.height, geometry.width))
    else:
        a = np.broadcast_to(a_line[:, None], (geometry.height, geometry.width))
        b = np.broadcast_to(b_line[:, None], (geometry.height, geometry.width))
    _check_pair(a, b)
    desc = {"kind": "split", "orientation": orientation, "gap_center": int(gap_center), "gap_width": int(gap_width)}
    return RegionMask.uniform("A", a, desc), RegionMask.uniform("B", b, desc)


def _pattern_grids(geometry: Geometry, pattern: dict):
    kind = pattern.get("kind")
    h, w = geometry.height, geometry.width
    gap = int(pattern.get("gap", 1))
    rows, cols = np.mgrid[0:h, 0:w]
    cr, cc = h // 2, w // 2
    if kind == "half_split":
        orientation = pattern.get("orientation", "horizontal")
        center = pattern.get("center", cc if orientation == "horizontal" else cr)
        a, b = make_split_masks(geometry, orientation, center, gap)
        return a.pixels[1], b.pixels[1]
    if kind == "quadrants":
        lo, hi = -((gap - 1) // 2), gap // 2
        top, bottom = rows < cr + lo, rows > cr + hi
        left, right = cols < cc + lo, cols > cc + hi
        return (top & left) | (bottom & right), (top & right) | (bottom & left)
    if kind == "concentric":
        radius = float(pattern["radius"])
        y0, x0 = geometry.center[1], geometry.center[0]
        dist = np.hypot(cols + 0.5 - x0, rows + 0.5 - y0)
        return dist <= radius, dist > radius + gap
    if kind == "stripes":
        orientation = pattern.get("orientation", "horizontal")
        width = int(pattern["width"])
        coord = cols - cc if orientation == "horizontal" else rows - cr
        period = 2 * (width + gap)
        phase = np.mod(coord, period)
        a = phase < width
        b = (phase >= width + gap) & (phase < 2 * width + gap)
        return a, b
    if kind == "explicit":
        a = np.zeros((h, w), bool)
        b = np.zeros((h, w), bool)
        for grid, key in ((a, "a"), (b, "b")):
            for r, c in pattern[key]:
                if not (0 <= r < h and 0 <= c < w):
                    raise ValueError(f"pixel {(r, c)} outside the geometry")
                grid[r, c] = True
        return a, b
    raise ValueError(f"unknown pattern kind {kind!r}")


PATTERN_LIBRARY = (
    {"kind": "half_split", "orientation": "horizontal", "gap": 1},
    {"kind": "half_split", "orientation": "vertical", "gap": 1},
    {"kind": "quadrants", "gap": 1},
    {"kind": "concentric", "radius": 4.0, "gap": 1},
    {"kind": "stripes", "orientation": "horizontal", "width": 4, "gap": 1},
    {"kind": "stripes", "orientation": "vertical", "width": 4, "gap": 1},
)
"""Built-in shapes, approximating the kinds of patterns used for Fig. 2b-style scans."""


def make_pattern_masks(geometry: Geometry, pattern: dict) -> tuple[RegionMask, RegionMask]:
    a, b = _pattern_grids(geometry, pattern)
    _check_pair(a, b)
    desc = dict(pattern)
    return RegionMask.uniform("A", a, desc), RegionMask.uniform("B", b, desc)


def overlap_grid(psf_width, mask_grid: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """f(x, y) on the outer product of ``xs`` and ``ys``; shape ``(len(ys), len(xs))``."""
    h, w = mask_grid.shape
    ex = pixel_integrals(xs, psf_width[0], w)
    ey = pixel_integrals(ys, psf_width[1], h)
    return ey @ mask_grid.astype(float) @ ex.T


def mode_overlap(psf: PsfModel, mask: RegionMask, x, state: int = 2) -> np.ndarray | float:
    """Kernel mass of an atom at ``x`` (or an ``(n, 2)`` array of positions) inside the mask."""
    pos = np.asarray(x, dtype=float)
    single = pos.ndim == 1
    pos = pos.reshape(-1, 2)
    grid = mask.pixels[state]
    h, w = grid.shape
    sx, sy = psf.widths[state]
    ex = pixel_integrals(pos[:, 0], sx, w)
    ey = pixel_integrals(pos[:, 1], sy, h)
    f = np.einsum("ny,yx,nx->n", ey, grid.astype(float), ex)
    f = np.clip(f, 0.0, 1.0)
    return float(f[0]) if single else f


def overlap_integrals(
    density: CloudDensity,
    psf: PsfModel,
    masks: dict,
    state: int,
    supersample: int = 4,
) -> dict:
    """Density-averaged <f^U> and <f^U f^V> for the named masks of one state.

    Keys are the mask names and every pair of names concatenated ("aa", "ab").
    """
    h, w = next(iter(masks.values())).pixels[state].shape
    geometry = Geometry(w, h)
    xs, ys, weights = density.cell_masses(state, geometry, supersample)
    weights = weights / weights.sum()
    grids = {k: overlap_grid(psf.widths[state], m.pixels[state], xs, ys) for k, m in masks.items()}
    out = {}
    names = list(grids)
    for i, u in enumerate(names):
        out[u] = float(np.sum(weights * grids[u]))
        for v in names[i:]:
            out[u + v] = float(np.sum(weights * grids[u] * grids[v]))
    return out


def eta_per_state(density: CloudDensity, psf: PsfModel, mask: RegionMask, supersample: int = 4) -> dict:
    out = {}
    for st in STATES:
        ints = overlap_integrals(density, psf, {"u": mask}, st, supersample)
        if ints["u"] <= 0.0:
            raise UndefinedRegionError(f"region {mask.label} holds no density for state {st}")
        out[st] = ints["uu"] / ints["u"]
    return out


def eta_mixture(density: CloudDensity, psf: PsfModel, mask: RegionMask, weights=None, supersample: int = 4) -> float:
    """<rho f^2> / <rho f> for a mixture of the two state densities (equal weights by default)."""
    weights = weights or {st: 1.0 for st in STATES}
    num = den = 0.0
    for st in STATES:
        ints = overlap_integrals(density, psf, {"u": mask}, st, supersample)
        num += weights[st] * ints["uu"]
        den += weights[st] * ints["u"]
    if den <= 0.0:
        raise UndefinedRegionError(f"region {mask.label} holds no density")
    return num / den


def eta_eff(density: CloudDensity, psf: PsfModel, mask: RegionMask, supersample: int = 4) -> float:
    """<rho f^2> / <rho f>, the smaller of the two states' values."""
    return min(eta_per_state(density, psf, mask, supersample).values())


@dataclass(frozen=True)
class OverlapProfile:
    label: str
    eta_eff: float
    eta_states: dict
    noise_var_counts: float = 0.0
    """sigma_1U^2 + sigma_2U^2: detection-noise variance of N1^U - N2^U."""

    @property
    def noise_var(self) -> float:
        """Var(Delta^U) of the normalized local spin."""
        return self.noise_var_counts / (4 * self.eta_eff**2)


def build_profile(
    density: CloudDensity,
    psf: PsfModel,
    mask: RegionMask,
    noise: DetectionNoiseModel | None = None,
    supersample: int = 4,
) -> OverlapProfile:
    etas = eta_per_state(density, psf, mask, supersample)
    noise_var = 0.0
    if noise is not None:
        h, w = mask.pixels[1].shape
        geometry = Geometry(w, h)
        noise_var = sum(noise.region_variance(st, mask.n_pixels(st), geometry) for st in STATES)
    return OverlapProfile(mask.label, min(etas.values()), etas, noise_var)


def count_atoms(image_pair: ImagePair, mask: RegionMask) -> tuple[float, float]:
    """(N1^U, N2^U): per-state sums over the mask."""
    n1 = float(np.sum(image_pair.frame1, where=mask.pixels[1], dtype=float))
    n2 = float(np.sum(image_pair.frame2, where=mask.pixels[2], dtype=float))
    return n1, n2


def count_atoms_batch(frames1: np.ndarray, frames2: np.ndarray, mask: RegionMask):
    """Vectorized :func:`count_atoms` over stacks of frames, shape ``(shots, h, w)``."""
    m1 = mask.pixels[1].astype(np.float64).ravel()
    m2 = mask.pixels[2].astype(np.float64).ravel()
    n1 = frames1.reshape(len(frames1), -1).astype(np.float64) @ m1
    n2 = frames2.reshape(len(frames2), -1).astype(np.float64) @ m2
    return n1, n2


@dataclass(frozen=True)
class SpinSample:
    value: float
    axis: str
    region: str
    counts: tuple
    noise_var: float


def local_spin(n1, n2, eta: float):
    return (np.asarray(n1) - np.asarray(n2)) / (2.0 * eta)


def extract_spin_sample(
    image_pair: ImagePair, mask: RegionMask, profile: OverlapProfile, axis: str
) -> SpinSample:
    if not profile.eta_eff > 0:
        raise UndefinedRegionError(f"region {mask.label} has eta_eff = {profile.eta_eff}")
    n1, n2 = count_atoms(image_pair, mask)
    return SpinSample(
        value=float(local_spin(n1, n2, profile.eta_eff)),
        axis=axis,
        region=mask.label,
        counts=(n1, n2),
        noise_var=profile.noise_var,
    )


def ensemble_centroids(frames1: np.ndarray, frames2: np.ndarray) -> dict:
    """(x, y) centroid of each state's ensemble-mean image."""
    out = {}
    for st, frames in ((1, frames1), (2, frames2)):
        mean = np.asarray(frames, dtype=float).mean(axis=0)
        mean = np.clip(mean, 0.0, None)
        h, w = mean.shape
        total = mean.sum()
        if total <= 0:
            raise UndefinedRegionError(f"no mean signal in state {st} frames")
        x = (mean.sum(axis=0) @ (np.arange(w) + 0.5)) / total
        y = (mean.sum(axis=1) @ (np.arange(h) + 0.5)) / total
        out[st] = (float(x), float(y))
    return out


def centering_offsets(centroids: dict, geometry: Geometry) -> dict:
    """Integer shift per state moving masks drawn about the frame center onto the centroid."""
    cx, cy = geometry.center
    return {st: (int(np.round(x - cx)), int(np.round(y - cy))) for st, (x, y) in centroids.items()}
