"""Symmetric collective-spin states of N two-level atoms.

States live in the Dicke basis: amplitude ``c[k]`` belongs to the symmetric
state with ``k`` atoms in ``|2>`` and ``N - k`` atoms in ``|1>``. The spin
projection is ``Sz = k - N/2``, so ``Sz = (N2 - N1)/2``. The image-derived
local spin uses the opposite sign, ``(N1 - N2)/2``; only variances and
``|<Sx>|`` enter the criteria, so the relabeling is harmless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln, xlogy

NORM_TOL = 1e-10

AXIS_LABELS = ("plus_x", "minus_x", "y", "z")


@dataclass(frozen=True)
class DickeState:
    n_atoms: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_atoms + 1,):
            raise ValueError(
                f"expected {self.n_atoms + 1} amplitudes, got shape {amps.shape}"
            )
        norm = np.sum(np.abs(amps) ** 2)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalized (|c|^2 sums to {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()

    @property
    def m(self) -> np.ndarray:
        """Sz eigenvalue of each Dicke component."""
        return np.arange(self.n_atoms + 1) - self.n_atoms / 2


@dataclass(frozen=True)
class SpinMoments:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def polarization(self) -> float:
        return float(np.linalg.norm(self.mean))


@dataclass(frozen=True)
class MeasurementAxis:
    """Readout setting: the rotation applied before projecting onto Sz.

    ``rotation`` is ``(axis, angle)``; ``z`` has angle 0. The others assume the
    mean spin points along +x, as after :func:`squeezed_state`.
    """

    label: str
    rotation: tuple[tuple[float, float, float], float]

    @classmethod
    def from_label(cls, label: str) -> "MeasurementAxis":
        half_pi = np.pi / 2
        table = {
            "z": ((0.0, 0.0, 1.0), 0.0),
            # R_x(pi/2) maps +y onto +z
            "y": ((1.0, 0.0, 0.0), half_pi),
            # R_y(-pi/2) maps +x onto +z, R_y(+pi/2) maps +x onto -z
            "plus_x": ((0.0, 1.0, 0.0), -half_pi),
            "minus_x": ((0.0, 1.0, 0.0), half_pi),
        }
        if label not in table:
            raise ValueError(f"unknown axis label {label!r}; expected one of {AXIS_LABELS}")
        return cls(label, table[label])


def _ladder(n_atoms: int) -> np.ndarray:
    """<k+1|J+|k> for k = 0..N-1."""
    k = np.arange(n_atoms)
    return np.sqrt((n_atoms - k) * (k + 1.0))


def coherent_state(n_atoms: int, polar: float, azimuth: float) -> DickeState:
    """Spin-coherent state pointing along (polar, azimuth).

    ``polar = 0`` is the pole with every atom in ``|2>`` (k = N).
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    k = np.arange(n_atoms + 1)
    log_binom = gammaln(n_atoms + 1) - gammaln(k + 1) - gammaln(n_atoms - k + 1)
    c, s = np.cos(polar / 2), np.sin(polar / 2)
    log_mag = 0.5 * log_binom + xlogy(k, abs(c)) + xlogy(n_atoms - k, abs(s))
    mag = np.exp(log_mag)
    sign = np.sign(c) ** k * np.sign(s) ** (n_atoms - k)
    amps = mag * sign * np.exp(-1j * k * azimuth)
    amps /= np.linalg.norm(amps)
    return DickeState(n_atoms, amps)


@lru_cache(maxsize=1024)
def _generator_eigensystem(n_atoms: int, axis: tuple[float, float, float]):
    # n.S = D T D^dagger with D = diag(exp(-i k phi)) and T real tridiagonal
    nx, ny, nz = axis
    phi = np.arctan2(ny, nx)
    r = np.hypot(nx, ny)
    diag = nz * (np.arange(n_atoms + 1) - n_atoms / 2)
    off = 0.5 * r * _ladder(n_atoms)
    if r == 0.0:
        w = diag
        v = np.eye(n_atoms + 1)
    else:
        w, v = eigh_tridiagonal(diag, off)
    gauge = np.exp(-1j * np.arange(n_atoms + 1) * phi)
    return gauge, v, w


def rotate(state: DickeState, axis, angle: float) -> DickeState:
    """Apply exp(-i angle n.S) to ``state``.

    The generator is tridiagonal in the Dicke basis; it is diagonalized with
    LAPACK's symmetric tridiagonal solver after a diagonal gauge transform, so
    the result stays unitary to machine precision for N in the thousands.
    """
    n = np.asarray(axis, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("rotation axis must be a unit 3-vector")
    if angle == 0.0:
        return state
    key = tuple(float(x) for x in np.round(n, 15))
    gauge, v, w = _generator_eigensystem(state.n_atoms, key)
    psi = gauge.conj() * state.amplitudes
    psi = v @ (np.exp(-1j * angle * w) * (v.T @ psi))
    psi = gauge * psi
    # rounding drift only; a genuine norm error would have shown up in tests
    psi /= np.linalg.norm(psi)
    return DickeState(state.n_atoms, psi)


def rotate_z(state: DickeState, angle: float) -> DickeState:
    phase = np.exp(-1j * angle * state.m)
    return DickeState(state.n_atoms, state.amplitudes * phase)


def one_axis_twist(state: DickeState, mu: float) -> DickeState:
    """Multiply c_k by exp(-i mu k^2 / 2)."""
    k = np.arange(state.n_atoms + 1)
    return DickeState(state.n_atoms, state.amplitudes * np.exp(-0.5j * mu * k**2))


def spin_moments(state: DickeState) -> SpinMoments:
    c = state.amplitudes
    p = np.abs(c) ** 2
    m = state.m
    a = _ladder(state.n_atoms)

    jp = np.sum(np.conj(c[1:]) * c[:-1] * a)  # <J+>
    jp2 = np.sum(np.conj(c[2:]) * c[:-2] * a[:-1] * a[1:])  # <J+^2>
    jpjm = np.sum(p[1:] * a**2)  # <J+ J->
    jmjp = np.sum(p[:-1] * a**2)  # <J- J+>
    jp_sz = np.sum(np.conj(c[1:]) * c[:-1] * a * (2 * m[:-1] + 1))  # <{J+, Sz}>

    sx, sy, sz = jp.real, jp.imag, np.sum(p * m)
    sx2 = 0.25 * (2 * jp2.real + jpjm + jmjp)
    sy2 = 0.25 * (-2 * jp2.real + jpjm + jmjp)
    sz2 = np.sum(p * m**2)
    sxy = 0.5 * jp2.imag
    sxz = 0.5 * jp_sz.real
    syz = 0.5 * jp_sz.imag

    mean = np.array([sx, sy, sz])
    second = np.array([[sx2, sxy, sxz], [sxy, sy2, syz], [sxz, syz, sz2]])
    cov = second - np.outer(mean, mean)
    return SpinMoments(mean, 0.5 * (cov + cov.T))


def min_perpendicular_variance(moments: SpinMoments) -> float:
    """Smallest spin variance orthogonal to the mean spin."""
    mean = moments.mean
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        raise ValueError("zero polarization: no mean-spin direction")
    u = mean / norm
    helper = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(u, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    basis = np.stack([e1, e2])
    return float(np.linalg.eigvalsh(basis @ moments.covariance @ basis.T)[0])


def wineland_xi2(moments: SpinMoments, n_atoms: int) -> float:
    return n_atoms * min_perpendicular_variance(moments) / moments.polarization**2


def align_squeezed_state(state: DickeState) -> DickeState:
    """Rotate so the mean spin is along +x and the minimum-variance quadrature along z."""
    mom = spin_moments(state)
    state = rotate_z(state, -np.arctan2(mom.mean[1], mom.mean[0]))
    cov = spin_moments(state).covariance[1:, 1:]
    _, vecs = np.linalg.eigh(cov)
    ey, ez = vecs[:, 0]
    beta = np.arctan2(ez, ey)
    return rotate(state, (1.0, 0.0, 0.0), np.pi / 2 - beta)


def squeezed_state(n_atoms: int, mu: float) -> DickeState:
    """One-axis-twisted equatorial coherent state, aligned for readout."""
    css = coherent_state(n_atoms, np.pi / 2, 0.0)
    if mu == 0.0:
        return css
    return align_squeezed_state(one_axis_twist(css, mu))


def tune_twist(n_atoms: int, target_db: float = -3.8) -> float:
    """Smallest twisting strength whose Wineland parameter reaches ``target_db``."""
    from scipy.optimize import brentq

    css = coherent_state(n_atoms, np.pi / 2, 0.0)

    def db(mu):
        mom = spin_moments(one_axis_twist(css, mu))
        return 10 * np.log10(wineland_xi2(mom, n_atoms)) - target_db

    grid = np.geomspace(1e-6, 1.0, 200) * n_atoms ** (-0.5)
    prev = grid[0]
    for mu in grid[1:]:
        if db(mu) < 0:
            return float(brentq(db, prev, mu, xtol=1e-12))
        prev = mu
    raise ValueError(f"one-axis twisting never reaches {target_db} dB for N={n_atoms}")


def measurement_rotation(state: DickeState, axis: MeasurementAxis) -> DickeState:
    rot_axis, angle = axis.rotation
    return rotate(state, rot_axis, angle)


def sample_excitation_count(state: DickeState, rng: np.random.Generator, size=None):
    """Draw k with probability |c_k|^2."""
    cdf = np.cumsum(state.probabilities)
    cdf[-1] = 1.0
    u = rng.random(size)
    k = np.searchsorted(cdf, u, side="right")
    return int(k) if size is None else k


def assign_outcomes(k: int, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
    """Per-atom outcomes: +1/2 for exactly ``k`` atoms chosen uniformly, -1/2 otherwise."""
    if not 0 <= k <= n_atoms:
        raise ValueError(f"k={k} outside [0, {n_atoms}]")
    out = np.full(n_atoms, -0.5)
    out[rng.choice(n_atoms, size=k, replace=False)] = 0.5
    return out


@dataclass(frozen=True)
class PartitionedMoments:
    """Moments of S^U = sum_i f^U_i s_i along the state's z axis."""

    mean_a: float
    mean_b: float
    var_a: float
    var_b: float
    cov_ab: float


def partitioned_moments_exact(
    state: DickeState, overlaps_a, overlaps_b
) -> PartitionedMoments:
    """Exact local-spin moments for fixed per-atom overlaps.

    Exchangeability of the symmetric state gives <s_i> = <Sz>/N and, for
    i != j, <s_i s_j> = (<Sz^2> - N/4) / (N (N - 1)).
    """
    n = state.n_atoms
    fa = np.asarray(overlaps_a, dtype=float)
    fb = np.asarray(overlaps_b, dtype=float)
    for f in (fa, fb):
        if f.shape != (n,):
            raise ValueError(f"overlap vector must have length {n}")
        if np.any(f < 0) or np.any(f > 1):
            raise ValueError("overlap weights must lie in [0, 1]")
    p, m = state.probabilities, state.m
    sz = np.sum(p * m)
    sz2 = np.sum(p * m**2)
    single = sz / n
    pair = (sz2 - n / 4) / (n * (n - 1)) if n > 1 else 0.0

    def second(f, g):
        diag = np.dot(f, g)
        return 0.25 * diag + pair * (f.sum() * g.sum() - diag)

    mean_a, mean_b = single * fa.sum(), single * fb.sum()
    return PartitionedMoments(
        mean_a=mean_a,
        mean_b=mean_b,
        var_a=second(fa, fa) - mean_a**2,
        var_b=second(fb, fb) - mean_b**2,
        cov_ab=second(fa, fb) - mean_a * mean_b,
    )


def region_moments_from_density(
    n_atoms: int,
    number_difference_sq: float,
    mean_number_difference: float,
    overlap_integrals: dict,
) -> dict:
    """Position-averaged local-spin moments for i.i.d. atom positions.

    ``overlap_integrals`` holds <f^U> under keys "a", "b" and <f^U f^V> under
    "aa", "bb", "ab" (all averaged over the atom density). Returns means,
    variances and the covariance of (N1^U - N2^U)/2, unnormalized.
    """
    ia, ib = overlap_integrals["a"], overlap_integrals["b"]
    excess = 0.25 * (number_difference_sq - n_atoms)
    half_mean = 0.5 * mean_number_difference

    def second(uv, u, v):
        return 0.25 * n_atoms * overlap_integrals[uv] + excess * u * v

    mean_a, mean_b = half_mean * ia, half_mean * ib
    return {
        "mean_a": mean_a,
        "mean_b": mean_b,
        "var_a": second("aa", ia, ia) - mean_a**2,
        "var_b": second("bb", ib, ib) - mean_b**2,
        "cov_ab": second("ab", ia, ib) - mean_a * mean_b,
    }
