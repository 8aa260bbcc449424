"""Independent reference computations used to check the fast code paths.

They trade speed for transparency: explicit 2^N enumeration, dense matrix
exponentials, closed-form one-axis-twisting moments, and synthetic Gaussian
data with a known residual variance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .criteria import SubsetBlock
from .spin import DickeState, PartitionedMoments, assign_outcomes, sample_excitation_count


def dense_spin_operators(n_atoms: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sx, Sy, Sz as dense (N+1)x(N+1) matrices in the Dicke basis (index k = atoms in |2>)."""
    k = np.arange(n_atoms + 1)
    raise_ = np.zeros((n_atoms + 1, n_atoms + 1))
    raise_[k[1:], k[:-1]] = np.sqrt((n_atoms - k[:-1]) * (k[:-1] + 1.0))
    lower = raise_.T
    sx = (raise_ + lower) / 2
    sy = (raise_ - lower) / 2j
    sz = np.diag(k - n_atoms / 2)
    return sx, sy, sz


def dense_rotation(n_atoms: int, axis, angle: float) -> np.ndarray:
    """exp(-i angle n.S) by a dense matrix exponential."""
    sx, sy, sz = dense_spin_operators(n_atoms)
    nx, ny, nz = axis
    return expm(-1j * angle * (nx * sx + ny * sy + nz * sz))


def dense_moments(state: DickeState) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and symmetrized covariance of (Sx, Sy, Sz) from dense operators."""
    ops = dense_spin_operators(state.n_atoms)
    c = state.amplitudes
    mean = np.array([np.real(np.vdot(c, op @ c)) for op in ops])
    cov = np.empty((3, 3))
    for i, a in enumerate(ops):
        for j, b in enumerate(ops):
            cov[i, j] = np.real(np.vdot(c, (a @ b + b @ a) @ c)) / 2 - mean[i] * mean[j]
    return mean, cov


@dataclass(frozen=True)
class OatPrediction:
    var_min: float
    mean_spin: float
    xi2: float


def kitagawa_ueda(n_atoms: int, mu: float) -> OatPrediction:
    """Closed-form minimum variance and mean spin of a one-axis-twisted equatorial CSS."""
    n = n_atoms
    a = 1 - np.cos(mu) ** (n - 2)
    b = 4 * np.sin(mu / 2) * np.cos(mu / 2) ** (n - 2)
    var_min = n / 4 * (1 + (n - 1) / 4 * (a - np.sqrt(a**2 + b**2)))
    mean_spin = n / 2 * np.cos(mu / 2) ** (n - 1)
    return OatPrediction(float(var_min), float(mean_spin), float(n * var_min / mean_spin**2))


def binomial_probabilities(n_atoms: int, p2: float) -> np.ndarray:
    """P(k) for independent atoms each in |2> with probability p2."""
    k = np.arange(n_atoms + 1)
    with np.errstate(divide="ignore"):
        logp = (
            gammaln(n_atoms + 1) - gammaln(k + 1) - gammaln(n_atoms - k + 1)
            + k * np.log(p2) + (n_atoms - k) * np.log1p(-p2)
        )
    return np.exp(logp)


def enumerate_partitioned_moments(state: DickeState, overlaps_a, overlaps_b) -> PartitionedMoments:
    """Moments of S^U = sum_i f^U_i s_i by summing over all 2^N product basis states.

    A symmetric state puts amplitude c_k / sqrt(C(N, k)) on every bit string
    with k atoms in |2>. Only practical for N up to about 16.
    """
    n = state.n_atoms
    fa, fb = np.asarray(overlaps_a, float), np.asarray(overlaps_b, float)
    probs = state.probabilities
    log_binom = gammaln(n + 1) - gammaln(np.arange(n + 1) + 1) - gammaln(n - np.arange(n + 1) + 1)
    weight_of_k = probs / np.exp(log_binom)
    m1 = np.zeros(2)
    m2 = np.zeros((2, 2))
    for bits in itertools.product((0, 1), repeat=n):
        b = np.array(bits)
        w = weight_of_k[b.sum()]
        if w == 0.0:
            continue
        s = b - 0.5
        v = np.array([fa @ s, fb @ s])
        m1 += w * v
        m2 += w * np.outer(v, v)
    cov = m2 - np.outer(m1, m1)
    return PartitionedMoments(m1[0], m1[1], cov[0, 0], cov[1, 1], cov[0, 1])


def sampled_partitioned_moments(
    state: DickeState, overlaps_a, overlaps_b, shots: int, rng: np.random.Generator
) -> tuple[PartitionedMoments, PartitionedMoments]:
    """Monte-Carlo moments from projective shots, plus their standard errors."""
    n = state.n_atoms
    fa, fb = np.asarray(overlaps_a, float), np.asarray(overlaps_b, float)
    ks = sample_excitation_count(state, rng, size=shots)
    outcomes = np.stack([assign_outcomes(int(k), n, rng) for k in ks])
    sa, sb = outcomes @ fa, outcomes @ fb
    cov = np.cov(sa, sb)
    est = PartitionedMoments(sa.mean(), sb.mean(), cov[0, 0], cov[1, 1], cov[0, 1])
    da, db = sa - sa.mean(), sb - sb.mean()
    se = PartitionedMoments(
        np.sqrt(cov[0, 0] / shots),
        np.sqrt(cov[1, 1] / shots),
        np.std(da**2) / np.sqrt(shots),
        np.std(db**2) / np.sqrt(shots),
        np.std(da * db) / np.sqrt(shots),
    )
    return est, se


def synthetic_pair(rng: np.random.Generator, m: int, slope: float, var_a: float, var_resid: float):
    """m samples of (a, b) with b = slope * a + noise; the best residual variance is ``var_resid``."""
    a = rng.normal(0.0, np.sqrt(var_a), m)
    b = slope * a + rng.normal(0.0, np.sqrt(var_resid), m)
    return a, b


def synthetic_block(
    rng: np.random.Generator,
    m_z: int = 60,
    m_y: int = 70,
    m_x: int = 4,
    slope: float = 0.8,
    var_a: float = 100.0,
    var_resid: float = 25.0,
    sx: float = 100.0,
    subset_id: int = 0,
) -> SubsetBlock:
    """Gaussian stand-in for one subset with known inferred variances along z and y."""
    a, b = {}, {}
    for ax, m in (("z", m_z), ("y", m_y)):
        a[ax], b[ax] = synthetic_pair(rng, m, slope, var_a, var_resid)
    for ax, sign in (("plus_x", 1.0), ("minus_x", -1.0)):
        a[ax] = sign * sx + rng.normal(0.0, 1.0, m_x)
        b[ax] = sign * sx + rng.normal(0.0, 1.0, m_x)
    return SubsetBlock(a, b, 0.0, 0.0, subset_id)
