"""Shot generation: prepare, rotate, project, place atoms, render."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np

from .config import RunConfig
from .imaging import render_shot, sample_positions
from .spin import (
    MeasurementAxis,
    assign_outcomes,
    coherent_state,
    measurement_rotation,
    rotate_z,
    sample_excitation_count,
    squeezed_state,
    tune_twist,
)

AXIS_ORDER = ("plus_x", "minus_x", "y", "z")


@dataclass
class Shot:
    index: int
    subset: int
    axis: str
    n_atoms: int
    k: int
    frame2: np.ndarray
    frame1: np.ndarray
    positions: np.ndarray | None = field(default=None, repr=False)
    outcomes: np.ndarray | None = field(default=None, repr=False)


def resolve_mu(config: RunConfig) -> float:
    st = config.state
    if st.kind == "css":
        return 0.0
    if st.mu is not None:
        return float(st.mu)
    return _tuned_mu(st.n_atoms, st.target_db)


@lru_cache(maxsize=32)
def _tuned_mu(n_atoms: int, target_db: float) -> float:
    return tune_twist(n_atoms, target_db)


@lru_cache(maxsize=4096)
def _prepared(n_atoms: int, mu: float):
    if mu == 0.0:
        return coherent_state(n_atoms, np.pi / 2, 0.0)
    return squeezed_state(n_atoms, mu)


@lru_cache(maxsize=16384)
def _readout_state(n_atoms: int, mu: float, axis: str):
    return measurement_rotation(_prepared(n_atoms, mu), MeasurementAxis.from_label(axis))


def shot_plan(config: RunConfig, axes: dict | None = None) -> list[tuple[int, str]]:
    """(subset, axis) per shot: every subset runs +x, -x, y, z in that order."""
    counts = axes or config.acquisition.counts()
    plan = []
    for subset in range(config.acquisition.n_subsets):
        for ax in AXIS_ORDER:
            plan.extend([(subset, ax)] * int(counts.get(ax, 0)))
    return plan


def draw_atom_number(config: RunConfig, rng: np.random.Generator) -> int:
    st = config.state
    if st.n_atoms_sigma == 0:
        return st.n_atoms
    while True:
        n = int(np.rint(rng.normal(st.n_atoms, st.n_atoms_sigma)))
        if n >= 1:
            return n


def simulate_shot(config: RunConfig, index: int, subset: int, axis: str, seed_seq, mu: float, keep_truth: bool) -> Shot:
    rng = np.random.default_rng(seed_seq)
    im = config.imaging
    n = draw_atom_number(config, rng)
    if config.state.phase_noise > 0:
        state = rotate_z(_prepared(n, mu), rng.normal(0.0, config.state.phase_noise))
        state = measurement_rotation(state, MeasurementAxis.from_label(axis))
    else:
        state = _readout_state(n, mu, axis)
    k = sample_excitation_count(state, rng)
    outcomes = assign_outcomes(k, n, rng)
    up = outcomes > 0
    density = im.density()
    positions = np.empty((n, 2))
    positions[up] = sample_positions(density, int(up.sum()), 2, rng)
    positions[~up] = sample_positions(density, int((~up).sum()), 1, rng)
    pair = render_shot(positions, outcomes, im.psf(), im.noise_model(), im.geometry, rng)
    return Shot(
        index=index,
        subset=subset,
        axis=axis,
        n_atoms=n,
        k=k,
        frame2=pair.frame2.astype("<f4"),
        frame1=pair.frame1.astype("<f4"),
        positions=positions if keep_truth else None,
        outcomes=outcomes if keep_truth else None,
    )


def iter_shots(config: RunConfig, axes: dict | None = None, keep_truth: bool | None = None) -> Iterator[Shot]:
    """Generate shots lazily; shot ``i`` always uses child ``i`` of the run seed."""
    config.validate()
    mu = resolve_mu(config)
    keep = config.acquisition.store_truth if keep_truth is None else keep_truth
    plan = shot_plan(config, axes)
    children = np.random.SeedSequence(config.seed).spawn(len(plan))
    for i, ((subset, axis), child) in enumerate(zip(plan, children)):
        yield simulate_shot(config, i, subset, axis, child, mu, keep)
