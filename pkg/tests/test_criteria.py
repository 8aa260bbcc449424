import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinsplit.criteria import (
    GainPair,
    NonPositiveDenominator,
    SubsetBlock,
    aggregate_subsets,
    crosstalk_floor,
    crosstalk_floors,
    entanglement_criterion,
    epr_criterion,
    evaluate_subset,
    inferred_quadratures,
    inferred_variance,
    mean_sx,
    optimal_gain,
    subtract_noise,
    wineland_parameter,
)
from spinsplit.imaging import CloudDensity, Geometry, PsfModel
from spinsplit.oracles import synthetic_block
from spinsplit.regions import RegionMask, make_split_masks
from spinsplit.spin import (
    MeasurementAxis,
    coherent_state,
    measurement_rotation,
    partitioned_moments_exact,
    sample_excitation_count,
    spin_moments,
    squeezed_state,
)

GEOM = Geometry(41, 49)


def test_mean_sx_examples():
    assert mean_sx(np.full(4, 50.0), np.full(4, -50.0)) == 50.0
    assert mean_sx(np.zeros(4), np.zeros(4)) == 0.0
    with pytest.raises(ValueError):
        mean_sx([], [1.0])


def test_mean_sx_css_monte_carlo():
    n = 300
    rng = np.random.default_rng(0)
    css = coherent_state(n, np.pi / 2, 0.0)
    samples = {}
    for ax in ("plus_x", "minus_x"):
        state = measurement_rotation(css, MeasurementAxis.from_label(ax))
        samples[ax] = sample_excitation_count(state, rng, size=2000) - n / 2
    se = np.sqrt(np.var(samples["plus_x"]) / 2000 + np.var(samples["minus_x"]) / 2000) / 2
    assert abs(mean_sx(samples["plus_x"], samples["minus_x"]) - n / 2) < 4 * se + 1e-12


def test_optimal_gain_examples():
    rng = np.random.default_rng(1)
    a = rng.normal(size=50)
    assert optimal_gain(a, -a) == pytest.approx(1.0)
    assert optimal_gain(a, np.zeros(50)) == 0.0
    with pytest.raises(NonPositiveDenominator):
        optimal_gain(a, -a, noise_var_a=10.0)
    with pytest.raises(ValueError):
        optimal_gain(a[:2], a[:2])


def test_optimal_gain_regression_oracle():
    rng = np.random.default_rng(2)
    # b = -0.7 a + e, so the least-squares gain is 0.7 with known sampling spread
    gains = []
    for _ in range(400):
        a = rng.normal(0, 2.0, 70)
        b = -0.7 * a + rng.normal(0, 1.0, 70)
        gains.append(optimal_gain(a, b))
    se = np.std(gains) / np.sqrt(len(gains))
    assert abs(np.mean(gains) - 0.7) < 4 * se


def test_inferred_variance_examples():
    a = np.arange(10.0)
    assert inferred_variance(np.ones(10), np.ones(10), 0.4) == 0.0
    assert inferred_variance(a, -0.4 * a, 0.4) == pytest.approx(0.0, abs=1e-24)
    with pytest.raises(ValueError):
        inferred_variance(a[:2], a[:2], 1.0)


def test_inferred_variance_unbiased_at_m70():
    rng = np.random.default_rng(3)
    m, reps = 70, 10_000
    vals = np.empty(reps)
    for i in range(reps):
        a, b = rng.normal(size=m), rng.normal(size=m)
        vals[i] = inferred_variance(a, b, optimal_gain(a, b))
    assert np.mean(vals) == pytest.approx(1.0, rel=0.02)


def test_subtract_noise_examples():
    assert subtract_noise(5.0, 1.0, 0.0, 0.0) == 5.0
    assert subtract_noise(5.0, 1.0, 1.0, 1.0) == 3.0
    with pytest.raises(ValueError):
        subtract_noise(5.0, 1.0, -1.0, 1.0)


def test_noise_subtraction_recovers_clean_variance():
    rng = np.random.default_rng(4)
    m, reps, g = 70, 4000, 0.8
    na, nb = 2.0, 1.5
    diff = np.empty(reps)
    for i in range(reps):
        a = rng.normal(0, 3, m)
        b = -g * a + rng.normal(0, 1.0, m)
        clean = inferred_variance(a, b, g, ddof=1)
        noisy = inferred_variance(a + rng.normal(0, np.sqrt(na), m), b + rng.normal(0, np.sqrt(nb), m), g, ddof=1)
        diff[i] = subtract_noise(noisy, g, na, nb) - clean
    assert abs(diff.mean()) < 4 * diff.std() / np.sqrt(reps)


def _block(seed, **kw):
    return synthetic_block(np.random.default_rng(seed), **kw)


def test_zero_gains_give_local_product():
    blk = _block(5)
    e = entanglement_criterion(blk, GainPair(0.0, 0.0), noise=False)
    local = 4 * np.var(blk.b["z"], ddof=2) * np.var(blk.b["y"], ddof=2)
    assert e == pytest.approx(local / mean_sx(blk.b["plus_x"], blk.b["minus_x"]) ** 2)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_criterion_properties(seed):
    blk = _block(seed, slope=0.5 + (seed % 7) / 7, m_z=20, m_y=25)
    e_ent = entanglement_criterion(blk, noise=False)
    e_epr, plain = epr_criterion(blk, "A->B", noise=False)
    assert e_ent <= e_epr * (1 + 1e-12)
    # exchanging the +x and -x groups changes nothing
    flip = SubsetBlock(
        {**blk.a, "plus_x": blk.a["minus_x"], "minus_x": blk.a["plus_x"]},
        {**blk.b, "plus_x": blk.b["minus_x"], "minus_x": blk.b["plus_x"]},
    )
    assert entanglement_criterion(flip, noise=False) == pytest.approx(e_ent, rel=1e-12)
    # the fitted gain minimizes the residual variance
    q = inferred_quadratures(blk, noise=False)
    for ax in ("z", "y"):
        assert q[f"raw_var_{ax}"] <= inferred_variance(blk.a[ax], blk.b[ax], 0.0) * (1 + 1e-12)


def test_direction_swap_symmetric():
    vals_ab, vals_ba = [], []
    for seed in range(60):
        rng = np.random.default_rng(seed)
        a, b = {}, {}
        for ax in ("z", "y"):
            common = rng.normal(0, 5, 70)
            a[ax] = common + rng.normal(0, 3, 70)
            b[ax] = -common + rng.normal(0, 3, 70)
        for ax, sign in (("plus_x", 1), ("minus_x", -1)):
            a[ax] = sign * 40 + rng.normal(0, 1, 4)
            b[ax] = sign * 40 + rng.normal(0, 1, 4)
        blk = SubsetBlock(a, b)
        vals_ab.append(epr_criterion(blk, "A->B", noise=False)[0])
        vals_ba.append(epr_criterion(blk, "B->A", noise=False)[0])
    (m1, s1), (m2, s2) = aggregate_subsets(vals_ab), aggregate_subsets(vals_ba)
    assert abs(m1 - m2) < 3 * np.hypot(s1, s2)


def test_epr_errors():
    blk = _block(6)
    with pytest.raises(ValueError):
        epr_criterion(blk, "A<-B")
    zero = SubsetBlock({**blk.a}, {**blk.b, "plus_x": np.zeros(4), "minus_x": np.zeros(4)})
    with pytest.raises(ZeroDivisionError):
        epr_criterion(zero)
    missing = SubsetBlock({"z": blk.a["z"]}, {"z": blk.b["z"]})
    with pytest.raises(ValueError):
        entanglement_criterion(missing)


def test_gain_fallback_flag():
    blk = _block(7)
    blk.noise_var_a = 1e6
    q = inferred_quadratures(blk)
    assert q["gain_fallback"] and q["g_z"] == 0.0
    rec = evaluate_subset(blk)
    assert rec["gain_fallback"]


def test_aggregate_examples():
    assert aggregate_subsets([0.7, 0.7, 0.7]) == (pytest.approx(0.7), 0.0)
    mean, sem = aggregate_subsets([0.8, 1.0, 1.2])
    assert mean == pytest.approx(1.0) and sem == pytest.approx(0.11547, abs=1e-5)
    with pytest.raises(ValueError):
        aggregate_subsets([1.0])


def test_aggregate_order_independent():
    v = np.random.default_rng(8).normal(size=101)
    assert aggregate_subsets(v) == aggregate_subsets(v[::-1])


def test_wineland_examples():
    css = spin_moments(coherent_state(100, np.pi / 2, 0.0))
    xi2, db = wineland_parameter(css, 100)
    assert xi2 == pytest.approx(1.0) and db == pytest.approx(0.0, abs=1e-9)
    from spinsplit.spin import tune_twist

    mu = tune_twist(590)
    assert wineland_parameter(spin_moments(squeezed_state(590, mu)), 590)[1] == pytest.approx(-3.8, abs=0.3)
    pole_flat = spin_moments(coherent_state(4, np.pi / 2, 0.0))
    zero = type(pole_flat)(np.zeros(3), pole_flat.covariance)
    with pytest.raises(ZeroDivisionError):
        wineland_parameter(zero, 4)


def test_wineland_monte_carlo_vs_exact():
    n, mu = 200, 0.01
    rng = np.random.default_rng(9)
    state = squeezed_state(n, mu)
    exact = wineland_parameter(spin_moments(state), n)[0]
    draws = {}
    for ax, m in (("z", 20_000), ("plus_x", 2000), ("minus_x", 2000)):
        rot = measurement_rotation(state, MeasurementAxis.from_label(ax))
        draws[ax] = sample_excitation_count(rot, rng, size=m) - n / 2.0
    blk = SubsetBlock(draws, draws)
    est = wineland_parameter(blk, n)[0]
    # delta-method SE from the variance and polarization estimates
    var, pol = np.var(draws["z"], ddof=1), mean_sx(draws["plus_x"], draws["minus_x"])
    rel_var = np.sqrt(2 / (len(draws["z"]) - 1))
    rel_pol = np.sqrt(np.var(draws["plus_x"]) / 2000 + np.var(draws["minus_x"]) / 2000) / 2 / pol
    se = est * np.hypot(rel_var, 2 * rel_pol)
    assert abs(est - exact) < 4 * se


def test_crosstalk_floor_limits():
    density, psf = CloudDensity(), PsfModel()
    a, b = make_split_masks(GEOM, "horizontal", 20, 10)
    assert crosstalk_floor(density, psf, a, b) == pytest.approx(1.0, abs=1e-6)
    far_a = np.zeros((GEOM.height, GEOM.width), bool)
    far_b = np.zeros_like(far_a)
    far_a[:, :15] = True
    far_b[:, 35:] = True
    floors = crosstalk_floors(density, psf, RegionMask.uniform("A", far_a), RegionMask.uniform("B", far_b))
    assert floors["epr_ab"] == pytest.approx(1.0, abs=1e-12)
    assert floors["ent"] == pytest.approx(1.0, abs=1e-12)
    assert crosstalk_floor(density, psf, a, a) == pytest.approx(0.0, abs=1e-12)


def test_crosstalk_floor_one_pixel_gap():
    density, psf = CloudDensity(), PsfModel()
    for c in range(16, 25):
        a, b = make_split_masks(GEOM, "horizontal", c, 1)
        assert 0.94 <= crosstalk_floor(density, psf, a, b) < 1.0


def test_pipeline_converges_to_analytic_criteria():
    n = 100
    state = squeezed_state(n, 0.03)
    fa = np.r_[np.full(40, 0.9), np.full(60, 0.05)]
    fb = np.r_[np.full(40, 0.05), np.full(60, 0.9)]
    mom = {ax: partitioned_moments_exact(measurement_rotation(state, MeasurementAxis.from_label(ax)), fa, fb) for ax in ("z", "y", "plus_x")}
    sx_b = mom["plus_x"].mean_b
    truth = 4 / sx_b**2
    for ax in ("z", "y"):
        p = mom[ax]
        truth *= p.var_b - p.cov_ab**2 / p.var_a
    errors = []
    rng = np.random.default_rng(10)
    for m in (70, 700, 7000):
        vals = []
        for _ in range(100):
            a, b = {}, {}
            for ax in ("z", "y"):
                p = mom[ax]
                cov = [[p.var_a, p.cov_ab], [p.cov_ab, p.var_b]]
                a[ax], b[ax] = rng.multivariate_normal([p.mean_a, p.mean_b], cov, m).T
            px = mom["plus_x"]
            a["plus_x"], b["plus_x"] = np.full(4, px.mean_a), np.full(4, px.mean_b)
            a["minus_x"], b["minus_x"] = -a["plus_x"], -b["plus_x"]
            vals.append(epr_criterion(SubsetBlock(a, b), noise=False)[0])
        vals = np.array(vals)
        errors.append(np.sqrt(np.mean((vals - truth) ** 2)))
        assert abs(vals.mean() - truth) < 4 * vals.std() / 10 + 1e-3 * truth
    assert errors[0] > errors[1] > errors[2]
