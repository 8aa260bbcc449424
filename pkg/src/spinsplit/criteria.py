"""Entanglement and EPR-steering criteria from local spin samples.

All per-subset quantities follow the same recipe: regression gain corrected
for detection noise, inferred variance with the m - 2 normalization, noise
subtraction, then the criterion ratio. Dataset values are the unweighted mean
of the subset values with their standard error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .imaging import CloudDensity, PsfModel
from .regions import STATES, RegionMask, UndefinedRegionError, overlap_integrals
from .spin import SpinMoments, min_perpendicular_variance


class NonPositiveDenominator(ValueError):
    """Detection noise matches or exceeds the signal variance; no regression gain exists."""


@dataclass
class SubsetBlock:
    """Local spin samples of one acquisition subset.

    ``a`` and ``b`` map an axis label ("plus_x", "minus_x", "y", "z") to the
    per-shot values of S^A and S^B; both regions share the shot order.
    """

    a: dict
    b: dict
    noise_var_a: float = 0.0
    noise_var_b: float = 0.0
    subset_id: int = 0

    def swapped(self) -> "SubsetBlock":
        return SubsetBlock(self.b, self.a, self.noise_var_b, self.noise_var_a, self.subset_id)

    def require(self, *axes):
        for ax in axes:
            if ax not in self.a or ax not in self.b or len(self.a[ax]) == 0:
                raise ValueError(f"subset {self.subset_id} has no samples along {ax}")


@dataclass(frozen=True)
class GainPair:
    g_z: float
    g_y: float

    def __post_init__(self):
        if not (math.isfinite(self.g_z) and math.isfinite(self.g_y)):
            raise ValueError("gains must be finite")


def mean_sx(plus_x, minus_x) -> float:
    """|<Sx>| from the +x and -x readouts; their sign flip cancels offsets."""
    plus_x, minus_x = np.asarray(plus_x, float), np.asarray(minus_x, float)
    if plus_x.size == 0 or minus_x.size == 0:
        raise ValueError("both +x and -x samples are required")
    return abs(plus_x.mean() - minus_x.mean()) / 2


def optimal_gain(samples_a, samples_b, noise_var_a: float = 0.0) -> float:
    """g* = -Cov(a, b) / (Var(a) - Var(Delta^A))."""
    a, b = np.asarray(samples_a, float), np.asarray(samples_b, float)
    if a.size != b.size:
        raise ValueError("sample arrays differ in length")
    if a.size < 3:
        raise ValueError("at least 3 sample pairs are needed")
    cov = np.cov(a, b, ddof=1)
    denom = cov[0, 0] - noise_var_a
    if not denom > 0:
        raise NonPositiveDenominator(f"Var(a) - noise = {denom:.4g}")
    return float(-cov[0, 1] / denom)


def inferred_variance(samples_a, samples_b, g: float, ddof: int = 2) -> float:
    """Sample variance of g*a + b normalized by m - ddof.

    ddof = 2 accounts for the gain fitted on the same samples, like the
    residual variance of a straight-line regression.
    """
    a, b = np.asarray(samples_a, float), np.asarray(samples_b, float)
    m = a.size
    if b.size != m:
        raise ValueError("sample arrays differ in length")
    if m < 3:
        raise ValueError("at least 3 sample pairs are needed")
    resid = g * a + b
    return float(np.sum((resid - resid.mean()) ** 2) / (m - ddof))


def subtract_noise(raw_var: float, g: float, noise_var_a: float, noise_var_b: float) -> float:
    """raw - Var(g Delta^A + Delta^B); may come out negative."""
    if noise_var_a < 0 or noise_var_b < 0:
        raise ValueError("noise variances must be >= 0")
    return raw_var - g**2 * noise_var_a - noise_var_b


def _gain_or_zero(a, b, noise_var_a):
    try:
        return optimal_gain(a, b, noise_var_a), False
    except NonPositiveDenominator:
        return 0.0, True


def inferred_quadratures(block: SubsetBlock, gains="auto", noise: bool = True) -> dict:
    """Gains and noise-subtracted inferred variances of g S^A + S^B along z and y."""
    block.require("z", "y")
    na = block.noise_var_a if noise else 0.0
    nb = block.noise_var_b if noise else 0.0
    out = {"gain_fallback": False}
    for ax in ("z", "y"):
        a, b = block.a[ax], block.b[ax]
        if gains == "auto":
            g, fell_back = _gain_or_zero(a, b, na)
            out["gain_fallback"] |= fell_back
        else:
            g = gains.g_z if ax == "z" else gains.g_y
        raw = inferred_variance(a, b, g)
        out[f"g_{ax}"] = g
        out[f"raw_var_{ax}"] = raw
        out[f"var_{ax}"] = subtract_noise(raw, g, na, nb)
    return out


def local_variances(block: SubsetBlock, noise: bool = True) -> dict:
    """Non-inferred, noise-subtracted variances of S^A and S^B (m - 1 normalization)."""
    block.require("z", "y")
    out = {}
    for region, samples, nv in (("a", block.a, block.noise_var_a), ("b", block.b, block.noise_var_b)):
        for ax in ("z", "y"):
            v = float(np.var(samples[ax], ddof=1))
            out[f"var_{region}_{ax}"] = v - (nv if noise else 0.0)
    return out


def entanglement_criterion(block: SubsetBlock, gains="auto", noise: bool = True) -> float:
    """4 Var_inf(z) Var_inf(y) / (|g_z g_y| |<S^A_x>| + |<S^B_x>|)^2 for one subset."""
    block.require("plus_x", "minus_x")
    q = inferred_quadratures(block, gains, noise)
    sx_a = mean_sx(block.a["plus_x"], block.a["minus_x"])
    sx_b = mean_sx(block.b["plus_x"], block.b["minus_x"])
    denom = (abs(q["g_z"] * q["g_y"]) * sx_a + sx_b) ** 2
    if denom == 0:
        raise ZeroDivisionError("entanglement criterion denominator is zero")
    return 4 * q["var_z"] * q["var_y"] / denom


def epr_criterion(block: SubsetBlock, direction: str = "A->B", gains="auto", noise: bool = True):
    """EPR product for one subset; returns (inferred, non-inferred) for the steered region."""
    if direction not in ("A->B", "B->A"):
        raise ValueError("direction must be 'A->B' or 'B->A'")
    blk = block if direction == "A->B" else block.swapped()
    blk.require("plus_x", "minus_x")
    q = inferred_quadratures(blk, gains, noise)
    sx = mean_sx(blk.b["plus_x"], blk.b["minus_x"])
    if sx == 0:
        raise ZeroDivisionError("steered region has zero mean spin")
    loc = local_variances(blk, noise)
    inferred = 4 * q["var_z"] * q["var_y"] / sx**2
    plain = 4 * loc["var_b_z"] * loc["var_b_y"] / sx**2
    return inferred, plain


def aggregate_subsets(values) -> tuple[float, float]:
    """Unweighted mean and its standard error."""
    v = np.asarray(list(values), dtype=float)
    if v.size < 2:
        raise ValueError("at least 2 subsets are needed")
    # exact summation anchored on the minimum: independent of input order,
    # and identical inputs give SEM 0
    lo = float(v.min())
    mean = lo + math.fsum(v - lo) / v.size
    sem = math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1) / v.size)
    return mean, sem


def wineland_parameter(data, n_atoms: float, noise_var: float = 0.0) -> tuple[float, float]:
    """Wineland xi^2 = N Var(S_min) / |<S>|^2 and 10 log10(xi^2).

    ``data`` is either exact :class:`SpinMoments` or a :class:`SubsetBlock`
    of whole-cloud samples (region A), whose z readout is the squeezed quadrature.
    """
    if isinstance(data, SpinMoments):
        pol = data.polarization
        var_min = min_perpendicular_variance(data) if pol > 0 else 0.0
    else:
        pol = mean_sx(data.a["plus_x"], data.a["minus_x"])
        var_min = float(np.var(data.a["z"], ddof=1)) - noise_var
    if pol == 0:
        raise ZeroDivisionError("zero polarization")
    xi2 = n_atoms * var_min / pol**2
    db = 10 * math.log10(xi2) if xi2 > 0 else -math.inf
    return xi2, db


def _floors_one_state(ints: dict) -> tuple[float, float]:
    a, b, aa, bb, ab = ints["a"], ints["b"], ints["aa"], ints["bb"], ints["ab"]
    if a <= 0 or b <= 0:
        raise UndefinedRegionError("empty region in crosstalk evaluation")
    eta_a, eta_b = aa / a, bb / b
    resid = aa * bb - ab**2
    epr = resid**2 / (aa**2 * b**2) / eta_b**2
    # entanglement analogue with the same regression gain, in normalized spins
    g = -(ab / aa) * (eta_a / eta_b)
    var_inf = (bb - ab**2 / aa) / eta_b**2
    ent = var_inf**2 / (g**2 * a / eta_a + b / eta_b) ** 2
    return float(epr), float(ent)


def crosstalk_floors(
    density: CloudDensity, psf: PsfModel, mask_a: RegionMask, mask_b: RegionMask, supersample: int = 4
) -> dict:
    """Coherent-state criteria produced by detection crosstalk alone.

    Keys ``epr_ab``, ``epr_ba`` and ``ent``; each is the smaller of the two
    states' values, i.e. the largest apparent violation.
    """
    out = {"epr_ab": np.inf, "epr_ba": np.inf, "ent": np.inf}
    for st in STATES:
        ints = overlap_integrals(density, psf, {"a": mask_a, "b": mask_b}, st, supersample)
        epr_ab, ent = _floors_one_state(ints)
        flipped = {"a": ints["b"], "b": ints["a"], "aa": ints["bb"], "bb": ints["aa"], "ab": ints["ab"]}
        epr_ba, _ = _floors_one_state(flipped)
        out["epr_ab"] = min(out["epr_ab"], epr_ab)
        out["epr_ba"] = min(out["epr_ba"], epr_ba)
        out["ent"] = min(out["ent"], ent)
    return out


def crosstalk_floor(density: CloudDensity, psf: PsfModel, mask_a: RegionMask, mask_b: RegionMask) -> float:
    """EPR (A -> B) value a coherent state reaches through crosstalk, normalized by eta_B^2."""
    if np.any(mask_a.pixels[1] & mask_b.pixels[1]) and not all(
        np.array_equal(mask_a.pixels[s], mask_b.pixels[s]) for s in STATES
    ):
        raise ValueError("masks must be disjoint")
    return crosstalk_floors(density, psf, mask_a, mask_b)["epr_ab"]


@dataclass
class CriteriaReport:
    """Criteria of one mask configuration; values are (mean, sem) pairs."""

    config: dict
    splitting_ratio: float
    atoms_a: float
    atoms_b: float
    eta_a: float
    eta_b: float
    e_ent: tuple
    e_epr_ab: tuple
    e_epr_ba: tuple
    product_a: tuple
    product_b: tuple
    floor_epr_ab: float
    floor_epr_ba: float
    floor_ent: float
    wineland_db: float = float("nan")
    subsets: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def crosstalk_floor(self) -> float:
        return self.floor_epr_ab

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_subset(block: SubsetBlock, noise: bool = True) -> dict:
    """All per-subset intermediate quantities, for audit records."""
    q = inferred_quadratures(block, "auto", noise)
    q_ba = inferred_quadratures(block.swapped(), "auto", noise)
    loc = local_variances(block, noise)
    rec = {
        "subset": block.subset_id,
        "g_z": q["g_z"],
        "g_y": q["g_y"],
        "g_z_ba": q_ba["g_z"],
        "g_y_ba": q_ba["g_y"],
        "raw_var_z": q["raw_var_z"],
        "raw_var_y": q["raw_var_y"],
        "var_z": q["var_z"],
        "var_y": q["var_y"],
        "var_z_ba": q_ba["var_z"],
        "var_y_ba": q_ba["var_y"],
        **loc,
        "sx_a": mean_sx(block.a["plus_x"], block.a["minus_x"]),
        "sx_b": mean_sx(block.b["plus_x"], block.b["minus_x"]),
        "gain_fallback": q["gain_fallback"] or q_ba["gain_fallback"],
    }
    rec["e_ent"] = entanglement_criterion(block, "auto", noise)
    rec["e_epr_ab"], rec["product_b"] = epr_criterion(block, "A->B", "auto", noise)
    rec["e_epr_ba"], rec["product_a"] = epr_criterion(block, "B->A", "auto", noise)
    rec["negative_variance"] = min(rec["var_z"], rec["var_y"], rec["var_z_ba"], rec["var_y_ba"]) < 0
    return rec
