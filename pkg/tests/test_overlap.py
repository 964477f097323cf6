import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as si

from kdeoverlap.exceptions import DegenerateDensityError, ValidationError
from kdeoverlap.kde import PAPER_SIM, bandwidth, kde_grid
from kdeoverlap.kernels import EPANECHNIKOV
from kdeoverlap.montecarlo import TruncatedDensity, reference_table, scenario
from kdeoverlap.overlap import (
    ML_MODES,
    AnalysisConfig,
    OverlapReport,
    confidence_interval,
    estimate_overlap,
    implied_z,
    macarthur_levins,
    ml_variance,
    ml_variance_delta,
    pianka,
    pianka_variance,
    pianka_variance_delta,
    z_quantile,
)
from kdeoverlap.quadrature import REQUIRED_PAIRS, TABLE_PAIRS, MomentTable, SupportInterval, build_moment_table, table_from_grids

SUP = SupportInterval(-1, 1)

# values from scipy quad on scipy.stats.truncnorm, see test_quadrature
CASE_I_RHO = 0.8071985296217709
CASE_I_DELTA = 0.8131213835798428
CASE_I_SIGMA2 = 0.07281782069634582
CASE_I_ML = {"rederived": 0.9584111388459875, "as_printed": 69825.10554139942}


def random_table(rng) -> MomentTable:
    return MomentTable.from_values({p: rng.uniform(0.05, 2.0) for p in TABLE_PAIRS}, SUP)


@pytest.fixture(scope="module")
def case_i():
    f, g = scenario("case_I")
    return reference_table(f, g)


def test_identity_and_disjoint():
    x = SUP.grid(1001)
    f = 0.75 * (1 - x**2)
    t = table_from_grids(f, f, SUP)
    assert pianka(t) == pytest.approx(1.0, abs=1e-10)
    assert macarthur_levins(t) == pytest.approx(1.0, abs=1e-10)
    left = np.where(x < -0.5, 1.0, 0.0)
    right = np.where(x > 0.5, 1.0, 0.0)
    assert pianka(table_from_grids(left, right, SUP)) == 0.0


def test_case_i_golden(case_i):
    assert pianka(case_i) == pytest.approx(CASE_I_RHO, rel=1e-10)
    assert macarthur_levins(case_i) == pytest.approx(CASE_I_DELTA, rel=1e-10)
    assert pianka_variance(case_i, 0.6) == pytest.approx(CASE_I_SIGMA2, rel=1e-9)
    for mode, v in CASE_I_ML.items():
        assert ml_variance(case_i, 0.6, mode) == pytest.approx(v, rel=1e-9)
    assert CASE_I_ML["rederived"] != pytest.approx(CASE_I_ML["as_printed"], rel=0.25)


def test_delta_can_exceed_one():
    sup = SupportInterval(-3, 3)
    f = TruncatedDensity("normal", 0, 1, sup)
    g = TruncatedDensity("normal", 0, 0.5, sup)
    t = build_moment_table(f, g, sup, m=4001)
    fg = si.quad(lambda x: f.pdf(x) * g.pdf(x), -3, 3, epsabs=1e-13)[0]
    ff = si.quad(lambda x: f.pdf(x) ** 2, -3, 3, epsabs=1e-13)[0]
    assert macarthur_levins(t) == pytest.approx(fg / ff, rel=1e-8)
    assert macarthur_levins(t) > 1


def test_variance_by_hand_when_symmetric():
    # f = g: every I(r, s) equals the power integral of order r + s
    p2, p3 = 0.4, 0.09
    vals = {(1, 1): p2, (2, 0): p2, (0, 2): p2, (3, 0): p3, (0, 3): p3, (2, 1): p3, (1, 2): p3,
            (2.5, 0.5): p3, (0.5, 2.5): p3}
    t = MomentTable.from_values(vals, SUP)
    A = p3 * p2**2 * p2**2
    B = p3 * p2 * p2**2 * p2
    C = p2**2 * (p2**2 * p3 + p2**2 * p3 + p2**2 * p3)
    D = p2 * p2 * p2**2 * p3
    E = p2**6
    assert pianka_variance(t, 0.6) == pytest.approx(0.6 * (A - 2 * B + C - 2 * D) / E, rel=1e-14)
    assert pianka_variance(t, 0.6) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_dual_paths(seed):
    t = random_table(np.random.default_rng(seed))
    a, b = pianka_variance(t, 0.6), pianka_variance_delta(t, 0.6)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))
    for mode in ML_MODES:
        for o in ("f", "g"):
            a, b = ml_variance(t, 0.6, mode, o), ml_variance_delta(t, 0.6, mode, o)
            assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_measure_identities(seed):
    t = random_table(np.random.default_rng(seed))
    s = t.swap()
    assert pianka(t) == pianka(s)
    assert macarthur_levins(t) * macarthur_levins(s) == pytest.approx(pianka(t) ** 2, rel=1e-10)
    # Delta in orientation g is Delta of the swapped table
    assert ml_variance(t, 1.0, "rederived", "g") == ml_variance(s, 1.0, "rederived", "f")


def test_ml_modes_agree_at_unit_norm():
    t = random_table(np.random.default_rng(5))
    vals = {p: t[p] for p in TABLE_PAIRS}
    vals[(0, 2)] = 1.0
    u = MomentTable.from_values(vals, SUP)
    assert ml_variance(u, 0.6, "as_printed", "g") == pytest.approx(ml_variance(u, 0.6, "rederived", "g"), rel=1e-14)


def test_degenerate_tables():
    zero = MomentTable.from_values({p: 0.0 for p in TABLE_PAIRS}, SUP)
    for fn in (pianka, macarthur_levins):
        with pytest.raises(DegenerateDensityError):
            fn(zero)
    with pytest.raises(DegenerateDensityError):
        pianka_variance(zero, 0.6)
    with pytest.raises(ValidationError):
        ml_variance(random_table(np.random.default_rng(1)), 0.6, "bogus")


def test_z_quantile_accuracy():
    mp.mp.dps = 30
    for level in (0.5, 0.8, 0.9, 0.95, 0.99, 0.999):
        exact = float(mp.sqrt(2) * mp.erfinv(mp.mpf(level)))
        assert abs(z_quantile(level) - exact) < 1e-8
    assert z_quantile(0.95) == pytest.approx(1.959964, abs=1e-5)
    for bad in (0, 1, 1.2):
        with pytest.raises(ValidationError):
            z_quantile(bad)


def test_confidence_interval_examples():
    ci = confidence_interval(0.5, 0.0, 100, 0.1)
    assert (ci.lo, ci.hi) == (0.5, 0.5)
    with pytest.raises(ValidationError):
        confidence_interval(0.5, -0.1, 100, 0.1)
    # reproduce a reference interval from its point and standard error
    se = 0.0117
    z90, z95 = z_quantile(0.90), z_quantile(0.95)
    assert (0.3396 - z90 * se, 0.3396 + z90 * se) == pytest.approx((0.3204, 0.3588), abs=1e-4)
    assert (0.3396 - z95 * se, 0.3396 + z95 * se) == pytest.approx((0.3167, 0.3625), abs=1e-4)
    assert implied_z(0.3203, 0.3588, se) == pytest.approx(1.645, abs=5e-3)


def test_ci_width_scales_with_nh():
    a = confidence_interval(0.3, 0.2, 100, 0.1)
    b = confidence_interval(0.3, 0.2, 400, 0.1)
    assert (a.hi - a.lo) == pytest.approx(2 * (b.hi - b.lo))


def _draws(seed, n=300):
    rng = np.random.default_rng(seed)
    return rng.normal(0, 1, n), rng.normal(1, 1.5, n)


def test_estimate_identical_samples():
    x, _ = _draws(0)
    r = estimate_overlap(x, x)
    assert r.rho == pytest.approx(1.0, abs=1e-10)
    assert r.delta == pytest.approx(1.0, abs=1e-10)
    assert r.to_dict()["schema"] == 1


def test_estimate_report_round_trip():
    x, y = _draws(1)
    r = estimate_overlap(x, y, AnalysisConfig(bandwidth="power:0.5", level=0.9))
    d = r.to_dict()
    back = OverlapReport.from_dict(json.loads(json.dumps(d)))
    assert back.to_dict() == d
    m = d["measures"]["pianka"]
    assert m["ci"]["z"] == pytest.approx(z_quantile(0.9))
    assert m["se"] == pytest.approx(math.sqrt(m["variance"] / (r.n["x"] * r.h)))
    assert set(d["measures"]) == {"pianka", "macarthur_levins", "macarthur_levins_yx"}
    ml = d["measures"]["macarthur_levins"]
    assert ml["variance"] == ml["variance_rederived"]
    assert d["measures"]["macarthur_levins"]["point"] * d["measures"]["macarthur_levins_yx"]["point"] == pytest.approx(
        r.rho**2, rel=1e-12
    )


def test_schema_checked():
    x, y = _draws(2)
    d = estimate_overlap(x, y).to_dict()
    d["schema"] = 2
    with pytest.raises(ValidationError):
        OverlapReport.from_dict(d)


def test_warnings():
    x, y = _draws(3)
    r = estimate_overlap(x, y[:200])
    assert any("outside paper assumptions" in w for w in r.warnings)
    assert r.h == bandwidth(AnalysisConfig().rule, 200)
    r = estimate_overlap(x[:8], y[:8])
    assert any("small sample" in w for w in r.warnings)
    r = estimate_overlap(x, y, AnalysisConfig(support="-1,1"))
    assert any("outside the support" in w for w in r.warnings)
    r = estimate_overlap(x, y, AnalysisConfig(bandwidth="fixed:0.001", grid=101))
    assert any("coarse" in w for w in r.warnings)


def test_non_finite_fields_nullified():
    x, y = _draws(4)
    r = estimate_overlap(x, y)
    r.measures["pianka"]["variance"] = float("nan")
    d = r.to_dict()
    assert d["measures"]["pianka"]["variance"] is None
    assert any("measures.pianka.variance" in w for w in d["warnings"])
    json.dumps(d, allow_nan=False)


def test_negative_variance_flagged():
    from kdeoverlap import overlap as ov

    x, y = _draws(5)
    orig = ov.pianka_variance
    try:
        ov.pianka_variance = lambda t, k02: -0.5
        r = estimate_overlap(x, y)
    finally:
        ov.pianka_variance = orig
    m = r.measures["pianka"]
    assert m["variance"] == -0.5 and m["se"] is None and m["ci"] is None
    assert any("negative" in w for w in r.warnings)


def test_quantile_support_policy():
    x, y = _draws(6)
    r = estimate_overlap(x, y, AnalysisConfig(support="quantile:0.995"))
    a = float(np.quantile(x, 0.995))
    assert (r.support["lo"], r.support["hi"]) == (-a, a)
    for bad in ("quantile:0.2", "quantile:x", "1,0", "wide"):
        with pytest.raises(ValidationError):
            estimate_overlap(x, y, AnalysisConfig(support=bad))


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5).filter(lambda c: abs(c) > 0.1), st.floats(-50, 50), st.integers(0, 1000))
def test_affine_invariance(c, d, seed):
    x, y = _draws(seed, 80)
    h = 0.4
    lo, hi = -5.0, 7.0
    base = estimate_overlap(x, y, AnalysisConfig(bandwidth=f"fixed:{h}", support=f"{lo},{hi}", grid=801))
    ends = sorted((c * lo + d, c * hi + d))
    moved = estimate_overlap(
        c * x + d, c * y + d,
        AnalysisConfig(bandwidth=f"fixed:{abs(c) * h}", support=f"{ends[0]!r},{ends[1]!r}", grid=801),
    )
    assert moved.rho == pytest.approx(base.rho, abs=1e-6)
    assert moved.delta == pytest.approx(base.delta, abs=1e-6)


def test_pipeline_matches_simulation_engine():
    f, g = scenario("case_I")
    rng = np.random.default_rng(9)
    x, y = f.sample(500, rng), g.sample(500, rng)
    h = bandwidth(PAPER_SIM, 500)
    sup = f.support
    r = estimate_overlap(x, y, AnalysisConfig(bandwidth="paper_sim", support=f"{sup.lo!r},{sup.hi!r}"))
    t = table_from_grids(kde_grid(x, EPANECHNIKOV, h, sup).values, kde_grid(y, EPANECHNIKOV, h, sup).values, sup)
    assert r.rho == pianka(t)
    assert r.measures["pianka"]["variance"] == pianka_variance(t, 0.6)


def test_required_pairs_in_report():
    x, y = _draws(7)
    keys = set(estimate_overlap(x, y).moments)
    assert len(keys) == len(TABLE_PAIRS) and len(REQUIRED_PAIRS) == 9
