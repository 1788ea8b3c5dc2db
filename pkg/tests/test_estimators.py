import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmq.estimators import (
    ControlVariateEstimator,
    PairedSample,
    beta_star_single,
    cv_estimate,
    mcv_estimate,
    plain_mean,
    two_stage_mu,
)
from vmq.exceptions import (
    ConfigurationError,
    DegenerateControlError,
    IllConditionedControlsError,
    InsufficientSampleError,
    ParameterError,
)


def textbook_var(v):
    m = sum(v) / len(v)
    return sum((x - m) ** 2 for x in v) / (len(v) - 1)


def correlated(rng, n, rho):
    x = rng.normal(size=n)
    y = rho * x + np.sqrt(1 - rho ** 2) * rng.normal(size=n)
    return y, x


def test_plain_mean_examples():
    r = plain_mean([1, 1, 1, 1])
    assert (r.estimate, r.sample_variance_of_mean, r.beta, r.r_squared) == (1.0, 0.0, (), 0.0)
    r = plain_mean([0, 2])
    assert r.estimate == 1.0 and r.sample_variance_of_mean == 1.0
    with pytest.raises(InsufficientSampleError):
        plain_mean([3.0])
    with pytest.raises(ValueError):
        plain_mean([1.0, float("nan")])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
def test_plain_mean_matches_two_pass(v):
    r = plain_mean(v)
    assert r.estimate == pytest.approx(sum(v) / len(v), abs=1e-9)
    assert r.sample_variance_of_mean == pytest.approx(textbook_var(v) / len(v), rel=1e-9, abs=1e-9)


def test_beta_star_examples():
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    assert beta_star_single(x, x) == pytest.approx(1.0)
    assert beta_star_single(x, 3 * x + 7) == pytest.approx(3.0)
    assert abs(beta_star_single(rng.normal(size=10_000), rng.normal(size=10_000))) < 0.1
    with pytest.raises(DegenerateControlError):
        beta_star_single(np.ones(10), x[:10])


def test_cv_examples():
    rng = np.random.default_rng(1)
    y, x = correlated(rng, 200, 0.6)
    zero = cv_estimate(y, x, 0.0, beta=0.0)
    plain = plain_mean(y)
    assert zero.estimate == pytest.approx(plain.estimate)
    assert zero.sample_variance_of_mean == pytest.approx(plain.sample_variance_of_mean)
    perfect = cv_estimate(x, x, 0.25)
    assert perfect.estimate == pytest.approx(0.25) and perfect.sample_variance_of_mean == pytest.approx(0, abs=1e-15)
    assert perfect.variance_reduction_factor > 1e10
    const = cv_estimate(np.ones(20), x[:20], 0.0)
    assert const.sample_variance_of_mean == 0.0 and const.variance_reduction_factor == 1.0
    with pytest.raises(DegenerateControlError):
        cv_estimate(y, np.ones_like(y), 1.0)


def test_cv_formula_against_hand_recomputation():
    rng = np.random.default_rng(2)
    y, x = correlated(rng, 100, 0.5)
    n = len(y)
    sxx, syy = textbook_var(x), textbook_var(y)
    syx = sum((a - x.mean()) * (b - y.mean()) for a, b in zip(x, y)) / (n - 1)
    b = syx / sxx
    r = cv_estimate(y, x, 0.1)
    assert r.beta[0] == pytest.approx(b)
    assert r.estimate == pytest.approx(y.mean() - b * (x.mean() - 0.1))
    assert r.sample_variance_of_mean == pytest.approx((syy + b * b * sxx - 2 * b * syx) / n)
    assert r.r_squared == pytest.approx(syx ** 2 / (sxx * syy))
    assert r.variance_reduction_factor == pytest.approx(1 / (1 - r.r_squared))


def test_mcv_examples():
    rng = np.random.default_rng(3)
    y, x = correlated(rng, 100, 0.6)
    with pytest.raises(IllConditionedControlsError):
        mcv_estimate(y, np.column_stack([x, x]), [0.0, 0.0])
    with pytest.raises(InsufficientSampleError):
        mcv_estimate(y[:4], rng.normal(size=(4, 3)), np.zeros(3))
    with pytest.raises(ParameterError):
        mcv_estimate(y, np.column_stack([x, x]), [0.0])


def test_mcv_d1_equals_cv():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(5, 300))
        y, x = correlated(rng, n, rng.uniform(-0.95, 0.95))
        mu = rng.normal()
        a, b = cv_estimate(y, x, mu), mcv_estimate(y, x[:, None], [mu])
        for f in ("estimate", "sample_variance_of_mean", "r_squared", "variance_reduction_factor"):
            assert getattr(b, f) == pytest.approx(getattr(a, f), rel=1e-12, abs=1e-300)
        assert b.beta[0] == pytest.approx(a.beta[0], rel=1e-12)


def test_mcv_matches_least_squares():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(300, 3))
    y = z @ [0.5, -1.0, 2.0] + rng.normal(size=300)
    r = mcv_estimate(y, z, np.zeros(3))
    design = np.column_stack([np.ones(300), z])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    assert np.allclose(r.beta, coef[1:])
    resid = y - design @ coef
    assert r.r_squared == pytest.approx(1 - resid @ resid / ((y - y.mean()) @ (y - y.mean())))
    # with mu = 0 the estimate is the regression intercept
    assert r.estimate == pytest.approx(coef[0])


def test_split_sample_uses_first_half_beta():
    rng = np.random.default_rng(6)
    y, x = correlated(rng, 101, 0.7)
    r = cv_estimate(y, x, 0.0, split=True)
    b = beta_star_single(x[:50], y[:50])
    assert r.beta[0] == pytest.approx(b) and r.n == 51
    assert r.estimate == pytest.approx(y[50:].mean() - b * x[50:].mean())
    m = mcv_estimate(y, np.column_stack([x, rng.normal(size=101)]), [0, 0], split=True)
    assert m.n == 51
    with pytest.raises(InsufficientSampleError):
        cv_estimate(y[:3], x[:3], 0.0, split=True)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 10), st.floats(-5, 5))
def test_scale_and_shift_equivariance(seed, k, c):
    rng = np.random.default_rng(seed)
    y, x = correlated(rng, 40, 0.5)
    base = cv_estimate(y, x, 0.2)
    scaled = cv_estimate(k * y, x, 0.2)
    assert scaled.estimate == pytest.approx(k * base.estimate, rel=1e-9, abs=1e-9)
    assert scaled.sample_variance_of_mean == pytest.approx(k * k * base.sample_variance_of_mean, rel=1e-9)
    shifted = cv_estimate(y, x + c, 0.2 + c)
    assert shifted.estimate == pytest.approx(base.estimate, rel=1e-9, abs=1e-9)


def test_variance_ordering_when_correlated():
    rng = np.random.default_rng(7)
    plain, cv = [], []
    for _ in range(1000):
        y, x = correlated(rng, 100, 0.3)
        plain.append(y.mean())
        cv.append(cv_estimate(y, x, 0.0).estimate)
    assert np.var(cv) <= np.var(plain)


def test_two_stage_mu():
    frames = list(range(5000))
    rng = np.random.default_rng(8)
    values = (rng.random(5000) < 0.3).astype(float)
    mu, wide = two_stage_mu(lambda f: values[f], frames, 1.0)
    assert mu[0] == pytest.approx(values.mean()) and len(wide) == 5000
    mu, _ = two_stage_mu(lambda f: 4.0, frames, 0.1)
    assert mu[0] == 4.0
    y_idx = np.arange(0, 5000, 25)
    mu, wide = two_stage_mu(lambda f: values[f], frames, 0.5, y_idx, seed=3)
    assert len(wide) == 2500 and set(y_idx) <= set(wide)
    assert abs(mu[0] - 0.3) <= 3 * np.sqrt(0.3 * 0.7 / 2500)
    _, wide = two_stage_mu(lambda f: values[f], frames, 0.5, y_idx, mode="disjoint", seed=3)
    assert not set(y_idx) & set(wide)
    with pytest.raises(ConfigurationError):
        two_stage_mu(lambda f: 0.0, frames, 0.01, np.arange(100))
    with pytest.raises(ConfigurationError):
        two_stage_mu(lambda f: 0.0, frames, 0.0)


def test_paired_sample_validation():
    with pytest.raises(ValueError):
        PairedSample(np.ones(3), np.ones((4, 1)), [0.0])
    ps = PairedSample([1.0, 2.0, 3.0], [1.0, 2.0, 4.0], 0.0)
    assert (ps.n, ps.d) == (3, 1)


def test_estimator_api():
    rng = np.random.default_rng(9)
    y, x = correlated(rng, 200, 0.8)
    est = ControlVariateEstimator(control_means=[0.0]).fit(x[:, None], y)
    assert est.estimate_ == pytest.approx(cv_estimate(y, x, 0.0).estimate)
    lo, hi = est.interval(0.95)
    assert lo < est.estimate_ < hi
    assert ControlVariateEstimator().fit(None, y).estimate_ == pytest.approx(y.mean())
    z = np.column_stack([x, rng.normal(size=200)])
    assert ControlVariateEstimator(control_means=[0, 0]).fit(z, y).coef_.shape == (2,)
    with pytest.raises(ConfigurationError):
        ControlVariateEstimator().fit(z, y)
    assert ControlVariateEstimator(beta=0.5).get_params()["beta"] == 0.5
