import numpy as np
import pytest

from owl.admm import AdmmConfig
from owl.core import (
    BERNOULLI_MIXTURE,
    GAUSSIAN,
    GAUSSIAN_MIXTURE,
    LINEAR_REGRESSION,
    BernoulliParams,
    Dataset,
    MixtureParams,
    ModelSpec,
    log_densities,
)
from owl.engine import (
    FitTrace,
    OwlConfig,
    component_param_count,
    kernel_bandwidth_grid,
    okl_estimate,
    owl_fit,
    owl_fit_conditional,
    owl_selection_criterion,
    select_by_curvature,
    tune_epsilon,
)
from owl.models import wmle_gaussian

from oracles import knn_average_bruteforce

# tight enough for 1e-6-scale value comparisons, cheap enough for many fits
FAST = AdmmConfig(primal_tol=1e-6, dual_tol=1e-6, max_iters=800)


def _cfg(**kw):
    kw.setdefault("restarts", 2)
    kw.setdefault("seed", 0)
    kw.setdefault("admm", FAST)
    return OwlConfig(**kw)


# ------------------------------------------------------------ okl_estimate


def test_okl_estimate_zero_radius_is_discrete_kl():
    pts = np.array([[0.0], [0.0], [1.0], [2.0], [2.0], [2.0]])
    data = Dataset(points=pts)
    spec = ModelSpec(family=GAUSSIAN)
    params = wmle_gaussian(data, np.ones(6) / 6)
    got = okl_estimate(spec, params, data, 0.0).value

    # oracle: KL(phat | p_theta) summed over unique support points
    logp = log_densities(spec, params, data)
    uniq, counts = np.unique(pts, axis=0, return_counts=True)
    want = 0.0
    for u, c in zip(uniq, counts):
        i = int(np.where((pts == u).all(axis=1))[0][0])
        want += (c / 6) * (np.log(c / 6) - logp[i])
    assert got == pytest.approx(want, abs=1e-9)


def test_okl_estimate_vanishes_past_two_point_tv():
    # empirical (.5, .5) vs model (.7, .3): TV = 0.2
    x = np.array([[1.0]] * 5 + [[0.0]] * 5)
    data = Dataset(points=x)
    spec = ModelSpec(family=BERNOULLI_MIXTURE, k=1)
    params = MixtureParams(
        weights=np.array([1.0]),
        components=(BernoulliParams(probs=np.array([0.3])),),
        assignments=np.zeros(10, dtype=int),
    )
    for eps in (0.2, 0.25, 0.5):
        res = okl_estimate(spec, params, data, eps, _cfg())
        assert res.value == pytest.approx(0.0, abs=1e-6)


def test_okl_estimate_monotone_in_radius():
    pts = np.array([[0.0], [0.0], [1.0], [2.0], [2.0], [2.0]])
    data = Dataset(points=pts)
    spec = ModelSpec(family=GAUSSIAN)
    params = wmle_gaussian(data, np.ones(6) / 6)
    vals = [
        okl_estimate(spec, params, data, e, _cfg()).value
        for e in (0.0, 0.05, 0.1, 0.2, 0.4)
    ]
    assert all(b <= a + 1e-6 for a, b in zip(vals, vals[1:]))


# ------------------------------------------------------------ owl_fit


def test_owl_fit_zero_radius_returns_mle():
    rng = np.random.default_rng(2)
    x = rng.normal(1.5, 2.0, size=(30, 2))
    data = Dataset(points=x)
    fr = owl_fit(ModelSpec(family=GAUSSIAN), data, 0.0, _cfg())
    mle = wmle_gaussian(data, np.ones(30) / 30)
    np.testing.assert_allclose(fr.params.mean, mle.mean, atol=1e-8)
    np.testing.assert_allclose(fr.params.cov, mle.cov, atol=1e-8)
    np.testing.assert_allclose(fr.weights.w, np.full(30, 1 / 30), atol=1e-9)
    assert fr.trace.is_descending()


def test_owl_fit_downweights_planted_outliers():
    rng = np.random.default_rng(7)
    clean = rng.normal(0.0, 1.0, size=18)
    data = Dataset(points=np.concatenate([clean, [50.0, 50.0]])[:, None])
    fr = owl_fit(ModelSpec(family=GAUSSIAN), data, 0.1, _cfg())
    n = data.n
    # both outliers carry less than a fifth of a uniform share
    assert np.all(fr.weights.w[18:] < 1.0 / (5 * n))
    assert abs(fr.params.mean[0] - clean.mean()) < 0.5
    assert fr.trace.is_descending()
    assert fr.trace.reason in ("converged", "stalled", "max_iters")
    fr.weights.validate()


def test_owl_fit_rejects_negative_radius():
    data = Dataset(points=np.zeros((3, 1)))
    with pytest.raises(ValueError):
        owl_fit(ModelSpec(family=GAUSSIAN), data, -0.1, _cfg())


def test_owl_fit_conditional_response_outlier():
    rng = np.random.default_rng(11)
    n = 25
    xs = rng.uniform(-2, 2, size=n)
    y = 2.0 * xs
    y[0] = 3.0 * np.max(np.abs(y))
    data = Dataset(points=xs[:, None], response=y)
    fr = owl_fit(ModelSpec(family=LINEAR_REGRESSION), data, 1.0 / n, _cfg())
    assert fr.weights.w[0] < 1.0 / (5 * n)
    # clean OLS on the noiseless line is exactly beta = 2
    assert fr.params.beta[0] == pytest.approx(2.0, abs=1e-2)
    assert fr.trace.is_descending()


def test_owl_fit_conditional_zero_radius_is_plain_fit():
    rng = np.random.default_rng(14)
    xs = rng.normal(size=20)
    y = 1.0 - 3.0 * xs + rng.normal(0, 0.2, 20)
    data = Dataset(points=xs[:, None], response=y)
    fr = owl_fit(ModelSpec(family=LINEAR_REGRESSION), data, 0.0, _cfg())
    from owl.models import wmle_linear_regression

    direct = wmle_linear_regression(data, np.ones(20) / 20)
    assert fr.params.beta[0] == pytest.approx(direct.beta[0], abs=1e-8)
    assert fr.params.intercept == pytest.approx(direct.intercept, abs=1e-8)


def test_conditional_rejects_smoothing_kernel():
    data = Dataset(points=np.zeros((4, 1)), response=np.zeros(4))
    with pytest.raises(ValueError):
        owl_fit_conditional(
            ModelSpec(family=LINEAR_REGRESSION),
            data,
            0.05,
            OwlConfig(kernel="gaussian", bandwidth=1.0),
        )


# ------------------------------------------------------------ configuration


def test_owl_config_validation():
    with pytest.raises(ValueError):
        OwlConfig(restarts=0)
    with pytest.raises(ValueError):
        OwlConfig(max_owl_iters=0)
    with pytest.raises(ValueError):
        OwlConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        OwlConfig(kernel="triangle")
    with pytest.raises(ValueError):
        OwlConfig(kernel="gaussian")  # needs a bandwidth


def test_fit_trace_descent_flag():
    down = FitTrace(okl=np.array([3.0, 2.0, 2.0 - 1e-9]), epsilon=0.1, reason="converged")
    assert down.is_descending()
    up = FitTrace(okl=np.array([3.0, 2.0, 2.1]), epsilon=0.1, reason="stalled")
    assert not up.is_descending()


# ------------------------------------------------------------ curvature selection


def test_select_by_curvature_linear_curve_has_no_kink():
    grid = np.arange(0.0, 0.2501, 0.025)
    smoothed, kappa, idx, no_kink = select_by_curvature(grid, 1.0 - 0.3 * grid)
    assert no_kink
    assert idx == 1
    assert np.isnan(kappa[0]) and np.isnan(kappa[-1])
    assert np.nanmax(np.abs(kappa[1:-1])) <= 1e-10


def test_select_by_curvature_finds_hinge():
    grid = np.arange(0.0, 0.2501, 0.025)
    g = np.maximum(0.0, 0.2 - 2.0 * grid)
    _, _, idx, no_kink = select_by_curvature(grid, g)
    assert not no_kink
    # window-3 smoothing spreads the hinge across three grid points with
    # equal second differences; the slope term in kappa favours the flat
    # side, so the pick lands within one grid step of the true kink
    assert abs(grid[idx] - 0.1) <= 0.025 + 1e-12


# ------------------------------------------------------------ tune_epsilon


def test_tune_epsilon_grid_validation():
    data = Dataset(points=np.zeros((4, 1)))
    spec = ModelSpec(family=GAUSSIAN)
    with pytest.raises(ValueError):
        tune_epsilon(spec, data, [0.1, 0.2, 0.3], _cfg())
    with pytest.raises(ValueError):
        tune_epsilon(spec, data, [0.1, 0.2, 0.2, 0.3, 0.4], _cfg())
    with pytest.raises(ValueError):
        tune_epsilon(spec, data, [0.1, 0.2, 0.3, 0.4, 1.5], _cfg())


def test_tune_epsilon_curve_is_monotone_and_aligned():
    rng = np.random.default_rng(17)
    x = np.concatenate([rng.normal(0, 1, 45), rng.uniform(5, 8, 5)])[:, None]
    data = Dataset(points=x)
    grid = [0.02, 0.05, 0.08, 0.11, 0.14, 0.17, 0.2]
    res = tune_epsilon(ModelSpec(family=GAUSSIAN), data, grid, _cfg())
    assert np.all(np.diff(res.grid) > 0)
    assert np.all(np.diff(res.g_hat) <= 1e-4)
    assert len(res.fits) == len(res.grid) == len(res.g_hat)
    assert res.chosen == res.grid[res.chosen_index]
    assert res.dropped == []
    # the winning radius must carry a real fit
    assert res.fits[res.chosen_index].value == res.g_hat[res.chosen_index]


# ------------------------------------------------------------ model selection


def test_component_param_count_formulas():
    assert component_param_count(ModelSpec(family=BERNOULLI_MIXTURE, k=2), 7) == 7
    assert (
        component_param_count(
            ModelSpec(family=GAUSSIAN_MIXTURE, k=2, cov_type="spherical"), 4
        )
        == 5
    )
    assert (
        component_param_count(
            ModelSpec(family=GAUSSIAN_MIXTURE, k=2, cov_type="diagonal"), 4
        )
        == 8
    )
    assert (
        component_param_count(
            ModelSpec(family=GAUSSIAN_MIXTURE, k=2, cov_type="full"), 4
        )
        == 4 + 10
    )
    with pytest.raises(ValueError):
        component_param_count(ModelSpec(family=LINEAR_REGRESSION), 3)


def test_selection_prefers_single_cluster():
    rng = np.random.default_rng(5)
    x = rng.normal([1.0, -2.0], 0.8, size=(200, 2))
    data = Dataset(points=x)
    sel = owl_selection_criterion(
        ModelSpec(family=GAUSSIAN_MIXTURE, k=1),
        data,
        [1, 2, 3],
        0.05,
        penalty="bic",
        cfg=_cfg(),
    )
    assert sel.chosen_k == 1
    assert sel.criterion[0] == min(sel.criterion)


def test_selection_penalty_offsets_match_formulas():
    rng = np.random.default_rng(5)
    x = rng.normal([1.0, -2.0], 0.8, size=(200, 2))
    data = Dataset(points=x)
    spec = ModelSpec(family=GAUSSIAN_MIXTURE, k=1)
    aic = owl_selection_criterion(spec, data, [1, 2], 0.05, penalty="aic", cfg=_cfg())
    bic = owl_selection_criterion(spec, data, [1, 2], 0.05, penalty="bic", cfg=_cfg())
    p = 2 + 3  # full covariance in 2-D: d + d(d+1)/2
    for i, k in enumerate([1, 2]):
        # identical fits (same seed), so the criteria differ only through kappa
        want = 2 * k * (p + 1) - k * (p + 1) * np.log(200)
        assert aic.criterion[i] - bic.criterion[i] == pytest.approx(want, abs=1e-8)


def test_selection_validation():
    data = Dataset(points=np.zeros((4, 1)))
    with pytest.raises(ValueError):
        owl_selection_criterion(
            ModelSpec(family=GAUSSIAN), data, [1, 2], 0.05, cfg=_cfg()
        )
    with pytest.raises(ValueError):
        owl_selection_criterion(
            ModelSpec(family=GAUSSIAN_MIXTURE, k=1), data, [], 0.05, cfg=_cfg()
        )
    with pytest.raises(ValueError):
        owl_selection_criterion(
            ModelSpec(family=GAUSSIAN_MIXTURE, k=1),
            data,
            [1, 2],
            0.05,
            penalty="hqic",
            cfg=_cfg(),
        )


# ------------------------------------------------------------ bandwidth grid


def test_bandwidth_unit_spacing():
    data = Dataset(points=np.arange(4.0)[:, None])
    out = kernel_bandwidth_grid(data, ks=[1])
    assert out[1] == pytest.approx(1.0, abs=1e-12)


def test_bandwidth_clips_large_k_with_warning():
    data = Dataset(points=np.arange(4.0)[:, None])
    with pytest.warns(UserWarning):
        out = kernel_bandwidth_grid(data, ks=[9])
    assert out[9] == pytest.approx(kernel_bandwidth_grid(data, ks=[3])[3], abs=0)


def test_bandwidth_matches_bruteforce_oracle():
    rng = np.random.default_rng(23)
    pts = rng.normal(size=(40, 2))
    data = Dataset(points=pts)
    out = kernel_bandwidth_grid(data, ks=[5, 10, 25])
    for k in (5, 10, 25):
        assert out[k] == pytest.approx(knn_average_bruteforce(pts, k), abs=1e-12)


def test_bandwidth_rejects_bad_k():
    data = Dataset(points=np.arange(4.0)[:, None])
    with pytest.raises(ValueError):
        kernel_bandwidth_grid(data, ks=[0])


# ------------------------------------------------------------ Pinsker bound


def test_pinsker_bound_on_finite_support():
    # correlated bits: a product model cannot reach the empirical law,
    # so the optimistic KL stays positive and the bound is informative
    rows = [(0, 0)] * 18 + [(1, 1)] * 18 + [(0, 1)] * 2 + [(1, 0)] * 2
    x = np.array(rows, dtype=float)
    data = Dataset(points=x)
    spec = ModelSpec(family=BERNOULLI_MIXTURE, k=1)
    cells = [(0, 0), (0, 1), (1, 0), (1, 1)]
    phat = np.array([np.mean((x[:, 0] == a) & (x[:, 1] == b)) for a, b in cells])
    for eps in (0.0, 0.1):
        fr = owl_fit(spec, data, eps, _cfg())
        lam = fr.params.probs
        pmod = np.array(
            [
                (lam[0] ** a * (1 - lam[0]) ** (1 - a))
                * (lam[1] ** b * (1 - lam[1]) ** (1 - b))
                for a, b in cells
            ]
        )
        tv = 0.5 * np.sum(np.abs(phat - pmod))
        assert tv <= np.sqrt(max(fr.value, 0.0) / 2.0) + eps + 1e-3
