import numpy as np
import pytest

from owl.bench import (
    BitFlipZeros,
    CoordinateSpike,
    CorruptionPlan,
    LabelFlip,
    ResponseExtreme,
    UniformBox,
    corrupt,
    os_bootstrap,
    params_vector,
    run_corruption_sweep,
)
from owl.core import (
    BernoulliParams,
    Dataset,
    GaussianParams,
    LinearParams,
    LogisticParams,
    MixtureParams,
    ModelSpec,
    GAUSSIAN,
    WeightVector,
)
from owl.models import wmle_gaussian, wmle_linear_regression


def _toy_gaussian(n=30, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(points=rng.normal(0, 1, (n, 2)))


# ------------------------------------------------------------ corrupt


def test_corrupt_zero_fraction_is_identity():
    data = _toy_gaussian()
    plan = CorruptionPlan(fraction=0.0, scheme=UniformBox(), selector="random")
    out, idx = corrupt(data, plan)
    assert idx.size == 0
    np.testing.assert_array_equal(out.points, data.points)


def test_corrupt_row_count_is_ceiling():
    data = _toy_gaussian(n=30)
    for frac, want in ((0.05, 2), (0.1, 3), (0.34, 11)):
        plan = CorruptionPlan(fraction=frac, scheme=UniformBox(), selector="random", seed=4)
        _, idx = corrupt(data, plan)
        assert idx.size == want


def test_corrupt_deterministic_per_seed():
    data = _toy_gaussian()
    plan = CorruptionPlan(fraction=0.2, scheme=UniformBox(-3, 3), selector="random", seed=11)
    out1, idx1 = corrupt(data, plan)
    out2, idx2 = corrupt(data, plan)
    np.testing.assert_array_equal(out1.points, out2.points)
    np.testing.assert_array_equal(idx1, idx2)
    other = CorruptionPlan(fraction=0.2, scheme=UniformBox(-3, 3), selector="random", seed=12)
    out3, _ = corrupt(data, other)
    assert not np.array_equal(out1.points, out3.points)


def test_corrupt_does_not_mutate_input():
    data = _toy_gaussian()
    before = data.points.copy()
    plan = CorruptionPlan(fraction=0.3, scheme=UniformBox(), selector="random", seed=2)
    corrupt(data, plan)
    np.testing.assert_array_equal(data.points, before)


def test_max_likelihood_selector_picks_top_rows():
    rng = np.random.default_rng(5)
    x = rng.normal(0, 1, (40, 2))
    data = Dataset(points=x)
    spec = ModelSpec(GAUSSIAN)
    plan = CorruptionPlan(fraction=0.25, scheme=UniformBox(), selector="max_likelihood", seed=0)
    _, idx = corrupt(data, plan, spec)

    # oracle: rank rows by the clean unweighted fit's log-density
    from owl.core import log_densities

    params = wmle_gaussian(data, np.ones(40) / 40)
    ll = log_densities(spec, params, data)
    want = np.sort(np.argsort(-ll, kind="stable")[:10])
    np.testing.assert_array_equal(idx, want)


def test_max_likelihood_selector_needs_spec():
    data = _toy_gaussian()
    plan = CorruptionPlan(fraction=0.1, scheme=UniformBox(), selector="max_likelihood")
    with pytest.raises(ValueError):
        corrupt(data, plan)


def test_scheme_data_compatibility_errors():
    cont = _toy_gaussian()
    with pytest.raises(ValueError):
        corrupt(cont, CorruptionPlan(0.1, BitFlipZeros(), selector="random"))
    with pytest.raises(ValueError):
        corrupt(cont, CorruptionPlan(0.1, ResponseExtreme(), selector="random"))
    with pytest.raises(ValueError):
        corrupt(cont, CorruptionPlan(0.1, LabelFlip(), selector="random"))


def test_label_flip_flips_selected_only():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(20, 1))
    y = (rng.random(20) < 0.5).astype(float)
    data = Dataset(points=x, response=y)
    plan = CorruptionPlan(0.25, LabelFlip(), selector="random", seed=3)
    out, idx = corrupt(data, plan)
    np.testing.assert_array_equal(out.response[idx], 1.0 - y[idx])
    keep = np.setdiff1d(np.arange(20), idx)
    np.testing.assert_array_equal(out.response[keep], y[keep])
    np.testing.assert_array_equal(out.points, x)


def test_bit_flip_zeros_only_touches_zeros():
    rng = np.random.default_rng(9)
    x = (rng.random((30, 6)) < 0.5).astype(float)
    data = Dataset(points=x)
    plan = CorruptionPlan(0.3, BitFlipZeros(prob=1.0), selector="random", seed=1)
    out, idx = corrupt(data, plan)
    np.testing.assert_array_equal(out.points[idx], np.ones_like(out.points[idx]))
    keep = np.setdiff1d(np.arange(30), idx)
    np.testing.assert_array_equal(out.points[keep], x[keep])


def test_coordinate_spike_hits_half_the_coordinates():
    data = Dataset(points=np.zeros((10, 6)))
    plan = CorruptionPlan(0.5, CoordinateSpike(value=5.0), selector="random", seed=7)
    out, idx = corrupt(data, plan)
    for row in idx:
        hit = np.abs(out.points[row]) == 5.0
        assert hit.sum() == 3


def test_corruption_plan_validation():
    with pytest.raises(ValueError):
        CorruptionPlan(fraction=1.0, scheme=UniformBox())
    with pytest.raises(ValueError):
        CorruptionPlan(fraction=-0.1, scheme=UniformBox())
    with pytest.raises(ValueError):
        CorruptionPlan(fraction=0.1, scheme=UniformBox(), selector="worst")


# ------------------------------------------------------------ sweep


def test_sweep_row_count_and_schema():
    rows = run_corruption_sweep(
        None,
        "gaussian_location",
        [0.0, 0.2],
        methods=("mle", "owl_known"),
        seeds=[0, 1],
        n_override=60,
    )
    assert len(rows) == 2 * 2 * 2
    for r in rows:
        assert set(r) == {"scenario", "fraction", "seed", "method", "epsilon", "metric", "okl"}
        assert r["scenario"] == "gaussian_location"
    # epsilon bookkeeping per method
    assert all(r["epsilon"] == 0.0 for r in rows if r["method"] == "mle")
    assert all(r["epsilon"] == r["fraction"] for r in rows if r["method"] == "owl_known")


def test_sweep_zero_fraction_owl_matches_mle_exactly():
    rows = run_corruption_sweep(
        None,
        "gaussian_location",
        [0.0],
        methods=("mle", "owl_known"),
        seeds=[0, 1],
        n_override=50,
    )
    for seed in (0, 1):
        got = {r["method"]: r["metric"] for r in rows if r["seed"] == seed}
        assert got["mle"] == got["owl_known"]


def test_sweep_owl_beats_mle_under_corruption():
    rows = run_corruption_sweep(
        None,
        "gaussian_location",
        [0.2],
        methods=("mle", "owl_known"),
        seeds=[0, 1],
        n_override=60,
    )
    mle = np.median([r["metric"] for r in rows if r["method"] == "mle"])
    owl = np.median([r["metric"] for r in rows if r["method"] == "owl_known"])
    assert owl < mle


def test_sweep_validation():
    with pytest.raises(ValueError):
        run_corruption_sweep(None, "nope", [0.1], seeds=[0])
    with pytest.raises(ValueError):
        run_corruption_sweep(None, "gaussian_location", [0.1], methods=("craziest",), seeds=[0])
    with pytest.raises(ValueError):
        run_corruption_sweep(
            None, "gaussian_location", [0.1], seeds=[0], selector="worst"
        )


# ------------------------------------------------------------ bootstrap


def _planted_dataset(n=40, n_out=4, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.normal(0, 1, (n, 1))
    pts[:n_out] = 100.0
    w = np.full(n, 1.0)
    w[:n_out] = 0.01
    wv = WeightVector(w=w / w.sum(), epsilon=0.5)
    return Dataset(points=pts), wv


def test_bootstrap_preserves_stratum_sizes():
    data, wv = _planted_dataset()
    seen = []

    def fit(ds):
        c = int(np.sum(ds.points > 50))
        seen.append(c)
        return GaussianParams(mean=np.array([float(c)]), cov=np.eye(1))

    res = os_bootstrap(data, wv, fit, m=25, seed=3)
    assert not res.ordinary_fallback
    # every replicate drew exactly the planted outlier-stratum size
    assert set(seen) == {4}
    assert res.replicates.shape == (25, 2)


def test_bootstrap_single_replicate_has_zero_width():
    data, wv = _planted_dataset()
    fit = lambda ds: GaussianParams(
        mean=np.array([float(ds.points.mean())]), cov=np.eye(1)
    )
    res = os_bootstrap(data, wv, fit, m=1, seed=5)
    np.testing.assert_array_equal(res.lower, res.upper)
    np.testing.assert_array_equal(res.lower, res.replicates[0])


def test_bootstrap_deterministic_per_seed():
    data, wv = _planted_dataset()
    fit = lambda ds: GaussianParams(
        mean=np.array([float(ds.points.mean())]), cov=np.eye(1)
    )
    a = os_bootstrap(data, wv, fit, m=10, seed=9)
    b = os_bootstrap(data, wv, fit, m=10, seed=9)
    np.testing.assert_array_equal(a.replicates, b.replicates)


def test_bootstrap_empty_stratum_falls_back_with_warning():
    rng = np.random.default_rng(1)
    data = Dataset(points=rng.normal(size=(20, 1)))
    wv = WeightVector(w=np.full(20, 1 / 20), epsilon=0.0)  # all inliers
    fit = lambda ds: GaussianParams(
        mean=np.array([float(ds.points.mean())]), cov=np.eye(1)
    )
    with pytest.warns(UserWarning):
        res = os_bootstrap(data, wv, fit, m=5, seed=2)
    assert res.ordinary_fallback


def test_bootstrap_validation():
    data, wv = _planted_dataset()
    fit = lambda ds: GaussianParams(mean=np.zeros(1), cov=np.eye(1))
    with pytest.raises(ValueError):
        os_bootstrap(data, wv, fit, m=0)
    with pytest.raises(ValueError):
        os_bootstrap(data, wv, fit, m=5, level=1.0)
    short = WeightVector(w=np.full(10, 0.1), epsilon=0.1)
    with pytest.raises(ValueError):
        os_bootstrap(data, short, fit, m=5)


def test_bootstrap_bands_cover_clean_coefficient():
    # regression with 1% planted response outliers; the band from weighted
    # stratified resampling should almost always cover the clean-data fit
    covered = 0
    for rep in range(20):
        rng = np.random.default_rng(100 + rep)
        n = 120
        x = rng.normal(0, 1, (n, 1))
        y = 2.0 * x[:, 0] + rng.normal(0, 0.3, n)
        clean_beta = wmle_linear_regression(
            Dataset(points=x, response=y), np.ones(n) / n
        ).beta[0]
        out = rng.choice(n, size=2, replace=False)
        y_corr = y.copy()
        y_corr[out] = 40.0
        data = Dataset(points=x, response=y_corr)
        w = np.full(n, 1.0)
        w[out] = 0.05
        wv = WeightVector(w=w / w.sum(), epsilon=0.5)

        def refit(ds):
            keep = np.abs(ds.response) < 20.0
            ww = np.where(keep, 1.0, 1e-9)
            return wmle_linear_regression(ds, ww / ww.sum())

        res = os_bootstrap(data, wv, refit, m=50, level=0.9, seed=rep)
        j = res.names.index("beta[0]")
        covered += int(res.lower[j] <= clean_beta <= res.upper[j])
    assert covered >= 16  # at least 80% of 20 meta-replications


# ------------------------------------------------------------ params_vector


def test_params_vector_shapes():
    g = GaussianParams(mean=np.zeros(3), cov=np.eye(3))
    names, vals = params_vector(g)
    assert len(names) == len(vals) == 6

    lin = LinearParams(beta=np.arange(4.0), intercept=0.5, sigma=1.0)
    names, vals = params_vector(lin)
    assert names[0] == "intercept" and names[-1] == "sigma"
    assert len(vals) == 6

    logi = LogisticParams(beta=np.arange(2.0), intercept=0.1)
    names, vals = params_vector(logi)
    assert len(vals) == 3

    bern = BernoulliParams(probs=np.full(5, 0.4))
    names, vals = params_vector(bern)
    assert len(vals) == 5

    mix = MixtureParams(
        weights=np.array([0.6, 0.4]),
        components=(
            GaussianParams(mean=np.zeros(2), cov=np.eye(2)),
            GaussianParams(mean=np.ones(2), cov=np.eye(2)),
        ),
    )
    names, vals = params_vector(mix)
    assert len(vals) == 2 * 4 + 2
    assert names[-2:] == ["pi[0]", "pi[1]"]
