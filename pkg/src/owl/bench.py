"""Corruption benchmarks and the outlier-stratified bootstrap.

Provides reproducible data corruption (selection rule + replacement
scheme), a registry of synthetic scenarios with ground-truth metrics, a
sweep driver producing tidy rows, and a bootstrap that resamples within
the inlier/outlier strata implied by fitted weights.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import models
from .core import (
    BERNOULLI_MIXTURE,
    GAUSSIAN,
    GAUSSIAN_MIXTURE,
    LINEAR_REGRESSION,
    LOGISTIC_REGRESSION,
    Dataset,
    GaussianParams,
    LinearParams,
    LogisticParams,
    MixtureParams,
    ModelParams,
    ModelSpec,
    WeightVector,
    log_densities,
    params_to_dict,
    uniform_weights,
)
from .engine import OwlConfig, owl_fit
from .util import child_seeds, parallel_map


# ---------------------------------------------------------------- corruption


@dataclass(frozen=True)
class UniformBox:
    """Replace selected rows with iid uniforms on [lo, hi]^d."""

    lo: float = -10.0
    hi: float = 10.0


@dataclass(frozen=True)
class ResponseExtreme:
    """Send selected responses to +/- multiplier * max|y|.

    The sign follows the residual of an unweighted least-squares fit on
    the clean data, so corrupted points pull the fit in the direction they
    already deviated.
    """

    multiplier: float = 3.0


@dataclass(frozen=True)
class LabelFlip:
    """Flip selected binary responses (for classification data)."""


@dataclass(frozen=True)
class CoordinateSpike:
    """Set a random half of the coordinates of selected rows to +/- value."""

    value: float = 5.0
    coord_fraction: float = 0.5


@dataclass(frozen=True)
class BitFlipZeros:
    """Flip each zero coordinate of selected rows to one with probability p."""

    prob: float = 0.5


Scheme = Union[UniformBox, ResponseExtreme, LabelFlip, CoordinateSpike, BitFlipZeros]

SELECTORS = ("random", "max_likelihood")


@dataclass(frozen=True)
class CorruptionPlan:
    """fraction of rows to corrupt, how to pick them, and what to do."""

    fraction: float
    scheme: Scheme
    selector: str = "max_likelihood"
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction < 1.0:
            raise ValueError("fraction must be in [0, 1)")
        if self.selector not in SELECTORS:
            raise ValueError(f"unknown selector {self.selector!r}")


def _clean_fit_loglik(spec: ModelSpec, data: Dataset) -> np.ndarray:
    uw = uniform_weights(data.n)
    if spec.is_mixture and spec.k >= 2:
        fr = owl_fit(spec, data, 0.0, OwlConfig(restarts=2, seed=0))
        return log_densities(spec, fr.params, data)
    if spec.family == GAUSSIAN:
        params = models.wmle_gaussian(data, uw, cov_type=spec.cov_type)
    elif spec.family == LINEAR_REGRESSION:
        params = models.wmle_linear_regression(data, uw, ridge=spec.ridge)
    elif spec.family == LOGISTIC_REGRESSION:
        params = models.wmle_logistic_regression(data, uw, ridge=spec.ridge)
    elif spec.family == BERNOULLI_MIXTURE:
        params = models.wmle_bernoulli_product(data, uw)
    else:
        raise ValueError(f"unsupported family {spec.family!r}")
    return log_densities(spec, params, data)


def corrupt(
    data: Dataset, plan: CorruptionPlan, spec: Optional[ModelSpec] = None
) -> tuple:
    """Apply the corruption plan; returns (corrupted Dataset, index array).

    The max_likelihood selector corrupts the ceil(fraction * n) rows the
    clean fit likes best, which hurts the refit more than random rows do.
    Everything is driven by plan.seed, so a plan is reproducible.
    """
    n = data.n
    m = int(math.ceil(plan.fraction * n))
    rng = np.random.default_rng(plan.seed)
    if m == 0:
        return Dataset(
            data.points.copy(),
            response=None if data.response is None else data.response.copy(),
        ), np.array([], dtype=int)

    if plan.selector == "random":
        idx = np.sort(rng.choice(n, size=m, replace=False))
    else:
        if spec is None:
            raise ValueError("max_likelihood selection requires a model spec")
        ll = _clean_fit_loglik(spec, data)
        idx = np.sort(np.argsort(-ll, kind="stable")[:m])

    pts = data.points.copy()
    resp = None if data.response is None else data.response.copy()
    sch = plan.scheme
    if isinstance(sch, UniformBox):
        pts[idx] = rng.uniform(sch.lo, sch.hi, size=(m, data.dim))
    elif isinstance(sch, ResponseExtreme):
        if resp is None:
            raise ValueError("ResponseExtreme requires a response")
        ls = models.wmle_linear_regression(data, uniform_weights(n))
        fitted = ls.intercept + data.points @ ls.beta
        v = float(np.max(np.abs(resp)))
        sign = np.where(resp[idx] - fitted[idx] >= 0, 1.0, -1.0)
        resp[idx] = sign * sch.multiplier * v
    elif isinstance(sch, LabelFlip):
        if resp is None:
            raise ValueError("LabelFlip requires a response")
        resp[idx] = 1.0 - resp[idx]
    elif isinstance(sch, CoordinateSpike):
        d = data.dim
        ncoord = int(math.ceil(sch.coord_fraction * d))
        for row in idx:
            cols = rng.choice(d, size=ncoord, replace=False)
            pts[row, cols] = sch.value * rng.choice([-1.0, 1.0], size=ncoord)
    elif isinstance(sch, BitFlipZeros):
        if not np.all((pts == 0) | (pts == 1)):
            raise ValueError("BitFlipZeros requires binary data")
        zeros = pts[idx] == 0
        flips = zeros & (rng.random(zeros.shape) < sch.prob)
        block = pts[idx]
        block[flips] = 1.0
        pts[idx] = block
    else:
        raise TypeError(f"unknown scheme {type(sch).__name__}")
    return Dataset(pts, response=resp), idx


# ----------------------------------------------------------------- scenarios


@dataclass
class ScenarioData:
    data: Dataset
    spec: ModelSpec
    truth: dict
    scheme: Scheme
    selector: str
    metric: Callable[[ModelParams, dict], float]


def _match_components(est: Sequence[np.ndarray], true: Sequence[np.ndarray]):
    cost = np.array([[float(np.sum((e - t) ** 2)) for t in true] for e in est])
    rows, cols = linear_sum_assignment(cost)
    return rows, cols


def _gaussian_location(seed: int, n: int = 200, d: int = 5) -> ScenarioData:
    rng = np.random.default_rng(seed)
    mean = rng.uniform(-10, 10, d)
    x = mean + rng.normal(0, 1, (n, d))

    def metric(params: ModelParams, truth: dict) -> float:
        return float(np.sum((params.mean - truth["mean"]) ** 2) / d)

    return ScenarioData(
        data=Dataset(x),
        spec=ModelSpec(GAUSSIAN),
        truth={"mean": mean},
        scheme=UniformBox(-10, 10),
        selector="max_likelihood",
        metric=metric,
    )


def _linear_regression(seed: int, n: int = 1000, d: int = 10) -> ScenarioData:
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, d))
    beta = rng.normal(0, 2, d)
    y = x @ beta + rng.normal(0, 0.25, n)

    def metric(params: ModelParams, truth: dict) -> float:
        # mean squared error of the mean response over N(0, I) covariates
        return float(
            np.sum((params.beta - truth["beta"]) ** 2) + params.intercept**2
        )

    return ScenarioData(
        data=Dataset(x, response=y),
        spec=ModelSpec(LINEAR_REGRESSION),
        truth={"beta": beta},
        scheme=ResponseExtreme(3.0),
        selector="max_likelihood",
        metric=metric,
    )


def _logistic_regression(seed: int, n: int = 1000, d: int = 10) -> ScenarioData:
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, d))
    beta = rng.normal(0, 2, d)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-(x @ beta)))).astype(float)
    x_test = rng.normal(0, 1, (2000, d))

    def metric(params: ModelParams, truth: dict) -> float:
        # disagreement with the noiseless decision rule on fresh covariates
        pred = np.sign(params.intercept + truth["x_test"] @ params.beta)
        bayes = np.sign(truth["x_test"] @ truth["beta"])
        return float(np.mean(pred != bayes))

    return ScenarioData(
        data=Dataset(x, response=y),
        spec=ModelSpec(LOGISTIC_REGRESSION, ridge=1e-4),
        truth={"beta": beta, "x_test": x_test},
        scheme=LabelFlip(),
        selector="max_likelihood",
        metric=metric,
    )


def _gaussian_mixture(seed: int, n: int = 1000, d: int = 10, k: int = 3) -> ScenarioData:
    rng = np.random.default_rng(seed)
    means = rng.normal(0, 2, (k, d))
    z = rng.integers(0, k, n)
    x = means[z] + rng.normal(0, 0.5, (n, d))

    def metric(params: ModelParams, truth: dict) -> float:
        est = [c.mean for c in params.components]
        rows, cols = _match_components(est, truth["means"])
        sq = [np.sum((est[r] - truth["means"][c]) ** 2) for r, c in zip(rows, cols)]
        return float(np.mean(sq) / d)

    return ScenarioData(
        data=Dataset(x),
        spec=ModelSpec(GAUSSIAN_MIXTURE, k=k, cov_type="spherical"),
        truth={"means": means},
        scheme=CoordinateSpike(5.0, 0.5),
        selector="random",
        metric=metric,
    )


def _bernoulli_mixture(seed: int, n: int = 1000, d: int = 100, k: int = 3) -> ScenarioData:
    rng = np.random.default_rng(seed)
    lam = rng.beta(0.1, 0.1, (k, d))
    z = rng.integers(0, k, n)
    x = (rng.random((n, d)) < lam[z]).astype(float)

    def metric(params: ModelParams, truth: dict) -> float:
        est = [c.probs for c in params.components]
        rows, cols = _match_components(est, truth["lam"])
        l1 = [
            np.abs(est[r] - truth["lam"][c]).sum() for r, c in zip(rows, cols)
        ]
        return float(np.mean(l1) / d)

    return ScenarioData(
        data=Dataset(x),
        spec=ModelSpec(BERNOULLI_MIXTURE, k=k),
        truth={"lam": lam},
        scheme=BitFlipZeros(0.5),
        selector="random",
        metric=metric,
    )


SCENARIOS: dict = {
    "gaussian_location": _gaussian_location,
    "linear_regression": _linear_regression,
    "logistic_regression": _logistic_regression,
    "gaussian_mixture": _gaussian_mixture,
    "bernoulli_mixture": _bernoulli_mixture,
}

METHODS = ("mle", "owl_known", "owl")

_DEFAULT_TUNE_GRID = tuple(np.linspace(0.02, 0.4, 9))


def run_corruption_sweep(
    spec: Optional[ModelSpec],
    scenario: str,
    fractions: Sequence[float],
    methods: Sequence[str] = ("mle", "owl_known"),
    seeds: Sequence[int] = range(10),
    selector: Optional[str] = None,
    cfg: Optional[OwlConfig] = None,
    tune_grid: Optional[Sequence[float]] = None,
    n_override: Optional[int] = None,
) -> list:
    """Cross fractions x seeds x methods of one scenario into tidy rows.

    "mle" fits with epsilon = 0, "owl_known" with epsilon equal to the true
    corrupted fraction, and "owl" with epsilon tuned from the data over
    tune_grid.  spec=None uses the scenario's own model; passing a spec
    overrides it (the family must stay metric-compatible).  Each row
    records scenario, fraction, method, seed, epsilon, and the scenario's
    ground-truth metric.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    for meth in methods:
        if meth not in METHODS:
            raise ValueError(f"unknown method {meth!r}")
    if selector is not None and selector not in SELECTORS:
        raise ValueError(f"unknown selector {selector!r}")

    jobs = [(float(frac), int(seed)) for frac in fractions for seed in seeds]

    def run(job) -> list:
        frac, seed = job
        maker = SCENARIOS[scenario]
        sc = maker(seed) if n_override is None else maker(seed, n=n_override)
        fit_spec = spec if spec is not None else sc.spec
        plan = CorruptionPlan(
            fraction=frac,
            scheme=sc.scheme,
            selector=selector or sc.selector,
            seed=seed + 7919,
        )
        corrupted, _ = corrupt(sc.data, plan, fit_spec)
        run_cfg = cfg if cfg is not None else OwlConfig(restarts=3, seed=seed)
        rows = []
        for meth in methods:
            if meth == "owl":
                from .engine import tune_epsilon

                grid = np.asarray(tune_grid or _DEFAULT_TUNE_GRID, dtype=float)
                search = tune_epsilon(fit_spec, corrupted, grid, run_cfg)
                eps = search.chosen
                fr = search.fits[search.chosen_index]
            else:
                eps = 0.0 if meth == "mle" else frac
                fr = owl_fit(fit_spec, corrupted, eps, run_cfg)
            rows.append(
                {
                    "scenario": scenario,
                    "fraction": frac,
                    "seed": seed,
                    "method": meth,
                    "epsilon": eps,
                    "metric": sc.metric(fr.params, sc.truth),
                    "okl": fr.value,
                }
            )
        return rows

    nested = parallel_map(run, jobs)
    return [row for rows in nested for row in rows]


# ----------------------------------------------------------------- bootstrap


@dataclass
class BootstrapResult:
    names: list
    lower: np.ndarray
    upper: np.ndarray
    replicates: np.ndarray  # (m, n_params)
    level: float
    ordinary_fallback: bool


def params_vector(params: ModelParams) -> tuple:
    """Flatten fitted parameters to (names, values) for banding."""
    if isinstance(params, GaussianParams):
        names = [f"mean[{i}]" for i in range(params.mean.shape[0])]
        names += [f"cov[{i},{i}]" for i in range(params.mean.shape[0])]
        return names, np.concatenate([params.mean, np.diag(params.cov)])
    if isinstance(params, LinearParams):
        names = ["intercept"] + [f"beta[{i}]" for i in range(params.beta.shape[0])]
        names += ["sigma"]
        return names, np.concatenate([[params.intercept], params.beta, [params.sigma]])
    if isinstance(params, LogisticParams):
        names = ["intercept"] + [f"beta[{i}]" for i in range(params.beta.shape[0])]
        return names, np.concatenate([[params.intercept], params.beta])
    if isinstance(params, MixtureParams):
        names: list = []
        vals: list = []
        for j, comp in enumerate(params.components):
            cn, cv = params_vector(comp)
            names += [f"c{j}.{nm}" for nm in cn]
            vals.append(cv)
        names += [f"pi[{j}]" for j in range(params.weights.shape[0])]
        vals.append(params.weights)
        return names, np.concatenate(vals)
    if hasattr(params, "probs"):
        return (
            [f"prob[{i}]" for i in range(params.probs.shape[0])],
            params.probs.copy(),
        )
    raise TypeError(f"unsupported params {type(params).__name__}")


def os_bootstrap(
    data: Dataset,
    weights: WeightVector,
    fit: Callable[[Dataset], ModelParams],
    m: int = 200,
    level: float = 0.9,
    seed: int = 0,
) -> BootstrapResult:
    """Outlier-stratified bootstrap percentile bands.

    Observations with scaled weight n*w < 1 form the outlier stratum, the
    rest the inlier stratum.  Each replicate resamples with replacement
    within each stratum, preserving both stratum sizes, then refits.  If
    either stratum is empty the resampling degrades to the ordinary
    bootstrap (flagged in the result).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    scaled = weights.scaled()
    if scaled.shape[0] != data.n:
        raise ValueError("weights do not match data")
    out_idx = np.flatnonzero(scaled < 1.0)
    in_idx = np.flatnonzero(scaled >= 1.0)
    fallback = out_idx.size == 0 or in_idx.size == 0
    if fallback:
        warnings.warn("a stratum is empty; falling back to the ordinary bootstrap")
        strata = [np.arange(data.n)]
    else:
        strata = [in_idx, out_idx]

    seeds = child_seeds(seed, m)

    def one(rep_seed: int):
        rng = np.random.default_rng(rep_seed)
        take = np.concatenate([rng.choice(s, size=s.size, replace=True) for s in strata])
        return fit(data.subset(take))

    fits = parallel_map(one, seeds)
    names, first = params_vector(fits[0])
    reps = np.empty((m, first.shape[0]))
    reps[0] = first
    for i, params in enumerate(fits[1:], start=1):
        reps[i] = params_vector(params)[1]
    alpha = (1.0 - level) / 2.0
    lower = np.percentile(reps, 100 * alpha, axis=0)
    upper = np.percentile(reps, 100 * (1 - alpha), axis=0)
    return BootstrapResult(
        names=names,
        lower=lower,
        upper=upper,
        replicates=reps,
        level=level,
        ordinary_fallback=fallback,
    )
