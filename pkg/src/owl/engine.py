"""The optimistically weighted likelihood (OWL) loop and its drivers.

owl_fit alternates two steps until the optimistic KL (OKL) objective
stops improving:

  w-step   re-weight observations by I-projecting the model onto a
           total-variation ball around the empirical measure (admm module);
  theta-step   refit the model by weighted maximum likelihood (models
           module).

Mixtures run the same loop over an augmented parameter set that includes
hard cluster assignments, so their weight step scores each observation by
its own component's log-density.  Regression families use the conditional
variant of the weight step.

The module also provides the OKL evaluation at fixed parameters, the
curvature-based epsilon tuner, mixture-order selection, and the k-nearest
neighbour bandwidth grid for kernel-smoothed weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from . import models
from .admm import (
    AdmmConfig,
    AdmmState,
    KernelOperator,
    OklResult,
    gaussian_kernel_matrix,
    i_projection,
    i_projection_conditional,
    i_projection_kernelized,
)
from .core import (
    BERNOULLI_MIXTURE,
    GAUSSIAN,
    GAUSSIAN_MIXTURE,
    LINEAR_REGRESSION,
    LOGISTIC_REGRESSION,
    Dataset,
    MixtureParams,
    ModelParams,
    ModelSpec,
    WeightVector,
    component_log_densities,
    log_densities,
    uniform_weights,
)
from .util import child_seeds, parallel_map

#: objective increases larger than this slack abort the loop
DESCENT_SLACK = 1e-7

INDICATOR_KERNEL = "indicator"
GAUSSIAN_KERNEL = "gaussian"


@dataclass(frozen=True)
class OwlConfig:
    """Settings for the alternating loop.

    restarts counts independent initialisations (the first starts at the
    unweighted MLE, the rest at jittered copies); the run with the lowest
    final OKL wins.  kernel selects hard ("indicator") or Gaussian-smoothed
    weights; the Gaussian kernel requires a bandwidth.
    """

    max_owl_iters: int = 100
    rel_tol: float = 1e-6
    restarts: int = 10
    kernel: str = INDICATOR_KERNEL
    bandwidth: Optional[float] = None
    seed: int = 0
    jitter: float = 0.5
    em_rounds: int = 100
    admm: AdmmConfig = field(default_factory=AdmmConfig)

    def __post_init__(self) -> None:
        if self.max_owl_iters < 1 or self.restarts < 1:
            raise ValueError("max_owl_iters and restarts must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.kernel not in (INDICATOR_KERNEL, GAUSSIAN_KERNEL):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.kernel == GAUSSIAN_KERNEL and (
            self.bandwidth is None or self.bandwidth <= 0
        ):
            raise ValueError("gaussian kernel requires a positive bandwidth")


@dataclass
class FitTrace:
    """Accepted OKL value after each weight step, plus the stop reason."""

    okl: np.ndarray
    epsilon: float
    reason: str  # "converged" | "max_iters" | "stalled"
    reseeded: bool = False

    def is_descending(self, slack: float = DESCENT_SLACK) -> bool:
        return bool(np.all(np.diff(self.okl) <= slack))


@dataclass
class FitResult:
    params: ModelParams
    weights: WeightVector
    trace: FitTrace
    value: float  # final OKL
    restart: int = 0


def _model_loglik(
    spec: ModelSpec, params: ModelParams, data: Dataset
) -> np.ndarray:
    """Per-observation log-likelihood driving the weight step.

    Mixtures with k >= 2 are scored through their hard assignments (the
    augmented-parameter view); everything else through log_densities.
    """
    if spec.is_mixture and spec.k >= 2:
        if not isinstance(params, MixtureParams) or params.assignments is None:
            raise ValueError("mixture weight step needs hard assignments")
        comp_ll = component_log_densities(params, data.points)
        return comp_ll[np.arange(data.n), params.assignments]
    return log_densities(spec, params, data)


def _weight_step(
    spec: ModelSpec,
    logp: np.ndarray,
    data: Dataset,
    epsilon: float,
    cfg: OwlConfig,
    kernel_op: Optional[KernelOperator],
    warm: Optional[AdmmState],
) -> OklResult:
    if kernel_op is not None:
        return i_projection_kernelized(logp, kernel_op, epsilon, cfg.admm, warm)
    if spec.is_conditional or (spec.is_mixture and spec.k >= 2):
        return i_projection_conditional(logp, epsilon, cfg.admm, warm)
    return i_projection(logp, data.counts, epsilon, cfg.admm, warm)


def _theta_step(
    spec: ModelSpec,
    data: Dataset,
    w: np.ndarray,
    params: ModelParams,
    cfg: OwlConfig,
) -> tuple:
    """Weighted MLE refit; returns (params, reseeded_flag)."""
    if spec.family == GAUSSIAN:
        return models.wmle_gaussian(data, w, cov_type=spec.cov_type), False
    if spec.family == LINEAR_REGRESSION:
        return models.wmle_linear_regression(data, w, ridge=spec.ridge), False
    if spec.family == LOGISTIC_REGRESSION:
        return models.wmle_logistic_regression(data, w, ridge=spec.ridge), False
    if spec.family == BERNOULLI_MIXTURE and spec.k == 1:
        return models.wmle_bernoulli_product(data, w), False
    if spec.family == GAUSSIAN_MIXTURE and spec.k == 1:
        comp = models.wmle_gaussian(data, w, cov_type=spec.cov_type)
        return (
            MixtureParams(
                weights=np.array([1.0]),
                components=(comp,),
                assignments=np.zeros(data.n, dtype=int),
            ),
            False,
        )
    res = models.wmle_mixture_hard_em(
        data, w, spec, init=params, max_rounds=cfg.em_rounds
    )
    return res.params, res.reseeded


def _build_kernel(data: Dataset, cfg: OwlConfig) -> Optional[KernelOperator]:
    if cfg.kernel == INDICATOR_KERNEL:
        return None
    K = gaussian_kernel_matrix(data.points, cfg.bandwidth)
    return KernelOperator.from_kernel_matrix(K)


def _mixture_seed_params(
    spec: ModelSpec, data: Dataset, rng: np.random.Generator
) -> MixtureParams:
    """Farthest-point style seeding for mixture initialisation."""
    x = data.points
    n = data.n
    first = int(rng.integers(n))
    centers = [x[first]]
    for _ in range(1, spec.k):
        d2 = np.min(
            np.stack([np.sum((x - c) ** 2, axis=1) for c in centers]), axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(x[int(rng.integers(n))])
        else:
            centers.append(x[int(rng.choice(n, p=d2 / total))])
    z = np.argmin(
        np.stack([np.sum((x - c) ** 2, axis=1) for c in centers]), axis=0
    )
    uw = uniform_weights(n).w
    comps = []
    for j in range(spec.k):
        mask = z == j
        w_sub = np.where(mask, uw, 0.0)
        if not mask.any():
            w_sub = np.zeros(n)
            w_sub[int(rng.integers(n))] = 1.0
        comps.append(models._fit_component(spec, data, w_sub))
    return MixtureParams(
        weights=np.ones(spec.k) / spec.k, components=tuple(comps), assignments=z
    )


def _initial_params(
    spec: ModelSpec, data: Dataset, cfg: OwlConfig, restart: int, seed: int
) -> ModelParams:
    """Unweighted fit for restart 0; jittered variants afterwards."""
    rng = np.random.default_rng(seed)
    uw = uniform_weights(data.n)
    if spec.family == GAUSSIAN:
        params = models.wmle_gaussian(data, uw, cov_type=spec.cov_type)
        if restart == 0:
            return params
        scale = cfg.jitter * np.sqrt(np.diag(params.cov))
        return replace(params, mean=params.mean + rng.normal(0, 1, data.dim) * scale)
    if spec.family == LINEAR_REGRESSION:
        params = models.wmle_linear_regression(data, uw, ridge=spec.ridge)
        if restart == 0:
            return params
        return replace(
            params, beta=params.beta * (1 + cfg.jitter * rng.normal(0, 1, data.dim))
        )
    if spec.family == LOGISTIC_REGRESSION:
        params = models.wmle_logistic_regression(data, uw, ridge=spec.ridge)
        if restart == 0:
            return params
        return replace(
            params, beta=params.beta * (1 + cfg.jitter * rng.normal(0, 1, data.dim))
        )
    if spec.family == BERNOULLI_MIXTURE and spec.k == 1:
        return models.wmle_bernoulli_product(data, uw)
    if spec.family == GAUSSIAN_MIXTURE and spec.k == 1:
        comp = models.wmle_gaussian(data, uw, cov_type=spec.cov_type)
        return MixtureParams(
            weights=np.array([1.0]),
            components=(comp,),
            assignments=np.zeros(data.n, dtype=int),
        )
    # mixtures: hard EM from a fresh seeding; restart 0 is deterministic
    seed_params = _mixture_seed_params(spec, data, rng)
    res = models.wmle_mixture_hard_em(
        data, uw, spec, init=seed_params, max_rounds=cfg.em_rounds
    )
    params = res.params
    if restart == 0:
        return params
    if spec.family == GAUSSIAN_MIXTURE:
        jitter_scale = cfg.jitter * data.points.std(axis=0)
        comps = tuple(
            replace(c, mean=c.mean + rng.normal(0, 1, data.dim) * jitter_scale)
            for c in params.components
        )
        return MixtureParams(
            weights=params.weights, components=comps, assignments=params.assignments
        )
    probs_jit = tuple(
        replace(
            c,
            probs=np.clip(
                c.probs + cfg.jitter * rng.uniform(-0.25, 0.25, data.dim),
                1e-4,
                1 - 1e-4,
            ),
        )
        for c in params.components
    )
    return MixtureParams(
        weights=params.weights, components=probs_jit, assignments=params.assignments
    )


def _owl_single_run(
    spec: ModelSpec,
    data: Dataset,
    epsilon: float,
    cfg: OwlConfig,
    init: ModelParams,
    kernel_op: Optional[KernelOperator],
    restart: int,
) -> FitResult:
    params = init
    warm: Optional[AdmmState] = None
    trace_vals: list = []
    reason = "max_iters"
    reseeded_any = False
    best_weights: Optional[WeightVector] = None

    for _ in range(cfg.max_owl_iters):
        logp = _model_loglik(spec, params, data)
        step = _weight_step(spec, logp, data, epsilon, cfg, kernel_op, warm)
        warm = step.state

        if trace_vals and step.value > trace_vals[-1] + DESCENT_SLACK:
            # the refit made the objective worse (only possible through
            # solver noise or a cluster rescue); keep the previous iterate
            params = prev_params
            reason = "stalled"
            break
        prev_params = params
        best_weights = step.weights
        trace_vals.append(step.value)

        params, reseeded = _theta_step(spec, data, step.weights.w, params, cfg)
        reseeded_any = reseeded_any or reseeded

        if len(trace_vals) >= 2:
            drop = trace_vals[-2] - trace_vals[-1]
            if drop <= cfg.rel_tol * max(1.0, abs(trace_vals[-2])):
                reason = "converged"
                break

    trace = FitTrace(
        okl=np.asarray(trace_vals, dtype=float),
        epsilon=float(epsilon),
        reason=reason,
        reseeded=reseeded_any,
    )
    return FitResult(
        params=params,
        weights=best_weights,
        trace=trace,
        value=float(trace_vals[-1]),
        restart=restart,
    )


def owl_fit(
    spec: ModelSpec,
    data: Dataset,
    epsilon: float,
    cfg: Optional[OwlConfig] = None,
    init: Optional[ModelParams] = None,
) -> FitResult:
    """Robust fit: alternate weight and refit steps from several starts.

    Returns the restart with the smallest final OKL value.  An explicit
    `init` adds one extra run started from it (used by the epsilon tuner
    to chain solutions along the grid).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    cfg = cfg or OwlConfig()
    if spec.is_conditional:
        return owl_fit_conditional(spec, data, epsilon, cfg, init)
    kernel_op = _build_kernel(data, cfg)
    seeds = child_seeds(cfg.seed, cfg.restarts)

    inits = [
        _initial_params(spec, data, cfg, r, seeds[r]) for r in range(cfg.restarts)
    ]
    if init is not None:
        inits.append(init)

    def run(job) -> FitResult:
        r, start = job
        return _owl_single_run(spec, data, epsilon, cfg, start, kernel_op, r)

    results = parallel_map(run, list(enumerate(inits)))
    return min(results, key=lambda fr: fr.value)


def owl_fit_conditional(
    spec: ModelSpec,
    data: Dataset,
    epsilon: float,
    cfg: Optional[OwlConfig] = None,
    init: Optional[ModelParams] = None,
) -> FitResult:
    """OWL loop for regression families (weights on conditional factors)."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    cfg = cfg or OwlConfig()
    if not spec.is_conditional:
        raise ValueError("owl_fit_conditional expects a regression family")
    if cfg.kernel != INDICATOR_KERNEL:
        raise ValueError("regression families support the indicator kernel only")
    seeds = child_seeds(cfg.seed, cfg.restarts)
    inits = [
        _initial_params(spec, data, cfg, r, seeds[r]) for r in range(cfg.restarts)
    ]
    if init is not None:
        inits.append(init)

    def run(job) -> FitResult:
        r, start = job
        return _owl_single_run(spec, data, epsilon, cfg, start, None, r)

    results = parallel_map(run, list(enumerate(inits)))
    return min(results, key=lambda fr: fr.value)


def okl_estimate(
    spec: ModelSpec,
    params: ModelParams,
    data: Dataset,
    epsilon: float,
    cfg: Optional[OwlConfig] = None,
) -> OklResult:
    """OKL at fixed parameters (mixtures scored by their marginal density)."""
    cfg = cfg or OwlConfig()
    logp = log_densities(spec, params, data)
    kernel_op = _build_kernel(data, cfg)
    if kernel_op is not None:
        return i_projection_kernelized(logp, kernel_op, epsilon, cfg.admm)
    if spec.is_conditional:
        return i_projection_conditional(logp, epsilon, cfg.admm)
    return i_projection(logp, data.counts, epsilon, cfg.admm)


@dataclass
class EpsilonSearchResult:
    grid: np.ndarray
    g_hat: np.ndarray
    smoothed: np.ndarray
    curvature: np.ndarray  # aligned with grid; endpoints are NaN
    chosen: float
    chosen_index: int
    no_kink: bool
    dropped: list
    fits: list  # FitResult per surviving grid point


def _moving_average3(y: np.ndarray) -> np.ndarray:
    """Centered window-3 moving average; endpoints pass through.

    Truncating the window at the ends would bend an exactly straight
    curve and fabricate curvature there, so the endpoints are left as is.
    """
    out = np.asarray(y, dtype=float).copy()
    if y.shape[0] >= 3:
        out[1:-1] = (y[:-2] + y[1:-1] + y[2:]) / 3.0
    return out


def _curvature(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """kappa = f'' / (1 + f'^2)^1.5 by non-uniform central differences."""
    n = x.shape[0]
    kappa = np.full(n, np.nan)
    for i in range(1, n - 1):
        h0 = x[i] - x[i - 1]
        h1 = x[i + 1] - x[i]
        d1 = (y[i + 1] - y[i - 1]) / (h0 + h1)
        d2 = 2.0 * (
            (y[i + 1] - y[i]) / (h1 * (h0 + h1)) - (y[i] - y[i - 1]) / (h0 * (h0 + h1))
        )
        kappa[i] = d2 / (1.0 + d1**2) ** 1.5
    return kappa


_NO_KINK_TOL = 1e-10


def select_by_curvature(x: np.ndarray, g: np.ndarray) -> tuple:
    """Curvature-maximising grid index after window-3 smoothing.

    Returns (smoothed, curvature, index, no_kink).  Only interior points
    carry a curvature; if none of them curve upward beyond ~1e-10 the
    function is flat or straight and the smallest interior point is
    reported with no_kink=True.  Ties break toward the smallest x.
    """
    smoothed = _moving_average3(np.asarray(g, dtype=float))
    kappa = _curvature(np.asarray(x, dtype=float), smoothed)
    interior = kappa[1:-1]
    if np.nanmax(interior) <= _NO_KINK_TOL:
        return smoothed, kappa, 1, True
    return smoothed, kappa, 1 + int(np.nanargmax(interior)), False


def tune_epsilon(
    spec: ModelSpec,
    data: Dataset,
    grid: Sequence[float],
    cfg: Optional[OwlConfig] = None,
) -> EpsilonSearchResult:
    """Pick the total-variation radius at the curvature maximum of g(eps).

    g(eps) is the final OKL of an OWL fit at each grid radius; fits are
    chained (each grid point also starts from its predecessor's solution)
    which keeps g monotone up to solver noise.  After a centered window-3
    smoothing, the radius with the largest finite-difference curvature is
    chosen; ties break toward the smallest radius.  A curvature that never
    rises above ~1e-10 means g has no kink to find; the smallest interior
    radius is returned with no_kink set.
    """
    cfg = cfg or OwlConfig()
    grid = np.asarray(list(grid), dtype=float)
    if grid.shape[0] < 5:
        raise ValueError("grid must contain at least 5 points")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > 1:
        raise ValueError("grid must be strictly increasing within [0, 1]")

    fits: list = []
    kept: list = []
    dropped: list = []
    chain: Optional[ModelParams] = None
    for eps in grid:
        try:
            fr = owl_fit(spec, data, float(eps), cfg, init=chain)
        except Exception as exc:  # noqa: BLE001 - any grid point may fail
            dropped.append((float(eps), repr(exc)))
            warnings.warn(f"dropping epsilon={eps:g}: {exc}")
            continue
        fits.append(fr)
        kept.append(float(eps))
        chain = fr.params
    if len(kept) < 5:
        raise ValueError(
            f"only {len(kept)} grid points produced a fit; need at least 5"
        )

    x = np.asarray(kept)
    g = np.asarray([fr.value for fr in fits])
    smoothed, kappa, idx, no_kink = select_by_curvature(x, g)
    return EpsilonSearchResult(
        grid=x,
        g_hat=g,
        smoothed=smoothed,
        curvature=kappa,
        chosen=float(x[idx]),
        chosen_index=idx,
        no_kink=no_kink,
        dropped=dropped,
        fits=fits,
    )


def component_param_count(spec: ModelSpec, dim: int) -> int:
    """Free parameters of one mixture component."""
    if spec.family == BERNOULLI_MIXTURE:
        return dim
    if spec.family == GAUSSIAN_MIXTURE or spec.family == GAUSSIAN:
        if spec.cov_type == "spherical":
            return dim + 1
        if spec.cov_type == "diagonal":
            return 2 * dim
        return dim + dim * (dim + 1) // 2
    raise ValueError(f"{spec.family!r} has no component parameter count")


@dataclass
class SelectionResult:
    k_range: np.ndarray
    criterion: np.ndarray
    chosen_k: int
    fits: list


def owl_selection_criterion(
    spec: ModelSpec,
    data: Dataset,
    k_range: Sequence[int],
    epsilon: float,
    penalty: str = "bic",
    cfg: Optional[OwlConfig] = None,
) -> SelectionResult:
    """Penalised weighted complete-data likelihood over mixture orders.

    criterion(k) = 2 kappa - 2 sum_i n w_i (log pi_{z_i} + log f(x_i | z_i))

    with kappa = k (p + 1) for "aic" and k (p + 1) ln(n) / 2 for "bic",
    p the per-component parameter count.  The smallest criterion wins;
    ties break toward smaller k.
    """
    if penalty not in ("aic", "bic"):
        raise ValueError("penalty must be 'aic' or 'bic'")
    if not spec.is_mixture:
        raise ValueError("model selection requires a mixture family")
    ks = [int(k) for k in k_range]
    if not ks or min(ks) < 1:
        raise ValueError("k_range must be nonempty positive integers")
    cfg = cfg or OwlConfig()

    crits = []
    fits = []
    p = component_param_count(spec, data.dim)
    for k in ks:
        fr = owl_fit(replace(spec, k=k), data, epsilon, cfg)
        params = fr.params
        z = params.assignments
        comp_ll = component_log_densities(params, data.points)
        ll_i = comp_ll[np.arange(data.n), z] + np.log(
            np.clip(params.weights[z], 1e-300, None)
        )
        weighted_ll = float(fr.weights.scaled() @ ll_i)
        if penalty == "aic":
            kappa = k * (p + 1)
        else:
            kappa = k * (p + 1) / 2.0 * np.log(data.n)
        crits.append(2.0 * kappa - 2.0 * weighted_ll)
        fits.append(fr)
    crits = np.asarray(crits)
    best = int(np.argmin(crits))
    return SelectionResult(
        k_range=np.asarray(ks), criterion=crits, chosen_k=ks[best], fits=fits
    )


def kernel_bandwidth_grid(
    data: Dataset, ks: Sequence[int] = (5, 10, 25, 50)
) -> dict:
    """Average k-nearest-neighbour distance for each k (candidate bandwidths).

    k values of n-1 or larger are clipped with a warning; the neighbour
    count excludes the point itself.
    """
    x = data.points
    n = data.n
    out: dict = {}
    tree = cKDTree(x)
    for k in ks:
        kk = int(k)
        if kk < 1:
            raise ValueError("neighbour counts must be >= 1")
        if kk > n - 1:
            warnings.warn(f"k={kk} clipped to n-1={n - 1}")
            kk = n - 1
        if kk < 1:
            raise ValueError("need at least two observations")
        dist, _ = tree.query(x, k=kk + 1)
        out[int(k)] = float(dist[:, kk].mean())
    return out


def choose_bandwidth(
    spec: ModelSpec,
    data: Dataset,
    epsilon: float,
    cfg: Optional[OwlConfig] = None,
    ks: Sequence[int] = (5, 10, 25, 50),
) -> tuple:
    """Fit once per candidate bandwidth; keep the lowest final OKL.

    Returns (bandwidth, FitResult, grid dict).
    """
    cfg = cfg or OwlConfig()
    grid = kernel_bandwidth_grid(data, ks)
    best = None
    for k, h in grid.items():
        cand_cfg = replace(cfg, kernel=GAUSSIAN_KERNEL, bandwidth=h)
        fr = owl_fit(spec, data, epsilon, cand_cfg)
        if best is None or fr.value < best[1].value:
            best = (h, fr)
    return best[0], best[1], grid
