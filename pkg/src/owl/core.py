"""Core data containers and log-density evaluation.

The estimators in this package all operate on a :class:`Dataset` (points,
optional regression response, and multiplicities of repeated rows) and
exchange probability weights through :class:`WeightVector`.  Model families
are described by a :class:`ModelSpec` and fitted parameters by one of the
small parameter containers below (`GaussianParams`, `LinearParams`, ...).

Log-densities are evaluated in a numerically guarded way: any value that
underflows past ``LOG_DENSITY_FLOOR`` is clamped there so that downstream
weight optimisation always sees finite numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

# Clamp for log-densities.  exp(-700) is still a normal double, so ratios of
# floored densities stay representable.
LOG_DENSITY_FLOOR = -700.0

GAUSSIAN = "gaussian"
LINEAR_REGRESSION = "linear_regression"
LOGISTIC_REGRESSION = "logistic_regression"
BERNOULLI_MIXTURE = "bernoulli_mixture"
GAUSSIAN_MIXTURE = "gaussian_mixture"

FAMILIES = (
    GAUSSIAN,
    LINEAR_REGRESSION,
    LOGISTIC_REGRESSION,
    BERNOULLI_MIXTURE,
    GAUSSIAN_MIXTURE,
)

CONDITIONAL_FAMILIES = (LINEAR_REGRESSION, LOGISTIC_REGRESSION)
MIXTURE_FAMILIES = (BERNOULLI_MIXTURE, GAUSSIAN_MIXTURE)

COV_TYPES = ("spherical", "diagonal", "full")

# Eigenvalue floor applied to fitted covariance matrices.
COV_EIGENVALUE_FLOOR = 1e-10


@dataclass
class Dataset:
    """Observations with optional response and row multiplicities.

    Parameters
    ----------
    points : ndarray, shape (n, d)
        Covariates / observations, one row per observation.  Repeated rows
        are kept (the dataset is not deduplicated).
    response : ndarray, shape (n,), optional
        Regression response, required by the conditional families.
    counts : ndarray of int, shape (n,), optional
        counts[i] is the multiplicity of row i among all rows.  Continuous
        data has all-ones counts.  Computed automatically when omitted.
    """

    points: np.ndarray
    response: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.response is not None:
            self.response = np.asarray(self.response, dtype=float).ravel()
        if self.counts is None:
            self.counts = row_multiplicities(self.points)
        else:
            self.counts = np.asarray(self.counts, dtype=int).ravel()
        self.validate()

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def validate(self) -> None:
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("points must be a non-empty (n, d) array")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")
        if self.response is not None:
            if self.response.shape[0] != self.n:
                raise ValueError("response length does not match points")
            if not np.all(np.isfinite(self.response)):
                raise ValueError("response must be finite")
        if self.counts.shape[0] != self.n:
            raise ValueError("counts length does not match points")
        if np.any(self.counts < 1):
            raise ValueError("counts must be positive integers")

    def subset(self, idx: np.ndarray) -> "Dataset":
        """Rows idx as a new dataset; multiplicities are recomputed."""
        resp = None if self.response is None else self.response[idx]
        return Dataset(self.points[idx].copy(), response=resp)


def row_multiplicities(points: np.ndarray) -> np.ndarray:
    """counts[i] = number of rows of `points` equal to row i."""
    _, inverse, counts = np.unique(
        points, axis=0, return_inverse=True, return_counts=True
    )
    return counts[inverse.ravel()]


@dataclass
class WeightVector:
    """Probability weights over the n observations of a dataset.

    `epsilon` records the total-variation radius the weights were produced
    with; `mass` records the total weight (1 except for smoothed weights,
    which only sum to one approximately).
    """

    w: np.ndarray
    epsilon: float
    mass: float = 1.0

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=float).ravel()

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def scaled(self) -> np.ndarray:
        """Weights on the n-scale (uniform data has all entries 1)."""
        return self.n * self.w

    def tv_from_uniform(self) -> float:
        return 0.5 * float(np.abs(self.w - 1.0 / self.n).sum())

    def validate(self, strict_mass: bool = True) -> None:
        if np.any(self.w < -1e-12):
            raise ValueError("weights must be nonnegative")
        if strict_mass and abs(float(self.w.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to one")
        if abs(float(self.w.sum()) - self.mass) > 1e-9:
            raise ValueError("recorded mass does not match weights")
        if self.tv_from_uniform() > self.epsilon + 1e-6:
            raise ValueError("weights violate the total-variation budget")


def uniform_weights(n: int, epsilon: float = 0.0) -> WeightVector:
    return WeightVector(np.full(n, 1.0 / n), epsilon=float(epsilon))


@dataclass(frozen=True)
class ModelSpec:
    """Which family to fit and with what structure.

    cov_type restricts Gaussian covariances: "spherical" (one shared
    variance per component), "diagonal", or "full".
    """

    family: str
    k: int = 1
    ridge: float = 0.0
    cov_type: str = "full"

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.cov_type not in COV_TYPES:
            raise ValueError(f"unknown cov_type {self.cov_type!r}")
        if self.family in CONDITIONAL_FAMILIES and self.k != 1:
            raise ValueError("regression families do not support k > 1")

    @property
    def is_conditional(self) -> bool:
        return self.family in CONDITIONAL_FAMILIES

    @property
    def is_mixture(self) -> bool:
        return self.family in MIXTURE_FAMILIES


@dataclass(frozen=True, eq=False)
class GaussianParams:
    mean: np.ndarray  # (d,)
    cov: np.ndarray  # (d, d), symmetric with eigenvalues >= floor
    floored: bool = False


@dataclass(frozen=True, eq=False)
class LinearParams:
    beta: np.ndarray  # (d,)
    intercept: float
    sigma: float  # residual standard deviation


@dataclass(frozen=True, eq=False)
class LogisticParams:
    beta: np.ndarray  # (d,)
    intercept: float
    converged: bool = True


@dataclass(frozen=True, eq=False)
class BernoulliParams:
    probs: np.ndarray  # (d,) in (0, 1)


ComponentParams = Union[GaussianParams, BernoulliParams]


@dataclass(frozen=True, eq=False)
class MixtureParams:
    weights: np.ndarray  # (k,) on the simplex
    components: tuple
    assignments: Optional[np.ndarray] = None  # hard labels in [0, k)


ModelParams = Union[
    GaussianParams, LinearParams, LogisticParams, BernoulliParams, MixtureParams
]


def _gaussian_logpdf(points: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = points.shape[1]
    chol = np.linalg.cholesky(cov)
    diff = points - mean
    sol = np.linalg.solve(chol, diff.T)
    maha = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)


def _bernoulli_loglik(points: np.ndarray, probs: np.ndarray) -> np.ndarray:
    p = np.clip(probs, 1e-300, 1.0 - 1e-16)
    return points @ np.log(p) + (1.0 - points) @ np.log1p(-p)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    hi = np.max(a, axis=axis, keepdims=True)
    return (hi + np.log(np.sum(np.exp(a - hi), axis=axis, keepdims=True))).squeeze(axis)


def component_log_densities(params: MixtureParams, points: np.ndarray) -> np.ndarray:
    """Per-component log-densities, shape (n, k).  No mixing weights."""
    cols = []
    for comp in params.components:
        if isinstance(comp, GaussianParams):
            cols.append(_gaussian_logpdf(points, comp.mean, comp.cov))
        elif isinstance(comp, BernoulliParams):
            cols.append(_bernoulli_loglik(points, comp.probs))
        else:
            raise TypeError(f"unsupported component {type(comp).__name__}")
    return np.stack(cols, axis=1)


def log_densities(
    spec: ModelSpec,
    params: ModelParams,
    data: Dataset,
) -> np.ndarray:
    """Per-observation log-density under `params`, clamped at the floor.

    For the conditional families this is the log-density of response[i]
    given points[i]; otherwise the log-density of points[i].  Mixtures are
    evaluated marginally: logsumexp over components with mixing weights.
    """
    x = data.points
    if spec.family == GAUSSIAN:
        out = _gaussian_logpdf(x, params.mean, params.cov)
    elif spec.family == LINEAR_REGRESSION:
        if data.response is None:
            raise ValueError("linear regression requires a response")
        mu = params.intercept + x @ params.beta
        # A zero fitted sigma (exact interpolation) is evaluated at a tiny
        # positive scale so the result stays finite.
        sig = max(float(params.sigma), 1e-150)
        resid = data.response - mu
        out = -0.5 * np.log(2.0 * np.pi) - np.log(sig) - 0.5 * (resid / sig) ** 2
    elif spec.family == LOGISTIC_REGRESSION:
        if data.response is None:
            raise ValueError("logistic regression requires a response")
        z = params.intercept + x @ params.beta
        y = data.response
        # log sigma(z) = -log1p(exp(-z)) computed stably for both signs.
        zs = np.where(y > 0.5, z, -z)
        out = np.where(
            zs > 0, -np.log1p(np.exp(-zs)), zs - np.log1p(np.exp(zs))
        )
    elif spec.family == BERNOULLI_MIXTURE:
        out = _mixture_marginal(params, x)
    elif spec.family == GAUSSIAN_MIXTURE:
        out = _mixture_marginal(params, x)
    else:
        raise ValueError(f"unknown family {spec.family!r}")
    return np.maximum(out, LOG_DENSITY_FLOOR)


def _mixture_marginal(params, x: np.ndarray) -> np.ndarray:
    if isinstance(params, (GaussianParams, BernoulliParams)):
        params = MixtureParams(weights=np.array([1.0]), components=(params,))
    comp = component_log_densities(params, x)
    logw = np.log(np.clip(params.weights, 1e-300, None))
    if params.weights.shape[0] == 1:
        # K = 1 must reduce to the bare component, bit for bit.
        return comp[:, 0]
    return _logsumexp(comp + logw, axis=1)


def log_density(
    spec: ModelSpec,
    params: ModelParams,
    x: Union[float, Sequence[float], np.ndarray],
    y: Optional[float] = None,
) -> float:
    """Log-density of a single observation (see `log_densities`)."""
    pt = np.atleast_2d(np.asarray(x, dtype=float))
    resp = None if y is None else np.asarray([y], dtype=float)
    data = Dataset(pt, response=resp)
    return float(log_densities(spec, params, data)[0])


def floor_covariance(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    """Symmetrise and clamp eigenvalues at COV_EIGENVALUE_FLOOR."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= COV_EIGENVALUE_FLOOR:
        return cov, False
    vals = np.maximum(vals, COV_EIGENVALUE_FLOOR)
    return (vecs * vals) @ vecs.T, True


def params_to_dict(params: ModelParams) -> dict:
    """JSON-friendly representation of fitted parameters."""
    if isinstance(params, GaussianParams):
        return {
            "kind": "gaussian",
            "mean": params.mean.tolist(),
            "cov": params.cov.tolist(),
            "floored": bool(params.floored),
        }
    if isinstance(params, LinearParams):
        return {
            "kind": "linear",
            "beta": params.beta.tolist(),
            "intercept": float(params.intercept),
            "sigma": float(params.sigma),
        }
    if isinstance(params, LogisticParams):
        return {
            "kind": "logistic",
            "beta": params.beta.tolist(),
            "intercept": float(params.intercept),
            "converged": bool(params.converged),
        }
    if isinstance(params, BernoulliParams):
        return {"kind": "bernoulli", "probs": params.probs.tolist()}
    if isinstance(params, MixtureParams):
        return {
            "kind": "mixture",
            "weights": params.weights.tolist(),
            "components": [params_to_dict(c) for c in params.components],
            "assignments": None
            if params.assignments is None
            else params.assignments.tolist(),
        }
    raise TypeError(f"unsupported params {type(params).__name__}")


def params_from_dict(d: dict) -> ModelParams:
    kind = d["kind"]
    if kind == "gaussian":
        return GaussianParams(
            mean=np.asarray(d["mean"], dtype=float),
            cov=np.asarray(d["cov"], dtype=float),
            floored=bool(d.get("floored", False)),
        )
    if kind == "linear":
        return LinearParams(
            beta=np.asarray(d["beta"], dtype=float),
            intercept=float(d["intercept"]),
            sigma=float(d["sigma"]),
        )
    if kind == "logistic":
        return LogisticParams(
            beta=np.asarray(d["beta"], dtype=float),
            intercept=float(d["intercept"]),
            converged=bool(d.get("converged", True)),
        )
    if kind == "bernoulli":
        return BernoulliParams(probs=np.asarray(d["probs"], dtype=float))
    if kind == "mixture":
        return MixtureParams(
            weights=np.asarray(d["weights"], dtype=float),
            components=tuple(params_from_dict(c) for c in d["components"]),
            assignments=None
            if d.get("assignments") is None
            else np.asarray(d["assignments"], dtype=int),
        )
    raise ValueError(f"unknown params kind {kind!r}")
