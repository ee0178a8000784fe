"""Weighted maximum-likelihood fits for the supported families.

Every fit accepts probability weights over observations and is invariant
to their scale (weights are renormalised internally).  Exponential-family
fits are moment matches; the logistic fit runs damped Newton iterations;
mixtures are fitted by a weighted hard-assignment EM whose component
updates reuse the single-family fits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (
    BERNOULLI_MIXTURE,
    COV_EIGENVALUE_FLOOR,
    GAUSSIAN_MIXTURE,
    BernoulliParams,
    Dataset,
    GaussianParams,
    LinearParams,
    LogisticParams,
    MixtureParams,
    ModelSpec,
    WeightVector,
    component_log_densities,
    floor_covariance,
)

_BERNOULLI_CLIP = 1e-6


def _normalized(w: Union[WeightVector, np.ndarray], n: int) -> np.ndarray:
    w = w.w if isinstance(w, WeightVector) else np.asarray(w, dtype=float).ravel()
    if w.shape[0] != n:
        raise ValueError("weight length does not match data")
    if np.any(w < -1e-12):
        raise ValueError("weights must be nonnegative")
    w = np.maximum(w, 0.0)
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must have positive total mass")
    return w / total


def wmle_gaussian(
    data: Dataset, w: Union[WeightVector, np.ndarray], cov_type: str = "full"
) -> GaussianParams:
    """Weighted Gaussian fit: weighted mean and weighted covariance.

    The covariance is clamped from below (eigenvalues for "full", variances
    otherwise) so downstream densities stay evaluable; `floored` records
    whether the clamp was active.
    """
    x = data.points
    wn = _normalized(w, data.n)
    mean = wn @ x
    diff = x - mean
    if cov_type == "spherical":
        var = float(wn @ np.sum(diff**2, axis=1)) / x.shape[1]
        floored = var < COV_EIGENVALUE_FLOOR
        cov = max(var, COV_EIGENVALUE_FLOOR) * np.eye(x.shape[1])
    elif cov_type == "diagonal":
        var = wn @ diff**2
        floored = bool(np.any(var < COV_EIGENVALUE_FLOOR))
        cov = np.diag(np.maximum(var, COV_EIGENVALUE_FLOOR))
    elif cov_type == "full":
        cov = (diff * wn[:, None]).T @ diff
        cov, floored = floor_covariance(cov)
    else:
        raise ValueError(f"unknown cov_type {cov_type!r}")
    return GaussianParams(mean=mean, cov=cov, floored=floored)


def wmle_bernoulli_product(
    data: Dataset, w: Union[WeightVector, np.ndarray]
) -> BernoulliParams:
    """Weighted product-Bernoulli fit, clipped away from {0, 1}."""
    wn = _normalized(w, data.n)
    probs = np.clip(wn @ data.points, _BERNOULLI_CLIP, 1.0 - _BERNOULLI_CLIP)
    return BernoulliParams(probs=probs)


def wmle_linear_regression(
    data: Dataset, w: Union[WeightVector, np.ndarray], ridge: float = 0.0
) -> LinearParams:
    """Weighted least squares with optional ridge on the coefficients.

    Solves the weighted normal equations; sigma is the square root of the
    weighted mean squared residual (no degrees-of-freedom correction).
    The intercept is never penalised.
    """
    if data.response is None:
        raise ValueError("linear regression requires a response")
    x = data.points
    y = data.response
    wn = _normalized(w, data.n)
    xa = np.column_stack([np.ones(data.n), x])
    gram = (xa * wn[:, None]).T @ xa
    if ridge > 0:
        pen = np.eye(xa.shape[1])
        pen[0, 0] = 0.0
        gram = gram + ridge * pen
    if np.linalg.cond(gram) > 1e12:
        raise ValueError("singular weighted design; add ridge or drop columns")
    theta = np.linalg.solve(gram, (xa * wn[:, None]).T @ y)
    resid = y - xa @ theta
    sigma = float(np.sqrt(max(wn @ resid**2, 0.0)))
    return LinearParams(beta=theta[1:], intercept=float(theta[0]), sigma=sigma)


_LOGISTIC_GRAD_TOL = 1e-10
_LOGISTIC_MAX_ITER = 200
_LOGISTIC_COEF_CLIP = 100.0


def wmle_logistic_regression(
    data: Dataset, w: Union[WeightVector, np.ndarray], ridge: float = 0.0
) -> LogisticParams:
    """Weighted logistic regression by damped Newton iterations.

    Minimises the weighted log-loss plus ridge/2 * ||beta||^2 (intercept
    unpenalised).  Without ridge, separable data sends the coefficients to
    infinity.  A finite stationary point of the unridged loss must leave at
    least one margin nonpositive (all-positive margins mean scaling the
    coefficients up strictly decreases the loss), so a return point whose
    margins are all strictly positive certifies separation; that case is
    reported with clipped coefficients and converged=False.
    """
    if data.response is None:
        raise ValueError("logistic regression requires a response")
    y = data.response
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic response must be binary 0/1")
    x = data.points
    wn = _normalized(w, data.n)
    xa = np.column_stack([np.ones(data.n), x])
    d = xa.shape[1]
    pen = np.eye(d)
    pen[0, 0] = 0.0
    theta = np.zeros(d)

    def loss_grad(th):
        z = xa @ th
        # log(1 + exp(z)) - y z, evaluated stably
        loss = float(wn @ (np.logaddexp(0.0, z) - y * z)) + 0.5 * ridge * float(
            th @ pen @ th
        )
        p = 1.0 / (1.0 + np.exp(-z))
        grad = xa.T @ (wn * (p - y)) + ridge * (pen @ th)
        return loss, grad, p

    loss, grad, p = loss_grad(theta)
    converged = False
    for _ in range(_LOGISTIC_MAX_ITER):
        if np.linalg.norm(grad) <= _LOGISTIC_GRAD_TOL:
            converged = True
            break
        h = wn * p * (1.0 - p)
        hess = (xa * h[:, None]).T @ xa + ridge * pen
        hess = hess + 1e-12 * np.eye(d)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        # backtracking keeps the Newton step a descent step
        t = 1.0
        for _ in range(50):
            cand = theta - t * step
            new_loss, new_grad, new_p = loss_grad(cand)
            if new_loss <= loss - 1e-12 * t * float(grad @ step):
                break
            t *= 0.5
        theta, loss, grad, p = cand, new_loss, new_grad, new_p
    else:
        converged = bool(np.linalg.norm(grad) <= _LOGISTIC_GRAD_TOL)
    if converged and ridge == 0.0:
        margins = (2.0 * y - 1.0) * (xa @ theta)
        if np.all(margins > 0):
            # separation certificate: no finite stationary point has
            # all-positive margins, so the optimum is at infinity
            converged = False
    if not converged:
        theta = np.clip(theta, -_LOGISTIC_COEF_CLIP, _LOGISTIC_COEF_CLIP)
    return LogisticParams(beta=theta[1:], intercept=float(theta[0]), converged=converged)


@dataclass
class HardEmResult:
    params: MixtureParams
    rounds: int
    reseeded: bool
    converged: bool  # assignments reached a fixed point


def _fit_component(spec: ModelSpec, data: Dataset, w_sub: np.ndarray):
    if spec.family == GAUSSIAN_MIXTURE:
        return wmle_gaussian(data, w_sub, cov_type=spec.cov_type)
    if spec.family == BERNOULLI_MIXTURE:
        return wmle_bernoulli_product(data, w_sub)
    raise ValueError(f"{spec.family!r} is not a mixture family")


def wmle_mixture_hard_em(
    data: Dataset,
    w: Union[WeightVector, np.ndarray],
    spec: ModelSpec,
    init: Union[MixtureParams, np.ndarray],
    max_rounds: int = 100,
) -> HardEmResult:
    """Weighted hard-assignment EM.

    Alternates (a) per-component weighted MLE on the currently assigned
    observations and (b) reassignment of every observation to the
    component with the highest log-density (mixing weights do not enter
    the assignment rule).  Mixing weights are the total normalised weight
    per cluster.  Both half-steps improve the weighted complete-data
    likelihood, so the iteration terminates at an assignment fixed point.

    A component that ends up with no weight is rescued by reseeding it at
    the observation currently worst explained by the model; the rescue is
    reported since it breaks the monotone-improvement guarantee for that
    round.
    """
    wn = _normalized(w, data.n)
    k = spec.k
    if isinstance(init, MixtureParams):
        ll = component_log_densities(init, data.points)
        z = np.argmax(ll, axis=1)
        components = list(init.components)
    else:
        z = np.asarray(init, dtype=int).ravel().copy()
        if z.shape[0] != data.n or z.min() < 0 or z.max() >= k:
            raise ValueError("init assignments must be labels in [0, k)")
        components = [None] * k

    reseeded = False
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        # (a) component updates on assigned observations
        for j in range(k):
            mask = z == j
            if mask.any() and wn[mask].sum() > 0:
                w_sub = np.where(mask, wn, 0.0)
                components[j] = _fit_component(spec, data, w_sub)

        ll = np.full((data.n, k), -np.inf)
        fitted = [j for j in range(k) if components[j] is not None]
        if len(fitted) < k:
            # unfitted components grab the worst-explained points
            part = MixtureParams(
                weights=np.ones(len(fitted)) / len(fitted),
                components=tuple(components[j] for j in fitted),
            )
            ll_part = component_log_densities(part, data.points)
            order = np.argsort(np.max(ll_part, axis=1))
            missing = [j for j in range(k) if components[j] is None]
            for rank, j in enumerate(missing):
                i_star = order[rank % data.n]
                one = np.zeros(data.n)
                one[i_star] = 1.0
                components[j] = _fit_component(spec, data, one)
                z[i_star] = j
            reseeded = True

        mix = MixtureParams(
            weights=np.ones(k) / k, components=tuple(components)
        )
        ll = component_log_densities(mix, data.points)

        # (b) hard reassignment
        z_new = np.argmax(ll, axis=1)
        empty = [j for j in range(k) if not np.any(z_new == j) or wn[z_new == j].sum() <= 0]
        if empty:
            # reseed empty clusters at the worst-explained distinct points
            reseeded = True
            order = np.argsort(np.max(ll, axis=1))
            for rank, j in enumerate(empty):
                i_star = order[rank % data.n]
                z_new[i_star] = j
                one = np.zeros(data.n)
                one[i_star] = 1.0
                components[j] = _fit_component(spec, data, one)
        if np.array_equal(z_new, z):
            converged = True
            break
        z = z_new

    pis = np.array([wn[z == j].sum() for j in range(k)])
    total = pis.sum()
    pis = pis / total if total > 0 else np.ones(k) / k
    params = MixtureParams(
        weights=pis, components=tuple(components), assignments=z.copy()
    )
    return HardEmResult(
        params=params, rounds=rounds, reseeded=reseeded, converged=converged
    )
