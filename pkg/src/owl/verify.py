"""Independent checks: grid-search OKL, coarsened-likelihood Monte Carlo,
and stationarity residuals of fitted parameters.

These routines deliberately avoid the solver machinery (no ADMM, no
proximal operators) so they can serve as ground truth in tests and in the
`verify` CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import models
from .core import (
    BERNOULLI_MIXTURE,
    GAUSSIAN,
    GAUSSIAN_MIXTURE,
    LINEAR_REGRESSION,
    LOGISTIC_REGRESSION,
    BernoulliParams,
    Dataset,
    GaussianParams,
    LinearParams,
    LogisticParams,
    MixtureParams,
    ModelParams,
    ModelSpec,
    WeightVector,
    component_log_densities,
)

#: chunk size for vectorised grid enumeration
_CHUNK = 1 << 18
#: grids larger than this per stage trigger coarse-to-fine refinement
_STAGE_BUDGET = 1 << 21


def _kl_terms(q: np.ndarray, logp: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = q * (np.log(q) - logp)
    return np.where(q > 0, t, 0.0)


def _grid_pass(
    anchor: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    r: float,
    p_hat: np.ndarray,
    logp: np.ndarray,
    epsilon: float,
) -> tuple:
    """Exhaustive search on the lattice anchor + r * Z within [lo, hi].

    The last coordinate is implied by the simplex constraint, so the
    lattice automatically sums to one; candidates outside the
    total-variation ball or the last coordinate's bounds are discarded.
    """
    m = anchor.shape[0]
    lo_steps = np.ceil((lo - anchor) / r - 1e-12).astype(int)
    hi_steps = np.floor((hi - anchor) / r + 1e-12).astype(int)
    axes = [np.arange(lo_steps[i], hi_steps[i] + 1) for i in range(m - 1)]
    shape = [len(ax) for ax in axes]
    total = int(np.prod(shape)) if shape else 1

    best_val = np.inf
    best_q: Optional[np.ndarray] = None
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        flat = np.arange(start, stop)
        steps = np.empty((stop - start, m), dtype=float)
        rem = flat
        for i in range(m - 2, -1, -1):
            rem, k = np.divmod(rem, shape[i])
            steps[:, i] = axes[i][k]
        steps[:, m - 1] = -steps[:, : m - 1].sum(axis=1)
        q = anchor + r * steps
        ok = (q[:, m - 1] >= lo[m - 1] - 1e-12) & (q[:, m - 1] <= hi[m - 1] + 1e-12)
        ok &= 0.5 * np.abs(q - p_hat).sum(axis=1) <= epsilon + 1e-12
        if not ok.any():
            continue
        q = np.maximum(q[ok], 0.0)
        vals = _kl_terms(q, logp).sum(axis=1)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_q = q[j]
    return best_val, best_q


def okl_bruteforce(
    p_hat: np.ndarray,
    p_theta: np.ndarray,
    epsilon: float,
    resolution: float = 1e-3,
) -> tuple:
    """min KL(q | p_theta) over the total-variation ball, by grid search.

    Searches the lattice of spacing `resolution` anchored at p_hat,
    restricted to {q >= 0, sum q = 1, 0.5 ||q - p_hat||_1 <= epsilon}.
    When that lattice is too large to enumerate directly, a coarse pass
    (power-of-two multiple of the resolution) localises the optimum of the
    convex objective and successively finer passes shrink the box around
    the incumbent, ending at the requested resolution.

    Returns (value, q).  Intended for small supports (up to ~5 atoms).
    """
    p_hat = np.asarray(p_hat, dtype=float).ravel()
    p_theta = np.asarray(p_theta, dtype=float).ravel()
    if p_hat.shape != p_theta.shape:
        raise ValueError("distributions must share a support")
    if np.any(p_theta <= 0):
        raise ValueError("p_theta must be strictly positive")
    if abs(p_hat.sum() - 1.0) > 1e-9 or np.any(p_hat < 0):
        raise ValueError("p_hat must be a probability vector")
    if epsilon < 0 or resolution <= 0:
        raise ValueError("epsilon must be >= 0 and resolution > 0")
    m = p_hat.shape[0]
    logp = np.log(p_theta)
    if m == 1:
        return 0.0, np.array([1.0])
    if epsilon == 0.0:
        return float(_kl_terms(p_hat, logp).sum()), p_hat.copy()

    # the ball implies |q_i - p_hat_i| <= epsilon coordinatewise
    lo_g = np.maximum(p_hat - epsilon, 0.0)
    hi_g = np.minimum(p_hat + epsilon, 1.0)

    counts = np.maximum((hi_g - lo_g) / resolution, 1.0)
    r = resolution
    doublings = 0
    while np.prod(counts[: m - 1] / 2**doublings + 1) > _STAGE_BUDGET:
        doublings += 1
    r = resolution * 2**doublings

    anchor = p_hat.copy()
    lo, hi = lo_g, hi_g
    best_val, best_q = np.inf, None
    while True:
        val, q = _grid_pass(anchor, lo, hi, r, p_hat, logp, epsilon)
        if q is not None and val < best_val:
            best_val, best_q = val, q
        if r <= resolution * (1 + 1e-9):
            break
        r /= 2.0
        center = best_q if best_q is not None else p_hat
        lo = np.maximum(center - 12.0 * r, lo_g)
        hi = np.minimum(center + 12.0 * r, hi_g)
        anchor = center
    return best_val, best_q


@dataclass
class McEstimate:
    """Monte Carlo estimate of (1/n) log P(empirical TV distance <= eps)."""

    log_lik_rate: float
    stderr: float
    hits: int
    reps: int
    zero_hits: bool


def coarsened_likelihood_mc(
    p_theta: np.ndarray,
    x_data: np.ndarray,
    epsilon: float,
    reps: int = 100_000,
    seed: int = 0,
) -> McEstimate:
    """Estimate the per-observation log coarsened likelihood by simulation.

    Draws `reps` synthetic samples of size n from p_theta and counts how
    often their empirical distribution lands within total-variation
    epsilon of the empirical distribution of `x_data` (integer labels into
    the support of p_theta).  The standard error is the binomial error of
    the hit fraction propagated through log(p)/n; zero hits give -inf with
    the zero_hits flag set.
    """
    p_theta = np.asarray(p_theta, dtype=float).ravel()
    x = np.asarray(x_data, dtype=int).ravel()
    m = p_theta.shape[0]
    if np.any(p_theta < 0) or abs(p_theta.sum() - 1.0) > 1e-9:
        raise ValueError("p_theta must be a probability vector")
    if x.min() < 0 or x.max() >= m:
        raise ValueError("x_data must index the support of p_theta")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    n = x.shape[0]
    p_hat = np.bincount(x, minlength=m) / n

    rng = np.random.default_rng(seed)
    draws = rng.multinomial(n, p_theta, size=int(reps))
    tv = 0.5 * np.abs(draws / n - p_hat).sum(axis=1)
    hits = int(np.sum(tv <= epsilon + 1e-12))
    if hits == 0:
        return McEstimate(
            log_lik_rate=-np.inf, stderr=np.nan, hits=0, reps=int(reps), zero_hits=True
        )
    frac = hits / reps
    se_frac = np.sqrt(frac * (1.0 - frac) / reps)
    return McEstimate(
        log_lik_rate=float(np.log(frac) / n),
        stderr=float(se_frac / (frac * n)),
        hits=hits,
        reps=int(reps),
        zero_hits=False,
    )


def check_gradient_condition(
    spec: ModelSpec,
    params: ModelParams,
    data: Dataset,
    w: Union[WeightVector, np.ndarray],
) -> float:
    """Norm of the weighted-likelihood stationarity residual at `params`.

    Exponential families are checked through their moment conditions
    (weighted sufficient statistics equal fitted moments); regressions
    through the gradient of the weighted log-likelihood.  A correct fit
    returns ~0 unless a clamp (covariance floor, probability clip) was
    active.
    """
    warr = w.w if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    wn = warr / warr.sum()
    x = data.points
    if spec.family == GAUSSIAN:
        mu = wn @ x
        diff = x - mu
        cov = (diff * wn[:, None]).T @ diff
        return float(
            np.linalg.norm(mu - params.mean)
            + np.linalg.norm(cov - params.cov)
        )
    if spec.family == BERNOULLI_MIXTURE and isinstance(params, BernoulliParams):
        return float(np.linalg.norm(wn @ x - params.probs, ord=np.inf))
    if spec.family == LINEAR_REGRESSION:
        xa = np.column_stack([np.ones(data.n), x])
        theta = np.concatenate([[params.intercept], params.beta])
        resid = data.response - xa @ theta
        pen = np.concatenate([[0.0], spec.ridge * params.beta])
        grad_beta = xa.T @ (wn * resid) - pen
        sig_resid = wn @ resid**2 - params.sigma**2
        return float(np.linalg.norm(grad_beta) + abs(sig_resid))
    if spec.family == LOGISTIC_REGRESSION:
        xa = np.column_stack([np.ones(data.n), x])
        theta = np.concatenate([[params.intercept], params.beta])
        p = 1.0 / (1.0 + np.exp(-(xa @ theta)))
        pen = np.concatenate([[0.0], spec.ridge * params.beta])
        grad = xa.T @ (wn * (p - data.response)) + pen
        return float(np.linalg.norm(grad))
    if isinstance(params, MixtureParams):
        if params.assignments is None:
            raise ValueError("mixture check requires hard assignments")
        z = params.assignments
        res = 0.0
        for j, comp in enumerate(params.components):
            mask = z == j
            if not mask.any() or wn[mask].sum() <= 0:
                continue
            wj = np.where(mask, wn, 0.0)
            sub_spec = ModelSpec(
                spec.family, k=1, ridge=spec.ridge, cov_type=spec.cov_type
            )
            if isinstance(comp, GaussianParams):
                wjn = wj / wj.sum()
                mu = wjn @ x
                diff = x - mu
                if spec.cov_type == "spherical":
                    var = float(wjn @ np.sum(diff**2, axis=1)) / data.dim
                    cov = var * np.eye(data.dim)
                elif spec.cov_type == "diagonal":
                    cov = np.diag(wjn @ diff**2)
                else:
                    cov = (diff * wjn[:, None]).T @ diff
                res += float(
                    np.linalg.norm(mu - comp.mean) + np.linalg.norm(cov - comp.cov)
                )
            else:
                wjn = wj / wj.sum()
                res += float(np.linalg.norm(wjn @ x - comp.probs, ord=np.inf))
        pis = np.array([wn[z == j].sum() for j in range(spec.k)])
        res += float(np.linalg.norm(pis / pis.sum() - params.weights))
        return res
    raise ValueError(f"unsupported family {spec.family!r}")
