"""Consensus ADMM solvers for the inner weight problem.

Given per-observation log-densities log p(x_i) under a fixed model, the
weight step minimises

    sum_i w_i log(w_i a_i)      (a_i = n_i / p(x_i), n_i = multiplicity)

over probability vectors w constrained to a total-variation ball of radius
epsilon around the uniform weights o = (1/n, ..., 1/n).  The objective
splits into three terms with cheap proximal operators:

    f1(w) = sum_i w_i log(w_i a_i)          (entropy prox)
    f2(w) = indicator{w on the simplex}     (simplex projection)
    f3(w) = indicator{||w - o||_1 <= 2 eps} (l1-ball projection)

and consensus ADMM alternates the three prox maps with an averaging step.
The kernelized variant optimises over pre-weights v with w = A v for a
row-stochastic smoothing matrix A; its averaging step needs one linear
solve per iteration, performed through a single cached SVD of A.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import LOG_DENSITY_FLOOR, WeightVector
from .prox import ProxKlCoeffs, project_l1_ball, project_simplex, prox_entropy


@dataclass(frozen=True)
class AdmmConfig:
    """Solver settings for the consensus iterations.

    Residual norms are scaled by sqrt(n) before comparison with the
    tolerances.  Penalties lambda_i self-adapt by adapt_factor whenever a
    block's residuals are out of balance by more than adapt_ratio, and
    adaptation stops at adapt_freeze_iter so the iteration eventually runs
    with fixed penalties.
    """

    max_iters: int = 2000
    primal_tol: float = 1e-7
    dual_tol: float = 1e-7
    lambdas_init: tuple = (1.0, 1.0, 1.0)
    adaptive: bool = True
    adapt_ratio: float = 10.0
    adapt_factor: float = 2.0
    adapt_freeze_iter: int = 1000

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if min(self.primal_tol, self.dual_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if len(self.lambdas_init) != 3 or min(self.lambdas_init) <= 0:
            raise ValueError("lambdas_init must be three positive penalties")
        if self.adapt_ratio <= 1.0 or self.adapt_factor <= 1.0:
            raise ValueError("adapt_ratio and adapt_factor must exceed 1")


@dataclass
class AdmmState:
    """Internal iterates kept between solves for warm starting."""

    z: np.ndarray
    ys: list
    lambdas: list


@dataclass
class OklResult:
    """Weight-step solution: optimal value, weights and solver diagnostics."""

    value: float
    weights: WeightVector
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    v: Optional[np.ndarray] = None  # kernel pre-weights (kernelized solves)
    state: Optional[AdmmState] = None


_LAMBDA_MIN, _LAMBDA_MAX = 1e-8, 1e8


def kl_objective(w: np.ndarray, log_a: np.ndarray) -> float:
    """sum_i w_i (log w_i + log a_i) with the 0 log 0 = 0 convention."""
    w = np.asarray(w, dtype=float)
    pos = w > 0
    terms = w[pos] * (np.log(w[pos]) + log_a[pos])
    return float(terms.sum())


def _uniform_value(log_a: np.ndarray) -> float:
    n = log_a.shape[0]
    return float(np.sum((log_a - np.log(n)) / n))


def _dykstra_polish(
    w: np.ndarray, o: np.ndarray, radius: float, max_rounds: int = 2000
) -> np.ndarray:
    """Project w onto {simplex} intersect {||. - o||_1 <= radius}.

    Dykstra's alternating projections with correction terms; both sets are
    closed convex so the iterates converge to the exact projection.  The
    returned point is always an exact simplex-projection output, accepted
    once its ball violation is below float noise; if the round budget runs
    out first (shallow intersection angles), the iterate is contracted
    toward the ball center, which preserves simplex membership exactly and
    lands on the ball boundary, so feasibility never depends on the budget.
    """
    x = w.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    ys = x
    for _ in range(max_rounds):
        ys = project_simplex(x + p)
        p = x + p - ys
        if np.abs(ys - o).sum() <= radius + 1e-12:
            return ys
        x_new = project_l1_ball(ys + q, o, radius)
        q = ys + q - x_new
        x = x_new
    t = radius / float(np.abs(ys - o).sum())
    return o + t * (ys - o)


def _symmetrize_groups(w: np.ndarray, group_key: np.ndarray) -> np.ndarray:
    """Average w within groups of identical key rows.

    Observations with identical coefficients are exchangeable in the
    objective, which is convex, so averaging can only improve the iterate
    while preserving both constraint sets.
    """
    _, inv = np.unique(group_key, axis=0, return_inverse=True)
    inv = inv.ravel()
    sums = np.bincount(inv, weights=w)
    cnt = np.bincount(inv)
    return (sums / cnt)[inv]


def _solve_weights(
    log_a: np.ndarray,
    epsilon: float,
    cfg: AdmmConfig,
    warm: Optional[AdmmState] = None,
) -> OklResult:
    """Consensus ADMM on f1 + f2 + f3 in the observation space."""
    n = log_a.shape[0]
    o = np.full(n, 1.0 / n)
    coeffs = ProxKlCoeffs(log_a=log_a)

    if epsilon == 0.0:
        wv = WeightVector(o, epsilon=0.0)
        return OklResult(
            value=_uniform_value(log_a),
            weights=wv,
            iterations=0,
            primal_residual=0.0,
            dual_residual=0.0,
            converged=True,
        )

    # Beyond (n-1)/n the ball contains the whole simplex; drop f3.
    use_ball = epsilon < (n - 1) / n
    blocks = [0, 1, 2] if use_ball else [0, 1]
    radius = 2.0 * epsilon

    if warm is not None and warm.z.shape[0] == n:
        z = warm.z.copy()
        ys = [y.copy() for y in warm.ys]
        lambdas = list(warm.lambdas)
    else:
        z = o.copy()
        ys = [np.zeros(n) for _ in range(3)]
        lambdas = list(cfg.lambdas_init)

    ws = [z.copy() for _ in range(3)]
    rt_n = float(np.sqrt(n))
    primal = dual = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        for i in blocks:
            u = z + lambdas[i] * ys[i]
            if i == 0:
                ws[i] = prox_entropy(u, lambdas[i], coeffs)
            elif i == 1:
                ws[i] = project_simplex(u)
            else:
                ws[i] = project_l1_ball(u, o, radius)

        inv_sum = sum(1.0 / lambdas[i] for i in blocks)
        z_new = sum(ws[i] / lambdas[i] - ys[i] for i in blocks) / inv_sum

        primal_b = []
        dual_b = []
        dz = z_new - z
        for i in blocks:
            ys[i] = ys[i] + (z_new - ws[i]) / lambdas[i]
            primal_b.append(float(np.linalg.norm(z_new - ws[i])))
            dual_b.append(float(np.linalg.norm(dz / lambdas[i])))
        z = z_new

        primal = float(np.sqrt(np.sum(np.square(primal_b))))
        dual = float(np.sqrt(np.sum(np.square(dual_b))))
        if primal <= cfg.primal_tol * rt_n and dual <= cfg.dual_tol * rt_n:
            converged = True
            break

        if cfg.adaptive and it <= cfg.adapt_freeze_iter:
            for j, i in enumerate(blocks):
                if dual_b[j] > cfg.adapt_ratio * primal_b[j]:
                    lambdas[i] = min(lambdas[i] * cfg.adapt_factor, _LAMBDA_MAX)
                elif primal_b[j] > cfg.adapt_ratio * dual_b[j]:
                    lambdas[i] = max(lambdas[i] / cfg.adapt_factor, _LAMBDA_MIN)

    w = _symmetrize_groups(ws[1], np.column_stack([log_a]))
    w = _dykstra_polish(w, o, radius) if use_ball else project_simplex(w)
    wv = WeightVector(w, epsilon=float(epsilon))
    return OklResult(
        value=kl_objective(w, log_a),
        weights=wv,
        iterations=it,
        primal_residual=primal,
        dual_residual=dual,
        converged=converged,
        state=AdmmState(z=z, ys=ys, lambdas=lambdas),
    )


def i_projection(
    logp: np.ndarray,
    counts: np.ndarray,
    epsilon: float,
    cfg: Optional[AdmmConfig] = None,
    warm: Optional[AdmmState] = None,
) -> OklResult:
    """Minimise sum_i w_i log(w_i n_i / p(x_i)) over the constrained weights.

    Parameters
    ----------
    logp : ndarray, shape (n,)
        Per-observation log-densities log p(x_i) under the fixed model.
    counts : ndarray, shape (n,)
        Row multiplicities n_i (all ones for continuous data).
    epsilon : float
        Total-variation budget around uniform weights.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    cfg = cfg or AdmmConfig()
    logp = np.maximum(np.asarray(logp, dtype=float).ravel(), LOG_DENSITY_FLOOR)
    counts = np.asarray(counts, dtype=float).ravel()
    if counts.shape != logp.shape or np.any(counts < 1):
        raise ValueError("counts must align with logp and be >= 1")
    log_a = np.log(counts) - logp
    return _solve_weights(log_a, float(epsilon), cfg, warm)


def i_projection_conditional(
    loglik: np.ndarray,
    epsilon: float,
    cfg: Optional[AdmmConfig] = None,
    warm: Optional[AdmmState] = None,
) -> OklResult:
    """Weight step for conditional models (regression) and mixtures.

    Identical machinery with a_i = 1 / p(y_i | x_i): the empirical-density
    and multiplicity factors drop because each observation carries its own
    likelihood factor.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    cfg = cfg or AdmmConfig()
    loglik = np.maximum(np.asarray(loglik, dtype=float).ravel(), LOG_DENSITY_FLOOR)
    return _solve_weights(-loglik, float(epsilon), cfg, warm)


class KernelOperator:
    """Row-stochastic smoothing matrix A with cached SVD.

    Built from a raw kernel matrix K: s_i = sum_j K_ij are the unnormalised
    kernel density values (n times the KDE at x_i) and A = K / s rowwise.
    The SVD is computed once and reused by every averaging step.
    """

    def __init__(self, A: np.ndarray, s: np.ndarray):
        self.A = np.asarray(A, dtype=float)
        self.s = np.asarray(s, dtype=float).ravel()
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.s.shape[0] != n:
            raise ValueError("A must be square and aligned with s")
        if np.any(self.s <= 0):
            raise ValueError("row sums must be positive")
        U, sig, Vt = np.linalg.svd(self.A)
        self._sig2 = sig**2
        self._V = Vt.T

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_kernel_matrix(cls, K: np.ndarray) -> "KernelOperator":
        K = np.asarray(K, dtype=float)
        s = K.sum(axis=1)
        return cls(K / s[:, None], s)

    @classmethod
    def indicator(cls, counts: np.ndarray) -> "KernelOperator":
        """Hard-assignment kernel: A = I and s_i = n_i."""
        counts = np.asarray(counts, dtype=float).ravel()
        return cls(np.eye(counts.shape[0]), counts)

    def solve_weighted_gram(
        self, rhs: np.ndarray, beta_a: float, beta_i: float
    ) -> np.ndarray:
        """Solve (beta_i I + beta_a A^T A) z = rhs via the cached SVD."""
        coef = 1.0 / (beta_i + beta_a * self._sig2)
        return self._V @ (coef * (self._V.T @ rhs))


def gaussian_kernel_matrix(points: np.ndarray, bandwidth: float) -> np.ndarray:
    """K_ij = (sqrt(2 pi) h)^-d exp(-||x_i - x_j||^2 / (2 h^2))."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = x.shape
    sq = np.sum(x**2, axis=1)
    dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
    norm = (np.sqrt(2.0 * np.pi) * bandwidth) ** (-d)
    return norm * np.exp(-dist2 / (2.0 * bandwidth**2))


def i_projection_kernelized(
    logp: np.ndarray,
    kernel: KernelOperator,
    epsilon: float,
    cfg: Optional[AdmmConfig] = None,
    warm: Optional[AdmmState] = None,
) -> OklResult:
    """Kernel-smoothed weight step: minimise over v on the simplex

        sum_i (A v)_i log((A v)_i s_i / p(x_i))   s.t. ||A v - o||_1 <= 2 eps.

    Blocks f1 and f3 act on w = A v while f2 keeps v itself on the simplex,
    so the averaging step solves (b2 I + (b1 + b3) A^T A) z = rhs through
    the operator's cached SVD.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    cfg = cfg or AdmmConfig()
    logp = np.maximum(np.asarray(logp, dtype=float).ravel(), LOG_DENSITY_FLOOR)
    n = logp.shape[0]
    if kernel.n != n:
        raise ValueError("kernel size does not match logp")
    log_a = np.log(kernel.s) - logp
    coeffs = ProxKlCoeffs(log_a=log_a)
    o = np.full(n, 1.0 / n)

    if epsilon == 0.0 and np.allclose(kernel.A, np.eye(n)):
        wv = WeightVector(o, epsilon=0.0)
        return OklResult(
            value=kl_objective(o, log_a),
            weights=wv,
            iterations=0,
            primal_residual=0.0,
            dual_residual=0.0,
            converged=True,
            v=o.copy(),
        )

    use_ball = epsilon < (n - 1) / n
    blocks = [0, 1, 2] if use_ball else [0, 1]
    radius = 2.0 * epsilon
    A = kernel.A

    if warm is not None and warm.z.shape[0] == n:
        z = warm.z.copy()
        ys = [y.copy() for y in warm.ys]
        lambdas = list(warm.lambdas)
    else:
        z = o.copy()
        ys = [np.zeros(n) for _ in range(3)]
        lambdas = list(cfg.lambdas_init)

    ws = [z.copy() for _ in range(3)]
    rt_n = float(np.sqrt(n))
    primal = dual = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        Az = A @ z
        for i in blocks:
            Mz = z if i == 1 else Az
            u = Mz + lambdas[i] * ys[i]
            if i == 0:
                ws[i] = prox_entropy(u, lambdas[i], coeffs)
            elif i == 1:
                ws[i] = project_simplex(u)
            else:
                ws[i] = project_l1_ball(u, o, radius)

        rhs = np.zeros(n)
        beta_a = beta_i = 0.0
        for i in blocks:
            g = ws[i] / lambdas[i] - ys[i]
            if i == 1:
                rhs += g
                beta_i += 1.0 / lambdas[i]
            else:
                rhs += A.T @ g
                beta_a += 1.0 / lambdas[i]
        z_new = kernel.solve_weighted_gram(rhs, beta_a, beta_i)

        dz = z_new - z
        Adz = A @ dz
        Az_new = A @ z_new
        primal_b = []
        dual_b = []
        for i in blocks:
            Mz = z_new if i == 1 else Az_new
            Mdz = dz if i == 1 else A.T @ Adz
            ys[i] = ys[i] + (Mz - ws[i]) / lambdas[i]
            primal_b.append(float(np.linalg.norm(Mz - ws[i])))
            dual_b.append(float(np.linalg.norm(Mdz / lambdas[i])))
        z = z_new

        primal = float(np.sqrt(np.sum(np.square(primal_b))))
        dual = float(np.sqrt(np.sum(np.square(dual_b))))
        if primal <= cfg.primal_tol * rt_n and dual <= cfg.dual_tol * rt_n:
            converged = True
            break

        if cfg.adaptive and it <= cfg.adapt_freeze_iter:
            for j, i in enumerate(blocks):
                if dual_b[j] > cfg.adapt_ratio * primal_b[j]:
                    lambdas[i] = min(lambdas[i] * cfg.adapt_factor, _LAMBDA_MAX)
                elif primal_b[j] > cfg.adapt_ratio * dual_b[j]:
                    lambdas[i] = max(lambdas[i] / cfg.adapt_factor, _LAMBDA_MIN)

    v = project_simplex(z)
    w = A @ v
    wv = WeightVector(np.maximum(w, 0.0), epsilon=float(epsilon), mass=float(w.sum()))
    return OklResult(
        value=kl_objective(w, log_a),
        weights=wv,
        iterations=it,
        primal_residual=primal,
        dual_residual=dual,
        converged=converged,
        v=v,
        state=AdmmState(z=z, ys=ys, lambdas=lambdas),
    )
