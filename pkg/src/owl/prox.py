"""Proximal operators and projections used by the consensus solver.

Three pieces: Euclidean projection onto a (scaled) probability simplex,
Euclidean projection onto an l1 ball around an arbitrary centre, and the
proximal operator of the entropy-like term  sum_i z_i log(z_i a_i).

All three are exact up to floating point; the entropy prox solves its
scalar stationarity condition with safeguarded Newton iterations in the
log domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def project_simplex(v: np.ndarray, mass: float = 1.0) -> np.ndarray:
    """Euclidean projection of v onto {w : w >= 0, sum(w) = mass}.

    Sort-based O(n log n) algorithm: find the largest support size rho such
    that shifting the top rho entries by a common offset keeps them
    positive, then clip.
    """
    if mass < 0:
        raise ValueError("mass must be nonnegative")
    v = np.asarray(v, dtype=float).ravel()
    n = v.shape[0]
    if n == 0:
        raise ValueError("cannot project an empty vector")
    if mass == 0.0:
        return np.zeros(n)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - mass
    ind = np.arange(1, n + 1)
    feasible = u * ind > css
    # mass > 0 makes the first prefix always feasible mathematically; float
    # absorption (u - mass == u for tiny mass) can hide that.
    feasible[0] = True
    rho = ind[feasible][-1]
    tau = css[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def project_l1_ball(v: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of v onto {w : ||w - center||_1 <= radius}.

    Points already inside the ball are returned unchanged.  Otherwise the
    shifted problem reduces to a simplex projection of the absolute
    deviations, with signs restored afterwards.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    v = np.asarray(v, dtype=float).ravel()
    center = np.asarray(center, dtype=float).ravel()
    d = v - center
    if np.abs(d).sum() <= radius:
        return v.copy()
    p = project_simplex(np.abs(d), mass=radius)
    return center + np.sign(d) * p


@dataclass(frozen=True)
class ProxKlCoeffs:
    """Per-coordinate coefficients a_i of  sum_i z_i log(z_i a_i).

    Stored in the log domain so that coefficients built from heavily
    floored densities (a_i up to exp(700) times a multiplicity) never
    overflow.
    """

    log_a: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "log_a", np.asarray(self.log_a, dtype=float).ravel()
        )
        if not np.all(np.isfinite(self.log_a)):
            raise ValueError("coefficients must be positive and finite")

    @classmethod
    def from_values(cls, a: np.ndarray) -> "ProxKlCoeffs":
        a = np.asarray(a, dtype=float).ravel()
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise ValueError("coefficients must be positive and finite")
        return cls(log_a=np.log(a))

    @property
    def a(self) -> np.ndarray:
        return np.exp(self.log_a)

    @property
    def n(self) -> int:
        return self.log_a.shape[0]


#: residual target for the entropy prox stationarity condition
PROX_RESIDUAL_TOL = 1e-12
_PROX_MAX_NEWTON = 64


def prox_entropy(x: np.ndarray, lam: float, coeffs: ProxKlCoeffs) -> np.ndarray:
    """prox of lam * sum_i z_i log(z_i a_i) at x, elementwise.

    Minimises z_i log(z_i a_i) + (z_i - x_i)^2 / (2 lam) over z_i > 0.  The
    stationarity condition

        lam * (log(z a) + 1) + z - x = 0

    becomes u + exp(u) = y after the substitution u = log(z / lam) with
    y = x / lam - log(a) - 1 - log(lam).  h(u) = u + exp(u) - y is convex
    and increasing, and both initial guesses below start on the h >= 0
    side, so Newton descends monotonically; a bisection safeguard keeps
    pathological steps inside a bracket.

    When the exact root lies below the smallest positive double (strongly
    negative y), the returned coordinate underflows to 0.0; downstream
    objectives use the 0*log 0 = 0 convention so that is the correct
    representable output.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    x = np.asarray(x, dtype=float).ravel()
    y = x / lam - coeffs.log_a - 1.0 - np.log(lam)

    u = np.where(y > 1.0, np.log(np.maximum(y, 1e-300)), y)
    lo = np.full_like(u, -np.inf)  # bracket: h(lo) < 0 <= h(u)
    for _ in range(_PROX_MAX_NEWTON):
        eu = np.exp(u)
        h = u + eu - y
        if np.max(np.abs(h)) * lam <= PROX_RESIDUAL_TOL:
            break
        step = h / (1.0 + eu)
        nxt = u - step
        # Newton keeps h >= 0 here, so u only decreases; anything that
        # jumps past the bracket floor falls back to bisection.
        bad = nxt <= lo
        if np.any(bad):
            nxt = np.where(bad, 0.5 * (u + lo), nxt)
        lo = np.where(h < 0, u, lo)
        if np.max(np.abs(nxt - u)) == 0.0:
            break
        u = nxt
    return lam * np.exp(u)


def prox_entropy_residual(
    z: np.ndarray, x: np.ndarray, lam: float, coeffs: ProxKlCoeffs
) -> np.ndarray:
    """Stationarity residual lam*(log(z a) + 1) + z - x, elementwise."""
    z = np.asarray(z, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    with np.errstate(divide="ignore"):
        return lam * (np.log(z) + coeffs.log_a + 1.0) + z - x
