"""Single-component robust fitting by iteratively reweighted least squares.

The fixed point of the iteration solves the density-power estimating
equations: observations are weighted by ``exp(-beta/2 * mahalanobis_sq)``,
so distant points contribute almost nothing for beta > 0, and the
covariance denominator carries the model-integral correction
``n * beta / (1 + beta)**(p/2 + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDenominatorError, NotPositiveDefiniteError
from .gaussian import (
    LOG_2PI,
    GaussianComponent,
    as_data_matrix,
    log_density,
    mahalanobis_sq,
)


@dataclass
class IrlsConfig:
    """Convergence controls for the reweighted iteration.

    ``min_denominator`` is a unitless guard: the covariance denominator must
    exceed ``min_denominator * n``, and it also scales the eigenvalue floor
    used when an iterate degenerates (all-constant data).
    """

    epsilon: float = 1e-6
    max_iter: int = 500
    min_denominator: float = 1e-8

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.min_denominator <= 0:
            raise ValueError("min_denominator must be positive")


@dataclass
class ComponentFit:
    """Result of :func:`fit_component`."""

    estimate: GaussianComponent
    iterations: int
    converged: bool
    final_weights: np.ndarray
    init_floored: bool = False


def _floored_component(mean: np.ndarray, cov: np.ndarray, floor: float) -> tuple[GaussianComponent, bool]:
    """Build a component, flooring eigenvalues at ``floor`` when needed."""
    cov = 0.5 * (cov + cov.T)
    try:
        return GaussianComponent(mean, cov), False
    except NotPositiveDefiniteError:
        vals, vecs = np.linalg.eigh(cov)
        vals = np.maximum(vals, floor)
        fixed = (vecs * vals) @ vecs.T
        return GaussianComponent(mean, 0.5 * (fixed + fixed.T)), True


def robust_init(data, min_denominator: float = 1e-8) -> tuple[GaussianComponent, bool]:
    """Median-based starting point for the reweighted iteration.

    The mean starts at the componentwise medians. The covariance starts at
    1.4826**2 times the entrywise medians of the centered cross products, a
    multivariate analogue of the median absolute deviation. Eigenvalues are
    floored at ``min_denominator * trace`` (with a tiny absolute fallback
    when a coordinate is entirely constant) so the result is always usable.

    Returns
    -------
    (GaussianComponent, bool)
        The starting component and whether any eigenvalue had to be floored.
    """
    data = as_data_matrix(data)
    n, p = data.shape
    if n < 2:
        raise ValueError("robust initialization needs at least two observations")
    center = np.median(data, axis=0)
    dev = data - center
    cov = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            cov[i, j] = cov[j, i] = np.median(dev[:, i] * dev[:, j])
    cov *= 1.4826**2
    floor = max(min_denominator * max(np.trace(cov), 0.0), 1e-12)
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    floored = bool(vals.min() < floor)
    vals = np.maximum(vals, floor)
    rebuilt = (vecs * vals) @ vecs.T
    return GaussianComponent(center, 0.5 * (rebuilt + rebuilt.T)), floored


def irls_weights(data, comp: GaussianComponent, beta: float) -> np.ndarray:
    """Observation weights ``exp(-beta/2 * mahalanobis_sq)``, each in (0, 1]."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    data = as_data_matrix(data)
    return np.exp(-0.5 * beta * mahalanobis_sq(data, comp))


def irls_step(data, comp: GaussianComponent, beta: float, cfg: IrlsConfig) -> GaussianComponent:
    """One update of the reweighted iteration.

    The mean becomes the weighted average; the covariance is the weighted
    scatter about the new mean divided by ``sum(w) - n*beta/(1+beta)**(p/2+1)``.
    Raises :class:`NonPositiveDenominatorError` when that denominator falls
    below ``min_denominator * n``, which signals a cluster too small for the
    requested downweighting; callers keep the previous estimate in that case.
    """
    data = as_data_matrix(data)
    n, p = data.shape
    w = irls_weights(data, comp, beta)
    denom = w.sum() - n * beta / (1.0 + beta) ** (0.5 * p + 1.0)
    if denom <= cfg.min_denominator * n:
        raise NonPositiveDenominatorError(
            f"covariance denominator {denom:.3e} below guard {cfg.min_denominator * n:.3e}"
        )
    mean = (w @ data) / w.sum()
    centered = data - mean
    cov = (w[:, None] * centered).T @ centered / denom
    # Degenerate clusters (identical points) produce a zero scatter matrix;
    # floor minimally so the next weight evaluation stays defined.
    new, _ = _floored_component(mean, cov, max(1e-12 * max(np.trace(cov), 0.0), 1e-12))
    return new


def fit_component(data, beta: float, cfg: IrlsConfig | None = None,
                  init: GaussianComponent | None = None) -> ComponentFit:
    """Fit one normal component by the reweighted iteration.

    Starts from :func:`robust_init` (or ``init`` when warm-starting) and
    iterates until both the Euclidean mean delta and Frobenius covariance
    delta drop to ``cfg.epsilon``, or ``cfg.max_iter`` is reached.
    Non-convergence is reported through ``converged=False``, not an error.

    A denominator-guard failure on the very first step propagates (the
    start is already too downweighted to move); tripping later stops the
    iteration and keeps the last valid iterate, again with
    ``converged=False``.
    """
    cfg = cfg or IrlsConfig()
    data = as_data_matrix(data)
    if data.shape[0] < 2:
        raise ValueError("covariance fitting needs at least two observations")
    if init is None:
        comp, floored = robust_init(data, cfg.min_denominator)
    else:
        comp, floored = init, False
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        try:
            new = irls_step(data, comp, beta, cfg)
        except NonPositiveDenominatorError:
            if iterations == 1:
                raise
            iterations -= 1
            break
        delta_mean = float(np.linalg.norm(new.mean - comp.mean))
        delta_cov = float(np.linalg.norm(new.cov - comp.cov))
        comp = new
        if delta_mean <= cfg.epsilon and delta_cov <= cfg.epsilon:
            converged = True
            break
    return ComponentFit(
        estimate=comp,
        iterations=iterations,
        converged=converged,
        final_weights=irls_weights(data, comp, beta),
        init_floored=floored,
    )


def estimating_equation_residual(data, comp: GaussianComponent, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of the two density-power estimating equations.

    Returns the left-hand sides of

    ``mean_i phi^beta(X_i) (X_i - mean) = 0`` and
    ``mean_i phi^beta(X_i) (cov - S_i) = c0 * cov``,

    with ``S_i`` the centered outer products and
    ``c0 = beta (2*pi)**(-p*beta/2) det(cov)**(-beta/2) (1+beta)**(-(p+2)/2)``.
    Both residuals vanish at any fixed point of :func:`irls_step`.
    """
    data = as_data_matrix(data)
    n, p = data.shape
    phi_beta = np.exp(beta * log_density(data, comp))
    centered = data - comp.mean
    vec = (phi_beta[:, None] * centered).mean(axis=0)
    scatter = np.einsum("n,ni,nj->ij", phi_beta, centered, centered) / n
    c0 = beta * np.exp(-0.5 * beta * (p * LOG_2PI + comp.log_det)
                       - 0.5 * (p + 2) * np.log1p(beta))
    mat = phi_beta.mean() * comp.cov - scatter - c0 * comp.cov
    return vec, mat
