"""Influence diagnostics for the two-component univariate functional.

The population version of the clustering objective, for one dimension and
two clusters whose discriminants cross at two points a < b (the narrow
component owning the interval), defines the parameter functional
implicitly through eight stationarity equations: the interval mass, the
weight identity, the two boundary crossings, and the four downweighted
moment equations of the two components. :func:`solve_functional` solves
that system by damped Newton with adaptive quadrature.

Differentiating the system under point-mass contamination at ``y`` yields
an 8x8 linear system ``A @ IF = B(y)`` whose matrix does not depend on the
contamination point; :func:`influence_at` solves it, and
:func:`numeric_if_oracle` cross-checks it by re-solving the functional
under explicit epsilon-contamination and extrapolating the difference
quotients. Influence vectors are ordered
``(pi1, pi2, a, b, mu1, mu2, var1, var2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .constraints import ConstraintConfig
from .errors import ConstraintBoundaryError, GeometryError, SolveError

LOG_2PI = float(np.log(2.0 * np.pi))

IF_COLUMNS = ("pi1", "pi2", "a", "b", "mu1", "mu2", "s1", "s2")

_QUAD_OPTS = dict(epsabs=1e-10, epsrel=1e-10, limit=200)


@dataclass(frozen=True)
class TrueDistribution:
    """Two-component univariate normal mixture used as the data law."""

    weights: tuple[float, float]
    means: tuple[float, float]
    variances: tuple[float, float]

    def __post_init__(self):
        if abs(self.weights[0] + self.weights[1] - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if min(self.variances) <= 0:
            raise ValueError("variances must be positive")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = 0.0
        for w, m, v in zip(self.weights, self.means, self.variances):
            out = out + w * np.exp(-0.5 * (x - m) ** 2 / v) / np.sqrt(2.0 * np.pi * v)
        return out

    def cdf(self, x):
        from scipy.stats import norm

        x = np.asarray(x, dtype=float)
        out = 0.0
        for w, m, v in zip(self.weights, self.means, self.variances):
            out = out + w * norm.cdf(x, loc=m, scale=np.sqrt(v))
        return out

    def support(self, spread: float = 12.0) -> tuple[float, float]:
        sds = np.sqrt(self.variances)
        lo = min(m - spread * s for m, s in zip(self.means, sds))
        hi = max(m + spread * s for m, s in zip(self.means, sds))
        return float(lo), float(hi)


@dataclass(frozen=True)
class FunctionalSolution:
    """Solved functional: weights, interval (a, b) and component moments."""

    pi1: float
    pi2: float
    a: float
    b: float
    mu1: float
    mu2: float
    var1: float
    var2: float
    beta: float
    residual_norm: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.pi1, self.pi2, self.a, self.b,
                         self.mu1, self.mu2, self.var1, self.var2])


@dataclass(frozen=True)
class _Measure:
    """(1 - eps) * dist + eps * point mass at y; eps = 0 gives plain dist."""

    dist: TrueDistribution
    atom_y: float = 0.0
    atom_eps: float = 0.0

    def mass_between(self, a: float, b: float) -> float:
        base = float(self.dist.cdf(b) - self.dist.cdf(a))
        if self.atom_eps == 0.0:
            return base
        return (1.0 - self.atom_eps) * base + self.atom_eps * float(a < self.atom_y < b)

    def integrate(self, fn, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        val, _ = quad(lambda x: fn(x) * self.dist.pdf(x), lo, hi, **_QUAD_OPTS)
        if self.atom_eps == 0.0:
            return float(val)
        atom = fn(self.atom_y) if lo < self.atom_y < hi else 0.0
        return float((1.0 - self.atom_eps) * val + self.atom_eps * atom)


def _f_pow_beta(x, mu: float, var: float, beta: float):
    return np.exp(beta * (-0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x - mu) ** 2 / var))


def _kappa(var: float, beta: float) -> float:
    # Derivative constant of the power-integral term of the objective.
    return beta * (2.0 * np.pi) ** (-0.5 * beta) * var ** (-0.5 * beta) * (1.0 + beta) ** -1.5


def _log_disc_gap(x: float, pi1: float, pi2: float, mu1: float, mu2: float,
                  var1: float, var2: float) -> float:
    d1 = np.log(pi1) - 0.5 * (LOG_2PI + np.log(var1)) - 0.5 * (x - mu1) ** 2 / var1
    d2 = np.log(pi2) - 0.5 * (LOG_2PI + np.log(var2)) - 0.5 * (x - mu2) ** 2 / var2
    return float(d1 - d2)


def _crossing_points(pi1: float, pi2: float, mu1: float, mu2: float,
                     var1: float, var2: float) -> tuple[float, float]:
    """Roots of the discriminant gap; requires the bounded-interval geometry.

    The gap is a quadratic in x; the component-1 region is a bounded
    interval exactly when the leading coefficient is negative (the first
    component strictly narrower) and two real roots exist.
    """
    qa = 0.5 * (1.0 / var2 - 1.0 / var1)
    qb = mu1 / var1 - mu2 / var2
    qc = (np.log(pi1 / pi2) - 0.5 * np.log(var1 / var2)
          - 0.5 * mu1**2 / var1 + 0.5 * mu2**2 / var2)
    if qa >= 0.0:
        raise GeometryError(
            "discriminant-gap quadratic is not concave: the first component "
            "region is unbounded (half-line or complement geometry)")
    disc = qb * qb - 4.0 * qa * qc
    if disc <= 0.0:
        raise GeometryError("discriminant gap has no real crossings")
    r1 = (-qb + np.sqrt(disc)) / (2.0 * qa)
    r2 = (-qb - np.sqrt(disc)) / (2.0 * qa)
    return (min(r1, r2), max(r1, r2))


def _system_residual(u: np.ndarray, measure: _Measure, beta: float) -> np.ndarray:
    """Residuals of the six free equations at u = (mu1, mu2, log v1, log v2, a, b).

    The two weight equations are eliminated: pi1 is the measure's mass on
    (a, b) and pi2 its complement.
    """
    mu1, mu2, lv1, lv2, a, b = u
    if not (a < b) or max(abs(lv1), abs(lv2)) > 50:
        return np.full(6, 1e6)
    v1, v2 = np.exp(lv1), np.exp(lv2)
    pi1 = measure.mass_between(a, b)
    pi2 = 1.0 - pi1
    if not (1e-12 < pi1 < 1.0 - 1e-12):
        return np.full(6, 1e6)
    lo, hi = measure.dist.support()
    lo = min(lo, a - 1.0)
    hi = max(hi, b + 1.0)

    def score1(x):
        return _f_pow_beta(x, mu1, v1, beta) * (x - mu1)

    def score2(x):
        return _f_pow_beta(x, mu2, v2, beta) * (x - mu2)

    def spread1(x):
        return _f_pow_beta(x, mu1, v1, beta) * ((x - mu1) ** 2 / v1 - 1.0)

    def spread2(x):
        return _f_pow_beta(x, mu2, v2, beta) * ((x - mu2) ** 2 / v2 - 1.0)

    inside = measure.integrate
    r3 = _log_disc_gap(a, pi1, pi2, mu1, mu2, v1, v2)
    r4 = _log_disc_gap(b, pi1, pi2, mu1, mu2, v1, v2)
    r5 = inside(score1, a, b)
    r6 = inside(score2, lo, a) + inside(score2, b, hi)
    r7 = inside(spread1, a, b) + _kappa(v1, beta) * pi1
    r8 = inside(spread2, lo, a) + inside(spread2, b, hi) + _kappa(v2, beta) * pi2
    return np.array([r3, r4, r5, r6, r7, r8])


def _solve_system(measure: _Measure, beta: float, u0: np.ndarray,
                  tol: float, max_iter: int) -> tuple[np.ndarray, float]:
    """Damped Newton with finite-difference Jacobian on the reduced system."""
    u = np.array(u0, dtype=float)
    res = _system_residual(u, measure, beta)
    norm = float(np.linalg.norm(res))
    for _ in range(max_iter):
        if float(np.max(np.abs(res))) <= tol:
            return u, float(np.max(np.abs(res)))
        jac = np.empty((6, 6))
        for i in range(6):
            h = 1e-6 * max(1.0, abs(u[i]))
            up, um = u.copy(), u.copy()
            up[i] += h
            um[i] -= h
            jac[:, i] = (_system_residual(up, measure, beta)
                         - _system_residual(um, measure, beta)) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise SolveError("singular Jacobian in functional solve") from exc
        t = 1.0
        while t > 1e-8:
            cand = u + t * step
            cand_res = _system_residual(cand, measure, beta)
            cand_norm = float(np.linalg.norm(cand_res))
            if cand_norm < norm:
                u, res, norm = cand, cand_res, cand_norm
                break
            t *= 0.5
        else:
            break
    if float(np.max(np.abs(res))) > tol:
        raise SolveError(f"functional solve stalled at residual {np.max(np.abs(res)):.3e}")
    return u, float(np.max(np.abs(res)))


def solve_functional(dist: TrueDistribution, beta: float,
                     cfg: ConstraintConfig | None = None, *,
                     init: FunctionalSolution | None = None,
                     _measure: _Measure | None = None,
                     tol: float = 1e-9, max_iter: int = 80) -> FunctionalSolution:
    """Solve the eight stationarity equations for the bounded-interval case.

    Newton starts from the data law's own parameters (or ``init`` when
    warm-starting) with the interval endpoints taken from the exact
    discriminant crossings. The solution is validated for interval
    geometry, residuals at or below 1e-8, and strict interiority of the
    eigenvalue constraints (ratio strictly below ``cfg.c`` and smallest
    variance strictly above ``cfg.c1``).
    """
    if beta <= 0:
        raise ValueError("beta must be positive (the beta = 0 influence is unbounded)")
    cfg = cfg or ConstraintConfig(c=5.0, c1=0.1)
    measure = _measure if _measure is not None else _Measure(dist)
    if init is not None:
        u0 = np.array([init.mu1, init.mu2, np.log(init.var1), np.log(init.var2),
                       init.a, init.b])
    else:
        w1, w2 = dist.weights
        m1, m2 = dist.means
        v1, v2 = dist.variances
        a0, b0 = _crossing_points(w1, w2, m1, m2, v1, v2)
        u0 = np.array([m1, m2, np.log(v1), np.log(v2), a0, b0])
    u, res_norm = _solve_system(measure, beta, u0, tol, max_iter)
    mu1, mu2, lv1, lv2, a, b = u
    v1, v2 = float(np.exp(lv1)), float(np.exp(lv2))
    pi1 = measure.mass_between(a, b)
    pi2 = 1.0 - pi1
    # The solved endpoints must coincide with the exact crossings (interval
    # geometry); a mismatch means the iteration drifted out of this case.
    ca, cb = _crossing_points(pi1, pi2, mu1, mu2, v1, v2)
    span = max(b - a, 1.0)
    if abs(ca - a) > 1e-5 * span or abs(cb - b) > 1e-5 * span:
        raise GeometryError("solved endpoints do not match the discriminant crossings")
    big, small = max(v1, v2), min(v1, v2)
    if not (big / small < cfg.c and small > cfg.c1):
        raise ConstraintBoundaryError(
            f"solution touches the constraint set: ratio {big / small:.4g} vs c={cfg.c}, "
            f"min variance {small:.4g} vs c1={cfg.c1}")
    return FunctionalSolution(pi1=float(pi1), pi2=float(pi2), a=float(a), b=float(b),
                              mu1=float(mu1), mu2=float(mu2), var1=v1, var2=v2,
                              beta=float(beta), residual_norm=res_norm)


# ---------------------------------------------------------------------------
# Linearized influence system
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _matrix_and_constants(sol: FunctionalSolution, dist: TrueDistribution,
                          beta: float) -> tuple:
    """The y-independent matrix of the influence system plus cached pieces.

    Unknown order: (pi1, pi2, a, b, mu1, mu2, var1, var2). Rows: interval
    mass, weight identity, the two boundary crossings, the two location
    equations and the two spread equations. All integral coefficients come
    from differentiating the stationarity integrands in their parameters;
    boundary terms pick up opposite signs on the interval and its
    complement.
    """
    a, b = sol.a, sol.b
    mu1, mu2, v1, v2 = sol.mu1, sol.mu2, sol.var1, sol.var2
    pi1, pi2 = sol.pi1, sol.pi2
    lo, hi = dist.support()
    lo = min(lo, a - 1.0)
    hi = max(hi, b + 1.0)
    p = dist.pdf
    pa, pb = float(p(a)), float(p(b))

    def f1b(x):
        return _f_pow_beta(x, mu1, v1, beta)

    def f2b(x):
        return _f_pow_beta(x, mu2, v2, beta)

    def g1(x):
        return f1b(x) * (x - mu1)

    def g2(x):
        return f2b(x) * (x - mu2)

    def u1(x):
        return f1b(x) * ((x - mu1) ** 2 / v1 - 1.0)

    def u2(x):
        return f2b(x) * ((x - mu2) ** 2 / v2 - 1.0)

    def inner(fn):
        val, _ = quad(lambda x: fn(x) * p(x), a, b, **_QUAD_OPTS)
        return float(val)

    def outer(fn):
        lo_val, _ = quad(lambda x: fn(x) * p(x), lo, a, **_QUAD_OPTS)
        hi_val, _ = quad(lambda x: fn(x) * p(x), b, hi, **_QUAD_OPTS)
        return float(lo_val + hi_val)

    c1 = inner(g1)
    c2 = outer(g2)
    c3 = inner(u1)
    c4 = outer(u2)

    # d/d(mu), d/d(var) of the location integrand f^beta (x - mu).
    loc_dmu1 = inner(lambda x: f1b(x) * (beta * (x - mu1) ** 2 / v1 - 1.0))
    loc_dmu2 = outer(lambda x: f2b(x) * (beta * (x - mu2) ** 2 / v2 - 1.0))
    loc_dv1 = inner(lambda x: 0.5 * beta * f1b(x)
                    * ((x - mu1) ** 3 / v1**2 - (x - mu1) / v1))
    loc_dv2 = outer(lambda x: 0.5 * beta * f2b(x)
                    * ((x - mu2) ** 3 / v2**2 - (x - mu2) / v2))

    # d/d(mu), d/d(var) of the spread integrand f^beta ((x-mu)^2/v - 1),
    # plus the derivative of the kappa * pi correction in var.
    spr_dmu1 = inner(lambda x: f1b(x) * (x - mu1) / v1
                     * (beta * ((x - mu1) ** 2 / v1 - 1.0) - 2.0))
    spr_dmu2 = outer(lambda x: f2b(x) * (x - mu2) / v2
                     * (beta * ((x - mu2) ** 2 / v2 - 1.0) - 2.0))
    spr_dv1 = inner(lambda x: f1b(x) * (0.5 * beta / v1 * ((x - mu1) ** 2 / v1 - 1.0) ** 2
                                        - (x - mu1) ** 2 / v1**2))
    spr_dv2 = outer(lambda x: f2b(x) * (0.5 * beta / v2 * ((x - mu2) ** 2 / v2 - 1.0) ** 2
                                        - (x - mu2) ** 2 / v2**2))
    kap1, kap2 = _kappa(v1, beta), _kappa(v2, beta)
    dkap1 = -0.5 * beta * kap1 / v1
    dkap2 = -0.5 * beta * kap2 / v2

    gap_a = (a - mu1) / v1 - (a - mu2) / v2
    gap_b = (b - mu1) / v1 - (b - mu2) / v2

    A = np.zeros((8, 8))
    A[0] = [1.0, 0.0, pa, -pb, 0.0, 0.0, 0.0, 0.0]
    A[1] = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    A[2] = [2.0 / pi1, -2.0 / pi2, -2.0 * gap_a, 0.0,
            2.0 * (a - mu1) / v1, -2.0 * (a - mu2) / v2,
            (a - mu1) ** 2 / v1**2 - 1.0 / v1,
            1.0 / v2 - (a - mu2) ** 2 / v2**2]
    A[3] = [2.0 / pi1, -2.0 / pi2, 0.0, -2.0 * gap_b,
            2.0 * (b - mu1) / v1, -2.0 * (b - mu2) / v2,
            (b - mu1) ** 2 / v1**2 - 1.0 / v1,
            1.0 / v2 - (b - mu2) ** 2 / v2**2]
    A[4] = [0.0, 0.0, -g1(a) * pa, g1(b) * pb, loc_dmu1, 0.0, loc_dv1, 0.0]
    A[5] = [0.0, 0.0, g2(a) * pa, -g2(b) * pb, 0.0, loc_dmu2, 0.0, loc_dv2]
    A[6] = [kap1, 0.0, -u1(a) * pa, u1(b) * pb, spr_dmu1, 0.0,
            spr_dv1 + dkap1 * pi1, 0.0]
    A[7] = [0.0, kap2, u2(a) * pa, -u2(b) * pb, 0.0, spr_dmu2, 0.0,
            spr_dv2 + dkap2 * pi2]

    consts = {"C1": c1, "C2": c2, "C3": c3, "C4": c4,
              "mass": float(dist.cdf(b) - dist.cdf(a))}
    return A, consts


def assemble_if_system(sol: FunctionalSolution, dist: TrueDistribution,
                       beta: float, y: float) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and right-hand side of the influence linear system at ``y``.

    The matrix is independent of ``y`` and cached per (solution, beta); the
    right-hand side depends on ``y`` only through the interval indicator and
    the bounded downweighted score and spread terms, which is what makes
    every influence component bounded for beta > 0.
    """
    A, consts = _matrix_and_constants(sol, dist, beta)
    a, b = sol.a, sol.b
    inside = bool(a < y < b)
    f1y = float(_f_pow_beta(y, sol.mu1, sol.var1, beta))
    f2y = float(_f_pow_beta(y, sol.mu2, sol.var2, beta))
    B = np.zeros(8)
    B[0] = -consts["mass"] + (1.0 if inside else 0.0)
    B[4] = consts["C1"] - f1y * (y - sol.mu1) * (1.0 if inside else 0.0)
    B[5] = consts["C2"] - f2y * (y - sol.mu2) * (0.0 if inside else 1.0)
    B[6] = consts["C3"] - f1y * ((y - sol.mu1) ** 2 / sol.var1 - 1.0) * (1.0 if inside else 0.0)
    B[7] = consts["C4"] - f2y * ((y - sol.mu2) ** 2 / sol.var2 - 1.0) * (0.0 if inside else 1.0)
    return np.array(A, copy=True), B


def influence_at(sol: FunctionalSolution, dist: TrueDistribution,
                 beta: float, y: float, *, max_condition: float = 1e12) -> np.ndarray:
    """Influence vector at contamination point ``y`` via the linear system."""
    A, B = assemble_if_system(sol, dist, beta, y)
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > max_condition:
        raise SolveError(f"influence matrix ill-conditioned (estimate {cond:.3e})")
    return np.linalg.solve(A, B)


def numeric_if_oracle(dist: TrueDistribution, beta: float,
                      cfg: ConstraintConfig | None = None, y: float = 0.0,
                      eps_list: tuple[float, ...] = (1e-4, 5e-5), *,
                      base: FunctionalSolution | None = None) -> np.ndarray:
    """Influence vector by explicit epsilon-contamination and extrapolation.

    For each epsilon the functional is re-solved under the contaminated
    measure (point mass handled analytically inside every integral, never
    as a density bump), warm-started at the clean solution; the difference
    quotients are then Richardson-extrapolated. Independent of the linear
    system, so the two routes validate each other.
    """
    cfg = cfg or ConstraintConfig(c=5.0, c1=0.1)
    if len(eps_list) < 1:
        raise ValueError("need at least one epsilon")
    sol0 = base if base is not None else solve_functional(dist, beta, cfg)
    theta0 = sol0.as_vector()
    quotients = []
    for eps in eps_list:
        measure = _Measure(dist, atom_y=float(y), atom_eps=float(eps))
        sol_eps = solve_functional(dist, beta, cfg, init=sol0, _measure=measure)
        quotients.append((sol_eps.as_vector() - theta0) / eps)
    est = quotients[0]
    for prev_eps, eps, quot in zip(eps_list, eps_list[1:], quotients[1:]):
        # One Richardson step per pair removes the first-order error term.
        est = (prev_eps * quot - eps * est) / (prev_eps - eps)
    return est


def if_curve(sol: FunctionalSolution, dist: TrueDistribution, beta: float,
             y_grid) -> np.ndarray:
    """Influence vectors over a grid: rows ``(y, pi1, pi2, a, b, mu1, mu2, s1, s2)``."""
    y_grid = np.asarray(y_grid, dtype=float)
    rows = np.empty((len(y_grid), 9))
    for i, y in enumerate(y_grid):
        rows[i, 0] = y
        rows[i, 1:] = influence_at(sol, dist, beta, float(y))
    return rows


def write_if_curve(path, table: np.ndarray) -> None:
    header = "y," + ",".join(f"IF_{name}" for name in IF_COLUMNS)
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.12g")
