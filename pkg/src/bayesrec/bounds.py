"""Optimistic and pessimistic Gaussian-mixture likelihood bounds.

Each mixture component contributes an independent two-dimensional subproblem
over a quarter disk: a mean-shift budget ``a`` against an extreme
eigenvalue-root ``d`` of the component covariance, coupled through a
transport-cost budget. The optimistic bound maximizes the component density
at the query point, the pessimistic bound minimizes it; both reduce to the
closed quarter-disk domain after reparameterization and are solved with
projected gradient descent, with analytic shortcuts where the optimum is
known in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .quarter_disk import grid_oracle_2d, pgd_quarter_disk_batch, project_quarter_disk

LOG_2PI = float(np.log(2.0 * np.pi))

# Inner-solver defaults; the 2-D domain is cheap enough to multi-start.
INNER_THETA = 0.5
INNER_BETA = 1.0
INNER_TOL = 1e-8
INNER_MAX_ITER = 500
DEFAULT_ZETA = 1e-8


@dataclass(frozen=True)
class AmbiguityBall:
    """Transport-cost ball of radius ``epsilon`` around an isotropic smoothing."""

    epsilon: float
    sigma: float
    dim: int

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")


@dataclass(frozen=True)
class ComponentSolution:
    """Optimum of one 2-D subproblem: value plus the (a, d) pair attaining it."""

    alpha: float
    a_star: float
    d_star: float
    converged: bool
    iterations: int
    alpha_perturbed: float | None = None


@dataclass
class ComponentBatch:
    alpha: np.ndarray
    a_star: np.ndarray
    d_star: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray

    def __getitem__(self, i: int) -> ComponentSolution:
        return ComponentSolution(
            alpha=float(self.alpha[i]),
            a_star=float(self.a_star[i]),
            d_star=float(self.d_star[i]),
            converged=bool(self.converged[i]),
            iterations=int(self.iterations[i]),
        )


def gaussian_ground_cost(mean, eig_roots, nominal_mean, sigma: float) -> float:
    """Transport cost from N(mean, V diag(eig_roots^2) V^T) to N(nominal_mean, sigma^2 I).

    With an isotropic reference the trace term collapses to the eigenvalue-root
    differences, so the cost is sqrt(||mean - nominal_mean||^2 + sum_j (d_j - sigma)^2).
    """
    eig_roots = np.asarray(eig_roots, dtype=float)
    if np.any(eig_roots < 0):
        raise ValueError("eig_roots must be non-negative")
    mean = np.asarray(mean, dtype=float)
    nominal_mean = np.asarray(nominal_mean, dtype=float)
    return float(np.sqrt(np.sum((mean - nominal_mean) ** 2) + np.sum((eig_roots - sigma) ** 2)))


# ---------------------------------------------------------------------------
# 2-D subproblem objectives (vectorized over rows; dist may be scalar or (N,))
# ---------------------------------------------------------------------------

def _take(values, rows):
    if rows is None or np.ndim(values) == 0:
        return values
    return values[rows]


def make_optimistic_objective(dist, ball: AmbiguityBall):
    """Objective/gradient of the component-density maximization subproblem.

    Variables v = (a, d - sigma) on the quarter disk of radius epsilon. The
    value is log d + (dist - a)^2 / (2 d^2) + (p - 1) log sigma; minimizing it
    maximizes the component density at the query point. The optional ``rows``
    argument restricts a vector ``dist`` to a subset of components.
    """
    dist = np.asarray(dist, dtype=float)
    sigma, p = ball.sigma, ball.dim
    const = (p - 1) * np.log(sigma)

    def objective(v, rows=None):
        v = np.asarray(v, dtype=float)
        a, d = v[..., 0], v[..., 1] + sigma
        return np.log(d) + (_take(dist, rows) - a) ** 2 / (2.0 * d * d) + const

    def gradient(v, rows=None):
        v = np.asarray(v, dtype=float)
        a, d = v[..., 0], v[..., 1] + sigma
        resid = _take(dist, rows) - a
        g1 = -resid / (d * d)
        g2 = 1.0 / d - resid**2 / d**3
        return np.stack(np.broadcast_arrays(g1, g2), axis=-1)

    return objective, gradient


def make_pessimistic_objective(dist, ball: AmbiguityBall, zeta: float):
    """Objective/gradient of the (perturbed) component-density minimization.

    Variables u = (a / sqrt(p), d - sigma) on the quarter disk of radius
    epsilon / sqrt(p). ``zeta > 0`` smooths the square root so the gradient
    stays defined on the whole feasible set; pass ``zeta=0`` to evaluate the
    unperturbed objective (values only, clipped at the boundary).
    """
    dist = np.asarray(dist, dtype=float)
    eps, sigma, p = ball.epsilon, ball.sigma, ball.dim
    sqrt_p = np.sqrt(p)

    def objective(u, rows=None):
        u = np.asarray(u, dtype=float)
        u1, u2 = u[..., 0], u[..., 1]
        A = u2 + sigma
        B = _take(dist, rows) + sqrt_p * u1
        val = -np.log(A) - B**2 / (2.0 * A * A)
        if p > 1:
            S = (zeta + eps**2 - p * u1**2 - u2**2) / (p - 1)
            val = val - (p - 1) * np.log(sigma + np.sqrt(np.maximum(S, 0.0)))
        return val

    def gradient(u, rows=None):
        u = np.asarray(u, dtype=float)
        u1, u2 = u[..., 0], u[..., 1]
        A = u2 + sigma
        B = _take(dist, rows) + sqrt_p * u1
        g1 = -sqrt_p * B / (A * A)
        g2 = -1.0 / A + B**2 / A**3
        if p > 1:
            S = (zeta + eps**2 - p * u1**2 - u2**2) / (p - 1)
            root = np.sqrt(np.maximum(S, 1e-300))
            denom = (sigma + root) * root
            g1 = g1 + p * u1 / denom
            g2 = g2 + u2 / denom
        return np.stack(np.broadcast_arrays(g1, g2), axis=-1)

    return objective, gradient


# ---------------------------------------------------------------------------
# Per-component solvers
# ---------------------------------------------------------------------------

COARSE_INIT_RES = 33


def _coarse_grid_points(radius: float, resolution: int = COARSE_INIT_RES) -> np.ndarray:
    """Feasible lattice plus arc samples, used to seed the descent."""
    axis = np.linspace(0.0, radius, resolution)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    keep = g1**2 + g2**2 <= radius**2 + 1e-15
    phi = np.linspace(0.0, np.pi / 2.0, resolution)
    return np.concatenate([
        np.stack([g1[keep], g2[keep]], axis=-1),
        radius * np.stack([np.sin(phi), np.cos(phi)], axis=-1),
    ])


def _coarse_start(objective_rowwise, radius: float) -> np.ndarray:
    """Per-row best point of the coarse feasible grid.

    ``objective_rowwise`` must map a (1, G, 2) stack of grid points to a
    (N, G) value table (the factories do, given a (N, 1)-shaped dist).
    """
    grid = _coarse_grid_points(radius)
    values = objective_rowwise(grid[None, :, :])
    return grid[np.argmin(values, axis=1)]


def _solve_from_coarse(objective, gradient, radius: float, coarse: np.ndarray):
    """Refine the coarse-grid seed with the batch projected descent.

    The subproblem objectives are non-convex, and the perturbed pessimistic
    one carries near-singular curvature by the arc where descent from a fixed
    start can creep into a non-optimal corner; seeding at the best coarse-grid
    point lands every row in its global basin, after which the local descent
    is reliable.
    """
    return pgd_quarter_disk_batch(
        objective, gradient, radius, coarse,
        theta=INNER_THETA, beta=INNER_BETA, tol=INNER_TOL, max_iter=INNER_MAX_ITER,
    )


def optimistic_alpha_batch(dists: np.ndarray, ball: AmbiguityBall) -> ComponentBatch:
    """Solve the density-maximization subproblem for every distance at once."""
    dists = np.atleast_1d(np.asarray(dists, dtype=float))
    if np.any(dists < 0):
        raise ValueError("distances must be non-negative")
    n = dists.size
    sigma, p, eps = ball.sigma, ball.dim, ball.epsilon
    alpha = np.empty(n)
    a_star = np.zeros(n)
    d_star = np.full(n, sigma)
    converged = np.ones(n, dtype=bool)
    iterations = np.zeros(n, dtype=int)

    if eps == 0.0:
        alpha[:] = p * np.log(sigma) + dists**2 / (2.0 * sigma**2)
        return ComponentBatch(alpha, a_star, d_star, converged, iterations)

    easy = dists <= eps  # move the mean onto the query point, keep d at sigma
    alpha[easy] = p * np.log(sigma)
    a_star[easy] = dists[easy]

    hard = ~easy
    if hard.any():
        objective, gradient = make_optimistic_objective(dists[hard], ball)
        rowwise, _ = make_optimistic_objective(dists[hard][:, None], ball)
        v, fv, conv, iters = _solve_from_coarse(objective, gradient, eps,
                                                _coarse_start(rowwise, eps))
        alpha[hard] = fv
        a_star[hard] = v[:, 0]
        d_star[hard] = v[:, 1] + sigma
        converged[hard] = conv
        iterations[hard] = iters
    return ComponentBatch(alpha, a_star, d_star, converged, iterations)


def pessimistic_alpha_batch(dists: np.ndarray, ball: AmbiguityBall,
                            zeta: float = DEFAULT_ZETA) -> ComponentBatch:
    """Solve the density-minimization subproblem for every distance at once.

    The reported alpha is the unperturbed objective evaluated at the perturbed
    solution; the perturbed optimum itself is discarded.
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    dists = np.atleast_1d(np.asarray(dists, dtype=float))
    if np.any(dists < 0):
        raise ValueError("distances must be non-negative")
    n = dists.size
    sigma, p, eps = ball.sigma, ball.dim, ball.epsilon

    if eps == 0.0:
        alpha = -p * np.log(sigma) - dists**2 / (2.0 * sigma**2)
        return ComponentBatch(alpha, np.zeros(n), np.full(n, sigma),
                              np.ones(n, dtype=bool), np.zeros(n, dtype=int))

    radius = eps / np.sqrt(p)
    objective, gradient = make_pessimistic_objective(dists, ball, zeta)
    rowwise, _ = make_pessimistic_objective(dists[:, None], ball, zeta)
    u, _, conv, iters = _solve_from_coarse(objective, gradient, radius,
                                           _coarse_start(rowwise, radius))
    plain, _ = make_pessimistic_objective(dists, ball, zeta=0.0)
    alpha = np.atleast_1d(np.asarray(plain(u), dtype=float))
    return ComponentBatch(alpha, np.sqrt(p) * u[:, 0], u[:, 1] + sigma, conv, iters)


def optimistic_alpha(dist: float, ball: AmbiguityBall) -> ComponentSolution:
    """Best-case (maximal) component log-density term for one distance."""
    if dist < 0:
        raise ValueError("dist must be non-negative")
    return _optimistic_alpha_cached(round(float(dist), 12), ball)


def pessimistic_alpha(dist: float, ball: AmbiguityBall,
                      zeta: float = DEFAULT_ZETA) -> ComponentSolution:
    """Worst-case (minimal) component log-density term for one distance."""
    if dist < 0:
        raise ValueError("dist must be non-negative")
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    return _pessimistic_alpha_cached(round(float(dist), 12), ball, float(zeta))


@lru_cache(maxsize=65536)
def _optimistic_alpha_cached(dist: float, ball: AmbiguityBall) -> ComponentSolution:
    return optimistic_alpha_batch(np.array([dist]), ball)[0]


@lru_cache(maxsize=65536)
def _pessimistic_alpha_cached(dist: float, ball: AmbiguityBall, zeta: float) -> ComponentSolution:
    batch = pessimistic_alpha_batch(np.array([dist]), ball, zeta)
    sol = batch[0]
    perturbed_obj, _ = make_pessimistic_objective(dist, ball, zeta)
    u = np.array([sol.a_star / np.sqrt(ball.dim), sol.d_star - ball.sigma])
    return ComponentSolution(
        alpha=sol.alpha, a_star=sol.a_star, d_star=sol.d_star,
        converged=sol.converged, iterations=sol.iterations,
        alpha_perturbed=float(perturbed_obj(u)),
    )


# ---------------------------------------------------------------------------
# Mixture-level bounds
# ---------------------------------------------------------------------------

def _distances(x, samples) -> tuple[np.ndarray, int]:
    x = np.asarray(x, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("samples must be a non-empty (N, p) array")
    if x.shape != (samples.shape[1],):
        raise ValueError("x and samples disagree on dimension")
    return np.linalg.norm(samples - x, axis=1), samples.shape[1]


def log_optimistic_likelihood(x, samples, ball: AmbiguityBall) -> float:
    dists, p = _distances(x, samples)
    if ball.dim != p:
        raise ValueError("ball dimension does not match the samples")
    batch = optimistic_alpha_batch(dists, ball)
    return float(logsumexp(-batch.alpha) - np.log(dists.size) - 0.5 * p * LOG_2PI)


def optimistic_likelihood(x, samples, ball: AmbiguityBall) -> float:
    """Maximal mixture likelihood of ``x`` over the ambiguity ball."""
    return float(np.exp(log_optimistic_likelihood(x, samples, ball)))


def log_pessimistic_likelihood(x, samples, ball: AmbiguityBall,
                               zeta: float = DEFAULT_ZETA) -> float:
    dists, p = _distances(x, samples)
    if ball.dim != p:
        raise ValueError("ball dimension does not match the samples")
    batch = pessimistic_alpha_batch(dists, ball, zeta)
    return float(logsumexp(batch.alpha) - np.log(dists.size) - 0.5 * p * LOG_2PI)


def pessimistic_likelihood(x, samples, ball: AmbiguityBall,
                           zeta: float = DEFAULT_ZETA) -> float:
    """Minimal mixture likelihood of ``x`` over the ambiguity ball."""
    return float(np.exp(log_pessimistic_likelihood(x, samples, ball, zeta)))


def log_smoothed_likelihood(x, samples, sigma: float) -> float:
    """Nominal (unperturbed) smoothed-mixture log-likelihood."""
    dists, p = _distances(x, samples)
    return float(
        logsumexp(-(dists**2) / (2.0 * sigma**2))
        - np.log(dists.size) - 0.5 * p * LOG_2PI - p * np.log(sigma)
    )


def smoothed_likelihood(x, samples, sigma: float) -> float:
    return float(np.exp(log_smoothed_likelihood(x, samples, sigma)))


# ---------------------------------------------------------------------------
# Worst-case component recovery
# ---------------------------------------------------------------------------

@dataclass
class WorstCaseComponent:
    """One recovered extremal Gaussian component in eigen form."""

    mean: np.ndarray
    eig_roots: np.ndarray
    basis: np.ndarray

    def covariance(self) -> np.ndarray:
        return self.basis @ np.diag(self.eig_roots**2) @ self.basis.T

    def density_at(self, x) -> float:
        y = self.basis.T @ (np.asarray(x, dtype=float) - self.mean)
        quad = float(np.sum(y**2 / self.eig_roots**2))
        log_det_root = float(np.sum(np.log(self.eig_roots)))
        p = self.mean.size
        return float(np.exp(-0.5 * quad - 0.5 * p * LOG_2PI - log_det_root))

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "eig_roots": self.eig_roots.tolist(),
            "basis": self.basis.tolist(),
        }


def build_orthonormal_basis(direction, position: str = "last") -> np.ndarray:
    """Orthonormal matrix whose designated column is the normalized direction.

    Completed by the Householder reflection mapping the corresponding standard
    basis vector onto the direction; the identity when they already coincide.
    """
    direction = np.asarray(direction, dtype=float)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        raise ValueError("direction must be non-zero")
    if position not in ("first", "last"):
        raise ValueError("position must be 'first' or 'last'")
    p = direction.size
    u = direction / norm
    k = 0 if position == "first" else p - 1
    w = u.copy()
    w[k] -= 1.0
    wnorm2 = float(w @ w)
    if wnorm2 < 1e-28:
        return np.eye(p)
    return np.eye(p) - 2.0 * np.outer(w, w) / wnorm2


def _shifted_mean(x, x_hat, a: float, away: bool) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    dist = float(np.linalg.norm(x - x_hat))
    if dist == 0.0:
        if a == 0.0:
            return x_hat.copy()
        # any direction is extremal when the query sits on the sample; fix e1
        offset = np.zeros_like(x_hat)
        offset[0] = a
        return x_hat + offset
    ratio = a / dist
    if away:
        return -ratio * x + (1.0 + ratio) * x_hat
    return ratio * x + (1.0 - ratio) * x_hat


def recover_optimistic_component(x, x_hat, sol: ComponentSolution,
                                 ball: AmbiguityBall) -> WorstCaseComponent:
    """Extremal component attaining the optimistic bound: mean pulled toward x,
    largest eigenvalue-root inflated along the residual direction."""
    mean = _shifted_mean(x, x_hat, sol.a_star, away=False)
    p = ball.dim
    eig_roots = np.full(p, ball.sigma)
    eig_roots[-1] = sol.d_star
    w = np.asarray(x, dtype=float) - mean
    basis = np.eye(p) if np.linalg.norm(w) == 0.0 else build_orthonormal_basis(w, "last")
    return WorstCaseComponent(mean=mean, eig_roots=eig_roots, basis=basis)


def recover_pessimistic_component(x, x_hat, sol: ComponentSolution, ball: AmbiguityBall,
                                  zeta: float = DEFAULT_ZETA) -> WorstCaseComponent:
    """Extremal component attaining the pessimistic bound: mean pushed away
    from x, smallest eigenvalue-root along the residual, the rest leveled up."""
    mean = _shifted_mean(x, x_hat, sol.a_star, away=True)
    p = ball.dim
    if p == 1:
        eig_roots = np.array([sol.d_star])
    else:
        slack = ball.epsilon**2 - sol.a_star**2 - (sol.d_star - ball.sigma) ** 2
        level = ball.sigma + np.sqrt(max(slack, 0.0) / (p - 1))
        eig_roots = np.full(p, max(level, ball.sigma))
        eig_roots[0] = sol.d_star
    w = np.asarray(x, dtype=float) - mean
    basis = np.eye(p) if np.linalg.norm(w) == 0.0 else build_orthonormal_basis(w, "first")
    return WorstCaseComponent(mean=mean, eig_roots=eig_roots, basis=basis)


__all__ = [
    "AmbiguityBall", "ComponentSolution", "ComponentBatch", "WorstCaseComponent",
    "gaussian_ground_cost", "make_optimistic_objective", "make_pessimistic_objective",
    "optimistic_alpha", "pessimistic_alpha", "optimistic_alpha_batch",
    "pessimistic_alpha_batch", "optimistic_likelihood", "pessimistic_likelihood",
    "log_optimistic_likelihood", "log_pessimistic_likelihood",
    "smoothed_likelihood", "log_smoothed_likelihood",
    "build_orthonormal_basis", "recover_optimistic_component",
    "recover_pessimistic_component", "grid_oracle_2d", "project_quarter_disk",
    "DEFAULT_ZETA",
]
