"""Recourse generators over an l1-ball feasible set with immutable features.

Three methods share the same projected-descent outer loop: a kernel-density
likelihood-ratio recourse, its distributionally robust counterpart driven by
the worst-case likelihood bounds, and a gradient baseline that trades a
squared probability target against the l1 cost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .bounds import (
    DEFAULT_ZETA,
    AmbiguityBall,
    optimistic_alpha_batch,
    pessimistic_alpha_batch,
)
from .errors import AlreadyFavorableError, DegenerateNeighborhoodError
from .mlp import MlpModel, input_gradient, predict_label, predict_proba
from .sampler import LocalSampleSet

MAX_BACKTRACKS = 60
HUBER_WIDTH = 1e-6


@dataclass
class RecourseConfig:
    """Knobs shared by the recourse generators.

    ``delta_plus`` extends the l1 budget beyond the input-to-boundary cost;
    ``sigma`` doubles as the KDE bandwidth. ``constrain_around`` picks the
    ball center: the input (default) or the boundary point, in which case
    ``delta_plus`` is the whole budget.
    """

    delta_plus: float = 0.0
    eps0: float = 0.0
    eps1: float = 0.0
    sigma: float = 1.0
    zeta: float = DEFAULT_ZETA
    theta: float = 0.5
    beta: float = 0.1
    tol: float = 1e-6
    max_iter: int = 300
    frozen_mask: np.ndarray | None = None
    constrain_around: str = "input"
    use_fd_gradient: bool = False
    fd_step: float = 1e-5

    def __post_init__(self):
        if self.delta_plus < 0:
            raise ValueError("delta_plus must be non-negative")
        if self.eps0 < 0 or self.eps1 < 0:
            raise ValueError("ambiguity radii must be non-negative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.constrain_around not in ("input", "boundary"):
            raise ValueError("constrain_around must be 'input' or 'boundary'")
        if self.frozen_mask is not None:
            self.frozen_mask = np.asarray(self.frozen_mask, dtype=bool)


@dataclass
class RecourseResult:
    x_prime: np.ndarray
    cost: float
    objective_trace: list[float] = field(default_factory=list)
    converged: bool = False
    optimizer_converged: bool = False
    method: str = ""

    def to_json_dict(self) -> dict:
        return {
            "x_prime": self.x_prime.tolist(),
            "cost": self.cost,
            "objective_trace": list(self.objective_trace),
            "converged": self.converged,
            "optimizer_converged": self.optimizer_converged,
            "method": self.method,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)


# ---------------------------------------------------------------------------
# Feasible set
# ---------------------------------------------------------------------------

def project_l1_ball(x, center, delta: float, frozen_mask=None, pin_values=None) -> np.ndarray:
    """Euclidean projection onto {y : ||y - center||_1 <= delta}.

    Frozen coordinates are reset to ``pin_values`` (default: the center) and
    excluded from the budget; the rest use the sorting-based simplex
    projection.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    x = np.asarray(x, dtype=float).copy()
    center = np.asarray(center, dtype=float)
    if frozen_mask is None:
        frozen_mask = np.zeros(x.size, dtype=bool)
    frozen_mask = np.asarray(frozen_mask, dtype=bool)
    pin = center if pin_values is None else np.asarray(pin_values, dtype=float)
    x[frozen_mask] = pin[frozen_mask]

    free = ~frozen_mask
    z = x[free] - center[free]
    if np.abs(z).sum() <= delta:
        return x
    if delta == 0.0:
        x[free] = center[free]
        return x
    mags = np.sort(np.abs(z))[::-1]
    cum = np.cumsum(mags) - delta
    j = np.arange(1, mags.size + 1)
    rho = np.max(j[mags - cum / j > 0])
    theta = cum[rho - 1] / rho
    x[free] = center[free] + np.sign(z) * np.maximum(np.abs(z) - theta, 0.0)
    return x


def _feasible_projector(x0, ls: LocalSampleSet, cfg: RecourseConfig):
    """Projector onto the recourse feasible set, plus its l1 radius."""
    x0 = np.asarray(x0, dtype=float)
    if cfg.constrain_around == "boundary":
        center, delta = ls.x_b, cfg.delta_plus
    else:
        center, delta = x0, float(np.abs(x0 - ls.x_b).sum()) + cfg.delta_plus
    mask = cfg.frozen_mask

    def projector(x):
        return project_l1_ball(x, center, delta, frozen_mask=mask, pin_values=x0)

    return projector, delta


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def _check_classes(ls: LocalSampleSet):
    if ls.samples0.shape[0] == 0 or ls.samples1.shape[0] == 0:
        raise DegenerateNeighborhoodError("sample set must contain both predicted classes")


def _log_kde_ratio(x, samples0, samples1, h: float) -> float:
    d0 = np.sum((samples0 - x) ** 2, axis=1)
    d1 = np.sum((samples1 - x) ** 2, axis=1)
    return float(logsumexp(-d0 / (2.0 * h * h)) - logsumexp(-d1 / (2.0 * h * h)))


def _kde_grad(x, samples0, samples1, h: float) -> np.ndarray:
    inv = 1.0 / (h * h)
    g = np.zeros_like(x)
    for samples, sign in ((samples0, 1.0), (samples1, -1.0)):
        w = softmax(-np.sum((samples - x) ** 2, axis=1) * inv / 2.0)
        g += sign * (w[:, None] * (samples - x)).sum(axis=0) * inv
    return g


def kde_objective(x, ls: LocalSampleSet, h: float) -> float:
    """Ratio of unfavorable to favorable Gaussian-kernel sums at x."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    _check_classes(ls)
    return float(np.exp(_log_kde_ratio(np.asarray(x, dtype=float), ls.samples0, ls.samples1, h)))


def _balls(ls: LocalSampleSet, cfg: RecourseConfig) -> tuple[AmbiguityBall, AmbiguityBall]:
    p = ls.p
    return AmbiguityBall(cfg.eps0, cfg.sigma, p), AmbiguityBall(cfg.eps1, cfg.sigma, p)


def _robust_parts(x, ls: LocalSampleSet, cfg: RecourseConfig) -> tuple[float, np.ndarray]:
    """Worst-case log odds ratio and its envelope gradient at x.

    One batch of inner subproblem solves per class serves both outputs. The
    worst-case components recovered at x are held fixed for the gradient;
    each contributes a Gaussian score along the residual to its shifted mean,
    which stays parallel to (x - sample), so no basis matrices are
    materialized.
    """
    x = np.asarray(x, dtype=float)
    ball0, ball1 = _balls(ls, cfg)

    d0 = np.linalg.norm(ls.samples0 - x, axis=1)
    b0 = optimistic_alpha_batch(d0, ball0)
    w0 = softmax(-b0.alpha)
    scale0 = np.divide(d0 - b0.a_star, d0, out=np.zeros_like(d0), where=d0 > 0)
    num_grad = -((w0 * scale0 / b0.d_star**2)[:, None] * (x - ls.samples0)).sum(axis=0)

    d1 = np.linalg.norm(ls.samples1 - x, axis=1)
    b1 = pessimistic_alpha_batch(d1, ball1, cfg.zeta)
    w1 = softmax(b1.alpha)
    # zero contribution when x sits exactly on a sample (nonsmooth point)
    scale1 = np.divide(d1 + b1.a_star, d1, out=np.zeros_like(d1), where=d1 > 0)
    den_grad = -((w1 * scale1 / b1.d_star**2)[:, None] * (x - ls.samples1)).sum(axis=0)

    value = float(
        np.log(ls.gamma0) - np.log(ls.gamma1)
        + logsumexp(-b0.alpha) - np.log(d0.size)
        - logsumexp(b1.alpha) + np.log(d1.size)
    )
    return value, num_grad - den_grad


def log_robust_objective(x, ls: LocalSampleSet, cfg: RecourseConfig) -> float:
    """log of gamma0 * (worst-case unfavorable likelihood) over gamma1 * (worst-case favorable)."""
    _check_classes(ls)
    return _robust_parts(x, ls, cfg)[0]


def robust_objective(x, ls: LocalSampleSet, cfg: RecourseConfig) -> float:
    return float(np.exp(log_robust_objective(x, ls, cfg)))


def robust_gradient(x, ls: LocalSampleSet, cfg: RecourseConfig) -> np.ndarray:
    """Envelope gradient of the log robust objective (finite differences on demand)."""
    _check_classes(ls)
    x = np.asarray(x, dtype=float)
    if cfg.use_fd_gradient:
        return _fd_gradient(lambda y: log_robust_objective(y, ls, cfg), x, cfg.fd_step)
    return _robust_parts(x, ls, cfg)[1]


def _fd_gradient(fn, x, step: float) -> np.ndarray:
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        g[j] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return g


# ---------------------------------------------------------------------------
# Outer projected descent (backtracking line search, best-iterate return)
# ---------------------------------------------------------------------------

def _descend(objective, gradient, projector, x_start, cfg: RecourseConfig,
             collect_iterates: bool = False):
    x = projector(np.asarray(x_start, dtype=float))
    fx = float(objective(x))
    trace = [fx]
    iterates = [x.copy()] if collect_iterates else None
    converged = False
    for _ in range(cfg.max_iter):
        g = np.asarray(gradient(x), dtype=float)
        s = cfg.beta
        for _k in range(MAX_BACKTRACKS + 1):
            w = projector(x - s * g)
            fw = float(objective(w))
            if fw <= fx - float(np.sum((x - w) ** 2)) / (2.0 * s):
                break
            s *= cfg.theta
        else:
            break  # stalled line search; keep the best iterate so far
        moved = float(np.linalg.norm(w - x))
        x, fx = w, fw
        trace.append(fx)
        if collect_iterates:
            iterates.append(x.copy())
        if moved <= cfg.tol:
            converged = True
            break
    return x, trace, converged, iterates


def _finish(x0, x_prime, trace, optimizer_converged, method, model) -> RecourseResult:
    cost = float(np.abs(x_prime - x0).sum())
    valid = optimizer_converged if model is None else bool(predict_label(model, x_prime) == 1)
    return RecourseResult(
        x_prime=x_prime,
        cost=cost,
        objective_trace=trace,
        converged=valid,
        optimizer_converged=optimizer_converged,
        method=method,
    )


def kde_recourse(x0, ls: LocalSampleSet, cfg: RecourseConfig,
                 model: MlpModel | None = None) -> RecourseResult:
    """Projected descent on the log KDE ratio, started at the boundary point.

    With a model supplied, ``converged`` reports validity (label flip at the
    result); otherwise it falls back to optimizer convergence.
    """
    _check_classes(ls)
    x0 = np.asarray(x0, dtype=float)
    h = cfg.sigma
    projector, _ = _feasible_projector(x0, ls, cfg)
    x_prime, trace, opt_conv, _ = _descend(
        lambda x: _log_kde_ratio(x, ls.samples0, ls.samples1, h),
        lambda x: _kde_grad(x, ls.samples0, ls.samples1, h),
        projector, ls.x_b, cfg,
    )
    return _finish(x0, x_prime, trace, opt_conv, "kde", model)


def robust_recourse(x0, ls: LocalSampleSet, cfg: RecourseConfig,
                    model: MlpModel | None = None) -> RecourseResult:
    """Projected descent on the log worst-case likelihood ratio."""
    _check_classes(ls)
    x0 = np.asarray(x0, dtype=float)
    projector, _ = _feasible_projector(x0, ls, cfg)

    # the descent asks for the objective and gradient at the same points;
    # one cached inner solve per point serves both
    cache: dict = {}

    def parts(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = _robust_parts(x, ls, cfg)
        return cache[key]

    if cfg.use_fd_gradient:
        def gradient(x):
            return _fd_gradient(lambda y: parts(np.asarray(y))[0], x, cfg.fd_step)
    else:
        def gradient(x):
            return parts(x)[1]

    x_prime, trace, opt_conv, _ = _descend(
        lambda x: parts(x)[0], gradient, projector, ls.x_b, cfg,
    )
    return _finish(x0, x_prime, trace, opt_conv, "robust", model)


# ---------------------------------------------------------------------------
# Gradient baseline
# ---------------------------------------------------------------------------

def _smooth_l1(z, width: float = HUBER_WIDTH) -> float:
    a = np.abs(z)
    return float(np.where(a <= width, z * z / (2.0 * width), a - width / 2.0).sum())


def _smooth_l1_grad(z, width: float = HUBER_WIDTH) -> np.ndarray:
    return np.clip(z / width, -1.0, 1.0)


def wachter_recourse(x0, model: MlpModel, cfg: RecourseConfig,
                     lambda_init: float = 0.1, max_doublings: int = 10,
                     target_margin: float = 0.05) -> RecourseResult:
    """Gradient baseline: squared probability-target loss plus smoothed l1 cost.

    The trade-off weight doubles from ``lambda_init`` until the prediction
    flips or the doubling budget runs out; within the first flipping run, the
    flipped iterate of least l1 cost is returned.
    """
    x0 = np.asarray(x0, dtype=float)
    if predict_label(model, x0) == 1:
        raise AlreadyFavorableError("input already receives the favorable prediction")
    target = 0.5 + target_margin
    mask = cfg.frozen_mask if cfg.frozen_mask is not None else np.zeros(x0.size, dtype=bool)

    def projector(x):
        out = np.asarray(x, dtype=float).copy()
        out[mask] = x0[mask]
        return out

    lam = lambda_init
    last_x, last_trace = x0.copy(), [0.0]
    for _ in range(max_doublings + 1):
        def objective(x, lam=lam):
            return lam * (predict_proba(model, x) - target) ** 2 + _smooth_l1(x - x0)

        def gradient(x, lam=lam):
            proba = predict_proba(model, x)
            return 2.0 * lam * (proba - target) * input_gradient(model, x) + _smooth_l1_grad(x - x0)

        # warm start: each doubling continues from where the previous one stalled
        last_x, last_trace, _, iterates = _descend(
            objective, gradient, projector, last_x, cfg, collect_iterates=True,
        )
        iterates = np.asarray(iterates)
        flipped = predict_label(model, iterates) == 1
        if flipped.any():
            costs = np.abs(iterates - x0).sum(axis=1)
            costs[~flipped] = np.inf
            best = iterates[int(np.argmin(costs))]
            return RecourseResult(
                x_prime=best,
                cost=float(np.abs(best - x0).sum()),
                objective_trace=last_trace,
                converged=True,
                optimizer_converged=True,
                method="wachter",
            )
        lam *= 2.0
    return RecourseResult(
        x_prime=last_x,
        cost=float(np.abs(last_x - x0).sum()),
        objective_trace=last_trace,
        converged=False,
        optimizer_converged=False,
        method="wachter",
    )
