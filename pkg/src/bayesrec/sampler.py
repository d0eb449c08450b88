"""Local sampling around the decision boundary.

Pipeline: pick the nearest favorably-predicted training points, bisect each
segment to the decision boundary, keep the boundary point closest to the
input, then label a uniform l2-ball of synthetic samples around it by
querying the classifier.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import AlreadyFavorableError, DegenerateNeighborhoodError, InvalidBracketError
from .mlp import MlpModel, predict_label, predict_proba

BISECT_MAX_ITER = 60


@dataclass
class LocalSampleSet:
    """Boundary-centered samples partitioned by predicted class."""

    x0: np.ndarray
    x_b: np.ndarray
    samples0: np.ndarray  # predicted class 0, shape (N0, p)
    samples1: np.ndarray  # predicted class 1, shape (N1, p)
    gamma0: float
    gamma1: float
    radius: float
    seed: int

    @property
    def p(self) -> int:
        return self.x0.size

    def to_json_dict(self) -> dict:
        return {
            "x0": self.x0.tolist(),
            "x_b": self.x_b.tolist(),
            "samples0": self.samples0.tolist(),
            "samples1": self.samples1.tolist(),
            "gamma0": self.gamma0,
            "gamma1": self.gamma1,
            "radius": self.radius,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "LocalSampleSet":
        return cls(
            x0=np.asarray(payload["x0"], dtype=float),
            x_b=np.asarray(payload["x_b"], dtype=float),
            samples0=np.asarray(payload["samples0"], dtype=float),
            samples1=np.asarray(payload["samples1"], dtype=float),
            gamma0=float(payload["gamma0"]),
            gamma1=float(payload["gamma1"]),
            radius=float(payload["radius"]),
            seed=int(payload["seed"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "LocalSampleSet":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def nearest_counterfactuals(x0, data: Dataset, model: MlpModel, k: int) -> np.ndarray:
    """The k favorably-predicted training points nearest to x0 in l1 cost.

    Sorted ascending, ties broken by row index. If fewer than k favorable
    points exist, returns all of them and emits a warning.
    """
    x0 = np.asarray(x0, dtype=float)
    if k < 1:
        raise ValueError("k must be positive")
    if predict_label(model, x0) == 1:
        raise AlreadyFavorableError("input already receives the favorable prediction")
    favorable = data.features[predict_label(model, data.features) == 1]
    if favorable.shape[0] == 0:
        raise DegenerateNeighborhoodError("training data has no favorably-predicted points")
    if favorable.shape[0] < k:
        warnings.warn(
            f"only {favorable.shape[0]} favorable points available for k={k}",
            stacklevel=2,
        )
        k = favorable.shape[0]
    dists = np.abs(favorable - x0).sum(axis=1)
    order = np.argsort(dists, kind="stable")
    return favorable[order[:k]]


def _bisect_batch(x0, targets, model, tol: float, max_iter: int = BISECT_MAX_ITER):
    """Lockstep bisection of every [x0, target] segment to the 0.5 level set."""
    x0 = np.asarray(x0, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if predict_proba(model, x0) >= 0.5:
        raise InvalidBracketError("x0 must be predicted unfavorable")
    if np.any(predict_proba(model, targets) < 0.5):
        raise InvalidBracketError("every target must be predicted favorable")

    m = targets.shape[0]
    lo, hi = np.zeros(m), np.ones(m)
    active = np.ones(m, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        proba = predict_proba(model, x0 + mid[:, None] * (targets - x0))
        hit = active & (np.abs(proba - 0.5) <= tol)
        active &= ~hit
        go_hi = active & (proba >= 0.5)
        go_lo = active & (proba < 0.5)
        hi[go_hi] = mid[go_hi]
        lo[go_lo] = mid[go_lo]
        active &= (hi - lo) > tol
    # midpoint of the final bracket, snapped to the favorable end of the
    # bracket when the midpoint itself still predicts unfavorable
    mid = 0.5 * (lo + hi)
    favorable = predict_proba(model, x0 + mid[:, None] * (targets - x0)) >= 0.5
    t_final = np.where(favorable, mid, hi)
    return x0 + t_final[:, None] * (targets - x0)


def boundary_bisection(x0, x1, model: MlpModel, tol: float = 1e-4) -> np.ndarray:
    """Bisection along [x0, x1] for a decision-boundary point.

    Stops once the midpoint probability is within ``tol`` of 0.5 or the
    bracket parameter width drops below ``tol``, whichever first.
    """
    return _bisect_batch(x0, np.asarray(x1, dtype=float)[None, :], model, tol)[0]


def select_boundary(x0, candidates) -> np.ndarray:
    """Candidate boundary point with minimal l1 cost to x0; ties by list order."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[0] == 0:
        raise ValueError("candidates must be non-empty")
    dists = np.abs(candidates - np.asarray(x0, dtype=float)).sum(axis=1)
    return candidates[int(np.argmin(dists))]


def sample_uniform_ball(center, r: float, n: int, seed: int) -> np.ndarray:
    """n i.i.d. points uniform on the l2 ball of radius r around center.

    Gaussian direction with radius r * U^(1/p); seed-deterministic.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    if n < 1:
        raise ValueError("n must be positive")
    center = np.asarray(center, dtype=float)
    p = center.size
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((n, p))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = r * rng.uniform(size=n) ** (1.0 / p)
    return center + radii[:, None] * directions


def build_local_sample_set(x0, data: Dataset, model: MlpModel, k: int = 1000,
                           r_p: float = 0.2, n: int = 200, tol: float = 1e-4,
                           seed: int = 0, bisect_limit: int | None = None) -> LocalSampleSet:
    """End-to-end local sampling around the nearest boundary point.

    ``bisect_limit`` optionally bisects only that many of the nearest
    counterfactuals (they are already sorted by cost); the default bisects
    all k. If every sample lands in one predicted class, the ball is resampled
    once at doubled radius (seed+1) before giving up.
    """
    x0 = np.asarray(x0, dtype=float)
    candidates = nearest_counterfactuals(x0, data, model, k)
    if bisect_limit is not None:
        candidates = candidates[:bisect_limit]
    boundary_points = _bisect_batch(x0, candidates, model, tol)
    x_b = select_boundary(x0, boundary_points)

    radius = r_p
    samples = sample_uniform_ball(x_b, radius, n, seed)
    labels = predict_label(model, samples)
    if labels.min() == labels.max():
        radius = 2.0 * r_p
        samples = sample_uniform_ball(x_b, radius, n, seed + 1)
        labels = predict_label(model, samples)
        if labels.min() == labels.max():
            raise DegenerateNeighborhoodError(
                f"all {n} samples predicted class {int(labels[0])} even at doubled radius"
            )
    samples0 = samples[labels == 0]
    samples1 = samples[labels == 1]
    return LocalSampleSet(
        x0=x0,
        x_b=x_b,
        samples0=samples0,
        samples1=samples1,
        gamma0=samples0.shape[0] / n,
        gamma1=samples1.shape[0] / n,
        radius=radius,
        seed=seed,
    )
