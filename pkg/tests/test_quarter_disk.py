import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesrec import AmbiguityBall, pgd_2d, project_quarter_disk
from bayesrec.bounds import make_optimistic_objective
from bayesrec.quarter_disk import grid_oracle_2d, pgd_quarter_disk_batch

finite = st.floats(min_value=-10, max_value=10, allow_nan=False)


# ---------------------------------------------------------------------------
# Projection: the seven closed-form regions
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "v, r, expected",
    [
        ((0.1, 0.1), 1.0, (0.1, 0.1)),     # interior: identity
        ((3.0, 4.0), 1.0, (0.6, 0.8)),     # first quadrant, outside: radial scaling
        ((-1.0, 2.0), 1.0, (0.0, 1.0)),    # v1 < 0, v2 > r: top corner
        ((-1.0, 0.4), 1.0, (0.0, 0.4)),    # v1 < 0, 0 <= v2 <= r: snap to axis
        ((2.0, -1.0), 1.0, (1.0, 0.0)),    # v1 > r, v2 < 0: right corner
        ((0.4, -1.0), 1.0, (0.4, 0.0)),    # 0 <= v1 <= r, v2 < 0: snap to axis
        ((-1.0, -1.0), 1.0, (0.0, 0.0)),   # both negative: origin
    ],
)
def test_projection_regions(v, r, expected):
    assert np.allclose(project_quarter_disk(np.array(v), r), expected)


def test_projection_batch_matches_scalar():
    rng = np.random.default_rng(0)
    vs = rng.uniform(-3, 3, size=(50, 2))
    batch = project_quarter_disk(vs, 1.3)
    for v, out in zip(vs, batch):
        assert np.allclose(project_quarter_disk(v, 1.3), out)


def test_projection_rejects_negative_radius():
    with pytest.raises(ValueError):
        project_quarter_disk(np.array([1.0, 1.0]), -0.5)


@given(finite, finite)
@settings(max_examples=200, deadline=None)
def test_projection_idempotent_and_feasible(v1, v2):
    r = 1.0
    out = project_quarter_disk(np.array([v1, v2]), r)
    assert out[0] >= 0 and out[1] >= 0
    assert out[0] ** 2 + out[1] ** 2 <= r**2 + 1e-12
    again = project_quarter_disk(out, r)
    assert np.allclose(out, again, atol=1e-14)


def test_projection_nonexpansive_bulk():
    rng = np.random.default_rng(7)
    u = rng.uniform(-5, 5, size=(10_000, 2))
    v = rng.uniform(-5, 5, size=(10_000, 2))
    pu = project_quarter_disk(u, 0.8)
    pv = project_quarter_disk(v, 0.8)
    assert (
        np.linalg.norm(pu - pv, axis=1) <= np.linalg.norm(u - v, axis=1) + 1e-12
    ).all()


# ---------------------------------------------------------------------------
# Scalar projected descent
# ---------------------------------------------------------------------------

def quadratic(target):
    target = np.asarray(target, dtype=float)

    def objective(v):
        return float(np.sum((np.asarray(v) - target) ** 2))

    def gradient(v):
        return 2.0 * (np.asarray(v) - target)

    return objective, gradient


def test_pgd_interior_optimum():
    objective, gradient = quadratic([0.2, 0.3])
    v, value, converged = pgd_2d(objective, gradient, lambda v: project_quarter_disk(v, 1.0),
                                 np.zeros(2), tol=1e-10)
    assert converged
    assert np.allclose(v, [0.2, 0.3], atol=1e-8)


def test_pgd_boundary_optimum():
    objective, gradient = quadratic([2.0, 0.0])
    v, value, converged = pgd_2d(objective, gradient, lambda v: project_quarter_disk(v, 1.0),
                                 np.zeros(2), tol=1e-10)
    assert converged
    assert np.allclose(v, [1.0, 0.0], atol=1e-8)


def test_pgd_accepted_steps_monotone():
    # gradient is only queried at accepted iterates, so logging those points
    # reconstructs the accepted-step objective trace
    rng = np.random.default_rng(4)
    for _ in range(100):
        ball = AmbiguityBall(float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.3, 1.5)),
                             int(rng.integers(1, 6)))
        objective, gradient = make_optimistic_objective(float(rng.uniform(0, 3)), ball)
        accepted = []

        def logging_gradient(v):
            accepted.append(float(objective(v)))
            return gradient(v)

        pgd_2d(objective, logging_gradient, lambda v: project_quarter_disk(v, ball.epsilon),
               np.zeros(2))
        assert (np.diff(accepted) <= 1e-12).all()


def test_pgd_zero_gradient_converges_immediately():
    v, value, converged = pgd_2d(lambda v: 1.0, lambda v: np.zeros(2),
                                 lambda v: project_quarter_disk(v, 1.0), np.array([0.3, 0.1]))
    assert converged and value == 1.0 and np.allclose(v, [0.3, 0.1])


# ---------------------------------------------------------------------------
# Grid oracle
# ---------------------------------------------------------------------------

def test_grid_oracle_constant():
    value, argmin = grid_oracle_2d(lambda v: np.full(v.shape[:-1], 3.25), 1.0, 11)
    assert value == 3.25


def test_grid_oracle_linear():
    value, argmin = grid_oracle_2d(lambda v: v[..., 0] + v[..., 1], 1.0, 101)
    assert value == 0.0
    assert np.allclose(argmin, [0.0, 0.0])


def test_grid_oracle_scalar_fallback():
    # non-vectorized objective exercises the per-point path
    value, _ = grid_oracle_2d(lambda v: float(v[0] + v[1]), 1.0, 21)
    assert value == 0.0


def test_grid_oracle_resolution_validation():
    with pytest.raises(ValueError):
        grid_oracle_2d(lambda v: 0.0, 1.0, 1)


def test_grid_oracle_agreement_with_pgd():
    # the oracle that pins the acceptance tolerance: 100 random instances
    rng = np.random.default_rng(11)
    for _ in range(100):
        ball = AmbiguityBall(float(rng.uniform(0.05, 2.0)), float(rng.uniform(0.3, 1.5)),
                             int(rng.integers(1, 6)))
        dist = float(rng.uniform(0, 3))
        objective, gradient = make_optimistic_objective(dist, ball)
        oracle_value, oracle_argmin = grid_oracle_2d(objective, ball.epsilon, 600)
        v, value, _ = pgd_2d(objective, gradient,
                             lambda v: project_quarter_disk(v, ball.epsilon),
                             np.asarray(oracle_argmin))
        assert abs(value - oracle_value) <= 1e-3


# ---------------------------------------------------------------------------
# Batch solver consistency
# ---------------------------------------------------------------------------

def test_batch_matches_scalar_runs():
    rng = np.random.default_rng(2)
    dists = rng.uniform(0, 3, size=40)
    ball = AmbiguityBall(0.9, 0.7, 3)
    objective, gradient = make_optimistic_objective(dists, ball)
    v0 = np.tile([0.1, 0.2], (40, 1))
    v, fv, conv, iters = pgd_quarter_disk_batch(objective, gradient, ball.epsilon, v0)
    for i in range(40):
        obj_i, grad_i = make_optimistic_objective(float(dists[i]), ball)
        vi, fvi, ci = pgd_2d(obj_i, grad_i, lambda u: project_quarter_disk(u, ball.epsilon),
                             np.array([0.1, 0.2]))
        assert fvi == pytest.approx(float(fv[i]), abs=1e-12)
        assert np.allclose(vi, v[i], atol=1e-10)
