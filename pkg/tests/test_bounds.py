import numpy as np
import pytest
from scipy.linalg import sqrtm
from scipy.special import logsumexp

from bayesrec import (
    AmbiguityBall,
    gaussian_ground_cost,
    optimistic_alpha,
    optimistic_likelihood,
    pessimistic_alpha,
    pessimistic_likelihood,
    smoothed_likelihood,
)
from bayesrec.bounds import (
    log_optimistic_likelihood,
    log_pessimistic_likelihood,
    make_optimistic_objective,
    make_pessimistic_objective,
    optimistic_alpha_batch,
    pessimistic_alpha_batch,
)
from bayesrec.quarter_disk import grid_oracle_2d

LOG_2PI = np.log(2 * np.pi)


def general_bures_cost(mean, cov, nominal_mean, sigma):
    """Oracle: the full trace formula with matrix square roots."""
    ref = sigma**2 * np.eye(len(mean))
    middle = sqrtm(sqrtm(ref) @ cov @ sqrtm(ref))
    trace = np.trace(cov + ref - 2.0 * middle)
    return float(np.sqrt(np.sum((mean - nominal_mean) ** 2) + trace.real))


# ---------------------------------------------------------------------------
# Ground cost
# ---------------------------------------------------------------------------

def test_ground_cost_identity():
    sigma = 0.7
    assert gaussian_ground_cost(np.zeros(3), np.full(3, sigma), np.zeros(3), sigma) == 0.0


def test_ground_cost_pure_mean_shift():
    sigma = 0.7
    mean = np.array([3.0, 0.0])
    assert gaussian_ground_cost(mean, np.full(2, sigma), np.zeros(2), sigma) == pytest.approx(3.0)


def test_ground_cost_pinned_value():
    sigma = 0.8
    got = gaussian_ground_cost(np.array([1.0, 0.0]), np.array([sigma + 1.0, sigma]),
                               np.zeros(2), sigma)
    assert got == pytest.approx(np.sqrt(2.0))


def test_ground_cost_matches_general_bures():
    sigma = 0.8
    rng = np.random.default_rng(0)
    for _ in range(20):
        roots = sigma + rng.uniform(0, 1.5, size=2)
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        cov = q @ np.diag(roots**2) @ q.T
        mean = rng.normal(size=2)
        got = gaussian_ground_cost(mean, roots, np.zeros(2), sigma)
        assert got == pytest.approx(general_bures_cost(mean, cov, np.zeros(2), sigma), abs=1e-8)


def test_ground_cost_rejects_negative_roots():
    with pytest.raises(ValueError):
        gaussian_ground_cost(np.zeros(2), np.array([-0.1, 1.0]), np.zeros(2), 1.0)


# ---------------------------------------------------------------------------
# Optimistic subproblem
# ---------------------------------------------------------------------------

def test_optimistic_alpha_collapse():
    ball = AmbiguityBall(0.0, 0.5, 3)
    sol = optimistic_alpha(2.0, ball)
    assert sol.a_star == 0.0 and sol.d_star == 0.5
    assert sol.alpha == pytest.approx(3 * np.log(0.5) + 4.0 / (2 * 0.25))


def test_optimistic_alpha_mean_onto_query():
    ball = AmbiguityBall(1.5, 0.6, 4)
    sol = optimistic_alpha(1.0, ball)  # eps >= dist
    assert sol.alpha == pytest.approx(4 * np.log(0.6))
    assert sol.a_star == pytest.approx(1.0) and sol.d_star == pytest.approx(0.6)


def test_optimistic_fast_path_agrees_with_descent():
    # the analytic shortcut must match the generic solver it bypasses
    ball = AmbiguityBall(1.5, 0.6, 4)
    objective, gradient = make_optimistic_objective(1.0, ball)
    value, _ = grid_oracle_2d(objective, ball.epsilon, 600)
    assert value == pytest.approx(4 * np.log(0.6), abs=1e-4)


def test_optimistic_alpha_pinned_grid_instance():
    ball = AmbiguityBall(1.0, 0.5, 3)
    sol = optimistic_alpha(2.0, ball)
    objective, _ = make_optimistic_objective(2.0, ball)
    oracle, _ = grid_oracle_2d(objective, 1.0, 600)
    assert abs(sol.alpha - oracle) <= 1e-3


def test_optimistic_feasibility_invariant():
    rng = np.random.default_rng(3)
    for _ in range(50):
        ball = AmbiguityBall(float(rng.uniform(0, 2)), float(rng.uniform(0.3, 1.5)),
                             int(rng.integers(1, 11)))
        sol = optimistic_alpha(float(rng.uniform(0, 3)), ball)
        assert sol.a_star**2 + (sol.d_star - ball.sigma) ** 2 <= ball.epsilon**2 + 1e-9
        assert sol.d_star >= ball.sigma - 1e-12


def test_alpha_argument_errors():
    with pytest.raises(ValueError):
        optimistic_alpha(-0.1, AmbiguityBall(1.0, 1.0, 2))
    with pytest.raises(ValueError):
        AmbiguityBall(1.0, 0.0, 2)
    with pytest.raises(ValueError):
        AmbiguityBall(1.0, 1.0, 0)
    with pytest.raises(ValueError):
        pessimistic_alpha(1.0, AmbiguityBall(1.0, 1.0, 2), zeta=0.0)


# ---------------------------------------------------------------------------
# Pessimistic subproblem
# ---------------------------------------------------------------------------

def test_pessimistic_alpha_collapse():
    ball = AmbiguityBall(0.0, 0.5, 3)
    sol = pessimistic_alpha(2.0, ball)
    assert sol.a_star == 0.0 and sol.d_star == 0.5
    assert sol.alpha == pytest.approx(-3 * np.log(0.5) - 4.0 / (2 * 0.25))


def test_pessimistic_alpha_pinned_grid_instance():
    ball = AmbiguityBall(1.0, 1.0, 2)
    sol = pessimistic_alpha(0.0, ball, zeta=1e-8)
    objective, _ = make_pessimistic_objective(0.0, ball, zeta=0.0)
    oracle, _ = grid_oracle_2d(objective, 1.0 / np.sqrt(2), 600)
    assert abs(sol.alpha - oracle) <= 2e-3


def test_pessimistic_feasibility_invariant():
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = int(rng.integers(1, 11))
        ball = AmbiguityBall(float(rng.uniform(0.01, 2)), float(rng.uniform(0.3, 1.5)), p)
        sol = pessimistic_alpha(float(rng.uniform(0, 3)), ball)
        assert sol.a_star**2 + p * (sol.d_star - ball.sigma) ** 2 <= ball.epsilon**2 + 1e-9
        assert sol.d_star >= ball.sigma - 1e-12


def test_pessimistic_p1_special_case():
    # for p=1 the leveled-eigenvalue term drops; oracle by dense scan
    ball = AmbiguityBall(0.8, 0.6, 1)
    dist = 1.3
    sol = pessimistic_alpha(dist, ball)
    a = np.linspace(0, 0.8, 2001)
    d = np.linspace(0.6, 1.4, 2001)[:, None]
    feas = a[None, :] ** 2 + (d - 0.6) ** 2 <= 0.8**2
    vals = -np.log(d) - (dist + a[None, :]) ** 2 / (2 * d * d)
    vals = np.where(feas, vals, np.inf)
    assert abs(sol.alpha - vals.min()) <= 2e-3


def test_pessimistic_reports_both_values():
    sol = pessimistic_alpha(1.0, AmbiguityBall(0.7, 0.9, 3))
    assert sol.alpha_perturbed is not None
    assert abs(sol.alpha_perturbed - sol.alpha) < 1e-3


# ---------------------------------------------------------------------------
# Mixture-level bounds
# ---------------------------------------------------------------------------

def make_fixture(rng, p, n):
    return rng.normal(size=p), rng.normal(size=(n, p))


def test_optimistic_likelihood_collapse():
    rng = np.random.default_rng(1)
    x, samples = make_fixture(rng, 2, 8)
    ball = AmbiguityBall(0.0, 0.9, 2)
    assert optimistic_likelihood(x, samples, ball) == pytest.approx(
        smoothed_likelihood(x, samples, 0.9), rel=1e-12
    )


def test_pessimistic_likelihood_collapse():
    rng = np.random.default_rng(2)
    x, samples = make_fixture(rng, 3, 5)
    ball = AmbiguityBall(0.0, 1.1, 3)
    assert pessimistic_likelihood(x, samples, ball) == pytest.approx(
        smoothed_likelihood(x, samples, 1.1), rel=1e-12
    )


def test_optimistic_single_sample_at_query():
    x = np.array([0.4, -1.0])
    ball = AmbiguityBall(0.7, 0.8, 2)
    got = optimistic_likelihood(x, x[None, :], ball)
    assert got == pytest.approx(1.0 / (2 * np.pi * 0.8**2))  # mode density


def test_likelihood_argument_errors():
    ball = AmbiguityBall(0.1, 1.0, 2)
    with pytest.raises(ValueError):
        optimistic_likelihood(np.zeros(2), np.zeros((0, 2)), ball)
    with pytest.raises(ValueError):
        optimistic_likelihood(np.zeros(3), np.zeros((4, 2)), ball)


def rank_one_mixture_likelihoods(x, samples, sigma, shift, extreme, level, draws_rng):
    """Mixture likelihood at x for D random two-level-covariance mixtures.

    Per draw and component: the mean moves ``shift`` along a random direction,
    one eigenvalue root is ``sigma + extreme`` along another random direction,
    the remaining roots are ``sigma + level``. Shapes (D, n). Returns (D,).
    """
    d_draws, n = shift.shape
    p = x.size
    dirs = draws_rng.normal(size=(d_draws, n, p))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    qdirs = draws_rng.normal(size=(d_draws, n, p))
    qdirs /= np.linalg.norm(qdirs, axis=2, keepdims=True)
    means = samples[None, :, :] + shift[..., None] * dirs
    top = sigma + extreme
    rest = sigma + level
    w = x[None, None, :] - means
    wq = np.sum(w * qdirs, axis=2)
    quad = wq**2 / top**2 + (np.sum(w * w, axis=2) - wq**2) / rest**2
    det_root = top * rest ** (p - 1)
    dens = np.exp(-0.5 * quad) / ((2 * np.pi) ** (p / 2) * det_root)
    return dens.mean(axis=1)


def test_optimistic_likelihood_dominates_feasible_draws():
    # 1e4 random feasible mixtures: means within a of each sample, isotropic
    # covariances inflated rank-one, total transport cost inside the ball
    rng = np.random.default_rng(12)
    x, samples = make_fixture(rng, 2, 5)
    ball = AmbiguityBall(0.7, 0.9, 2)
    bound = optimistic_likelihood(x, samples, ball)
    d_draws, n = 10_000, samples.shape[0]
    t = ball.epsilon * np.sqrt(rng.uniform(size=(d_draws, n)))
    phi = rng.uniform(0, np.pi / 2, size=(d_draws, n))
    shift, bump = t * np.cos(phi), t * np.sin(phi)
    likes = rank_one_mixture_likelihoods(x, samples, ball.sigma, shift, bump,
                                         np.zeros_like(bump), rng)
    assert bound >= likes.max() - 1e-6


def test_pessimistic_likelihood_below_feasible_draws():
    # 1e4 random feasible mixtures with all eigenvalue roots >= sigma
    rng = np.random.default_rng(13)
    p = 3
    x, samples = make_fixture(rng, p, 5)
    ball = AmbiguityBall(0.5, 0.9, p)
    bound = pessimistic_likelihood(x, samples, ball)
    d_draws, n = 10_000, samples.shape[0]
    frac = rng.dirichlet(np.ones(3), size=(d_draws, n))
    budget = ball.epsilon * np.sqrt(rng.uniform(size=(d_draws, n)))
    shift = budget * np.sqrt(frac[..., 0])
    extreme = budget * np.sqrt(frac[..., 1])
    level = budget * np.sqrt(frac[..., 2] / (p - 1))
    likes = rank_one_mixture_likelihoods(x, samples, ball.sigma, shift, extreme, level, rng)
    assert bound <= likes.min() + 1e-6


# ---------------------------------------------------------------------------
# Cross-cutting invariants
# ---------------------------------------------------------------------------

def test_sandwich_and_monotonicity():
    rng = np.random.default_rng(21)
    for _ in range(25):
        p = int(rng.integers(1, 4))
        sigma = float(rng.uniform(0.4, 1.3))
        x, samples = make_fixture(rng, p, 6)
        nominal = smoothed_likelihood(x, samples, sigma)
        prev_hi, prev_lo = None, None
        for eps in np.linspace(0.0, 1.5, 11):
            ball = AmbiguityBall(float(eps), sigma, p)
            hi = optimistic_likelihood(x, samples, ball)
            lo = pessimistic_likelihood(x, samples, ball)
            assert lo <= nominal + 1e-9 and nominal <= hi + 1e-9
            if eps == 0.0:
                assert hi == pytest.approx(nominal, rel=1e-9)
                assert lo == pytest.approx(nominal, rel=1e-9)
            if prev_hi is not None:
                assert hi >= prev_hi - 1e-9
                assert lo <= prev_lo + 1e-9
            prev_hi, prev_lo = hi, lo


def test_separability_matches_per_component_oracle():
    # aggregate bound equals the assembly of independent grid-oracle optima
    rng = np.random.default_rng(31)
    for _ in range(5):
        p = int(rng.integers(1, 4))
        n = int(rng.integers(1, 6))
        sigma = float(rng.uniform(0.5, 1.2))
        eps = float(rng.uniform(0.1, 1.0))
        x, samples = make_fixture(rng, p, n)
        ball = AmbiguityBall(eps, sigma, p)
        dists = np.linalg.norm(samples - x, axis=1)

        alphas = []
        for dist in dists:
            objective, _ = make_optimistic_objective(float(dist), ball)
            alphas.append(grid_oracle_2d(objective, eps, 600)[0])
        oracle = float(np.exp(logsumexp(-np.asarray(alphas)) - np.log(n) - p / 2 * LOG_2PI))
        assert optimistic_likelihood(x, samples, ball) == pytest.approx(oracle, abs=n * 1e-3)

        alphas = []
        for dist in dists:
            objective, _ = make_pessimistic_objective(float(dist), ball, zeta=0.0)
            alphas.append(grid_oracle_2d(objective, eps / np.sqrt(p), 600)[0])
        oracle = float(np.exp(logsumexp(np.asarray(alphas)) - np.log(n) - p / 2 * LOG_2PI))
        assert pessimistic_likelihood(x, samples, ball) == pytest.approx(oracle, abs=n * 1e-3)


def test_batch_scalar_consistency():
    # the scalar ops quantize dist to 1e-12 for the memo key, so allow the
    # quantization times the objective's distance sensitivity
    rng = np.random.default_rng(41)
    dists = rng.uniform(0, 3, size=20)
    ball = AmbiguityBall(0.8, 0.7, 4)
    b_opt = optimistic_alpha_batch(dists, ball)
    b_pes = pessimistic_alpha_batch(dists, ball, 1e-8)
    for i, dist in enumerate(dists):
        assert optimistic_alpha(float(dist), ball).alpha == pytest.approx(float(b_opt.alpha[i]), abs=1e-10)
        assert pessimistic_alpha(float(dist), ball).alpha == pytest.approx(float(b_pes.alpha[i]), abs=1e-10)


def test_log_likelihoods_match_plain():
    rng = np.random.default_rng(51)
    x, samples = make_fixture(rng, 2, 6)
    ball = AmbiguityBall(0.4, 1.0, 2)
    assert np.exp(log_optimistic_likelihood(x, samples, ball)) == pytest.approx(
        optimistic_likelihood(x, samples, ball), rel=1e-12
    )
    assert np.exp(log_pessimistic_likelihood(x, samples, ball)) == pytest.approx(
        pessimistic_likelihood(x, samples, ball), rel=1e-12
    )
