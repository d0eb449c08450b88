"""Projected gradient descent over the non-negative quarter disk.

The feasible set is {v in R^2 : v1, v2 >= 0, v1^2 + v2^2 <= r^2}. Projection
onto it is a seven-case closed form; descent uses backtracking line search
with the sufficient-decrease rule F(w) <= F(v) - ||v - w||^2 / (2 s).
"""

from __future__ import annotations

import numpy as np

MAX_BACKTRACKS = 60


def project_quarter_disk(v, r):
    """Euclidean projection onto the quarter disk of radius ``r``.

    Accepts a single 2-vector or an (N, 2) batch; ``r`` may be a scalar or a
    per-row array. Total for finite inputs.
    """
    v = np.asarray(v, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    v1, v2 = v[..., 0], v[..., 1]
    r = np.broadcast_to(r, v1.shape)
    norm = np.hypot(v1, v2)
    safe_norm = np.where(norm > 0, norm, 1.0)
    conds = [
        (v1 >= 0) & (v2 >= 0) & (norm <= r),
        (v1 >= 0) & (v2 >= 0),
        (v1 < 0) & (v2 > r),
        (v1 < 0) & (v2 >= 0),
        (v2 < 0) & (v1 > r),
        (v2 < 0) & (v1 >= 0),
    ]
    out1 = np.select(conds, [v1, r * v1 / safe_norm, 0.0, 0.0, r, v1], default=0.0)
    out2 = np.select(conds, [v2, r * v2 / safe_norm, r, v2, 0.0, 0.0], default=0.0)
    return np.stack([out1, out2], axis=-1)


def pgd_2d(objective, gradient, projector, v0, theta=0.5, beta=1.0, tol=1e-8,
           max_iter=500):
    """Projected gradient descent with backtracking line search.

    Starting from a feasible ``v0``, iterates v <- Proj(v - s * grad F(v))
    with s = theta^k * beta for the smallest k passing the sufficient-decrease
    test. Stops when the iterate moves by at most ``tol`` or after
    ``max_iter`` steps. More than ``MAX_BACKTRACKS`` halvings in a single step
    aborts with the best iterate and converged=False.

    Returns (v_star, value, converged).
    """
    v = np.asarray(v0, dtype=float)
    fv = float(objective(v))
    for _ in range(max_iter):
        g = np.asarray(gradient(v), dtype=float)
        s = beta
        w = fw = None
        for _k in range(MAX_BACKTRACKS + 1):
            w = np.asarray(projector(v - s * g), dtype=float)
            fw = float(objective(w))
            if fw <= fv - float(np.sum((v - w) ** 2)) / (2.0 * s):
                break
            s *= theta
        else:
            return v, fv, False  # stalled line search
        moved = float(np.linalg.norm(w - v))
        v, fv = w, fw
        if moved <= tol:
            return v, fv, True
    return v, fv, False


def pgd_quarter_disk_batch(objective, gradient, radius, v0, theta=0.5, beta=1.0,
                           tol=1e-8, max_iter=500):
    """Row-parallel variant of :func:`pgd_2d` on quarter disks.

    ``objective(V, rows=None) -> (N,)`` and ``gradient(V, rows=None) -> (N, 2)``
    must be vectorized over rows and accept an optional global row-index array
    so that converged rows can drop out of the computation; ``radius`` is
    scalar or per-row. Each row runs its own line search.

    Returns (v, value, converged, iterations) as per-row arrays.
    """
    v = np.array(v0, dtype=float, copy=True)
    if v.ndim != 2 or v.shape[1] != 2:
        raise ValueError("v0 must have shape (N, 2)")
    n = v.shape[0]
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (n,))
    fv = np.asarray(objective(v), dtype=float)
    converged = np.zeros(n, dtype=bool)
    stalled = np.zeros(n, dtype=bool)
    iterations = np.zeros(n, dtype=int)
    active = np.arange(n)

    for _ in range(max_iter):
        if active.size == 0:
            break
        va, fva, ra = v[active], fv[active], radius[active]
        g = np.asarray(gradient(va, active), dtype=float)
        step = np.full(active.size, beta)
        w = project_quarter_disk(va - step[:, None] * g, ra)
        fw = np.asarray(objective(w, active), dtype=float)
        ok = fw <= fva - np.sum((va - w) ** 2, axis=1) / (2.0 * step)
        for _k in range(MAX_BACKTRACKS):
            need = np.flatnonzero(~ok)
            if need.size == 0:
                break
            step[need] *= theta
            w[need] = project_quarter_disk(va[need] - step[need, None] * g[need], ra[need])
            fw[need] = np.asarray(objective(w[need], active[need]), dtype=float)
            ok[need] = fw[need] <= fva[need] - np.sum((va[need] - w[need]) ** 2, axis=1) / (2.0 * step[need])
        moved = np.linalg.norm(w - va, axis=1)
        rows = active[ok]
        v[rows] = w[ok]
        fv[rows] = fw[ok]
        iterations[rows] += 1
        converged[active[ok & (moved <= tol)]] = True
        stalled[active[~ok]] = True
        active = active[ok & (moved > tol)]
    return v, fv, converged, iterations


def grid_oracle_2d(objective, r, resolution):
    """Exhaustive minimum of ``objective`` over a quarter-disk grid.

    Evaluates a resolution x resolution lattice of [0, r]^2, skipping points
    outside the disk, plus ``resolution`` samples along the circular arc so
    the curved boundary is represented at full resolution. The objective is
    called once on the full (M, 2) stack of feasible points when it supports
    vectorized input, otherwise per point.

    Returns (value, argmin).
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    axis = np.linspace(0.0, r, resolution)
    v1, v2 = np.meshgrid(axis, axis, indexing="ij")
    keep = v1**2 + v2**2 <= r**2 + 1e-15
    phi = np.linspace(0.0, np.pi / 2.0, resolution)
    pts = np.concatenate([
        np.stack([v1[keep], v2[keep]], axis=-1),
        r * np.stack([np.sin(phi), np.cos(phi)], axis=-1),
    ])
    try:
        vals = np.asarray(objective(pts), dtype=float)
        if vals.shape != (pts.shape[0],):
            raise ValueError
    except Exception:
        vals = np.array([float(objective(pt)) for pt in pts])
    best = int(np.argmin(vals))
    return float(vals[best]), pts[best]
