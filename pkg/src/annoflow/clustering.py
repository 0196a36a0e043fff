"""K-means and Gaussian-mixture clustering of foreground pixel coordinates.

Written directly (Lloyd iterations; EM with full covariances) so the
iteration histories are observable: K-means inertia must never increase
and the GMM log-likelihood must never decrease, and the tests assert both
per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_COV_REG = 1e-6  # added to covariance diagonals each M-step


@dataclass
class KMeansResult:
    assignments: np.ndarray  # (n,) int cluster index
    centers: np.ndarray      # (k, d)
    inertia_history: list[float]


@dataclass
class GmmResult:
    assignments: np.ndarray      # (n,) argmax responsibility
    means: np.ndarray            # (k, d)
    covariances: np.ndarray      # (k, d, d)
    weights: np.ndarray          # (k,)
    log_likelihood_history: list[float]


def farthest_point_init(
    points: np.ndarray, k: int, seeds: np.ndarray | None = None
) -> np.ndarray:
    """Deterministic center initialization: start from the given seed
    centers (e.g. watershed label centroids), then repeatedly add the point
    farthest from all chosen centers until k centers exist."""
    n = points.shape[0]
    if k > n:
        raise ValueError(f"cannot place {k} centers on {n} points")
    centers: list[np.ndarray] = []
    if seeds is not None and len(seeds):
        centers = [np.asarray(s, dtype=float) for s in seeds[:k]]
    if not centers:
        centers = [points[0].astype(float)]
    while len(centers) < k:
        d2 = np.min(
            [((points - c) ** 2).sum(axis=1) for c in centers], axis=0
        )
        centers.append(points[int(np.argmax(d2))].astype(float))
    return np.stack(centers)


def kmeans(
    points: np.ndarray,
    k: int,
    init_centers: np.ndarray | None = None,
    max_iters: int = 300,
) -> KMeansResult:
    """Lloyd iterations to convergence; ties assign to the lower cluster
    index, empty clusters re-seed at the farthest point."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    centers = (
        np.array(init_centers, dtype=float)
        if init_centers is not None
        else farthest_point_init(pts, k)
    )

    history: list[float] = []
    assignments = np.zeros(n, dtype=int)
    for _ in range(max_iters):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignments = np.argmin(d2, axis=1)  # argmin takes first on ties
        inertia = float(d2[np.arange(n), new_assignments].sum())
        history.append(inertia)
        converged = bool(np.array_equal(new_assignments, assignments)) and len(history) > 1
        assignments = new_assignments
        for c in range(k):
            members = pts[assignments == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:
                dist = ((pts - centers[assignments]) ** 2).sum(axis=1)
                centers[c] = pts[int(np.argmax(dist))]
        if converged:
            break
    return KMeansResult(assignments=assignments, centers=centers, inertia_history=history)


def _log_gauss(points: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = points.shape[1]
    diff = points - mean
    chol = np.linalg.cholesky(cov)
    solved = np.linalg.solve(chol, diff.T)
    maha = (solved**2).sum(axis=0)
    log_det = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (d * np.log(2.0 * np.pi) + log_det + maha)


def gmm(
    points: np.ndarray,
    k: int,
    max_iters: int = 100,
    tol: float = 1e-4,
    init: KMeansResult | None = None,
) -> GmmResult:
    """EM with full covariances, initialized from a K-means partition.

    Stops when the log-likelihood improves by less than tol or after
    max_iters. Covariances get a small diagonal regularizer so collinear
    pixel sets stay invertible.
    """
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    if k > n:
        raise ValueError(f"cannot fit {k} components to {n} points")
    if init is None:
        init = kmeans(pts, k)

    means = init.centers.copy()
    covs = np.empty((k, d, d))
    weights = np.empty(k)
    for c in range(k):
        members = pts[init.assignments == c]
        weights[c] = max(len(members), 1) / n
        if len(members) > 1:
            covs[c] = np.cov(members.T) + _COV_REG * np.eye(d)
        else:
            covs[c] = np.eye(d)
    weights /= weights.sum()

    history: list[float] = []
    log_resp = np.zeros((n, k))
    for _ in range(max_iters):
        # E-step
        for c in range(k):
            log_resp[:, c] = np.log(weights[c]) + _log_gauss(pts, means[c], covs[c])
        log_norm = np.logaddexp.reduce(log_resp, axis=1)
        ll = float(log_norm.sum())
        resp = np.exp(log_resp - log_norm[:, None])
        # M-step
        nk = resp.sum(axis=0) + 1e-12
        weights = nk / n
        means = (resp.T @ pts) / nk[:, None]
        for c in range(k):
            diff = pts - means[c]
            covs[c] = (resp[:, c, None] * diff).T @ diff / nk[c] + _COV_REG * np.eye(d)
        if history and abs(ll - history[-1]) < tol:
            history.append(ll)
            break
        history.append(ll)

    assignments = np.argmax(log_resp, axis=1)
    return GmmResult(
        assignments=assignments,
        means=means,
        covariances=covs,
        weights=weights,
        log_likelihood_history=history,
    )
