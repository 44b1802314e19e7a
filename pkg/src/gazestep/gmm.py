"""Gaussian mixture fitting over (shape, scale) parameter clouds.

Full-covariance EM with k-means++ initialization, a diagonal covariance
floor applied every M-step, and a best-of-restarts policy.  The winning
restart's per-iteration log-likelihood trace is kept on the model so the
EM monotonicity guarantee can be checked by callers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class GmmConfig:
    n_restarts: int = 5
    max_iter: int = 500
    tol: float = 1e-7  # absolute log-likelihood improvement threshold
    cov_floor: float = 1e-8  # added to covariance diagonals each M-step


@dataclass
class GmmModel:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    covariances: np.ndarray  # (K, d, d)
    log_likelihood: float
    ll_trace: list = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return len(self.weights)


def _component_log_density(points: np.ndarray, mean, cov) -> np.ndarray:
    d = points.shape[1]
    chol = np.linalg.cholesky(cov)
    diff = points - mean
    sol = np.linalg.solve(chol, diff.T)
    maha = np.sum(sol * sol, axis=0)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (d * math.log(2.0 * math.pi) + log_det + maha)


def _weighted_log_prob(points, weights, means, covs) -> np.ndarray:
    cols = [
        _component_log_density(points, means[k], covs[k]) + math.log(max(weights[k], 1e-300))
        for k in range(len(weights))
    ]
    return np.column_stack(cols)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[int(rng.integers(n))]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(k - 1):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - centers[-1]) ** 2, axis=1))
    return np.array(centers, dtype=float)


def _em_once(points, k, rng, config):
    n, d = points.shape
    means = _kmeans_pp(points, k, rng)
    weights = np.full(k, 1.0 / k)
    base_cov = np.atleast_2d(np.cov(points.T)) + config.cov_floor * np.eye(d)
    covs = np.repeat(base_cov[None, :, :], k, axis=0)
    trace: list[float] = []
    ll_prev = -math.inf
    converged = False
    for it in range(config.max_iter):
        log_prob = _weighted_log_prob(points, weights, means, covs)
        log_norm = logsumexp(log_prob, axis=1)
        ll = float(np.sum(log_norm))
        trace.append(ll)
        if it > 0 and ll - ll_prev < config.tol:
            converged = True
            break
        ll_prev = ll
        resp = np.exp(log_prob - log_norm[:, None])
        nk = resp.sum(axis=0) + 1e-300
        weights = nk / n
        means = (resp.T @ points) / nk[:, None]
        for j in range(k):
            diff = points - means[j]
            covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j]
            covs[j][np.diag_indices(d)] += config.cov_floor
    if not converged:
        # parameters moved after the last recorded step; report their likelihood
        log_prob = _weighted_log_prob(points, weights, means, covs)
        trace.append(float(np.sum(logsumexp(log_prob, axis=1))))
    return GmmModel(
        weights=weights,
        means=means,
        covariances=covs,
        log_likelihood=trace[-1],
        ll_trace=trace,
    )


def fit_gmm(points, n_components: int, seed: int = 0, config: GmmConfig = GmmConfig()) -> GmmModel:
    """Best-of-restarts EM fit.

    Raises:
        ValueError: fewer than 10 points per component, or zero spread.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D array of row vectors")
    n = pts.shape[0]
    if n < 10 * n_components:
        raise ValueError(
            f"need at least {10 * n_components} points for {n_components} components, got {n}"
        )
    if np.all(pts == pts[0]):
        raise ValueError("all points identical; no spread to model")
    best: GmmModel | None = None
    for restart in range(config.n_restarts):
        rng = np.random.default_rng([seed, restart])
        model = _em_once(pts, n_components, rng, config)
        if best is None or model.log_likelihood > best.log_likelihood:
            best = model
    return best


def density(model: GmmModel, points) -> np.ndarray:
    """Mixture density at the given row vectors."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    log_prob = _weighted_log_prob(pts, model.weights, model.means, model.covariances)
    return np.exp(logsumexp(log_prob, axis=1))


def responsibilities(model: GmmModel, point) -> np.ndarray:
    """Posterior component probabilities at a single point; sums to 1."""
    p = np.asarray(point, dtype=float)[None, :]
    log_prob = _weighted_log_prob(p, model.weights, model.means, model.covariances)
    resp = np.exp(log_prob[0] - logsumexp(log_prob[0]))
    return resp / resp.sum()


@dataclass
class ClusterObserverMap:
    observer_to_component: dict
    purity: float


def cluster_observer_map(model: GmmModel, records) -> ClusterObserverMap:
    """Associate each observer with its dominant mixture component.

    Each observer gets the component maximizing the summed responsibilities
    of that observer's (k, sigma) points.  Purity is the usual contingency
    purity of the hard point-to-component assignment against observer labels.
    """
    pts = []
    labels = []
    for r in records:
        if getattr(r, "failed", False) or r.params is None:
            continue
        pts.append([r.params.k, r.params.sigma])
        labels.append(r.observer_id)
    if not pts:
        raise ValueError("no successful records")
    pts = np.asarray(pts)
    log_prob = _weighted_log_prob(pts, model.weights, model.means, model.covariances)
    resp = np.exp(log_prob - logsumexp(log_prob, axis=1)[:, None])
    observers = sorted(set(labels))
    label_arr = np.array(labels)
    mapping = {}
    for obs in observers:
        mask = label_arr == obs
        mapping[obs] = int(np.argmax(resp[mask].sum(axis=0)))
    hard = np.argmax(resp, axis=1)
    total = 0
    for comp in range(model.n_components):
        in_comp = label_arr[hard == comp]
        if in_comp.size:
            _, counts = np.unique(in_comp, return_counts=True)
            total += int(counts.max())
    return ClusterObserverMap(observer_to_component=mapping, purity=total / len(labels))


def component_ellipse(model: GmmModel, component: int, n_sigma: float, n_points: int = 100) -> np.ndarray:
    """Points of the n-sigma covariance ellipse of one component."""
    vals, vecs = np.linalg.eigh(model.covariances[component])
    angles = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    circle = np.column_stack([np.cos(angles), np.sin(angles)])
    return model.means[component] + n_sigma * circle @ np.diag(np.sqrt(vals)) @ vecs.T


def model_to_dict(model: GmmModel) -> dict:
    return {
        "n_components": model.n_components,
        "weights": [float(w) for w in model.weights],
        "means": [[float(v) for v in m] for m in model.means],
        # row-major covariance entries per component
        "covariances": [[float(v) for v in c.ravel()] for c in model.covariances],
        "log_likelihood": model.log_likelihood,
    }


def model_from_dict(d: dict) -> GmmModel:
    k = int(d["n_components"])
    means = np.asarray(d["means"], dtype=float)
    dim = means.shape[1]
    covs = np.asarray(d["covariances"], dtype=float).reshape(k, dim, dim)
    return GmmModel(
        weights=np.asarray(d["weights"], dtype=float),
        means=means,
        covariances=covs,
        log_likelihood=float(d["log_likelihood"]),
        ll_trace=[],
    )
