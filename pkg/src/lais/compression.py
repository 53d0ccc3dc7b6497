"""Proposal-bank compression: many locations summarised by a small mixture.

A bank of R chain states is clustered (seeded k-means), each cluster is
replaced by its mean with weight proportional to its share of points,
and a single shared covariance restores the spread that the summary
discarded:

    Sigma = Q_mu - Q_C + sigma_p^2 I

where Q_mu is the scatter of all locations about their grand mean and
Q_C the scatter of the cluster summaries. When the summaries are the
cluster means this equals sigma_p^2 I plus the weighted average of the
within-cluster covariances, which is the form used here because it makes
the two endpoints exact: B = R gives sigma_p^2 I, B = 1 gives
Q_mu + sigma_p^2 I.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .rng import derive_rng

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class ClusterAssignment:
    labels: np.ndarray      # (R,) int
    n_clusters: int
    inertia: float
    n_iterations: int


def _sq_dist_table(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # accumulated per axis: deterministic and memory-light
    sq = np.zeros((X.shape[0], C.shape[0]))
    for j in range(X.shape[1]):
        d = X[:, j, None] - C[None, :, j]
        sq += d * d
    return sq


def _kmeans_pp_init(X: np.ndarray, B: int, rng: np.random.Generator) -> np.ndarray:
    R = X.shape[0]
    centers = np.empty((B, X.shape[1]))
    centers[0] = X[rng.integers(R)]
    d2 = _sq_dist_table(X, centers[0:1])[:, 0]
    for b in range(1, B):
        total = d2.sum()
        if total <= 0.0:
            centers[b] = X[rng.integers(R)]  # all mass already covered
            continue
        idx = rng.choice(R, p=d2 / total)
        centers[b] = X[idx]
        d2 = np.minimum(d2, _sq_dist_table(X, centers[b : b + 1])[:, 0])
    return centers


def cluster_locations(locations: np.ndarray, n_clusters: int,
                      seed: int) -> ClusterAssignment:
    """Seeded k-means (k-means++ start, Lloyd refinement).

    Runs at most 100 iterations or until the relative inertia change
    falls below 1e-8. A cluster that loses all its points is repaired by
    stealing the point currently farthest from its own centroid.
    """
    X = np.asarray(locations, dtype=float)
    if X.ndim != 2:
        raise ValueError("locations must be an (R, D) array")
    R = X.shape[0]
    B = int(n_clusters)
    if not (1 <= B <= R):
        raise ValueError(f"need 1 <= clusters <= {R}, got {B}")
    rng = derive_rng(seed)
    centers = _kmeans_pp_init(X, B, rng)
    prev_inertia = np.inf
    labels = np.zeros(R, dtype=int)
    n_iter = 0
    for n_iter in range(1, 101):
        sq = _sq_dist_table(X, centers)
        labels = np.argmin(sq, axis=1)
        own = sq[np.arange(R), labels]
        for b in range(B):
            if not np.any(labels == b):
                far = int(np.argmax(own))
                labels[far] = b
                own[far] = 0.0
        for b in range(B):
            centers[b] = X[labels == b].mean(axis=0)
        inertia = float(np.sum(_sq_dist_table(X, centers)[np.arange(R), labels]))
        if prev_inertia - inertia <= 1e-8 * max(abs(prev_inertia), 1e-300):
            break
        prev_inertia = inertia
    return ClusterAssignment(labels=labels, n_clusters=B, inertia=inertia,
                             n_iterations=n_iter)


def summarize_clusters(locations: np.ndarray, assignment: ClusterAssignment,
                       pick: str = "mean", seed: int = 0):
    """Per-cluster summary points and mass shares ``|J_b| / R``.

    ``pick="mean"`` uses cluster means; ``pick="random"`` draws one
    member per cluster instead (the covariance then needs the general
    scatter-difference form).
    """
    X = np.asarray(locations, dtype=float)
    B = assignment.n_clusters
    points = np.empty((B, X.shape[1]))
    weights = np.empty(B)
    rng = derive_rng(seed) if pick == "random" else None
    for b in range(B):
        members = np.flatnonzero(assignment.labels == b)
        if members.size == 0:
            raise ValueError(f"cluster {b} is empty; assignment is inconsistent")
        weights[b] = members.size / X.shape[0]
        if pick == "mean":
            points[b] = X[members].mean(axis=0)
        elif pick == "random":
            points[b] = X[rng.choice(members)]
        else:
            raise ValueError(f"unknown summary rule {pick!r}")
    return points, weights


def compressed_covariance(locations: np.ndarray, assignment: ClusterAssignment,
                          sigma_p2: float, points: np.ndarray | None = None) -> np.ndarray:
    """Shared covariance of the compressed mixture.

    With mean summaries (``points=None``) the scatter difference
    Q_mu - Q_C collapses to the weighted within-cluster covariance,
    which is computed directly so the B = R and B = 1 endpoints are
    exact. Explicit ``points`` (e.g. random-member summaries) use the
    general form.
    """
    X = np.asarray(locations, dtype=float)
    R, D = X.shape
    if sigma_p2 <= 0:
        raise ValueError("sigma_p2 must be positive")
    if points is None:
        within = np.zeros((D, D))
        for b in range(assignment.n_clusters):
            Xb = X[assignment.labels == b]
            c = Xb.mean(axis=0)
            diff = Xb - c
            within += diff.T @ diff  # sum over members; /R below gives the weights
        return within / R + sigma_p2 * np.eye(D)
    points = np.asarray(points, dtype=float)
    weights = np.bincount(assignment.labels, minlength=assignment.n_clusters) / R
    m = X.mean(axis=0)
    diff = X - m
    q_mu = diff.T @ diff / R
    m_c = weights @ points
    dc = points - m_c
    q_c = (dc * weights[:, None]).T @ dc
    return q_mu - q_c + sigma_p2 * np.eye(D)


@dataclass
class CompressedMixture:
    """Gaussian mixture with shared covariance standing in for a bank."""

    points: np.ndarray    # (B, D)
    weights: np.ndarray   # (B,)
    sigma: np.ndarray     # (D, D)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if not np.isclose(self.weights.sum(), 1.0, atol=1e-9):
            raise ValueError("mixture weights must sum to one")
        if np.any(self.weights < 0):
            raise ValueError("mixture weights must be non-negative")
        self._chol = np.linalg.cholesky(self.sigma)
        self._logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))
        self._log_weights = np.log(self.weights)

    @property
    def n_components(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def log_pdf_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Xw = np.linalg.solve(self._chol, X.T).T
        Pw = np.linalg.solve(self._chol, self.points.T).T
        sq = np.zeros((X.shape[0], self.n_components))
        for j in range(self.dimension):
            d = Xw[:, j, None] - Pw[None, :, j]
            sq += d * d
        comp = -0.5 * (self.dimension * _LOG_2PI + self._logdet) - 0.5 * sq
        return logsumexp(comp + self._log_weights[None, :], axis=1)

    def log_pdf(self, x) -> float:
        return float(self.log_pdf_batch(np.asarray(x, dtype=float)[None, :])[0])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draws with per-component counts proportional to the weights.

        Mirrors the uncompressed lower layer, which draws a fixed number
        of samples per proposal rather than selecting proposals at
        random. When ``size`` is a multiple of the summarised bank size
        the counts ``weights * size`` are exact integers; otherwise the
        largest fractional remainders absorb the difference.
        """
        raw = self.weights * size
        counts = np.floor(raw + 1e-9).astype(int)
        short = size - counts.sum()
        if short > 0:
            order = np.argsort(raw - np.floor(raw + 1e-9))[::-1]
            counts[order[:short]] += 1
        elif short < 0:
            order = np.argsort(raw - np.floor(raw + 1e-9))
            for b in order:
                if short == 0:
                    break
                if counts[b] > 0:
                    counts[b] -= 1
                    short += 1
        ks = np.repeat(np.arange(self.n_components), counts)
        z = rng.standard_normal((size, self.dimension))
        return self.points[ks] + z @ self._chol.T

    def to_json_dict(self) -> dict:
        return {
            "B": int(self.n_components),
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @staticmethod
    def from_json_dict(data: dict) -> "CompressedMixture":
        mix = CompressedMixture(
            points=np.asarray(data["points"], dtype=float),
            weights=np.asarray(data["weights"], dtype=float),
            sigma=np.asarray(data["sigma"], dtype=float),
        )
        if mix.n_components != int(data["B"]):
            raise ValueError("component count disagrees with B")
        return mix


def compress_locations(locations: np.ndarray, n_clusters: int, sigma_p2: float,
                       seed: int) -> CompressedMixture:
    """Cluster, summarise by means, and attach the matched covariance."""
    assignment = cluster_locations(locations, n_clusters, seed)
    points, weights = summarize_clusters(locations, assignment)
    sigma = compressed_covariance(locations, assignment, sigma_p2)
    return CompressedMixture(points=points, weights=weights, sigma=sigma)
