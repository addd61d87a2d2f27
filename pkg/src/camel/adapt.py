"""Porting predictors to a new device or user with few profiled pages.

Pages are clustered with k-means, the number of clusters is picked by the
BIC score, two pages per cluster are profiled, and the base network is
fine-tuned from copied weights on those samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from camel.errors import DegenerateVarianceError, DomainError
from camel.neural import Dataset, Network, TrainingConfig, init_from_base, train


@dataclass(frozen=True)
class ClusteringResult:
    k: int
    centroids: np.ndarray       # (k, d)
    assignment: np.ndarray      # (R,) cluster index per point
    counts: np.ndarray          # (k,) R_n
    sigma2: float               # pooled ML variance sum ||x - c(x)||^2 / (R d)
    inertia: tuple = ()         # within-cluster sum of squares after each Lloyd step

    @property
    def R(self) -> int:
        return int(self.assignment.shape[0])

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == j)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        # all remaining points coincide with a center: take the first unused index
        i = int(rng.choice(len(x), p=d2 / total)) if total > 0 else int(np.argmax(d2 >= 0))
        centers.append(x[i])
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(axis=1))
    return np.array(centers)


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 300, n_init: int = 4) -> ClusteringResult:
    """Lloyd's algorithm from k-means++ seeding; stops when assignments are stable.

    The best of ``n_init`` seeded restarts (lowest within-cluster sum of squares) is kept.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise DomainError("kmeans needs a non-empty (R, d) point array")
    if not 1 <= k <= len(x):
        raise DomainError(f"k={k} must lie in [1, {len(x)}]")
    if n_init < 1:
        raise DomainError(f"n_init must be >= 1, got {n_init}")
    runs = [_lloyd(x, k, np.random.default_rng([seed, r]), max_iter) for r in range(n_init)]
    return min(runs, key=lambda c: c.sigma2)


def _lloyd(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int) -> ClusteringResult:
    centroids = _plusplus(x, k, rng)
    assignment = np.full(len(x), -1)
    inertia = []
    for _ in range(max_iter):
        d2 = _sq_dists(x, centroids)
        new = d2.argmin(axis=1)
        if np.array_equal(new, assignment):
            break
        assignment = new
        for j in range(k):
            members = assignment == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point worst served by its centroid
                far = int(np.argmax(d2[np.arange(len(x)), assignment]))
                centroids[j] = x[far]
                assignment[far] = j
        inertia.append(float(((x - centroids[assignment]) ** 2).sum()))
    counts = np.bincount(assignment, minlength=k)
    sse = float(((x - centroids[assignment]) ** 2).sum())
    return ClusteringResult(k, centroids, assignment, counts, sse / (len(x) * x.shape[1]), tuple(inertia))


def page_points(pipeline, pages: Sequence, max_viewports: int = 3) -> np.ndarray:
    """One clustering point per page: its mean reduced feature vector over the first slices."""
    return np.array([np.mean([pipeline.features(p, vp) for vp in p.viewport_profiles[:max_viewports]], axis=0)
                     for p in pages])


def bic_params(k: int, d: int) -> int:
    return (k - 1) + d * k + 1


def bic(points: np.ndarray, clustering: ClusteringResult) -> float:
    """Log-likelihood of the spherical mixture minus (p/2) log R, natural logs."""
    x = np.asarray(points, dtype=float)
    R, d = x.shape
    K = clustering.k
    s2 = clustering.sigma2
    if s2 <= 0:
        raise DegenerateVarianceError("all points coincide with their centroids; sigma^2 = 0")
    ll = 0.0
    for Rn in clustering.counts:
        if Rn == 0:
            continue
        ll += (-(Rn / 2) * math.log(2 * math.pi) - (Rn * d / 2) * math.log(s2)
               - (Rn - K) / 2 + Rn * math.log(Rn / R))
    return ll - bic_params(K, d) / 2 * math.log(R)


def bic_table(points: np.ndarray, k_range: Sequence[int], seed: int = 0) -> list[tuple[int, float, ClusteringResult]]:
    out = []
    for k in k_range:
        c = kmeans(points, k, seed)
        out.append((k, bic(points, c), c))
    return out


def select_k(points: np.ndarray, k_range: Sequence[int] = range(2, 16), seed: int = 0) -> ClusteringResult:
    """Clustering with the highest BIC over ``k_range``; ties go to the smaller k."""
    best = None
    for k, score, c in sorted(bic_table(points, k_range, seed), key=lambda t: t[0]):
        if best is None or score > best[0]:
            best = (score, c)
    if best is None:
        raise DomainError("k_range is empty")
    return best[1]


@dataclass(frozen=True)
class RepresentativeSet:
    pairs: tuple            # per cluster (centroid-nearest id, frontier id)
    duplicated: tuple       # per cluster: True when a singleton fills both slots

    def pages(self) -> list[str]:
        """Distinct ids in cluster order."""
        return list(dict.fromkeys(i for pair in self.pairs for i in pair))

    def __len__(self) -> int:
        return len(self.pages())


def select_representatives(points: np.ndarray, page_ids: Sequence[str],
                           clustering: ClusteringResult) -> RepresentativeSet:
    """Per cluster: the member nearest its centroid, and the member farthest from the other centroids.

    "Farthest" is the root of summed squared distances to every other
    centroid. The second pick excludes the first, so the two differ when the
    cluster has two or more members. Ties go to the lower point index.
    """
    x = np.asarray(points, dtype=float)
    if len(page_ids) != len(x):
        raise DomainError("one page id per point is required")
    cents = clustering.centroids
    pairs, dup = [], []
    for j in range(clustering.k):
        members = clustering.members(j)
        if members.size == 0:
            continue
        near = int(members[np.argmin(((x[members] - cents[j]) ** 2).sum(axis=1))])
        if members.size == 1:
            pairs.append((page_ids[near], page_ids[near]))
            dup.append(True)
            continue
        others = np.delete(cents, j, axis=0)
        rest = members[members != near]
        spread = np.sqrt(_sq_dists(x[rest], others).sum(axis=1)) if len(others) else np.zeros(len(rest))
        far = int(rest[np.argmax(spread)])
        pairs.append((page_ids[near], page_ids[far]))
        dup.append(False)
    return RepresentativeSet(tuple(pairs), tuple(dup))


def transfer_train(base: Network, small: Dataset, cfg: TrainingConfig) -> Network:
    """Fine-tune a copy of ``base`` on ``small``; ``base`` itself is left untouched."""
    return train(init_from_base(base), small, cfg)
