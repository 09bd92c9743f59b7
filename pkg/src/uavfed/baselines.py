"""Comparison selection strategies and the K-means update filter."""

from __future__ import annotations

import logging

import numpy as np

from .defense import build_similarity_graph

log = logging.getLogger(__name__)

RANDOM = "random"
SPEED = "speed"
WEIGHT_DIVERGENCE = "weight_divergence"
CAPPED = "capped"
RANDOM_KMEANS = "random_kmeans"
PROPOSED = "proposed"

BASELINE_KINDS = (RANDOM, SPEED, WEIGHT_DIVERGENCE, CAPPED, RANDOM_KMEANS)


def random_selection(pool, p_r: int, seed: int):
    """Uniform sample of p_r ids without replacement; small pools select whole."""
    pool = sorted(pool)
    if p_r < 1:
        raise ValueError("p_r must be >= 1")
    if len(pool) <= p_r:
        return pool
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=p_r, replace=False)
    return sorted(pool[i] for i in picks)


def speed_based_selection(est_times: dict, p_r: int):
    """The p_r smallest estimated times, ties broken by ascending id."""
    if p_r < 1:
        raise ValueError("p_r must be >= 1")
    ranked = sorted(est_times, key=lambda cid: (est_times[cid], cid))
    return sorted(ranked[:p_r])


def weight_divergence(local_params: np.ndarray, prev_global: np.ndarray) -> float:
    """Mean |(w_local - w_global) / w_global| over well-conditioned coordinates.

    Coordinates where |w_global| < 1e-8 are excluded to avoid ratio blow-ups;
    if that excludes everything the divergence is 0 with a warning.
    """
    local_params = np.asarray(local_params, dtype=np.float64)
    prev_global = np.asarray(prev_global, dtype=np.float64)
    if local_params.shape != prev_global.shape:
        raise ValueError("parameter vector lengths differ")
    mask = np.abs(prev_global) >= 1e-8
    if not mask.any():
        log.warning("weight divergence undefined: every reference coordinate is near zero")
        return 0.0
    ratios = np.abs((local_params[mask] - prev_global[mask]) / prev_global[mask])
    return float(ratios.mean())


def weight_divergence_selection(divergences: dict, p_r: int):
    """Top p_r by divergence descending; never-seen clients (None) rank first."""
    if p_r < 1:
        raise ValueError("p_r must be >= 1")

    def key(cid):
        d = divergences[cid]
        return (-np.inf if d is None else -d, cid)

    ranked = sorted(divergences, key=key)
    return sorted(ranked[:p_r])


def capped_selection(participation_counts: dict, p_r: int, cap: int, seed: int):
    """Random selection restricted to clients still under the participation cap.

    The eligible pool shrinks over a run; when it falls below p_r all eligible
    clients are selected, and an exhausted pool yields an empty selection.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    eligible = [cid for cid in sorted(participation_counts) if participation_counts[cid] < cap]
    if not eligible:
        return []
    return random_selection(eligible, p_r, seed)


def _kmeans_pp_init(points: np.ndarray, c: int, rng) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    for _ in range(1, c):
        d2 = np.min(
            [np.sum((points - ctr) ** 2, axis=1) for ctr in centers], axis=0
        )
        total = d2.sum()
        if total == 0.0:
            centers.append(points[rng.integers(len(points))])
            continue
        centers.append(points[rng.choice(len(points), p=d2 / total)])
    return np.stack(centers)


def kmeans_defense(updates, c: int, seed: int):
    """Cluster the cosine-similarity rows into c groups; the largest is honest.

    Lloyd's algorithm with k-means++ seeding, at most 100 iterations. Identical
    updates collapse to a single effective cluster and everyone is kept.
    """
    if len(updates) < c:
        raise ValueError(f"need at least {c} updates to form {c} clusters")
    graph = build_similarity_graph(updates)
    points = graph.kappa
    if np.allclose(points, points[0]):
        return set(graph.ids)

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, c, rng)
    assignment = None
    for _ in range(100):
        dists = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        new_assignment = dists.argmin(axis=1)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for k in range(c):
            members = points[assignment == k]
            if len(members):
                centers[k] = members.mean(axis=0)

    groups = []
    for k in range(c):
        members = {graph.ids[i] for i in np.flatnonzero(assignment == k)}
        if members:
            groups.append(members)
    groups.sort(key=lambda g: (-len(g), min(g)))
    return groups[0]
