"""The three cascaded participation filters and selective aggregation.

Filter 1 removes stragglers by an IQR fence over estimated round times.
Filter 2 removes unreliable clients via integer reliability scores.
Filter 3 clusters the delivered weight updates by cosine similarity and
keeps the largest density-connected cluster.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .clients import COMPLETED, DROPPED_OUT, MISSED_DEADLINE, NOT_SELECTED
from .model import ModelParams

log = logging.getLogger(__name__)


@dataclass
class SelectionState:
    """Server-side reliability bookkeeping shared across rounds."""

    reliability: dict
    rho: int
    rho_max: int
    nu: float
    min_participants: int
    round_index: int = 0

    def __post_init__(self):
        if self.rho >= self.rho_max:
            raise ValueError("rho must be strictly below rho_max")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.min_participants < 1:
            raise ValueError("min_participants must be >= 1")


@dataclass
class SimilarityGraph:
    ids: list
    kappa: np.ndarray
    distance: np.ndarray = field(init=False)

    def __post_init__(self):
        self.kappa = np.asarray(self.kappa, dtype=np.float64)
        self.distance = 1.0 - self.kappa


@dataclass
class ClusterResult:
    """Clusters ordered by size descending (ties by smallest member id)."""

    clusters: list
    noise: set


def iqr_filter(est_times: dict, nu: float):
    """Keep clients whose estimated time is at most Q3 + nu * (Q3 - Q1).

    Only the upper fence is applied; unusually fast clients are never removed.
    Returns (kept ids sorted, cutoff).
    """
    if not est_times:
        raise ValueError("iqr_filter needs at least one client time")
    if nu <= 0:
        raise ValueError("nu must be positive")
    values = np.array(list(est_times.values()), dtype=np.float64)
    q1, q3 = np.percentile(values, [25.0, 75.0])
    cutoff = q3 + nu * (q3 - q1)
    kept = sorted(cid for cid, t in est_times.items() if t <= cutoff)
    return kept, float(cutoff)


def compute_deadline(kept_times) -> float:
    """Round deadline: twice the mean estimated training time of the kept set."""
    times = list(kept_times)
    if not times:
        raise ValueError("deadline needs at least one time")
    return 2.0 * float(np.mean(times))


def update_reliability(score: int, status: str, penalize_dropouts: bool = False) -> int:
    """Reliability delta per round outcome: +1 on timely completion, -1 on a
    missed deadline, 0 otherwise. ``penalize_dropouts`` moves silent dropouts
    into the -1 case as well."""
    if status == COMPLETED:
        return score + 1
    if status == MISSED_DEADLINE:
        return score - 1
    if status == DROPPED_OUT:
        return score - 1 if penalize_dropouts else score
    if status == NOT_SELECTED:
        return score
    raise ValueError(f"unknown outcome status {status!r}")


def reliability_select(candidates, state: SelectionState):
    """Select every candidate whose score clears the rho threshold.

    First any score at or above rho_max is reset to zero (the over-selection
    brake), mutating the state's reliability map. If fewer than
    ``min_participants`` clear the threshold, the best remaining candidates by
    descending score (ties by ascending id) top the set up. Returns the
    selected ids in ascending order.
    """
    pool = sorted(candidates)
    if not pool:
        raise ValueError("no candidates to select from")
    for cid in pool:
        if state.reliability[cid] >= state.rho_max:
            state.reliability[cid] = 0
    selected = [cid for cid in pool if state.reliability[cid] >= state.rho]
    if len(selected) < state.min_participants:
        leftovers = [cid for cid in pool if cid not in selected]
        leftovers.sort(key=lambda cid: (-state.reliability[cid], cid))
        needed = min(state.min_participants, len(pool)) - len(selected)
        selected.extend(leftovers[:needed])
        if len(pool) < state.min_participants:
            log.warning(
                "candidate pool (%d) smaller than the participation floor (%d); selecting all",
                len(pool), state.min_participants,
            )
    return sorted(selected)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two flat vectors; zero vectors score 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("vector lengths differ")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        log.warning("zero-norm update in cosine similarity; treating as dissimilar")
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def build_similarity_graph(updates) -> SimilarityGraph:
    """Pairwise cosine-similarity matrix over the updates, ordered by owner id."""
    if len(updates) < 2:
        raise ValueError("similarity graph needs at least two updates")
    ordered = sorted(updates, key=lambda u: u.owner_id)
    ids = [u.owner_id for u in ordered]
    mat = np.stack([u.delta for u in ordered])
    norms = np.linalg.norm(mat, axis=1)
    safe = norms.copy()
    zero = safe == 0.0
    if zero.any():
        log.warning("zero-norm update(s) from %s", [ids[i] for i in np.flatnonzero(zero)])
        safe[zero] = 1.0
    unit = mat / safe[:, None]
    kappa = unit @ unit.T
    kappa[zero, :] = 0.0
    kappa[:, zero] = 0.0
    np.fill_diagonal(kappa, 1.0)
    kappa = np.clip((kappa + kappa.T) / 2.0, -1.0, 1.0)
    return SimilarityGraph(ids, kappa)


def dbscan_cluster(graph: SimilarityGraph, eps: float, min_pts: int) -> ClusterResult:
    """DBSCAN over the precomputed distance matrix.

    Core points have at least ``min_pts`` neighbors within eps, counting
    themselves. Clusters are the connected components of core points under
    eps-adjacency; a border point joins the cluster of its lowest-id core
    neighbor, which makes the outcome independent of visit order.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    n = len(graph.ids)
    within = graph.distance <= eps
    neighbor_counts = within.sum(axis=1)
    is_core = neighbor_counts >= min_pts

    assignment = [-1] * n
    next_label = 0
    for start in range(n):
        if not is_core[start] or assignment[start] >= 0:
            continue
        stack = [start]
        assignment[start] = next_label
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(within[u]):
                if is_core[v] and assignment[v] < 0:
                    assignment[v] = next_label
                    stack.append(int(v))
        next_label += 1

    for point in range(n):
        if is_core[point] or assignment[point] >= 0:
            continue
        core_neighbors = [v for v in np.flatnonzero(within[point]) if is_core[v]]
        if core_neighbors:
            assignment[point] = assignment[min(core_neighbors)]

    clusters = []
    for label in range(next_label):
        members = {graph.ids[i] for i in range(n) if assignment[i] == label}
        if members:
            clusters.append(members)
    clusters.sort(key=lambda c: (-len(c), min(c)))
    noise = {graph.ids[i] for i in range(n) if assignment[i] < 0}
    return ClusterResult(clusters, noise)


def select_honest_cluster(result: ClusterResult, all_ids):
    """Largest cluster wins (ties to the one holding the smallest id).

    When every point is noise the defense abstains: it returns the full input
    set and flags the abstention so the round log records it.
    """
    if result.clusters:
        return set(result.clusters[0]), False
    log.warning("similarity clustering found only noise; defense abstains this round")
    return set(all_ids), True


def aggregate(prev: ModelParams, updates) -> ModelParams:
    """Sample-count-weighted sum of deltas added to the previous global model."""
    ordered = sorted(updates, key=lambda u: u.owner_id)
    if not ordered:
        raise ValueError("aggregate needs at least one update")
    total = float(sum(u.sample_count for u in ordered))
    merged = np.zeros_like(prev.values)
    for u in ordered:
        if u.delta.shape != prev.values.shape:
            raise ValueError("update length does not match the global model")
        merged += (u.sample_count / total) * u.delta
    return ModelParams(prev.values + merged, prev.arch, prev.param_bytes)
