"""Discrete weighted measures, mixing, bottleneck distance, and atom merging.

A DiscreteMeasure stores atoms as rows of an ambient-coordinate array plus a
weight vector on the probability simplex.  Values are immutable after
construction; every operation returns a new measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import Manifold

WEIGHT_SUM_TOL = 1e-12
COINCIDENT_TOL = 1e-12
MASS_MATCH_TOL = 1e-10
FLOW_TOL = 1e-11


class MeasureError(ValueError):
    """Invalid measure data or incompatible operands."""


class DegenerateClusterError(RuntimeError):
    """Barycenter iteration failed to converge while merging a cluster."""


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure with finitely many weighted atoms on a manifold."""

    manifold: Manifold
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if pts.shape[0] != w.shape[0]:
            raise MeasureError("points and weights must have matching length")
        if pts.shape[0] == 0:
            raise MeasureError("a measure needs at least one atom")
        if np.any(w < -1e-15):
            raise MeasureError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise MeasureError(f"weights sum to {w.sum()!r}, not 1")
        for row in pts:
            geometry.validate_point(self.manifold, row)
        if pts.shape[0] > 1:
            d = geometry.pairwise_distances(self.manifold, pts)
            off = d + np.eye(len(w)) * 1.0
            if off.min() < COINCIDENT_TOL:
                raise MeasureError(
                    "coincident atoms; build via from_atoms() to merge them"
                )

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_atoms(cls, manifold: Manifold, points, weights) -> "DiscreteMeasure":
        """Build a canonical measure, merging atoms closer than 1e-12."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.asarray(weights, dtype=float).ravel()
        if pts.shape[0] != w.shape[0]:
            raise MeasureError("points and weights must have matching length")
        if pts.shape[0] > 1:
            d = geometry.pairwise_distances(manifold, pts)
            groups = _connected_components(d <= COINCIDENT_TOL)
            if len(groups) < pts.shape[0]:
                pts = np.array([pts[g[0]] for g in groups])
                w = np.array([w[g].sum() for g in groups])
        return cls(manifold, pts, w)

    @classmethod
    def point_mass(cls, manifold: Manifold, point) -> "DiscreteMeasure":
        return cls(manifold, np.atleast_2d(np.asarray(point, dtype=float)), np.array([1.0]))


@dataclass(frozen=True)
class SignedPerturbation:
    """Signed atom set with zero total mass, used in second-order checks."""

    manifold: Manifold
    points: np.ndarray
    signed_weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        a = np.asarray(self.signed_weights, dtype=float).ravel()
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "signed_weights", a)
        if pts.shape[0] != a.shape[0]:
            raise MeasureError("points and signed weights must match in length")
        if abs(a.sum()) > WEIGHT_SUM_TOL:
            raise MeasureError(f"signed weights sum to {a.sum()!r}, not 0")
        for row in pts:
            geometry.validate_point(self.manifold, row)

    @classmethod
    def on_support(cls, mu: DiscreteMeasure, signed_weights) -> "SignedPerturbation":
        """Perturbation carried by the atoms of an existing measure."""
        return cls(mu.manifold, mu.points.copy(), signed_weights)


def mix(mu1: DiscreteMeasure, mu2: DiscreteMeasure, t: float) -> DiscreteMeasure:
    """Convex combination (1-t) mu1 + t mu2 with coincident atoms merged."""
    if mu1.manifold != mu2.manifold:
        raise MeasureError("measures live on different manifolds")
    if not 0.0 <= t <= 1.0:
        raise MeasureError(f"mixing parameter must lie in [0, 1], got {t}")
    pts = np.vstack([mu1.points, mu2.points])
    w = np.concatenate([(1.0 - t) * mu1.weights, t * mu2.weights])
    keep = w > 0.0
    return DiscreteMeasure.from_atoms(mu1.manifold, pts[keep], w[keep])


# ---------------------------------------------------------------------------
# Bottleneck (d-infinity) distance


def d_infinity(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact bottleneck transport distance between two discrete measures.

    Binary-searches the sorted set of cross-atom distances; a threshold is
    feasible when a coupling moves all mass using only pairs within it,
    decided by max-flow saturation on the bipartite capacity network.  The
    optimum is always attained at one of the pairwise distances (or 0).
    """
    if mu.manifold != nu.manifold:
        raise MeasureError("measures live on different manifolds")
    if abs(mu.weights.sum() - nu.weights.sum()) > MASS_MATCH_TOL:
        raise MeasureError("total masses differ beyond tolerance")
    d = geometry.cross_distances(mu.manifold, mu.points, nu.points)
    values = np.unique(d)
    lo, hi = 0, values.size - 1
    if _coupling_feasible(d, mu.weights, nu.weights, values[lo]):
        return float(values[lo])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _coupling_feasible(d, mu.weights, nu.weights, values[mid]):
            hi = mid
        else:
            lo = mid
    return float(values[hi])


def _coupling_feasible(d: np.ndarray, w: np.ndarray, v: np.ndarray, threshold: float) -> bool:
    allowed = d <= threshold
    # Quick necessary condition: every atom needs at least one allowed partner.
    if not allowed.any(axis=1).all() or not allowed.any(axis=0).all():
        return False
    flow = _max_flow_bipartite(allowed, w, v)
    return flow >= w.sum() - FLOW_TOL


def _max_flow_bipartite(allowed: np.ndarray, w: np.ndarray, v: np.ndarray) -> float:
    """Dinic max-flow on source -> left(w) -> right(v) -> sink with the
    allowed pairs as uncapacitated middle edges."""
    n, m = allowed.shape
    size = n + m + 2
    source, sink = n + m, n + m + 1
    heads: list[list[int]] = [[] for _ in range(size)]
    to: list[int] = []
    cap: list[float] = []

    def add_edge(a: int, b: int, c: float):
        heads[a].append(len(to))
        to.append(b)
        cap.append(c)
        heads[b].append(len(to))
        to.append(a)
        cap.append(0.0)

    for i in range(n):
        add_edge(source, i, float(w[i]))
    for j in range(m):
        add_edge(n + j, sink, float(v[j]))
    big = float(w.sum()) + 1.0
    left_idx, right_idx = np.nonzero(allowed)
    for i, j in zip(left_idx.tolist(), right_idx.tolist()):
        add_edge(i, n + j, big)

    flow = 0.0
    while True:
        level = [-1] * size
        level[source] = 0
        queue = [source]
        for node in queue:
            for e in heads[node]:
                if cap[e] > FLOW_TOL and level[to[e]] < 0:
                    level[to[e]] = level[node] + 1
                    queue.append(to[e])
        if level[sink] < 0:
            return flow
        iters = [0] * size

        def augment(node: int, pushed: float) -> float:
            if node == sink:
                return pushed
            while iters[node] < len(heads[node]):
                e = heads[node][iters[node]]
                nxt = to[e]
                if cap[e] > FLOW_TOL and level[nxt] == level[node] + 1:
                    got = augment(nxt, min(pushed, cap[e]))
                    if got > 0.0:
                        cap[e] -= got
                        cap[e ^ 1] += got
                        return got
                iters[node] += 1
            return 0.0

        while True:
            pushed = augment(source, math.inf)
            if pushed <= 0.0:
                break
            flow += pushed


# ---------------------------------------------------------------------------
# Support clustering and merging


def support_clusters(mu: DiscreteMeasure, eps: float) -> list[list[int]]:
    """Single-linkage partition of atom indices at linkage distance eps.

    Two atoms share a cluster iff a chain of hops, each at most eps, joins
    them.  Clusters are ordered by their smallest member index.
    """
    if not eps > 0:
        raise MeasureError("eps must be > 0")
    d = geometry.pairwise_distances(mu.manifold, mu.points)
    return _connected_components(d <= eps)


def _connected_components(adjacency: np.ndarray) -> list[list[int]]:
    n = adjacency.shape[0]
    labels = np.arange(n)
    adj = adjacency | np.eye(n, dtype=bool)
    while True:
        spread = np.where(adj, labels[None, :], n).min(axis=1)
        if np.array_equal(spread, labels):
            break
        labels = spread
    out: dict[int, list[int]] = {}
    for i, lab in enumerate(labels.tolist()):
        out.setdefault(lab, []).append(i)
    return [out[k] for k in sorted(out)]


def merge_atoms(mu: DiscreteMeasure, eps: float) -> DiscreteMeasure:
    """Collapse each eps-cluster to one atom at its weighted barycenter.

    The barycenter is the fixed point of the weighted mean of log maps
    (tolerance 1e-10, at most 200 sweeps); cluster weight is the exact sum.
    """
    clusters = support_clusters(mu, eps)
    if len(clusters) == mu.n_atoms:
        return mu
    pts, w = [], []
    for members in clusters:
        cw = mu.weights[members]
        cp = mu.points[members]
        total = float(cw.sum())
        pts.append(_barycenter(mu.manifold, cp, cw))
        w.append(total)
    return DiscreteMeasure.from_atoms(mu.manifold, np.array(pts), np.array(w))


def _barycenter(manifold: Manifold, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    if points.shape[0] == 1:
        return points[0].copy()
    total = float(weights.sum())
    if total <= 0.0:
        return points[0].copy()
    rel = weights / total
    if manifold.kind == geometry.EUCLIDEAN:
        return rel @ points
    if manifold.kind == geometry.SPHERE:
        diam = geometry.pairwise_distances(manifold, points).max()
        if diam > math.pi - geometry.ANTIPODAL_TOL:
            raise DegenerateClusterError("cluster diameter exceeds injectivity radius")
    start = int(np.argmax(weights))
    center = points[start].copy()
    for _ in range(200):
        step = np.zeros_like(center)
        for p, r in zip(points, rel):
            step += r * geometry.log_map(manifold, center, p).components
        center = geometry.exp_map(manifold, center, step)
        if geometry.tangent_norm(manifold, step) <= 1e-10:
            return center
    raise DegenerateClusterError("barycenter iteration did not converge in 200 steps")


# ---------------------------------------------------------------------------
# CSV round trip: one atom per row, columns w, x1..xk, 17 significant digits.


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_measure_csv(mu: DiscreteMeasure, path: str) -> None:
    lines = [f"# manifold={mu.manifold.spec_string()}"]
    lines.append(",".join(["w"] + [f"x{i + 1}" for i in range(mu.points.shape[1])]))
    for w, row in zip(mu.weights, mu.points):
        lines.append(",".join([_fmt(w)] + [_fmt(c) for c in row]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_measure_csv(path: str) -> DiscreteMeasure:
    manifold = None
    rows = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("manifold="):
                    manifold = Manifold.parse(body.split("=", 1)[1])
                continue
            if line.startswith("w,"):
                continue
            rows.append([float(tok) for tok in line.split(",")])
    if manifold is None:
        raise MeasureError(f"{path}: missing '# manifold=...' header")
    if not rows:
        raise MeasureError(f"{path}: no atoms")
    arr = np.array(rows, dtype=float)
    if arr.shape[1] != manifold.ambient_dim + 1:
        raise MeasureError(
            f"{path}: expected {manifold.ambient_dim + 1} columns, got {arr.shape[1]}"
        )
    return DiscreteMeasure(manifold, arr[:, 1:], arr[:, 0])
