import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from rlab.geometry.measure import DiscreteSurface
from rlab.models.reports import QuasiconvexityReport
from rlab.utils.errors import Disconnected, PreconditionViolated
from rlab.utils.parallel import chunked, parallel_map

logger = logging.getLogger(__name__)

MIN_CONNECTION_FACTOR = 2.0
DEFAULT_CONNECTION_FACTOR = 3.0
PAIR_SEPARATION = 10.0


@dataclass(frozen=True, eq=False)
class IntrinsicGraph:
    """Sample points joined when closer than h, weighted by Euclidean length."""

    matrix: csr_matrix
    h: float
    components: int
    labels: np.ndarray

    @property
    def sizes(self) -> list:
        return np.bincount(self.labels).tolist()


def build_graph(S: DiscreteSurface, h: Optional[float] = None) -> IntrinsicGraph:
    spacing = S.median_spacing
    h = DEFAULT_CONNECTION_FACTOR * spacing if h is None else float(h)
    if h < MIN_CONNECTION_FACTOR * spacing:
        raise PreconditionViolated(
            f"connection radius {h:.4g} below twice the median spacing {spacing:.4g}"
        )
    pairs = S.index.pairs_within(h)
    length = np.linalg.norm(S.points[pairs[:, 0]] - S.points[pairs[:, 1]], axis=1)
    # coincident samples still count as joined
    length = np.maximum(length, np.finfo(float).tiny)
    matrix = csr_matrix((length, (pairs[:, 0], pairs[:, 1])), shape=(S.n_points, S.n_points))
    components, labels = connected_components(matrix, directed=False)
    logger.info(f"intrinsic graph: {pairs.shape[0]} edges, h={h:.4g}, {components} components")
    return IntrinsicGraph(matrix=matrix, h=h, components=int(components), labels=labels)


def quasiconvexity_audit(
    S: DiscreteSurface,
    h: Optional[float] = None,
    pair_count: int = 200,
    seed: int = 0,
    farthest: bool = False,
    threads: Optional[int] = None,
) -> QuasiconvexityReport:
    """κ = worst graph-path length over chord for pairs at least 10h apart."""
    graph = build_graph(S, h)
    if graph.components > 1:
        raise Disconnected(graph.components, sorted(graph.sizes, reverse=True))
    rng = np.random.default_rng(seed)
    sources = np.sort(rng.choice(S.n_points, size=min(pair_count, S.n_points), replace=False))
    min_sep = PAIR_SEPARATION * graph.h

    def targets_for(i: int) -> Optional[int]:
        dist = np.linalg.norm(S.points - S.points[i], axis=1)
        if farthest:
            j = int(np.argmax(dist))
            return j if dist[j] >= min_sep else None
        far = np.flatnonzero(dist >= min_sep)
        return int(rng.choice(far)) if far.size else None

    pairs = [(int(i), j) for i in sources for j in [targets_for(int(i))] if j is not None]
    if not pairs:
        logger.warning(f"no sample pairs at separation >= {min_sep:.4g}")
        return QuasiconvexityReport(kappa=1.0, kappa_finite=True, worst_pair=None, pairs=0, h=graph.h, components=1)
    src = np.array([a for a, _ in pairs])

    def solve(block: slice) -> np.ndarray:
        lengths = dijkstra(graph.matrix, directed=False, indices=src[block])
        targets = np.array([b for _, b in pairs[block]])
        return lengths[np.arange(targets.size), targets]

    path = np.concatenate(parallel_map(solve, chunked(len(pairs), 16), threads))
    chord = np.array([np.linalg.norm(S.points[a] - S.points[b]) for a, b in pairs])
    ratio = path / chord
    worst = int(np.argmax(ratio))
    kappa = float(ratio[worst])
    return QuasiconvexityReport(
        kappa=kappa if math.isfinite(kappa) else None,
        kappa_finite=math.isfinite(kappa),
        worst_pair=list(pairs[worst]),
        pairs=len(pairs),
        h=graph.h,
        components=1,
        mean_ratio=float(np.mean(ratio)),
    )
