"""Observation ordering and construction of nearest-preceding-neighbor sets.

The neighbor search is exact, including tie-breaking by smaller index:
brute force for small n, a uniform-grid index with ring expansion above
`BRUTE_THRESHOLD`. Exactness keeps the factorized likelihood deterministic
across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError

ORDERINGS = ("as-given", "coordinate-sum", "maxmin", "random")

BRUTE_THRESHOLD = 5000


@dataclass(frozen=True)
class NeighborGraph:
    """Ordering plus per-observation neighbor sets in ordered positions.

    `perm[k]` is the original row index of the k-th ordered observation.
    `neighbor_idx[k, :counts[k]]` holds the ordered positions (each < k) of
    the min(M, k) nearest preceding points; the padding value is -1.
    """

    perm: np.ndarray
    M: int
    neighbor_idx: np.ndarray
    counts: np.ndarray
    scheme: str = "custom"

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        ni = np.asarray(self.neighbor_idx, dtype=np.int64)
        cnt = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "neighbor_idx", ni)
        object.__setattr__(self, "counts", cnt)
        n = perm.size
        if self.M < 1:
            raise ValidationError(f"M must be >= 1, got {self.M}")
        if sorted(perm.tolist()) != list(range(n)):
            raise ValidationError("perm is not a permutation of 0..n-1")
        if ni.shape[0] != n or cnt.shape[0] != n:
            raise ValidationError("neighbor arrays do not match n")
        expected = np.minimum(self.M, np.arange(n))
        if not np.array_equal(cnt, expected):
            raise ValidationError("neighbor counts must equal min(M, i)")
        for k in range(n):
            row = ni[k, : cnt[k]]
            if cnt[k] and (row.min() < 0 or row.max() >= k):
                raise ValidationError(f"neighbor set of observation {k} not strictly preceding")

    @property
    def n(self) -> int:
        return self.perm.size

    def neighbors(self, k: int) -> np.ndarray:
        return self.neighbor_idx[k, : self.counts[k]]


def order_observations(locations, scheme: str = "maxmin", seed: int = 0) -> np.ndarray:
    """Permutation of 0..n-1 under the requested ordering scheme.

    maxmin starts at the point nearest the centroid and greedily adds the
    point with the largest minimum distance to the points already ordered;
    all ties break toward the smaller original index.
    """
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    n = loc.shape[0]
    if n < 1:
        raise ValidationError("need at least one location")
    if scheme == "as-given":
        return np.arange(n, dtype=np.int64)
    if scheme == "coordinate-sum":
        return np.argsort(loc.sum(axis=1), kind="stable").astype(np.int64)
    if scheme == "random":
        return np.random.default_rng(seed).permutation(n).astype(np.int64)
    if scheme == "maxmin":
        return _order_maxmin(loc)
    raise ValidationError(f"unknown ordering scheme {scheme!r}; choose from {ORDERINGS}")


def _order_maxmin(loc: np.ndarray) -> np.ndarray:
    n = loc.shape[0]
    centroid = loc.mean(axis=0)
    first = int(np.argmin(np.linalg.norm(loc - centroid, axis=1)))
    perm = np.empty(n, dtype=np.int64)
    perm[0] = first
    mindist = np.linalg.norm(loc - loc[first], axis=1)
    mindist[first] = -np.inf
    for k in range(1, n):
        nxt = int(np.argmax(mindist))  # first max -> smallest index on ties
        perm[k] = nxt
        np.minimum(mindist, np.linalg.norm(loc - loc[nxt], axis=1), out=mindist)
        mindist[nxt] = -np.inf
    return perm


def build_neighbor_sets(ordered_locations, M: int,
                        brute_threshold: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact min(M, i) nearest preceding neighbors for every ordered point.

    Returns (neighbor_idx, counts) with neighbor positions sorted ascending
    and -1 padding.
    """
    loc = np.asarray(ordered_locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    if M < 1:
        raise ValidationError(f"M must be >= 1, got {M}")
    n = loc.shape[0]
    threshold = BRUTE_THRESHOLD if brute_threshold is None else brute_threshold
    if n <= threshold:
        return _neighbors_brute(loc, M)
    return _neighbors_grid(loc, M)


def build_graph(locations, M: int, scheme: str = "maxmin", seed: int = 0,
                brute_threshold: int | None = None) -> NeighborGraph:
    """Order the locations and build their neighbor sets in one step."""
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    perm = order_observations(loc, scheme=scheme, seed=seed)
    ni, cnt = build_neighbor_sets(loc[perm], M, brute_threshold=brute_threshold)
    return NeighborGraph(perm=perm, M=M, neighbor_idx=ni, counts=cnt, scheme=scheme)


def _neighbors_brute(loc: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    n = loc.shape[0]
    ni = np.full((n, M), -1, dtype=np.int64)
    cnt = np.minimum(M, np.arange(n)).astype(np.int64)
    chunk = max(1, int(4e6) // max(n, 1))
    for start in range(1, n, chunk):
        stop = min(start + chunk, n)
        d = cdist(loc[start:stop], loc[:stop])
        for i in range(start, stop):
            k = int(cnt[i])
            sel = np.argsort(d[i - start, :i], kind="stable")[:k]
            ni[i, :k] = np.sort(sel)
    return ni, cnt


def _neighbors_grid(loc: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform-grid search, exact: rings are expanded until every unscanned
    cell is provably farther than the current M-th candidate (ties included)."""
    n, d = loc.shape
    lo = loc.min(axis=0)
    span = np.maximum(loc.max(axis=0) - lo, 1e-300)
    # ~2 points per occupied cell on average
    cell = float(np.max(span)) / max(1.0, (n / 2.0) ** (1.0 / d))
    coords = np.floor((loc - lo) / cell).astype(np.int64)
    grid: dict[tuple, list[int]] = {}
    ni = np.full((n, M), -1, dtype=np.int64)
    cnt = np.minimum(M, np.arange(n)).astype(np.int64)
    max_ring_global = int(np.ceil(np.max(span) / cell)) + 1
    for i in range(n):
        if i > 0:
            need = int(cnt[i])
            cand: list[int] = []
            ring = 0
            kth = np.inf
            while ring <= max_ring_global:
                fresh = _ring_members(grid, coords[i], ring, d)
                if fresh:
                    cand.extend(fresh)
                    if len(cand) >= need:
                        cand_arr = np.sort(np.asarray(cand, dtype=np.int64))
                        dist = np.linalg.norm(loc[cand_arr] - loc[i], axis=1)
                        order = np.argsort(dist, kind="stable")[:need]
                        kth = dist[order[-1]]
                # every point in ring > `ring` is at distance >= ring*cell
                if len(cand) >= need and kth < ring * cell:
                    break
                ring += 1
            cand_arr = np.sort(np.asarray(cand, dtype=np.int64))
            dist = np.linalg.norm(loc[cand_arr] - loc[i], axis=1)
            order = np.argsort(dist, kind="stable")[:need]
            ni[i, :need] = np.sort(cand_arr[order])
        key = tuple(coords[i])
        grid.setdefault(key, []).append(i)
    return ni, cnt


def _ring_members(grid: dict, center: np.ndarray, ring: int, d: int) -> list[int]:
    out: list[int] = []
    if ring == 0:
        hit = grid.get(tuple(center))
        if hit:
            out.extend(hit)
        return out
    for offset in _ring_offsets(ring, d):
        hit = grid.get(tuple(center + offset))
        if hit:
            out.extend(hit)
    return out


def _ring_offsets(ring: int, d: int):
    """Integer offsets at Chebyshev distance exactly `ring`."""
    if d == 1:
        yield np.array([ring])
        yield np.array([-ring])
        return
    if d == 2:
        r = ring
        for x in range(-r, r + 1):
            yield np.array([x, -r])
            yield np.array([x, r])
        for y in range(-r + 1, r):
            yield np.array([-r, y])
            yield np.array([r, y])
        return
    # generic dimension: enumerate the Chebyshev shell
    rng = range(-ring, ring + 1)
    import itertools

    for off in itertools.product(rng, repeat=d):
        if max(abs(v) for v in off) == ring:
            yield np.array(off)


def save_neighbor_graph(graph: NeighborGraph, path):
    """Plain-text persistence: header (n, M, scheme), then one line per ordered
    observation with its original index and neighbor positions."""
    lines = [f"n={graph.n}", f"M={graph.M}", f"scheme={graph.scheme}"]
    for k in range(graph.n):
        nbrs = " ".join(str(int(v)) for v in graph.neighbors(k))
        lines.append(f"{int(graph.perm[k])} {nbrs}".rstrip())
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_neighbor_graph(path) -> NeighborGraph:
    with open(path, "r", encoding="ascii") as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    try:
        n = int(raw[0].split("=", 1)[1])
        m = int(raw[1].split("=", 1)[1])
        scheme = raw[2].split("=", 1)[1]
    except (IndexError, ValueError) as exc:
        raise ValidationError(f"malformed neighbor graph header in {path}") from exc
    if len(raw) != 3 + n:
        raise ValidationError(f"neighbor graph {path} has {len(raw) - 3} rows, expected {n}")
    perm = np.empty(n, dtype=np.int64)
    ni = np.full((n, m), -1, dtype=np.int64)
    cnt = np.minimum(m, np.arange(n)).astype(np.int64)
    for k, line in enumerate(raw[3:]):
        parts = [int(v) for v in line.split()]
        perm[k] = parts[0]
        nbrs = parts[1:]
        if len(nbrs) != cnt[k]:
            raise ValidationError(f"observation {k}: expected {cnt[k]} neighbors, got {len(nbrs)}")
        ni[k, : len(nbrs)] = nbrs
    return NeighborGraph(perm=perm, M=m, neighbor_idx=ni, counts=cnt, scheme=scheme)
