"""
Spanning-tree structure of coupling/covariance matrices and industry-sector
clustering quality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SectorMap:
    """Ticker to industry-sector assignment."""

    mapping: dict[str, str]
    sectors: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        if not self.mapping:
            raise ValueError("sector map is empty")
        object.__setattr__(self, "sectors", tuple(sorted(set(self.mapping.values()))))

    def labels_for(self, tickers) -> list[str]:
        """Sector label per ticker; unknown tickers are an error."""
        missing = [t for t in tickers if t not in self.mapping]
        if missing:
            raise KeyError(f"tickers without sector assignment: {missing}")
        return [self.mapping[t] for t in tickers]


@dataclass
class MstResult:
    """Maximum-weight spanning tree (or forest, under cutoffs) of a panel."""

    edges: list[tuple[int, int, float]]
    cluster_sizes: dict[str, list[int]]
    q_mst: float
    disconnected: bool = False


def _check_square_symmetric(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weight matrix must be square")
    if not np.allclose(w, w.T, atol=1e-10, equal_nan=True):
        raise ValueError("weight matrix must be symmetric")
    return w


def _components(allowed: np.ndarray) -> list[np.ndarray]:
    """Connected components of the graph whose edges are allowed[i, j]."""
    n = allowed.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            i = stack.pop()
            comp.append(i)
            nbrs = np.flatnonzero(allowed[i] & ~seen)
            seen[nbrs] = True
            stack.extend(nbrs.tolist())
        comps.append(np.sort(np.asarray(comp)))
    return comps


def _prim_component(w: np.ndarray, nodes: np.ndarray, allowed: np.ndarray):
    """Prim's algorithm maximizing total weight over one connected component.

    Grows from the smallest node index; ties in weight are broken by the
    lexicographically smallest (i, j) edge so results are deterministic.
    """
    nodes = list(nodes)
    root = nodes[0]
    in_tree = {root}
    # best attachment for each outside node: (weight, tree endpoint)
    best: dict[int, tuple[float, int]] = {}
    for j in nodes[1:]:
        if allowed[root, j]:
            best[j] = (w[root, j], root)
    edges: list[tuple[int, int, float]] = []
    while len(in_tree) < len(nodes):
        pick = None
        pick_key = None
        for j, (wt, i) in best.items():
            a, b = (i, j) if i < j else (j, i)
            key = (-wt, a, b)
            if pick_key is None or key < pick_key:
                pick_key = key
                pick = (j, wt, i)
        if pick is None:
            raise ValueError("component is not connected")  # callers pre-split
        j, wt, i = pick
        a, b = (i, j) if i < j else (j, i)
        edges.append((a, b, float(wt)))
        in_tree.add(j)
        del best[j]
        for k in nodes:
            if k in in_tree or not allowed[j, k]:
                continue
            cand = (w[j, k], j)
            if k not in best:
                best[k] = cand
                continue
            cur_wt, cur_i = best[k]
            if cand[0] > cur_wt:
                best[k] = cand
            elif cand[0] == cur_wt:
                cur_edge = (min(cur_i, k), max(cur_i, k))
                new_edge = (min(j, k), max(j, k))
                if new_edge < cur_edge:
                    best[k] = cand
    return edges


def build_mst(w: np.ndarray) -> list[tuple[int, int, float]]:
    """Spanning tree of maximal total weight over a complete weight matrix.

    Grown by repeatedly attaching the outside node with the strongest link
    to the tree.  Returns N-1 edges as (i, j, weight) with i < j, in
    insertion order; equal weights break toward the smallest index pair.
    """
    w = _check_square_symmetric(w)
    n = w.shape[0]
    if n < 2:
        raise ValueError("need at least two nodes")
    allowed = ~np.eye(n, dtype=bool)
    return _prim_component(w, np.arange(n), allowed)


def max_spanning_forest(w: np.ndarray, allowed: np.ndarray):
    """Maximum-weight spanning forest restricted to allowed edges.

    Returns (edges, n_components).  With every off-diagonal edge allowed
    this is build_mst.
    """
    w = _check_square_symmetric(w)
    allowed = np.asarray(allowed, dtype=bool) & ~np.eye(w.shape[0], dtype=bool)
    if not np.any(allowed):
        raise ValueError("no edges survive the cutoff")
    edges: list[tuple[int, int, float]] = []
    comps = _components(allowed)
    for comp in comps:
        if len(comp) > 1:
            edges.extend(_prim_component(w, comp, allowed))
    return edges, len(comps)


def sector_clusters(edges, labels) -> dict[str, list[int]]:
    """Sizes of same-sector connected clusters of a tree (or forest).

    A cluster is a connected subset of the tree in which every node carries
    the same sector label.  Every node contributes to exactly one cluster
    (possibly a singleton).  Returns sector -> sizes sorted descending.
    """
    n = len(labels)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j, _ in edges:
        if labels[i] == labels[j]:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj

    sizes: dict[int, int] = {}
    for i in range(n):
        r = find(i)
        sizes[r] = sizes.get(r, 0) + 1
    clusters: dict[str, list[int]] = {}
    for r, size in sizes.items():
        clusters.setdefault(labels[r], []).append(size)
    return {sector: sorted(cs, reverse=True) for sector, cs in sorted(clusters.items())}


def q_mst(cluster_sizes: dict[str, list[int]], n_nodes: int) -> float:
    """Fraction of nodes covered by each sector's largest same-sector cluster.

    Ranges from M/N (every sector fully dispersed) to 1 (one cluster per
    sector), with M the number of sectors present.
    """
    if n_nodes < 1:
        raise ValueError("empty tree")
    return sum(max(sizes) for sizes in cluster_sizes.values()) / n_nodes


def mst_result(w: np.ndarray, labels) -> MstResult:
    """Build the maximum spanning tree of `w` and score its sector clustering."""
    edges = build_mst(w)
    clusters = sector_clusters(edges, labels)
    return MstResult(edges, clusters, q_mst(clusters, len(labels)), disconnected=False)


@dataclass
class ScanPoint:
    threshold: float
    q_mst: float
    disconnected: bool


def coupling_cutoff_scan(j: np.ndarray, labels, thresholds, direction: str) -> list[ScanPoint]:
    """Q_mst after excluding couplings beyond each threshold.

    direction='discard_above' drops entries J_ij > threshold,
    'discard_below' drops J_ij < threshold.  If the surviving graph
    disconnects, a maximum spanning forest is scored instead and the point
    is flagged.
    """
    j = _check_square_symmetric(j)
    thresholds = list(thresholds)
    if any(a > b for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    if direction not in ("discard_above", "discard_below"):
        raise ValueError(f"unknown direction {direction!r}")
    offdiag = ~np.eye(j.shape[0], dtype=bool)
    out = []
    for th in thresholds:
        keep = (j <= th) if direction == "discard_above" else (j >= th)
        edges, n_comp = max_spanning_forest(j, keep & offdiag)
        clusters = sector_clusters(edges, labels)
        out.append(ScanPoint(float(th), q_mst(clusters, len(labels)), n_comp > 1))
    return out


def spectral_truncation(j: np.ndarray, threshold: float, direction: str) -> np.ndarray:
    """Rebuild a symmetric matrix from the eigenmodes surviving a cutoff.

    direction='discard_above' keeps eigenvalues <= threshold,
    'discard_below' keeps eigenvalues >= threshold.  The reconstruction's
    diagonal is zeroed so the result is usable as a coupling matrix.
    """
    j = _check_square_symmetric(j)
    if direction not in ("discard_above", "discard_below"):
        raise ValueError(f"unknown direction {direction!r}")
    lam, vec = np.linalg.eigh(j)
    keep = (lam <= threshold) if direction == "discard_above" else (lam >= threshold)
    if not np.any(keep):
        raise ValueError(f"no eigenvalues survive threshold {threshold}")
    rebuilt = (vec[:, keep] * lam[keep]) @ vec[:, keep].T
    rebuilt = (rebuilt + rebuilt.T) / 2.0
    np.fill_diagonal(rebuilt, 0.0)
    return rebuilt


def eigen_cutoff_scan(j: np.ndarray, labels, thresholds, direction: str) -> list[ScanPoint]:
    """Q_mst of the coupling matrix rebuilt from a subset of its eigenmodes.

    For each threshold, eigenvalues beyond the cutoff are dropped and the
    matrix is reconstructed from the surviving modes with its diagonal
    zeroed before tree construction.
    """
    thresholds = list(thresholds)
    if any(a > b for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    out = []
    for th in thresholds:
        res = mst_result(spectral_truncation(j, th, direction), labels)
        out.append(ScanPoint(float(th), res.q_mst, False))
    return out


def edges_to_csv(edges, tickers, labels) -> str:
    """Edge list as `i_ticker,j_ticker,weight,i_sector,j_sector` CSV text."""
    lines = ["i_ticker,j_ticker,weight,i_sector,j_sector"]
    for i, j, wt in edges:
        lines.append(f"{tickers[i]},{tickers[j]},{wt!r},{labels[i]},{labels[j]}")
    return "\n".join(lines) + "\n"


def edges_to_dot(edges, tickers, labels, name: str = "mst") -> str:
    """Edge list as an undirected DOT graph with sector node attributes."""
    lines = [f"graph {name} {{"]
    for t, lab in zip(tickers, labels):
        lines.append(f'  "{t}" [sector="{lab}"];')
    for i, j, wt in edges:
        lines.append(f'  "{tickers[i]}" -- "{tickers[j]}" [weight="{wt:.6g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
