"""Activity relatedness networks and their visualization backbone."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import networkx as nx
import numpy as np
from numpy.typing import ArrayLike, NDArray

from ecx.errors import DimensionError, EmptyInputError, ValidationError
from ecx.pipeline import SpecializationMatrix

log = logging.getLogger(__name__)

ProximityKind = Literal["min_conditional", "cooccurrence"]
FORMATS = ("csv", "graphml", "dot")


@dataclass(frozen=True)
class ProximityMatrix:
    values: NDArray[np.float64]
    kind: ProximityKind
    ids: tuple[str, ...]
    ubiquity: NDArray[np.int64]

    @property
    def zero_ubiquity(self) -> NDArray[np.bool_]:
        return self.ubiquity == 0


def proximity(m: SpecializationMatrix, kind: ProximityKind = "min_conditional") -> ProximityMatrix:
    """Co-specialization similarity between activities.

    ``cooccurrence`` counts economies specialized in both activities;
    ``min_conditional`` divides that count by the larger of the two ubiquities.
    Activities nobody is specialized in get proximity 0 with everyone.
    """
    if kind not in ("min_conditional", "cooccurrence"):
        raise ValidationError(f"unknown proximity kind {kind!r}")
    a = m.values.astype(np.int64)
    co = (a.T @ a).astype(float)
    ubiquity = a.sum(axis=0)
    if kind == "min_conditional":
        denom = np.maximum.outer(ubiquity, ubiquity).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(denom > 0, co / denom, 0.0)
    else:
        phi = co
    if (ubiquity == 0).any():
        log.warning("%d activities have zero ubiquity; their proximities are 0", (ubiquity == 0).sum())
    return ProximityMatrix(phi, kind, tuple(m.activity_ids), ubiquity)


@dataclass(frozen=True)
class RelatednessGraph:
    """Weighted activity graph with a per-edge backbone flag.

    ``edges`` holds ``(i, j)`` index pairs with ``i < j`` for every nonzero
    off-diagonal proximity; ``weights`` and ``in_backbone`` are aligned with it.
    """

    ids: tuple[str, ...]
    edges: NDArray[np.int64]
    weights: NDArray[np.float64]
    in_backbone: NDArray[np.bool_]
    in_tree: NDArray[np.bool_]
    threshold: float
    pci: NDArray[np.float64] | None = None
    ubiquity: NDArray[np.int64] | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @property
    def n_components(self) -> int:
        return nx.number_connected_components(self.backbone_graph())

    def backbone_edges(self) -> NDArray[np.int64]:
        return self.edges[self.in_backbone]

    def backbone_graph(self) -> nx.Graph:
        """Backbone as a networkx graph on integer node labels ``0..n-1``."""
        g = nx.Graph()
        g.add_nodes_from(range(self.n_nodes))
        for (i, j), w in zip(self.edges[self.in_backbone], self.weights[self.in_backbone]):
            g.add_edge(int(i), int(j), weight=float(w))
        return g

    def degrees(self) -> NDArray[np.int64]:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        bb = self.backbone_edges()
        np.add.at(deg, bb[:, 0], 1)
        np.add.at(deg, bb[:, 1], 1)
        return deg

    def circular_layout(self) -> NDArray[np.float64]:
        """Nodes evenly spaced on the unit circle in id order."""
        theta = 2 * np.pi * np.arange(self.n_nodes) / max(self.n_nodes, 1)
        return np.column_stack([np.cos(theta), np.sin(theta)])

    def with_pci(self, pci: ArrayLike) -> RelatednessGraph:
        pci = np.asarray(pci, dtype=float)
        if pci.shape != (self.n_nodes,):
            raise DimensionError("pci length must match the node count")
        return RelatednessGraph(
            self.ids, self.edges, self.weights, self.in_backbone, self.in_tree,
            self.threshold, pci, self.ubiquity,
        )

    def degree_by_quartile(self, score: ArrayLike | None = None) -> list[float]:
        """Mean backbone degree of nodes in each quartile of ``score`` (default PCI), low to high."""
        score = self.pci if score is None else np.asarray(score, dtype=float)
        if score is None:
            raise ValidationError("no score attached to rank nodes by")
        order = np.argsort(score, kind="stable")
        deg = self.degrees()
        return [float(deg[part].mean()) if part.size else float("nan") for part in np.array_split(order, 4)]


class _DisjointSet:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def maximum_spanning_forest(n: int, edges: NDArray[np.int64], weights: NDArray[np.float64]) -> NDArray[np.bool_]:
    """Kruskal on descending weight; ties resolved by the smaller ``(i, j)`` pair."""
    order = np.lexsort((edges[:, 1], edges[:, 0], -weights))
    ds = _DisjointSet(n)
    chosen = np.zeros(len(edges), dtype=bool)
    taken = 0
    for k in order:
        if ds.union(int(edges[k, 0]), int(edges[k, 1])):
            chosen[k] = True
            taken += 1
            if taken == n - 1:
                break
    return chosen


def backbone(
    phi: ProximityMatrix | ArrayLike,
    *,
    n_std: float = 1.0,
    include_zeros: bool = False,
    ids: tuple[str, ...] | None = None,
) -> RelatednessGraph:
    """Maximum spanning forest plus every edge heavier than ``mean + n_std * std``.

    The mean and standard deviation are taken over off-diagonal nonzero
    weights unless ``include_zeros`` is set.
    """
    if isinstance(phi, ProximityMatrix):
        values, ids, ubiquity = phi.values, phi.ids, phi.ubiquity
    else:
        values = np.asarray(phi, dtype=float)
        ubiquity = None
        ids = ids or tuple(f"p{i}" for i in range(values.shape[0]))
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise DimensionError("proximity matrix must be square")
    if not np.allclose(values, values.T, rtol=0, atol=1e-12):
        raise ValidationError("proximity matrix must be symmetric")
    n = values.shape[0]
    if n == 0:
        raise EmptyInputError("empty proximity matrix")
    iu, ju = np.triu_indices(n, k=1)
    w_all = values[iu, ju]
    nz = w_all != 0
    edges = np.column_stack([iu[nz], ju[nz]]).astype(np.int64)
    weights = w_all[nz]
    if edges.size == 0:
        raise EmptyInputError("proximity graph has no edges")
    stats_w = w_all if include_zeros else weights
    threshold = float(stats_w.mean() + n_std * stats_w.std())
    tree = maximum_spanning_forest(n, edges, weights)
    strong = weights > threshold
    return RelatednessGraph(tuple(ids), edges, weights, tree | strong, tree, threshold, None, ubiquity)


def spectral_bisection(g: RelatednessGraph, weighted: bool = True) -> NDArray[np.int64]:
    """Two-way cut of the backbone by the sign of the Laplacian's Fiedler vector."""
    n = g.n_nodes
    a = np.zeros((n, n))
    bb = g.backbone_edges()
    w = g.weights[g.in_backbone] if weighted else np.ones(len(bb))
    a[bb[:, 0], bb[:, 1]] = w
    a[bb[:, 1], bb[:, 0]] = w
    lap = np.diag(a.sum(axis=1)) - a
    _, vecs = np.linalg.eigh(lap)
    fiedler = vecs[:, 1]
    return (fiedler > 0).astype(np.int64)


def longest_ordered_cycle(g: RelatednessGraph, order: ArrayLike | None = None) -> list[int]:
    """Longest simple backbone cycle that visits nodes in cyclic ``order``.

    Dynamic programming over the cyclic sequence: the cycle starts at some node,
    steps only forward in ``order`` along backbone edges, and closes with an
    edge back to the start. The returned node list is a genuine cycle and so
    a lower bound on the longest cycle of the backbone.
    """
    n = g.n_nodes
    order = np.arange(n) if order is None else np.asarray(order)
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    adj: list[set[int]] = [set() for _ in range(n)]
    for i, j in g.backbone_edges():
        adj[int(pos[i])].add(int(pos[j]))
        adj[int(pos[j])].add(int(pos[i]))
    best: list[int] = []
    for start in range(n):
        if len(adj[start]) < 2:
            continue
        length = np.full(n, -1, dtype=np.int64)
        prev = np.full(n, -1, dtype=np.int64)
        length[0] = 1
        for off in range(n):
            if length[off] < 0:
                continue
            u = (start + off) % n
            for v in adj[u]:
                voff = (v - start) % n
                if voff > off and length[off] + 1 > length[voff]:
                    length[voff] = length[off] + 1
                    prev[voff] = off
        ends = [
            (int(length[(v - start) % n]), (v - start) % n)
            for v in adj[start]
            if (v - start) % n > 0 and length[(v - start) % n] >= 3
        ]
        if not ends:
            continue
        cyc_len, end = max(ends)
        if cyc_len > len(best):
            path = []
            off = end
            while off != -1:
                path.append(int(order[(start + off) % n]))
                off = int(prev[off]) if off != 0 else -1
            best = path[::-1]
        if len(best) == n:
            break
    return best


def export_graph(
    g: RelatednessGraph,
    path: str | Path,
    fmt: str | None = None,
    *,
    backbone_only: bool = False,
) -> Path:
    """Write the graph as an edge-list CSV, GraphML or DOT file.

    Node attributes: ``pci`` and ``ubiquity`` (when known); edge attributes:
    ``weight`` and ``in_backbone``. Floats carry 17 significant digits.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in FORMATS:
        raise ValidationError(f"unsupported graph format {fmt!r}; expected one of {FORMATS}")
    mask = g.in_backbone if backbone_only else np.ones(len(g.edges), dtype=bool)
    if fmt == "csv":
        path.write_text(edge_list_csv(g, mask), newline="")
    elif fmt == "graphml":
        path.write_text(graphml(g, mask), encoding="utf-8")
    else:
        path.write_text(dot(g, mask), encoding="utf-8")
    return path


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def edge_list_csv(g: RelatednessGraph, mask: NDArray[np.bool_] | None = None) -> str:
    mask = np.ones(len(g.edges), dtype=bool) if mask is None else mask
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "target", "weight", "in_backbone"])
    for (i, j), wt, bb in zip(g.edges[mask], g.weights[mask], g.in_backbone[mask]):
        w.writerow([g.ids[i], g.ids[j], _fmt(wt), int(bb)])
    return buf.getvalue()


def read_edge_list_csv(text: str) -> list[tuple[str, str, float, bool]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [(r["source"], r["target"], float(r["weight"]), r["in_backbone"] == "1") for r in rows]


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def graphml(g: RelatednessGraph, mask: NDArray[np.bool_] | None = None) -> str:
    mask = np.ones(len(g.edges), dtype=bool) if mask is None else mask
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns" '
        'xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" '
        'xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns '
        'http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">',
        '  <key id="pci" for="node" attr.name="pci" attr.type="double"/>',
        '  <key id="ubiquity" for="node" attr.name="ubiquity" attr.type="int"/>',
        '  <key id="x" for="node" attr.name="x" attr.type="double"/>',
        '  <key id="y" for="node" attr.name="y" attr.type="double"/>',
        '  <key id="weight" for="edge" attr.name="weight" attr.type="double"/>',
        '  <key id="in_backbone" for="edge" attr.name="in_backbone" attr.type="boolean"/>',
        '  <graph id="G" edgedefault="undirected">',
    ]
    layout = g.circular_layout()
    for k, node in enumerate(g.ids):
        out.append(f'    <node id="{_esc(node)}">')
        if g.pci is not None:
            out.append(f'      <data key="pci">{_fmt(g.pci[k])}</data>')
        if g.ubiquity is not None:
            out.append(f'      <data key="ubiquity">{int(g.ubiquity[k])}</data>')
        out.append(f'      <data key="x">{_fmt(layout[k, 0])}</data>')
        out.append(f'      <data key="y">{_fmt(layout[k, 1])}</data>')
        out.append("    </node>")
    for (i, j), wt, bb in zip(g.edges[mask], g.weights[mask], g.in_backbone[mask]):
        out.append(f'    <edge source="{_esc(g.ids[i])}" target="{_esc(g.ids[j])}">')
        out.append(f'      <data key="weight">{_fmt(wt)}</data>')
        out.append(f'      <data key="in_backbone">{"true" if bb else "false"}</data>')
        out.append("    </edge>")
    out += ["  </graph>", "</graphml>", ""]
    return "\n".join(out)


def dot(g: RelatednessGraph, mask: NDArray[np.bool_] | None = None) -> str:
    mask = np.ones(len(g.edges), dtype=bool) if mask is None else mask
    out = ["graph relatedness {"]
    for k, node in enumerate(g.ids):
        attrs = []
        if g.pci is not None:
            attrs.append(f"pci={_fmt(g.pci[k])}")
        if g.ubiquity is not None:
            attrs.append(f"ubiquity={int(g.ubiquity[k])}")
        out.append(f'  "{node}" [{", ".join(attrs)}];')
    for (i, j), wt, bb in zip(g.edges[mask], g.weights[mask], g.in_backbone[mask]):
        out.append(f'  "{g.ids[i]}" -- "{g.ids[j]}" [weight={_fmt(wt)}, in_backbone={int(bb)}];')
    out += ["}", ""]
    return "\n".join(out)


def summary(g: RelatednessGraph) -> dict:
    return {
        "n_nodes": g.n_nodes,
        "n_edges": int(len(g.edges)),
        "backbone_edges": int(g.in_backbone.sum()),
        "tree_edges": int(g.in_tree.sum()),
        "threshold": g.threshold,
        "components": g.n_components,
        "degree_by_pci_quartile": g.degree_by_quartile() if g.pci is not None else None,
    }
