"""Plantation subsection network: construction, file I/O and spatial binning.

Nodes are plantation subsections indexed ``0..N-1``; an undirected edge joins
subsections that border each other across a path.  Subsections without host
plants stay in the graph (so indices are stable across scenarios) but are
flagged ``planted=False`` and the simulator keeps them susceptible.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .months import Month, check_consecutive, month_range


class NetworkError(ValueError):
    """Malformed network definition."""


@dataclass(frozen=True, eq=False)
class Network:
    node_count: int
    edges: frozenset
    planted: np.ndarray
    footprints: tuple | None = None
    indptr: np.ndarray = field(init=False, repr=False)
    indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        planted = np.asarray(self.planted, dtype=bool).copy()
        if planted.shape != (self.node_count,):
            raise NetworkError("planted flags must have one entry per node")
        planted.setflags(write=False)
        object.__setattr__(self, "planted", planted)
        if self.footprints is not None and len(self.footprints) != self.node_count:
            raise NetworkError("footprints must have one polygon per node")

        # CSR adjacency, neighbours sorted; consumed by the simulation kernels
        nbrs: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(n) for n in nbrs])
        indices = np.array([v for n in nbrs for v in sorted(n)], dtype=np.int64)
        indptr.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and self.edges == other.edges
            and np.array_equal(self.planted, other.planted)
        )

    __hash__ = None

    def _check(self, node: int) -> int:
        node = int(node)
        if not 0 <= node < self.node_count:
            raise IndexError(f"node {node} out of range 0..{self.node_count - 1}")
        return node

    def degree(self, node: int) -> int:
        node = self._check(node)
        return int(self.indptr[node + 1] - self.indptr[node])

    def neighbors(self, node: int) -> frozenset:
        node = self._check(node)
        return frozenset(int(v) for v in self.indices[self.indptr[node]:self.indptr[node + 1]])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def degree_histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(int(d) for d in self.degrees()).items()))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count), dtype=bool)
        for u, v in self.edges:
            a[u, v] = a[v, u] = True
        return a


class NodeQuery(NamedTuple):
    degree: int
    neighbors: frozenset
    non_neighbor_count: int


def network_queries(network: Network, node: int) -> NodeQuery:
    deg = network.degree(node)
    return NodeQuery(deg, network.neighbors(node), network.node_count - 1 - deg)


def load_network(edge_records: Iterable, node_metadata, footprints=None) -> Network:
    """Build a validated :class:`Network`.

    Parameters
    ----------
    edge_records : iterable of (u, v)
        Undirected edges.  Self-loops, duplicates (in either orientation) and
        endpoints without node metadata are rejected.
    node_metadata : int or iterable of (id, planted)
        Either a node count (every node planted) or one record per node.  Ids
        must be exactly ``0..N-1``.
    footprints : sequence of (k, 2) arrays, optional
        Polygon per node, planar metres.
    """
    if isinstance(node_metadata, (int, np.integer)):
        n = int(node_metadata)
        planted = np.ones(n, dtype=bool)
    else:
        recs = [(int(i), bool(int(p))) for i, p in node_metadata]
        n = len(recs)
        ids = sorted(i for i, _ in recs)
        if ids != list(range(n)):
            dup = [i for i, c in Counter(ids).items() if c > 1]
            raise NetworkError(
                f"node ids must be contiguous 0..{n - 1}"
                + (f"; duplicated ids {dup}" if dup else "")
            )
        planted = np.zeros(n, dtype=bool)
        for i, p in recs:
            planted[i] = p
    if n < 1:
        raise NetworkError("network needs at least one node")

    edges = set()
    for rec in edge_records:
        u, v = (int(x) for x in rec)
        if u == v:
            raise NetworkError(f"self-loop at ({u},{v})")
        for x in (u, v):
            if not 0 <= x < n:
                raise NetworkError(f"dangling node index {x} in edge ({u},{v})")
        key = (min(u, v), max(u, v))
        if key in edges:
            raise NetworkError(f"duplicate edge ({u},{v})")
        edges.add(key)

    polys = None
    if footprints is not None:
        polys = tuple(None if p is None else _as_polygon(p) for p in footprints)
    return Network(n, frozenset(edges), planted, polys)


def _as_polygon(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise NetworkError("a polygon needs at least 3 (x, y) vertices")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# file formats


def _data_lines(path) -> list[str]:
    """Non-blank lines with ``#`` metadata/comment lines removed."""
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]


def _is_header(line: str) -> bool:
    try:
        float(line.split(",")[0])
    except ValueError:
        return True
    return False


def _rows(path, ncols: int, what: str) -> list[list[str]]:
    lines = _data_lines(path)
    if lines and _is_header(lines[0]):
        lines = lines[1:]
    rows = []
    for k, ln in enumerate(lines):
        parts = [x.strip() for x in ln.split(",")]
        if len(parts) != ncols:
            raise NetworkError(f"{what} {path}: line {k + 1} has {len(parts)} fields, expected {ncols}")
        rows.append(parts)
    return rows


def read_network(edge_path, node_path, footprint_path=None) -> Network:
    """Read the edge list ("u,v"), node metadata ("id,planted") and optional footprints."""
    try:
        edges = [(int(u), int(v)) for u, v in _rows(edge_path, 2, "edge file")]
        meta = [(int(i), int(p)) for i, p in _rows(node_path, 2, "node file")]
    except ValueError as exc:
        if isinstance(exc, NetworkError):
            raise
        raise NetworkError(str(exc)) from exc
    polys = None
    if footprint_path is not None:
        polys = read_footprints(footprint_path, len(meta))
    return load_network(edges, meta, polys)


def read_footprints(path, node_count: int) -> list:
    verts: dict[int, list[tuple[int, float, float]]] = {}
    for nid, k, x, y in _rows(path, 4, "footprint file"):
        verts.setdefault(int(nid), []).append((int(k), float(x), float(y)))
    polys = []
    for node in range(node_count):
        if node not in verts:
            polys.append(None)
            continue
        vs = sorted(verts[node])
        if [k for k, _, _ in vs] != list(range(len(vs))):
            raise NetworkError(f"footprint of node {node}: vertex indices not 0..k-1")
        polys.append([(x, y) for _, x, y in vs])
    extra = set(verts) - set(range(node_count))
    if extra:
        raise NetworkError(f"footprints for unknown nodes {sorted(extra)}")
    return polys


def write_network(network: Network, edge_path, node_path, footprint_path=None, header: str = "") -> None:
    with open(edge_path, "w") as fh:
        fh.write(header)
        fh.write("u,v\n")
        for u, v in sorted(network.edges):
            fh.write(f"{u},{v}\n")
    with open(node_path, "w") as fh:
        fh.write(header)
        fh.write("id,planted\n")
        for i, p in enumerate(network.planted):
            fh.write(f"{i},{int(p)}\n")
    if footprint_path is not None:
        if network.footprints is None:
            raise NetworkError("network has no footprints to write")
        with open(footprint_path, "w") as fh:
            fh.write(header)
            fh.write("node_id,vertex_index,x,y\n")
            for i, poly in enumerate(network.footprints):
                if poly is None:
                    continue
                for k, (x, y) in enumerate(poly):
                    fh.write(f"{i},{k},{float(x)!r},{float(y)!r}\n")


# ---------------------------------------------------------------------------
# observations


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Node x snapshot infection-presence matrix with its month labels."""

    states: np.ndarray
    month_labels: tuple

    def __post_init__(self):
        states = np.asarray(self.states, dtype=bool).copy()
        if states.ndim != 2 or states.shape[1] < 2:
            raise ValueError("an observation series needs a 2-D matrix with >= 2 snapshots")
        labels = tuple(check_consecutive(self.month_labels))
        if len(labels) != states.shape[1]:
            raise ValueError(f"{len(labels)} month labels for {states.shape[1]} snapshots")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "month_labels", labels)

    @property
    def node_count(self) -> int:
        return self.states.shape[0]

    @property
    def snapshots(self) -> int:
        return self.states.shape[1]

    def check_against(self, network: Network) -> None:
        if self.node_count != network.node_count:
            raise ValueError(
                f"series has {self.node_count} rows but network has {network.node_count} nodes"
            )

    def split(self, holdout: int) -> tuple["ObservationSeries", "ObservationSeries"]:
        """Training series and hold-out series.

        The hold-out series starts at the last training snapshot so each
        hold-out month has its preceding observed state available.
        """
        if not 1 <= holdout <= self.snapshots - 2:
            raise ValueError(f"hold-out of {holdout} months leaves too little training data")
        cut = self.snapshots - holdout
        return self[:, :cut], self[:, cut - 1:]

    def __getitem__(self, key):
        rows, cols = key
        return ObservationSeries(self.states[rows, cols], self.month_labels[cols])

    def __eq__(self, other):
        if not isinstance(other, ObservationSeries):
            return NotImplemented
        return self.month_labels == other.month_labels and np.array_equal(self.states, other.states)

    __hash__ = None


def read_series(path) -> ObservationSeries:
    lines = _data_lines(path)
    if not lines:
        raise ValueError(f"snapshot file {path} is empty")
    labels = [Month.parse(x) for x in lines[0].split(",")]
    rows = []
    for k, ln in enumerate(lines[1:]):
        vals = ln.split(",")
        if len(vals) != len(labels):
            raise ValueError(f"snapshot file {path}: row {k} has {len(vals)} values, expected {len(labels)}")
        if any(v.strip() not in ("0", "1") for v in vals):
            raise ValueError(f"snapshot file {path}: row {k} has non 0/1 values")
        rows.append([v.strip() == "1" for v in vals])
    return ObservationSeries(np.array(rows, dtype=bool).reshape(len(rows), len(labels)), tuple(labels))


def write_series(series: ObservationSeries, path, header: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header)
        fh.write(",".join(str(m) for m in series.month_labels) + "\n")
        for row in series.states:
            fh.write(",".join("1" if x else "0" for x in row) + "\n")


# ---------------------------------------------------------------------------
# spatial binning


class PointObservation(NamedTuple):
    x: float
    y: float
    snapshot_index: int


class BinningResult(NamedTuple):
    series: ObservationSeries
    rejects: list


def point_in_polygon(x, y, polygon, tol: float = 1e-9) -> np.ndarray:
    """Vectorised even-odd ray casting; points on an edge count as inside.

    A horizontal ray is cast towards +x and crossings are counted with the
    half-open rule ``(yi > y) != (yj > y)`` so vertices are not double-counted.
    """
    px = np.atleast_1d(np.asarray(x, dtype=float))
    py = np.atleast_1d(np.asarray(y, dtype=float))
    poly = np.asarray(polygon, dtype=float)
    xi, yi = poly[:, 0], poly[:, 1]
    xj, yj = np.roll(xi, 1), np.roll(yi, 1)
    scale = max(np.ptp(xi), np.ptp(yi), 1.0)

    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    for a, b, c, d in zip(xi, yi, xj, yj):
        straddle = (b > py) != (d > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = (c - a) * (py - b) / (d - b) + a
        inside ^= straddle & (px < x_cross)

        # boundary: collinear with the segment and within its bounding box
        cross = (c - a) * (py - b) - (d - b) * (px - a)
        within = (
            (px >= min(a, c) - tol * scale) & (px <= max(a, c) + tol * scale)
            & (py >= min(b, d) - tol * scale) & (py <= max(b, d) + tol * scale)
        )
        seg = np.hypot(c - a, d - b)
        on_edge |= within & (np.abs(cross) <= tol * scale * max(seg, 1.0))
    return inside | on_edge


def bin_points(points: Sequence, network: Network, snapshots: int, start_month="2014-12") -> BinningResult:
    """Bin infection coordinates into a node x snapshot presence matrix.

    A point marks its subsection infected at its snapshot.  A point on a
    shared boundary goes to the lowest-index containing node.  Points inside
    no footprint are returned in ``rejects`` instead of raising.
    """
    if network.footprints is None or any(p is None for p in network.footprints):
        missing = (
            list(range(network.node_count)) if network.footprints is None
            else [i for i, p in enumerate(network.footprints) if p is None]
        )
        raise NetworkError(f"bin_points needs a footprint for every node; missing {missing[:10]}")
    pts = [PointObservation(float(p[0]), float(p[1]), int(p[2])) for p in points]
    for p in pts:
        if not 0 <= p.snapshot_index < snapshots:
            raise ValueError(f"snapshot index {p.snapshot_index} outside 0..{snapshots - 1}")

    states = np.zeros((network.node_count, snapshots), dtype=bool)
    rejects = []
    if pts:
        xs = np.array([p.x for p in pts])
        ys = np.array([p.y for p in pts])
        owner = np.full(len(pts), -1, dtype=np.int64)
        # descending so the lowest containing index is written last
        for node in range(network.node_count - 1, -1, -1):
            poly = network.footprints[node]
            lo, hi = poly.min(axis=0), poly.max(axis=0)
            cand = np.flatnonzero((xs >= lo[0] - 1e-6) & (xs <= hi[0] + 1e-6)
                                  & (ys >= lo[1] - 1e-6) & (ys <= hi[1] + 1e-6))
            if cand.size:
                hit = point_in_polygon(xs[cand], ys[cand], poly)
                owner[cand[hit]] = node
        for p, o in zip(pts, owner):
            if o < 0:
                rejects.append(p)
            else:
                states[o, p.snapshot_index] = True
    series = ObservationSeries(states, tuple(month_range(start_month, snapshots)))
    return BinningResult(series, rejects)


def read_points(path) -> list[PointObservation]:
    return [PointObservation(float(x), float(y), int(t)) for x, y, t in _rows(path, 3, "points file")]
