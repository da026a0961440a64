"""Directed road graph of walkable strips with straight center-line edges.

A map document is a JSON object::

    {"format": 1,
     "nodes": [{"id": ..., "x": ..., "y": ...}, ...],
     "edges": [{"id": ..., "from": ..., "to": ..., "kind": "sidewalk",
                "v_ref": 1.0, "d": 0.5}, ...],
     "goals": [{"id": ..., "x": ..., "y": ...}, ...]}

Coordinates are meters, speeds meters per second. `d` (the switch
distance) is optional per edge. Optional keys `areas` (semantic
polygons) and `background` are consumed by the rasterizer, not here.
"""

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DanglingEndpoint,
    DisconnectedGraph,
    DisconnectedGraphWarning,
    DuplicateId,
    InvalidDocument,
    NonPositiveReferenceSpeed,
    OutOfRange,
    UnknownEdge,
    UnknownNode,
)
from .validation import as_position, normalize_angle

DOCUMENT_FORMAT = 1
EDGE_KINDS = ("sidewalk", "crosswalk")
DEFAULT_SWITCH_DISTANCE = 0.5


@dataclass(frozen=True)
class Node:
    id: object
    x: float
    y: float


@dataclass(frozen=True)
class Edge:
    id: object
    from_node: object
    to_node: object
    kind: str
    v_ref: float
    switch_distance: float


@dataclass(frozen=True)
class Goal:
    id: object
    x: float
    y: float


@dataclass(frozen=True)
class EdgeFrame:
    """Precomputed straight-segment geometry for one edge."""

    x0: float
    y0: float
    x1: float
    y1: float
    length: float
    heading: float
    ux: float  # unit vector along the edge
    uy: float


@dataclass(frozen=True)
class ReferenceState:
    """Point on an edge center line, moving at the edge reference speed.

    The reference input is identically zero: constant speed, constant
    heading.
    """

    x: float
    y: float
    v: float
    theta: float

    def as_array(self):
        return np.array([self.x, self.y, self.v, self.theta])


class RoadGraph:
    """Validated, immutable-by-convention road graph.

    Construct through :func:`build_graph`; the constructor itself does no
    validation.
    """

    def __init__(self, nodes, edges, goals, frames, out_edges, reverse_of):
        self.nodes = nodes  # id -> Node
        self.edges = edges  # id -> Edge
        self.goals = goals  # list[Goal]
        self._frames = frames  # edge id -> EdgeFrame
        self._out = out_edges  # node id -> tuple of edge ids, sorted
        self._reverse = reverse_of  # edge id -> reverse edge id or None
        self._edge_order = sorted(edges)

    def frame(self, edge_id) -> EdgeFrame:
        try:
            return self._frames[edge_id]
        except KeyError:
            raise UnknownEdge(edge_id) from None

    def node(self, node_id) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def edge(self, edge_id) -> Edge:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise UnknownEdge(edge_id) from None

    def reverse_of(self, edge_id):
        """Id of the opposite-direction twin edge, or None."""
        self.edge(edge_id)
        return self._reverse.get(edge_id)

    def edge_ids(self):
        return tuple(self._edge_order)

    def outgoing(self, node_id):
        self.node(node_id)
        return self._out.get(node_id, ())


def _require(condition, exc, message):
    if not condition:
        raise exc(message)


def build_graph(document, default_switch_distance=DEFAULT_SWITCH_DISTANCE,
                require_connected=False) -> RoadGraph:
    """Validate a map document and build the road graph.

    Checks ids for uniqueness, endpoints for existence, reference speeds
    for positivity and switch distances against edge lengths. A graph in
    several connected components produces a DisconnectedGraphWarning, or
    a DisconnectedGraph error when `require_connected` is set.
    """
    _require(isinstance(document, dict), InvalidDocument, "document must be an object")
    _require(document.get("format") == DOCUMENT_FORMAT, InvalidDocument,
             f"document must declare format: {DOCUMENT_FORMAT}")

    nodes = {}
    for row in document.get("nodes", []):
        node = Node(row["id"], float(row["x"]), float(row["y"]))
        _require(node.id not in nodes, DuplicateId, f"duplicate node id {node.id!r}")
        _require(math.isfinite(node.x) and math.isfinite(node.y), InvalidDocument,
                 f"node {node.id!r} has non-finite coordinates")
        nodes[node.id] = node
    _require(len(nodes) > 0, InvalidDocument, "document has no nodes")

    edges = {}
    frames = {}
    out_edges = {}
    endpoint_index = {}
    for row in document.get("edges", []):
        kind = row.get("kind", "sidewalk")
        _require(kind in EDGE_KINDS, InvalidDocument,
                 f"edge {row.get('id')!r} has unknown kind {kind!r}")
        edge = Edge(
            id=row["id"],
            from_node=row["from"],
            to_node=row["to"],
            kind=kind,
            v_ref=float(row["v_ref"]),
            switch_distance=float(row.get("d", default_switch_distance)),
        )
        _require(edge.id not in edges, DuplicateId, f"duplicate edge id {edge.id!r}")
        for endpoint in (edge.from_node, edge.to_node):
            _require(endpoint in nodes, DanglingEndpoint,
                     f"edge {edge.id!r} references missing node {endpoint!r}")
        _require(edge.v_ref > 0.0, NonPositiveReferenceSpeed,
                 f"edge {edge.id!r} has v_ref {edge.v_ref}")
        a, b = nodes[edge.from_node], nodes[edge.to_node]
        dx, dy = b.x - a.x, b.y - a.y
        length = math.hypot(dx, dy)
        _require(length > 0.0, InvalidDocument, f"edge {edge.id!r} has zero length")
        _require(0.0 <= edge.switch_distance < length, InvalidDocument,
                 f"edge {edge.id!r} switch distance {edge.switch_distance} "
                 f"outside [0, length)")
        edges[edge.id] = edge
        frames[edge.id] = EdgeFrame(
            x0=a.x, y0=a.y, x1=b.x, y1=b.y, length=length,
            heading=float(normalize_angle(math.atan2(dy, dx))),
            ux=dx / length, uy=dy / length,
        )
        out_edges.setdefault(edge.from_node, []).append(edge.id)
        endpoint_index[(edge.from_node, edge.to_node)] = edge.id

    reverse_of = {}
    for edge in edges.values():
        reverse_of[edge.id] = endpoint_index.get((edge.to_node, edge.from_node))

    out_sorted = {nid: tuple(sorted(ids)) for nid, ids in out_edges.items()}

    goals = []
    goal_ids = set()
    for row in document.get("goals", []):
        goal = Goal(row["id"], float(row["x"]), float(row["y"]))
        _require(goal.id not in goal_ids, DuplicateId, f"duplicate goal id {goal.id!r}")
        goal_ids.add(goal.id)
        goals.append(goal)

    graph = RoadGraph(nodes, edges, goals, frames, out_sorted, reverse_of)
    n_components = _count_components(graph)
    if n_components > 1:
        message = f"graph has {n_components} connected components"
        if require_connected:
            raise DisconnectedGraph(message)
        warnings.warn(message, DisconnectedGraphWarning, stacklevel=2)
    return graph


def load_graph(path, **kwargs) -> RoadGraph:
    """Read a map document from a JSON file and build the graph."""
    with open(path, "r", encoding="utf-8") as handle:
        document = json.load(handle)
    return build_graph(document, **kwargs)


def _count_components(graph: RoadGraph) -> int:
    # Undirected connectivity over nodes; isolated nodes count as components.
    neighbors = {nid: set() for nid in graph.nodes}
    for edge in graph.edges.values():
        neighbors[edge.from_node].add(edge.to_node)
        neighbors[edge.to_node].add(edge.from_node)
    seen = set()
    components = 0
    for start in graph.nodes:
        if start in seen:
            continue
        components += 1
        stack = [start]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            stack.extend(neighbors[nid] - seen)
    return components


def reference_state(graph: RoadGraph, edge_id, s) -> ReferenceState:
    """Center-line reference at arc length s in [0, edge length]."""
    frame = graph.frame(edge_id)
    if not 0.0 <= s <= frame.length:
        raise OutOfRange(f"s={s} outside [0, {frame.length}] on edge {edge_id!r}")
    return _reference_at(graph.edge(edge_id), frame, s)


def _reference_at(edge: Edge, frame: EdgeFrame, s: float) -> ReferenceState:
    # No range check: the predictor extends references past dead ends.
    return ReferenceState(
        x=frame.x0 + s * frame.ux,
        y=frame.y0 + s * frame.uy,
        v=edge.v_ref,
        theta=frame.heading,
    )


def remaining_distance(graph: RoadGraph, state, edge_id) -> float:
    """Along-edge distance left to the end node.

    Projects the position onto the edge direction; negative values mean
    the position lies past the end node.
    """
    frame = graph.frame(edge_id)
    if hasattr(state, "as_array"):
        state = state.as_array()
    x, y = as_position(state)
    return (frame.x1 - x) * frame.ux + (frame.y1 - y) * frame.uy


def outgoing_edges(graph: RoadGraph, node_id):
    """Edge ids leaving a node, sorted by id."""
    return graph.outgoing(node_id)


def project_to_graph(graph: RoadGraph, position, heading=None):
    """Nearest edge for a position.

    Returns (edge_id, s, lateral_offset) where s is the clamped arc
    length of the closest segment point and the lateral offset is signed,
    positive to the left of the edge direction. Distance ties go to the
    lowest edge id, unless a heading is given: then the tied edge best
    aligned with it wins. Two-way streets are stored as twin edges with
    identical geometry, so without the heading a walker would always be
    projected onto the lexicographically first direction.
    """
    p = as_position(position)
    projections = []
    for edge_id in graph.edge_ids():
        dist, s, lateral = _segment_projection(graph.frame(edge_id), p)
        projections.append((dist, edge_id, s, lateral))
    if not projections:
        raise UnknownEdge("graph has no edges")
    best_dist = min(entry[0] for entry in projections)
    tied = [entry for entry in projections if entry[0] <= best_dist + 1e-9]
    if heading is not None and len(tied) > 1:
        tied.sort(key=lambda entry: -math.cos(heading - graph.frame(entry[1]).heading))
        tied = tied[:1]
    _, edge_id, s, lateral = tied[0]
    return edge_id, s, lateral


def _segment_projection(frame: EdgeFrame, p):
    rx, ry = p[0] - frame.x0, p[1] - frame.y0
    s_raw = rx * frame.ux + ry * frame.uy
    s = min(max(s_raw, 0.0), frame.length)
    cx, cy = frame.x0 + s * frame.ux, frame.y0 + s * frame.uy
    dist = math.hypot(p[0] - cx, p[1] - cy)
    lateral = -rx * frame.uy + ry * frame.ux
    return dist, s, lateral


def along_track(frame: EdgeFrame, position) -> float:
    """Unclamped arc-length coordinate of a position on an edge's line."""
    p = as_position(position)
    return (p[0] - frame.x0) * frame.ux + (p[1] - frame.y0) * frame.uy
