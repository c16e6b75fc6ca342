"""Connectivity graphs: loading, trajectory sampling, per-step pose deltas."""

from __future__ import annotations

import json
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------- #
# angles
# --------------------------------------------------------------------------- #

def normalize_angle(degrees: float) -> float:
    """Wrap an angle into (-180, 180]."""
    r = math.fmod(degrees + 180.0, 360.0)
    if r <= 0.0:
        r += 360.0
    return r - 180.0


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite coordinate {name!r}")

    def distance_to(self, other: Vec3) -> float:
        return math.sqrt(
            (self.x - other.x) ** 2
            + (self.y - other.y) ** 2
            + (self.z - other.z) ** 2
        )


def edge_bearing(src: Vec3, dst: Vec3) -> float:
    """Planar bearing from src to dst in degrees: 0 = +y axis, clockwise positive.

    The z components are ignored. Raises on zero planar displacement, since
    a vertical or coincident hop has no defined heading.
    """
    dx = dst.x - src.x
    dy = dst.y - src.y
    if dx == 0.0 and dy == 0.0:
        raise ValueError("degenerate edge: zero planar displacement")
    return normalize_angle(math.degrees(math.atan2(dx, dy)))


# --------------------------------------------------------------------------- #
# graph model
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Viewpoint:
    id: str
    position: Vec3


@dataclass
class ConnectivityGraph:
    """Undirected graph of navigable viewpoints with symmetric adjacency."""

    scan_id: str
    viewpoints: dict[str, Viewpoint]
    adjacency: dict[str, tuple[str, ...]] = field(repr=False)

    def __len__(self) -> int:
        return len(self.viewpoints)

    @property
    def edges(self) -> list[tuple[str, str]]:
        out = []
        for u, nbrs in self.adjacency.items():
            for v in nbrs:
                if u < v:
                    out.append((u, v))
        return sorted(out)

    def neighbors(self, viewpoint_id: str) -> tuple[str, ...]:
        return self.adjacency[viewpoint_id]

    def has_edge(self, u: str, v: str) -> bool:
        return v in self.adjacency.get(u, ())

    def position(self, viewpoint_id: str) -> Vec3:
        return self.viewpoints[viewpoint_id].position


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


def load_graph(path: str) -> ConnectivityGraph:
    """Load a graph JSON file, validating schema and adjacency symmetry."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"graph file {path}: invalid JSON: {exc}") from exc

    _require(isinstance(raw, dict), f"graph file {path}: top level must be an object")
    scan_id = raw.get("scan_id")
    _require(isinstance(scan_id, str) and scan_id != "",
             f"graph file {path}: missing or empty field 'scan_id'")
    vps_raw = raw.get("viewpoints")
    _require(isinstance(vps_raw, list), f"graph file {path}: field 'viewpoints' must be a list")
    _require(len(vps_raw) > 0, f"graph file {path}: empty graph (no viewpoints)")

    viewpoints: dict[str, Viewpoint] = {}
    for i, entry in enumerate(vps_raw):
        _require(isinstance(entry, dict), f"graph file {path}: viewpoints[{i}] must be an object")
        vp_id = entry.get("id")
        _require(isinstance(vp_id, str) and vp_id != "",
                 f"graph file {path}: viewpoints[{i}] missing field 'id'")
        _require(vp_id not in viewpoints,
                 f"graph file {path}: duplicate viewpoint id {vp_id!r}")
        pos = entry.get("pos")
        _require(isinstance(pos, list) and len(pos) == 3
                 and all(isinstance(c, (int, float)) and math.isfinite(c) for c in pos),
                 f"graph file {path}: viewpoints[{i}] field 'pos' must be [x, y, z]")
        viewpoints[vp_id] = Viewpoint(vp_id, Vec3(float(pos[0]), float(pos[1]), float(pos[2])))

    edges_raw = raw.get("edges")
    _require(isinstance(edges_raw, list), f"graph file {path}: field 'edges' must be a list")
    adjacency: dict[str, set[str]] = {vp_id: set() for vp_id in viewpoints}
    for i, edge in enumerate(edges_raw):
        _require(isinstance(edge, list) and len(edge) == 2
                 and all(isinstance(e, str) for e in edge),
                 f"graph file {path}: edges[{i}] must be a pair of viewpoint ids")
        a, b = edge
        for end in (a, b):
            _require(end in viewpoints,
                     f"graph file {path}: edges[{i}] references unknown viewpoint {end!r}")
        _require(a != b, f"graph file {path}: edges[{i}] is a self-loop on {a!r}")
        adjacency[a].add(b)
        adjacency[b].add(a)

    frozen = {vp_id: tuple(sorted(nbrs)) for vp_id, nbrs in adjacency.items()}
    return ConnectivityGraph(scan_id=scan_id, viewpoints=viewpoints, adjacency=frozen)


# --------------------------------------------------------------------------- #
# trajectories
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Pose:
    """A viewpoint visit: position plus the heading faced while departing it.

    The final pose of a trajectory keeps the arrival heading (there is no
    departing edge). Height is the z coordinate.
    """

    viewpoint_id: str
    position: Vec3
    heading: float

    @property
    def height(self) -> float:
        return self.position.z


@dataclass(frozen=True)
class StepDelta:
    turn_angle: float
    vertical_delta: float
    distance: float


@dataclass(frozen=True)
class Trajectory:
    scan_id: str
    poses: tuple[Pose, ...]
    deltas: tuple[StepDelta, ...]

    @property
    def steps(self) -> int:
        return len(self.deltas)

    @property
    def path(self) -> list[str]:
        return [p.viewpoint_id for p in self.poses]

    @property
    def headings(self) -> list[float]:
        return [p.heading for p in self.poses]

    @property
    def length(self) -> float:
        return sum(d.distance for d in self.deltas)


def compute_step_deltas(positions: list[Vec3]) -> list[StepDelta]:
    """Per-step turn angle, height change, and distance for a position chain.

    The turn angle of step t is the edge-bearing change relative to step t-1,
    normalized into (-180, 180]; the first step has turn angle 0 by convention
    (the first action is described relative to the agent's own facing).
    """
    if len(positions) < 2:
        raise ValueError("need at least 2 positions")
    bearings = [edge_bearing(a, b) for a, b in zip(positions, positions[1:])]
    deltas = []
    for t, (a, b) in enumerate(zip(positions, positions[1:])):
        turn = 0.0 if t == 0 else normalize_angle(bearings[t] - bearings[t - 1])
        deltas.append(StepDelta(
            turn_angle=turn,
            vertical_delta=b.z - a.z,
            distance=a.distance_to(b),
        ))
    return deltas


def make_trajectory(graph: ConnectivityGraph, viewpoint_ids: list[str]) -> Trajectory:
    """Build a trajectory along a chain of graph-adjacent viewpoints."""
    if len(viewpoint_ids) < 2:
        raise ValueError("trajectory needs at least 2 viewpoints")
    for vp_id in viewpoint_ids:
        if vp_id not in graph.viewpoints:
            raise ValueError(f"unknown viewpoint {vp_id!r}")
    for u, v in zip(viewpoint_ids, viewpoint_ids[1:]):
        if not graph.has_edge(u, v):
            raise ValueError(f"viewpoints {u!r} and {v!r} are not connected")
    positions = [graph.position(v) for v in viewpoint_ids]
    deltas = compute_step_deltas(positions)
    bearings = [edge_bearing(a, b) for a, b in zip(positions, positions[1:])]
    headings = bearings + [bearings[-1]]
    poses = tuple(
        Pose(vp_id, pos, heading)
        for vp_id, pos, heading in zip(viewpoint_ids, positions, headings)
    )
    return Trajectory(scan_id=graph.scan_id, poses=poses, deltas=tuple(deltas))


def _bfs_parents(graph: ConnectivityGraph, start: str) -> dict[str, str | None]:
    """BFS tree with sorted neighbor expansion, so paths are deterministic."""
    parents: dict[str, str | None] = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in graph.neighbors(u):
            if v not in parents:
                parents[v] = u
                queue.append(v)
    return parents


def shortest_path(graph: ConnectivityGraph, start: str, end: str) -> list[str] | None:
    """One canonical shortest path by hop count, or None if unreachable."""
    parents = _bfs_parents(graph, start)
    if end not in parents:
        return None
    path = [end]
    while path[-1] != start:
        path.append(parents[path[-1]])  # type: ignore[arg-type]
    path.reverse()
    return path


def _candidate_paths(graph: ConnectivityGraph, min_steps: int,
                     max_steps: int) -> list[list[str]]:
    """One canonical shortest path per qualifying endpoint pair, sorted."""
    out = []
    for start in sorted(graph.viewpoints):
        parents = _bfs_parents(graph, start)
        dist: dict[str, int] = {start: 0}
        for v in parents:
            if v != start:
                dist[v] = dist[parents[v]] + 1  # type: ignore[index]
        for end in sorted(dist):
            if min_steps <= dist[end] <= max_steps:
                path = [end]
                while path[-1] != start:
                    path.append(parents[path[-1]])  # type: ignore[arg-type]
                path.reverse()
                out.append(path)
    return out


def _length_ok(traj: Trajectory, min_length: float | None,
               max_length: float | None) -> bool:
    if min_length is not None and traj.length < min_length:
        return False
    if max_length is not None and traj.length > max_length:
        return False
    return True


def sample_trajectories(graph: ConnectivityGraph, min_steps: int = 5,
                        max_steps: int = 7, *, seed: int, count: int,
                        min_length: float | None = None,
                        max_length: float | None = None) -> list[Trajectory]:
    """Sample shortest-path trajectories with hop counts in [min_steps, max_steps].

    Endpoint pairs are drawn seeded-uniform without replacement, so no two
    returned trajectories share a (start, end) pair. An optional metric length
    filter (off by default) restricts candidates before sampling. Returns
    fewer than `count` trajectories, with a warning, when the graph cannot
    supply enough qualifying pairs.
    """
    if min_steps > max_steps:
        raise ValueError("min_steps must not exceed max_steps")
    if min_steps < 1:
        raise ValueError("min_steps must be at least 1")
    if count < 0:
        raise ValueError("count must be non-negative")

    candidates: list[Trajectory] = []
    for path in _candidate_paths(graph, min_steps, max_steps):
        traj = make_trajectory(graph, path)
        if _length_ok(traj, min_length, max_length):
            candidates.append(traj)

    if not candidates:
        logger.warning("graph %s yields no %d-%d step trajectories",
                       graph.scan_id, min_steps, max_steps)
        return []
    if len(candidates) < count:
        logger.warning("graph %s yields only %d of %d requested trajectories",
                       graph.scan_id, len(candidates), count)

    rng = random.Random(seed)
    take = min(count, len(candidates))
    return rng.sample(candidates, take)


def enumerate_trajectories(graph: ConnectivityGraph, min_steps: int = 5,
                           max_steps: int = 7, *,
                           min_length: float | None = None,
                           max_length: float | None = None) -> list[Trajectory]:
    """All qualifying shortest-path trajectories, one per endpoint pair.

    Deterministic order: sorted by (start, end) viewpoint id.
    """
    out = []
    for path in _candidate_paths(graph, min_steps, max_steps):
        traj = make_trajectory(graph, path)
        if _length_ok(traj, min_length, max_length):
            out.append(traj)
    return out
