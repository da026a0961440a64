"""Grid-MDP pedestrian baseline: semantic rasterization, per-goal value
iteration and stochastic policy rollouts.

The walking surface is a grid of square cells labeled road, sidewalk,
crosswalk or obstacle. Movement actions point in 24 equally spaced
directions with a fixed step of one cell size; each direction maps to
the nearest neighbor cell. Entering a cell earns that cell's class
reward, the goal cell is absorbing, and the rollout policy is a
Boltzmann distribution over the one-step backups r(s') + gamma V(s').
"""

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from matplotlib.path import Path as _PolygonPath
from sklearn.base import BaseEstimator

from .exceptions import (
    AllActionsBlocked,
    GoalOffWalkable,
    InsufficientSamples,
    InvalidDocument,
    NoConvergence,
    OutOfRange,
)
from .validation import check_scalar

DEFAULT_CELL_SIZE = 0.2
N_ACTIONS = 24


class CellClass(IntEnum):
    """Semantic classes; larger values win when shapes overlap."""

    OBSTACLE = 0
    ROAD = 1
    SIDEWALK = 2
    CROSSWALK = 3


_KIND_TO_CLASS = {
    "obstacle": CellClass.OBSTACLE,
    "road": CellClass.ROAD,
    "sidewalk": CellClass.SIDEWALK,
    "crosswalk": CellClass.CROSSWALK,
}

# Goal-eligible classes; the road is traversable but penalized.
_WALKABLE_FOR_GOALS = (CellClass.SIDEWALK, CellClass.CROSSWALK)


def _action_offsets():
    angles = 2.0 * np.pi * np.arange(N_ACTIONS) / N_ACTIONS
    # Round half away from zero so the action set stays symmetric.  cos/sin of
    # the 15-degree grid can land one ulp below 0.5, hence the nudge.
    def _round(v):
        return int(np.copysign(np.floor(np.abs(v) + 0.5 + 1e-12), v))
    return np.array([[_round(np.cos(a)), _round(np.sin(a))] for a in angles])


ACTION_OFFSETS = _action_offsets()  # (24, 2) as (dx, dy)


@dataclass(frozen=True)
class RewardConfig:
    """Per-class step rewards, the absorbing goal reward and gamma."""

    road: float = -3.0
    sidewalk: float = -1.0
    crosswalk: float = -1.0
    goal: float = 0.0
    gamma: float = 0.99

    def class_rewards(self):
        """Reward for entering a cell, indexed by CellClass; obstacles -inf."""
        table = np.full(len(CellClass), -np.inf)
        table[CellClass.ROAD] = self.road
        table[CellClass.SIDEWALK] = self.sidewalk
        table[CellClass.CROSSWALK] = self.crosswalk
        return table


@dataclass(frozen=True)
class SemanticGrid:
    """Rasterized map: origin is the world position of cell (0, 0)'s corner."""

    origin: tuple
    cell_size: float
    classes: np.ndarray  # (H, W) of CellClass values, indexed [iy, ix]
    goal_cells: dict  # goal id -> (ix, iy)

    @property
    def shape(self):
        return self.classes.shape

    def world_to_cell(self, position):
        x, y = float(position[0]), float(position[1])
        ix = int(math.floor((x - self.origin[0]) / self.cell_size))
        iy = int(math.floor((y - self.origin[1]) / self.cell_size))
        h, w = self.classes.shape
        if not (0 <= ix < w and 0 <= iy < h):
            raise OutOfRange(f"position {(x, y)} falls outside the grid")
        return ix, iy

    def cell_center(self, cell):
        ix, iy = cell
        return (self.origin[0] + (ix + 0.5) * self.cell_size,
                self.origin[1] + (iy + 0.5) * self.cell_size)

    def class_at(self, cell):
        ix, iy = cell
        return CellClass(self.classes[iy, ix])


def _segment_strip_mask(cx, cy, x0, y0, x1, y1, half_width):
    """Cells whose centers lie within half_width of the segment."""
    dx, dy = x1 - x0, y1 - y0
    length_sq = dx * dx + dy * dy
    t = ((cx - x0) * dx + (cy - y0) * dy) / length_sq
    t = np.clip(t, 0.0, 1.0)
    px, py = x0 + t * dx, y0 + t * dy
    return (cx - px) ** 2 + (cy - py) ** 2 <= half_width ** 2


def rasterize(document, cell_size=DEFAULT_CELL_SIZE, sidewalk_width=2.0,
              crosswalk_width=3.0, margin=2.0) -> SemanticGrid:
    """Label grid cells from a map document.

    Explicit `areas` polygons and strips derived from the graph edges
    (sidewalk/crosswalk center lines buffered to the configured widths)
    are painted by class priority; cells covered by nothing fall back to
    the document `background` (road unless stated). Each goal must land
    on a sidewalk or crosswalk cell.
    """
    cell_size = check_scalar(cell_size, "cell_size", minimum=0.0, strict=True)
    nodes = {row["id"]: (float(row["x"]), float(row["y"]))
             for row in document.get("nodes", [])}
    goals = [(row["id"], float(row["x"]), float(row["y"]))
             for row in document.get("goals", [])]
    areas = document.get("areas", [])

    xs = [p[0] for p in nodes.values()] + [g[1] for g in goals]
    ys = [p[1] for p in nodes.values()] + [g[2] for g in goals]
    for area in areas:
        xs.extend(float(p[0]) for p in area["polygon"])
        ys.extend(float(p[1]) for p in area["polygon"])
    if not xs:
        raise InvalidDocument("document has no geometry to rasterize")

    ox = math.floor((min(xs) - margin) / cell_size) * cell_size
    oy = math.floor((min(ys) - margin) / cell_size) * cell_size
    w = int(math.ceil((max(xs) + margin - ox) / cell_size))
    h = int(math.ceil((max(ys) + margin - oy) / cell_size))

    cx, cy = np.meshgrid(ox + (np.arange(w) + 0.5) * cell_size,
                         oy + (np.arange(h) + 0.5) * cell_size)
    centers = np.column_stack([cx.ravel(), cy.ravel()])

    best = np.full(h * w, -1, dtype=np.int8)
    for area in areas:
        kind = area["kind"]
        if kind not in _KIND_TO_CLASS:
            raise InvalidDocument(f"area has unknown kind {kind!r}")
        polygon = np.asarray(area["polygon"], dtype=float)
        mask = _PolygonPath(polygon).contains_points(centers)
        np.maximum(best, np.where(mask, int(_KIND_TO_CLASS[kind]), -1),
                   out=best, casting="unsafe")
    for row in document.get("edges", []):
        x0, y0 = nodes[row["from"]]
        x1, y1 = nodes[row["to"]]
        kind = row.get("kind", "sidewalk")
        width = crosswalk_width if kind == "crosswalk" else sidewalk_width
        mask = _segment_strip_mask(cx.ravel(), cy.ravel(), x0, y0, x1, y1,
                                   0.5 * width)
        np.maximum(best, np.where(mask, int(_KIND_TO_CLASS[kind]), -1),
                   out=best, casting="unsafe")

    background = _KIND_TO_CLASS.get(document.get("background", "road"))
    if background is None:
        raise InvalidDocument(f"unknown background {document.get('background')!r}")
    classes = np.where(best >= 0, best, int(background)).astype(np.int8)
    classes = classes.reshape(h, w)

    grid = SemanticGrid(origin=(ox, oy), cell_size=cell_size, classes=classes,
                        goal_cells={})
    goal_cells = {}
    for goal_id, gx, gy in goals:
        cell = grid.world_to_cell((gx, gy))
        if CellClass(classes[cell[1], cell[0]]) not in _WALKABLE_FOR_GOALS:
            raise GoalOffWalkable(
                f"goal {goal_id!r} lands on a "
                f"{CellClass(classes[cell[1], cell[0]]).name.lower()} cell")
        goal_cells[goal_id] = cell
    return SemanticGrid(origin=(ox, oy), cell_size=cell_size, classes=classes,
                        goal_cells=goal_cells)


@dataclass(frozen=True)
class ValueFunction:
    """Converged state values for one goal, plus cached one-step gains."""

    goal_id: object
    goal_cell: tuple
    values: np.ndarray  # (H, W), -inf on obstacles and unreachable cells
    gains: np.ndarray  # padded (H + 2, W + 2): r(s') + gamma * V(s')
    gamma: float
    rewards: RewardConfig
    iterations: int
    residual: float


def _distinct_offsets():
    return np.unique(ACTION_OFFSETS, axis=0)


def value_iteration(grid: SemanticGrid, rewards: RewardConfig, goal_id,
                    tol=1e-6, max_iter=10000) -> ValueFunction:
    """Solve V(s) = max_a [ r(s'_a) + gamma V(s'_a) ] with an absorbing goal.

    Synchronous sweeps until the max-abs Bellman residual drops below
    `tol`. Transitions are deterministic, so the sweep count is roughly
    the longest optimal path length in cells.
    """
    if goal_id not in grid.goal_cells:
        raise KeyError(f"unknown goal {goal_id!r}")
    gamma = rewards.gamma
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    gx, gy = grid.goal_cells[goal_id]
    h, w = grid.shape
    class_reward = rewards.class_rewards()[grid.classes]
    walkable = grid.classes != int(CellClass.OBSTACLE)
    goal_value = rewards.goal / (1.0 - gamma)

    # Start everything at -inf so value can only flow outward from the goal;
    # cells with no path to it then stay at -inf instead of settling on the
    # closed-pocket fixed point r/(1 - gamma).
    V = np.full((h, w), -np.inf)
    V[gy, gx] = goal_value
    offsets = _distinct_offsets()
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        gains = class_reward + gamma * V
        padded = np.full((h + 2, w + 2), -np.inf)
        padded[1:-1, 1:-1] = gains
        V_new = np.full((h, w), -np.inf)
        for dx, dy in offsets:
            np.maximum(V_new, padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w],
                       out=V_new)
        V_new[~walkable] = -np.inf
        V_new[gy, gx] = goal_value
        with np.errstate(invalid="ignore"):
            diff = V_new - V  # -inf minus -inf is NaN on unreachable cells
        finite = np.isfinite(diff)
        residual = float(np.max(np.abs(diff[finite]))) if finite.any() else 0.0
        if np.any(np.isinf(diff) & ~np.isnan(diff)):
            residual = np.inf  # a cell flipped to/from unreachable
        V = V_new
        if residual < tol:
            break
    else:
        raise NoConvergence(
            f"value iteration for goal {goal_id!r}: residual {residual} "
            f"after {max_iter} sweeps")

    gains = np.full((h + 2, w + 2), -np.inf)
    gains[1:-1, 1:-1] = class_reward + gamma * V
    return ValueFunction(goal_id=goal_id, goal_cell=(gx, gy), values=V,
                         gains=gains, gamma=gamma, rewards=rewards,
                         iterations=iteration, residual=residual)


def _action_gains(vf: ValueFunction, cell):
    ix, iy = cell
    return vf.gains[iy + 1 + ACTION_OFFSETS[:, 1], ix + 1 + ACTION_OFFSETS[:, 0]]


def softmax_policy(vf: ValueFunction, alpha, cell):
    """Boltzmann action distribution at a cell.

    pi(a|s) is proportional to exp(alpha * (r(s'_a) + gamma V(s'_a))),
    computed with max subtraction; blocked actions get probability zero.
    alpha = inf gives the greedy limit (uniform over maximizers).
    """
    gains = _action_gains(vf, cell)
    finite = np.isfinite(gains)
    if not finite.any():
        raise AllActionsBlocked(f"no action leaves cell {tuple(cell)}")
    probs = np.zeros(N_ACTIONS)
    top = np.max(gains[finite])
    if np.isinf(alpha):
        best = finite & (gains >= top)
        probs[best] = 1.0 / np.count_nonzero(best)
        return probs
    weights = np.exp(alpha * (gains[finite] - top))
    probs[finite] = weights / weights.sum()
    return probs


def nearest_reachable_cell(grid: SemanticGrid, vf: ValueFunction, point,
                           max_radius=None):
    """Nearest cell (by center distance) with a finite value under `vf`.

    Measured positions routinely fall off the walkable band (sensor
    noise, corner cutting, overshoot), where every action is blocked.
    This snaps the query back onto cells the goal can actually be
    reached from, searching outward ring by ring: the whole grid by
    default, or up to `max_radius` meters when given. Raises
    AllActionsBlocked when even that fails.
    """
    x, y = float(point[0]), float(point[1])
    h, w = grid.shape
    ix = min(w - 1, max(0, int(math.floor((x - grid.origin[0]) / grid.cell_size))))
    iy = min(h - 1, max(0, int(math.floor((y - grid.origin[1]) / grid.cell_size))))
    if np.isfinite(vf.values[iy, ix]):
        return ix, iy
    if max_radius is None:
        max_ring = max(h, w)
    else:
        max_ring = max(1, int(math.ceil(max_radius / grid.cell_size)))
    for radius in range(1, max_ring + 1):
        best = None
        for jy in range(max(0, iy - radius), min(h, iy + radius + 1)):
            for jx in range(max(0, ix - radius), min(w, ix + radius + 1)):
                if max(abs(jy - iy), abs(jx - ix)) != radius:
                    continue
                if not np.isfinite(vf.values[jy, jx]):
                    continue
                cx, cy = grid.cell_center((jx, jy))
                key = ((cx - x) ** 2 + (cy - y) ** 2, jy, jx)
                if best is None or key < best[0]:
                    best = (key, (jx, jy))
        if best is not None:
            return best[1]
    scope = "anywhere" if max_radius is None else f"within {max_radius} m"
    raise AllActionsBlocked(f"no reachable cell {scope} of {(x, y)}")


@dataclass(frozen=True)
class SampledPrediction:
    """Monte Carlo rollouts and their per-step sample statistics.

    positions has shape (n_samples, horizon + 1, 2); mean and cov are the
    per-step statistics computed from exactly these samples.
    """

    goal_id: object
    positions: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    alpha: float
    seed: int


def rollout_positions(grid: SemanticGrid, vf: ValueFunction, start_cell,
                      horizon, n_samples, alpha, seed):
    """Simulate policy rollouts; returns cell-center positions.

    Each rollout draws from an independent substream spawned off `seed`,
    so results do not depend on execution order. The goal cell absorbs.
    """
    horizon = int(horizon)
    n_samples = int(n_samples)
    if n_samples < 1:
        raise InsufficientSamples("need at least one rollout")
    gx, gy = vf.goal_cell
    dxs, dys = ACTION_OFFSETS[:, 0], ACTION_OFFSETS[:, 1]
    greedy = np.isinf(alpha)
    positions = np.empty((n_samples, horizon + 1, 2))
    for i, stream in enumerate(np.random.SeedSequence(seed).spawn(n_samples)):
        rng = np.random.default_rng(stream)
        ix, iy = start_cell
        positions[i, 0] = grid.cell_center((ix, iy))
        for k in range(1, horizon + 1):
            if ix == gx and iy == gy:
                positions[i, k] = positions[i, k - 1]
                continue
            gains = vf.gains[iy + 1 + dys, ix + 1 + dxs]
            finite = np.isfinite(gains)
            if not finite.any():
                raise AllActionsBlocked(f"no action leaves cell {(ix, iy)}")
            top = np.max(gains[finite])
            if greedy:
                best = np.flatnonzero(finite & (gains >= top))
                action = best[rng.integers(best.size)] if best.size > 1 else best[0]
            else:
                weights = np.where(finite, np.exp(alpha * (gains - top)), 0.0)
                cdf = np.cumsum(weights)
                action = int(np.searchsorted(cdf, rng.random() * cdf[-1],
                                             side="right"))
            ix += int(dxs[action])
            iy += int(dys[action])
            positions[i, k] = grid.cell_center((ix, iy))
    return positions


def sample_prediction(grid: SemanticGrid, vf: ValueFunction, start, horizon,
                      n_samples=100, alpha=100.0, seed=0) -> SampledPrediction:
    """Rollout bundle from a world position toward one goal."""
    start_cell = nearest_reachable_cell(grid, vf, start)
    positions = rollout_positions(grid, vf, start_cell, horizon, n_samples,
                                  alpha, seed)
    mean = positions.mean(axis=0)
    if positions.shape[0] > 1:
        centered = positions - mean[None, :, :]
        cov = np.einsum("nki,nkj->kij", centered, centered) / (positions.shape[0] - 1)
    else:
        cov = np.zeros((positions.shape[1], 2, 2))
    return SampledPrediction(goal_id=vf.goal_id, positions=positions, mean=mean,
                             cov=cov, alpha=float(alpha), seed=seed)


def _thread_count(requested, n_tasks):
    if requested is not None:
        limit = int(requested)
    else:
        limit = int(os.environ.get("PEDPRED_THREADS", "0")) or (os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


class GridMdpPredictor(BaseEstimator):
    """Sampling-based pedestrian baseline on a semantic grid MDP.

    fit() rasterizes a map document and runs value iteration once per
    goal (optionally persisted to a cache directory); predict() draws
    seeded policy rollouts toward a goal.
    """

    def __init__(self, cell_size=DEFAULT_CELL_SIZE, gamma=0.99,
                 reward_road=-3.0, reward_sidewalk=-1.0, reward_crosswalk=-1.0,
                 reward_goal=0.0, alpha=100.0, n_samples=100, horizon=200,
                 tol=1e-6, max_iter=10000, sidewalk_width=2.0,
                 crosswalk_width=3.0, margin=2.0, random_state=0,
                 value_cache=None, n_jobs=None):
        self.cell_size = cell_size
        self.gamma = gamma
        self.reward_road = reward_road
        self.reward_sidewalk = reward_sidewalk
        self.reward_crosswalk = reward_crosswalk
        self.reward_goal = reward_goal
        self.alpha = alpha
        self.n_samples = n_samples
        self.horizon = horizon
        self.tol = tol
        self.max_iter = max_iter
        self.sidewalk_width = sidewalk_width
        self.crosswalk_width = crosswalk_width
        self.margin = margin
        self.random_state = random_state
        self.value_cache = value_cache
        self.n_jobs = n_jobs

    def _rewards(self) -> RewardConfig:
        return RewardConfig(road=self.reward_road, sidewalk=self.reward_sidewalk,
                            crosswalk=self.reward_crosswalk,
                            goal=self.reward_goal, gamma=self.gamma)

    def _cache_key(self, document):
        payload = json.dumps(
            [document, self.cell_size, self.sidewalk_width, self.crosswalk_width,
             self.margin, self._rewards().__dict__, self.tol],
            sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def fit(self, X, y=None):
        """Rasterize and solve the per-goal value functions."""
        if isinstance(X, SemanticGrid):
            document = None
            self.grid_ = X
        else:
            if not isinstance(X, dict):
                with open(X, "r", encoding="utf-8") as handle:
                    X = json.load(handle)
            document = X
            self.grid_ = rasterize(X, cell_size=self.cell_size,
                                   sidewalk_width=self.sidewalk_width,
                                   crosswalk_width=self.crosswalk_width,
                                   margin=self.margin)
        rewards = self._rewards()
        goal_ids = sorted(self.grid_.goal_cells, key=repr)

        cache_path = None
        if self.value_cache is not None and document is not None:
            os.makedirs(self.value_cache, exist_ok=True)
            cache_path = os.path.join(
                self.value_cache, f"values_{self._cache_key(document)}.npz")
        if cache_path is not None and os.path.exists(cache_path):
            with np.load(cache_path, allow_pickle=False) as data:
                self.values_ = {
                    goal_id: self._value_from_arrays(goal_id, data[f"v_{i}"],
                                                     rewards)
                    for i, goal_id in enumerate(goal_ids)}
            return self

        def solve(goal_id):
            return value_iteration(self.grid_, rewards, goal_id,
                                   tol=self.tol, max_iter=self.max_iter)

        workers = _thread_count(self.n_jobs, len(goal_ids))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                solved = list(pool.map(solve, goal_ids))
        else:
            solved = [solve(goal_id) for goal_id in goal_ids]
        self.values_ = {vf.goal_id: vf for vf in solved}

        if cache_path is not None:
            np.savez_compressed(
                cache_path,
                **{f"v_{i}": self.values_[goal_id].values
                   for i, goal_id in enumerate(goal_ids)})
        return self

    def _value_from_arrays(self, goal_id, values, rewards: RewardConfig):
        h, w = self.grid_.shape
        gains = np.full((h + 2, w + 2), -np.inf)
        gains[1:-1, 1:-1] = rewards.class_rewards()[self.grid_.classes] \
            + rewards.gamma * values
        return ValueFunction(goal_id=goal_id, goal_cell=self.grid_.goal_cells[goal_id],
                             values=values, gains=gains, gamma=rewards.gamma,
                             rewards=rewards, iterations=0, residual=float("nan"))

    def goal_ids(self):
        if not hasattr(self, "values_"):
            raise RuntimeError("predictor is not fitted; call fit() first")
        return sorted(self.values_, key=repr)

    def predict(self, start, goal, horizon=None, n_samples=None, alpha=None,
                seed=None) -> SampledPrediction:
        """Seeded rollout prediction from a world position toward `goal`."""
        if not hasattr(self, "values_"):
            raise RuntimeError("predictor is not fitted; call fit() first")
        start = np.asarray(start, dtype=float).ravel()[:2]
        return sample_prediction(
            self.grid_, self.values_[goal], start,
            horizon=self.horizon if horizon is None else horizon,
            n_samples=self.n_samples if n_samples is None else n_samples,
            alpha=self.alpha if alpha is None else alpha,
            seed=self.random_state if seed is None else seed)
