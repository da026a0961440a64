import heapq
import os

import numpy as np
import pytest

from pedpred.exceptions import (
    AllActionsBlocked,
    GoalOffWalkable,
    NoConvergence,
    OutOfRange,
)
from pedpred.gridmdp import (
    ACTION_OFFSETS,
    CellClass,
    GridMdpPredictor,
    RewardConfig,
    SemanticGrid,
    _thread_count,
    nearest_reachable_cell,
    rasterize,
    rollout_positions,
    sample_prediction,
    softmax_policy,
    value_iteration,
)

from conftest import fork_document


def make_grid(classes, goal_cells, cell_size=0.2):
    classes = np.asarray(classes, dtype=np.int8)
    return SemanticGrid(origin=(0.0, 0.0), cell_size=cell_size,
                        classes=classes, goal_cells=goal_cells)


def corridor_grid(length=5):
    """One sidewalk row with the goal at the right end."""
    classes = np.full((1, length), int(CellClass.SIDEWALK))
    return make_grid(classes, {"g": (length - 1, 0)})


def dijkstra_steps(classes, start, goal):
    """Fewest 8-neighborhood moves from start to goal, obstacles blocked."""
    h, w = classes.shape
    dist = {start: 0}
    queue = [(0, start)]
    while queue:
        d, (ix, iy) = heapq.heappop(queue)
        if (ix, iy) == goal:
            return d
        if d > dist[(ix, iy)]:
            continue
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = ix + dx, iy + dy
                if not (0 <= nx < w and 0 <= ny < h):
                    continue
                if classes[ny, nx] == int(CellClass.OBSTACLE):
                    continue
                if d + 1 < dist.get((nx, ny), np.inf):
                    dist[(nx, ny)] = d + 1
                    heapq.heappush(queue, (d + 1, (nx, ny)))
    raise AssertionError("goal unreachable")


# --- action set ---


def test_action_directions_collapse_onto_eight_neighbors():
    assert ACTION_OFFSETS.shape == (24, 2)
    unique, counts = np.unique(ACTION_OFFSETS, axis=0, return_counts=True)
    assert len(unique) == 8
    assert set(map(tuple, unique)) == {
        (dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)}
    assert np.all(counts == 3)  # symmetric rounding spreads evenly
    assert np.array_equal(ACTION_OFFSETS.sum(axis=0), [0, 0])


def test_reward_table_defaults():
    table = RewardConfig().class_rewards()
    assert table[CellClass.OBSTACLE] == -np.inf
    assert table[CellClass.ROAD] == -3.0
    assert table[CellClass.SIDEWALK] == -1.0
    assert table[CellClass.CROSSWALK] == -1.0
    assert RewardConfig().gamma == 0.99


# --- rasterization ---


def test_rasterize_intersection_classifies_known_points(intersection_doc):
    grid = rasterize(intersection_doc)
    expected = {
        (0.0, 0.0): CellClass.ROAD,          # road junction
        (0.0, -3.5): CellClass.CROSSWALK,    # south crossing
        (-3.5, -3.5): CellClass.CROSSWALK,   # corner: crossing beats sidewalk
        (-3.5, -8.0): CellClass.SIDEWALK,    # south-west arm
        (0.0, -8.0): CellClass.ROAD,         # road lane under the arm
        (5.0, 0.0): CellClass.ROAD,
        (6.0, 6.0): CellClass.OBSTACLE,      # background between arms
    }
    for point, cls in expected.items():
        assert grid.class_at(grid.world_to_cell(point)) == cls, point
    for goal_id, cell in grid.goal_cells.items():
        assert grid.class_at(cell) in (CellClass.SIDEWALK, CellClass.CROSSWALK)


def test_rasterize_rejects_goals_off_the_walkways(intersection_doc):
    doc = dict(intersection_doc)
    doc["goals"] = [{"id": "bad", "x": 0.0, "y": 0.0}]  # road center
    with pytest.raises(GoalOffWalkable):
        rasterize(doc)
    doc["goals"] = [{"id": "worse", "x": 6.0, "y": 6.0}]  # background
    with pytest.raises(GoalOffWalkable):
        rasterize(doc)


def test_rasterize_covers_geometry_with_margin(intersection_doc):
    grid = rasterize(intersection_doc, margin=2.0)
    (ox, oy), (h, w) = grid.origin, grid.shape
    assert ox <= -12.0 and oy <= -12.0
    assert ox + w * grid.cell_size >= 12.0
    assert oy + h * grid.cell_size >= 12.0


def test_world_to_cell_and_cell_center_are_consistent(intersection_doc, rng):
    grid = rasterize(intersection_doc)
    for _ in range(50):
        p = rng.uniform(-11.5, 11.5, size=2)
        cell = grid.world_to_cell(p)
        center = np.array(grid.cell_center(cell))
        assert np.all(np.abs(center - p) <= 0.5 * grid.cell_size + 1e-12)
    with pytest.raises(OutOfRange):
        grid.world_to_cell((1e6, 0.0))


def test_rasterize_accepts_polygon_only_documents():
    doc = {
        "format": 1,
        "nodes": [],
        "edges": [],
        "goals": [{"id": "g", "x": 1.0, "y": 1.0}],
        "areas": [{"kind": "sidewalk",
                   "polygon": [[0, 0], [2, 0], [2, 2], [0, 2]]}],
        "background": "obstacle",
    }
    grid = rasterize(doc)
    assert grid.class_at(grid.world_to_cell((1.0, 1.0))) == CellClass.SIDEWALK
    assert grid.class_at(grid.world_to_cell((-1.0, -1.0))) == CellClass.OBSTACLE


# --- value iteration ---


def test_value_iteration_matches_hand_rolled_corridor_values():
    grid = corridor_grid(5)
    vf = value_iteration(grid, RewardConfig(), "g")
    # V(k) = -(sum of gamma^i, i < steps-to-go) with gamma 0.99, reward -1
    expected = [-3.940399, -2.9701, -1.99, -1.0, 0.0]
    assert vf.values[0] == pytest.approx(expected, abs=1e-9)
    assert vf.residual < 1e-6
    assert vf.iterations <= 10
    assert vf.goal_cell == (4, 0)


def test_value_iteration_pins_the_absorbing_goal_value():
    grid = corridor_grid(5)
    rewards = RewardConfig(goal=-0.5)
    vf = value_iteration(grid, rewards, "g")
    assert vf.values[0, 4] == pytest.approx(-0.5 / (1.0 - 0.99), abs=1e-12)


def test_value_iteration_leaves_unreachable_cells_at_minus_infinity():
    classes = np.full((3, 7), int(CellClass.SIDEWALK))
    classes[:, 3] = int(CellClass.OBSTACLE)  # wall splits the corridor
    grid = make_grid(classes, {"g": (0, 1)})
    vf = value_iteration(grid, RewardConfig(), "g")
    assert np.all(np.isinf(vf.values[:, 3]))
    assert np.all(np.isinf(vf.values[:, 4:]))
    assert np.all(np.isfinite(vf.values[:, :3]))


def test_value_iteration_prefers_cheap_cells_over_short_paths():
    # Two-row corridor: road on the bottom, sidewalk on top. The optimal
    # route leaves the road immediately even though straight-line road
    # travel reaches the goal in the same number of steps.
    classes = np.array([[int(CellClass.ROAD)] * 6,
                        [int(CellClass.SIDEWALK)] * 6])
    grid = make_grid(classes, {"g": (5, 0)})
    vf = value_iteration(grid, RewardConfig(), "g")
    probs = softmax_policy(vf, np.inf, (0, 0))
    chosen = ACTION_OFFSETS[probs > 0]
    assert np.all(chosen[:, 1] == 1)  # every greedy action steps up


def test_value_iteration_rejects_unknown_goal_and_tiny_budget():
    grid = corridor_grid(5)
    with pytest.raises(KeyError):
        value_iteration(grid, RewardConfig(), "nope")
    with pytest.raises(NoConvergence):
        value_iteration(grid, RewardConfig(), "g", max_iter=2)


def test_greedy_policy_reaches_the_goal_in_dijkstra_optimal_steps(rng):
    # Uniform cell cost, so the discounted optimum is the fewest-moves
    # path; a wall with two gaps forces a detour.
    classes = np.full((21, 30), int(CellClass.SIDEWALK))
    classes[3:21, 12] = int(CellClass.OBSTACLE)
    classes[0:17, 20] = int(CellClass.OBSTACLE)
    grid = make_grid(classes, {"g": (28, 18)})
    vf = value_iteration(grid, RewardConfig(), "g")
    start = (1, 1)
    optimal = dijkstra_steps(classes, start, (28, 18))
    positions = rollout_positions(grid, vf, start, horizon=optimal + 10,
                                  n_samples=4, alpha=np.inf, seed=7)
    goal_center = np.array(grid.cell_center((28, 18)))
    for sample in positions:
        arrived = np.flatnonzero(np.all(sample == goal_center, axis=1))
        assert arrived.size > 0
        assert arrived[0] == optimal  # ties in the argmax cannot hurt


# --- policies and rollouts ---


def test_softmax_policy_limits():
    grid = corridor_grid(5)
    vf = value_iteration(grid, RewardConfig(), "g")
    cell = (2, 0)
    uniform = softmax_policy(vf, 0.0, cell)
    open_actions = uniform > 0
    assert np.count_nonzero(open_actions) == 6  # left and right, 3 copies each
    assert np.allclose(uniform[open_actions], 1.0 / 6.0)
    greedy = softmax_policy(vf, np.inf, cell)
    towards_goal = ACTION_OFFSETS[:, 0] == 1
    assert np.allclose(greedy[towards_goal & open_actions], 1.0 / 3.0)
    assert greedy.sum() == pytest.approx(1.0, abs=1e-12)
    sharp = softmax_policy(vf, 100.0, cell)
    assert np.max(sharp) > np.max(softmax_policy(vf, 1.0, cell))
    assert sharp.sum() == pytest.approx(1.0, abs=1e-12)


def test_softmax_policy_raises_when_every_action_is_blocked():
    classes = np.full((3, 3), int(CellClass.OBSTACLE))
    classes[1, 1] = int(CellClass.SIDEWALK)
    grid = make_grid(classes, {"g": (1, 1)})
    vf = value_iteration(grid, RewardConfig(), "g")
    with pytest.raises(AllActionsBlocked):
        softmax_policy(vf, 1.0, (1, 1))


def test_nearest_reachable_cell_snaps_off_band_points():
    classes = np.full((7, 7), int(CellClass.OBSTACLE))
    classes[3, :] = int(CellClass.SIDEWALK)  # single walkable row
    grid = make_grid(classes, {"g": (6, 3)})
    vf = value_iteration(grid, RewardConfig(), "g")
    on_band = grid.cell_center((2, 3))
    assert nearest_reachable_cell(grid, vf, on_band) == (2, 3)
    below = grid.cell_center((2, 1))  # two obstacle rows under the band
    assert nearest_reachable_cell(grid, vf, below) == (2, 3)
    outside = (0.5, -0.9)  # off the grid entirely; clamps, then climbs
    assert nearest_reachable_cell(grid, vf, outside) == (2, 3)
    with pytest.raises(AllActionsBlocked):
        nearest_reachable_cell(grid, vf, below, max_radius=0.2)


def test_nearest_reachable_cell_breaks_ties_deterministically():
    classes = np.full((5, 5), int(CellClass.OBSTACLE))
    classes[1, :] = int(CellClass.SIDEWALK)
    classes[3, :] = int(CellClass.SIDEWALK)
    classes[:, 0] = int(CellClass.SIDEWALK)  # connect the two rows
    grid = make_grid(classes, {"g": (0, 2)})
    vf = value_iteration(grid, RewardConfig(), "g")
    query = grid.cell_center((3, 2))  # equidistant to rows 1 and 3
    assert nearest_reachable_cell(grid, vf, query) == (3, 1)


def test_sample_prediction_accepts_off_band_starts():
    classes = np.full((7, 7), int(CellClass.OBSTACLE))
    classes[3, :] = int(CellClass.SIDEWALK)
    grid = make_grid(classes, {"g": (6, 3)})
    vf = value_iteration(grid, RewardConfig(), "g")
    pred = sample_prediction(grid, vf, grid.cell_center((2, 0)), horizon=4,
                             n_samples=3, alpha=np.inf, seed=0)
    assert np.all(pred.positions[:, 0] == grid.cell_center((2, 3)))


def test_rollouts_are_seed_deterministic_and_absorbing():
    classes = np.full((8, 8), int(CellClass.SIDEWALK))
    grid = make_grid(classes, {"g": (7, 7)})
    vf = value_iteration(grid, RewardConfig(), "g")
    a = rollout_positions(grid, vf, (0, 0), horizon=30, n_samples=5,
                          alpha=2.0, seed=42)
    b = rollout_positions(grid, vf, (0, 0), horizon=30, n_samples=5,
                          alpha=2.0, seed=42)
    c = rollout_positions(grid, vf, (0, 0), horizon=30, n_samples=5,
                          alpha=2.0, seed=43)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (5, 31, 2)
    assert np.all(a[:, 0] == grid.cell_center((0, 0)))
    goal_center = np.array(grid.cell_center((7, 7)))
    for sample in a:
        arrived = np.flatnonzero(np.all(sample == goal_center, axis=1))
        if arrived.size:
            assert np.all(sample[arrived[0]:] == goal_center)


def test_sample_prediction_statistics_match_numpy(rng):
    classes = np.full((10, 10), int(CellClass.SIDEWALK))
    grid = make_grid(classes, {"g": (9, 9)})
    vf = value_iteration(grid, RewardConfig(), "g")
    pred = sample_prediction(grid, vf, start=(0.1, 0.1), horizon=20,
                             n_samples=12, alpha=1.0, seed=3)
    assert pred.positions.shape == (12, 21, 2)
    assert np.array_equal(pred.mean, pred.positions.mean(axis=0))
    for k in (0, 7, 20):
        expected = np.cov(pred.positions[:, k, :].T, ddof=1)
        assert np.max(np.abs(pred.cov[k] - expected)) < 1e-12
    single = sample_prediction(grid, vf, start=(0.1, 0.1), horizon=5,
                               n_samples=1, alpha=np.inf, seed=0)
    assert np.all(single.cov == 0.0)


# --- estimator wrapper ---


def test_grid_predictor_fits_and_predicts(rl_predictor):
    assert rl_predictor.goal_ids() == sorted(
        [f"g_{n}" for n in ("s_w", "s_e", "n_w", "n_e",
                            "w_s", "w_n", "e_s", "e_n")], key=repr)
    pred = rl_predictor.predict((-3.5, -10.0), "g_n_w", horizon=40,
                                n_samples=6, seed=11)
    again = rl_predictor.predict((-3.5, -10.0), "g_n_w", horizon=40,
                                 n_samples=6, seed=11)
    assert np.array_equal(pred.positions, again.positions)
    assert pred.mean.shape == (41, 2)
    assert pred.cov.shape == (41, 2, 2)


def test_grid_predictor_requires_fit_before_predict():
    predictor = GridMdpPredictor()
    with pytest.raises(RuntimeError):
        predictor.predict((0.0, 0.0), "g")
    with pytest.raises(RuntimeError):
        predictor.goal_ids()


def test_grid_predictor_value_cache_round_trip(tmp_path):
    doc = fork_document()
    cache = str(tmp_path / "cache")
    first = GridMdpPredictor(value_cache=cache).fit(doc)
    files = os.listdir(cache)
    assert len(files) == 1 and files[0].endswith(".npz")
    second = GridMdpPredictor(value_cache=cache).fit(doc)
    for goal_id in first.goal_ids():
        assert np.array_equal(first.values_[goal_id].values,
                              second.values_[goal_id].values)
        assert np.array_equal(first.values_[goal_id].gains,
                              second.values_[goal_id].gains)
    # different rasterization parameters must not reuse the cache entry
    GridMdpPredictor(value_cache=cache, cell_size=0.25).fit(doc)
    assert len(os.listdir(cache)) == 2


def test_grid_predictor_is_a_sklearn_estimator():
    from sklearn.base import clone

    predictor = GridMdpPredictor(alpha=50.0, n_samples=7)
    params = predictor.get_params()
    assert params["alpha"] == 50.0 and params["n_samples"] == 7
    twin = clone(predictor)
    assert twin.get_params() == params


def test_thread_count_resolution(monkeypatch):
    assert _thread_count(3, 8) == 3
    assert _thread_count(16, 4) == 4
    assert _thread_count(0, 4) == 1
    monkeypatch.setenv("PEDPRED_THREADS", "2")
    assert _thread_count(None, 8) == 2
    monkeypatch.setenv("PEDPRED_THREADS", "0")
    assert _thread_count(None, 8) >= 1
    monkeypatch.delenv("PEDPRED_THREADS")
    assert 1 <= _thread_count(None, 8) <= 8
