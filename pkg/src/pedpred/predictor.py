"""Closed-loop Gaussian belief propagation over a road graph.

A prediction is a tree of branches. Each branch tracks one edge
hypothesis with a Gaussian belief over (x, y, v, theta); the mean follows
the discrete closed loop

    mean_{k+1} = A mean_k + B u_k + c,   u_k = -K (mean_k - r_k)

and the covariance follows cov_{k+1} = A_K cov_k A_K' + W with
A_K = A - B K. When the remaining distance along the current edge drops
to the switch distance, the branch terminates and spawns one child per
outgoing edge (immediate U-turns excluded unless they are the only
option); at nodes without outgoing edges the branch coasts straight on.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import roadgraph
from .dynamics import STATE_DIM, edge_model
from .lqr import DEFAULT_MAX_ITER, DEFAULT_TOL, LqrWeights, solve_dare
from .roadgraph import RoadGraph, build_graph, load_graph
from .validation import as_covariance, as_state_vector, check_scalar

DEFAULT_HORIZON = 200
DEFAULT_MAX_BRANCHES = 64


def default_process_noise():
    """Per-step process noise used when none is configured."""
    return 0.3 * np.diag([0.1, 0.1, 0.1, np.pi / 180.0])


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian over (x, y, v, theta): mean (4,) and covariance (4, 4)."""

    mean: np.ndarray
    cov: np.ndarray


@dataclass
class Branch:
    """One edge hypothesis. Beliefs cover steps spawn_step .. last_step."""

    branch_id: int
    edge_id: object
    parent_id: int | None
    spawn_step: int
    means: list = field(default_factory=list)
    covs: list = field(default_factory=list)
    ref_s: float = 0.0  # tracking-reference arc position at spawn_step
    coasting: bool = False
    terminal_step: int | None = None

    @property
    def last_step(self):
        return self.spawn_step + len(self.means) - 1

    def belief_at(self, step) -> GaussianBelief:
        i = step - self.spawn_step
        if not 0 <= i < len(self.means):
            raise IndexError(f"branch {self.branch_id} has no step {step}")
        return GaussianBelief(self.means[i], self.covs[i])


@dataclass
class PredictionTree:
    """All branches of one prediction, in branch id order."""

    branches: list
    horizon: int
    t_s: float
    params: dict
    truncated: bool = False

    def branch(self, branch_id) -> Branch:
        return self.branches[branch_id]

    def leaves(self):
        """Branches without children, in id order."""
        return [b for b in self.branches if b.terminal_step is None]

    def path_states(self, leaf: Branch):
        """Means and covariances along the root-to-leaf chain.

        At a switch step the child's hand-off belief is used. Returns
        arrays of shape (last_step + 1, 4) and (last_step + 1, 4, 4).
        """
        chain = [leaf]
        while chain[0].parent_id is not None:
            chain.insert(0, self.branches[chain[0].parent_id])
        means = np.empty((leaf.last_step + 1, STATE_DIM))
        covs = np.empty((leaf.last_step + 1, STATE_DIM, STATE_DIM))
        for branch, successor in zip(chain, chain[1:] + [None]):
            stop = branch.last_step if successor is None else successor.spawn_step - 1
            for step in range(branch.spawn_step, stop + 1):
                means[step] = branch.means[step - branch.spawn_step]
                covs[step] = branch.covs[step - branch.spawn_step]
        return means, covs


def step_belief(belief: GaussianBelief, model, solution, ref, W) -> GaussianBelief:
    """Advance a belief one step along an edge reference.

    `ref` is the reference at the belief's current progress; the mean
    update is the closed-loop affine recursion and the covariance update
    is A_K cov A_K' + W, re-symmetrized.
    """
    r = ref.as_array() if hasattr(ref, "as_array") else np.asarray(ref, dtype=float)
    mean, cov = _step_arrays(belief.mean, belief.cov, model, solution, r, W)
    return GaussianBelief(mean, cov)


def _step_arrays(mean, cov, model, solution, ref_vec, W):
    u = -solution.K @ (mean - ref_vec)
    mean_next = model.A @ mean + model.B @ u + model.c
    A_K = solution.A_K
    cov_next = A_K @ cov @ A_K.T + W
    cov_next = 0.5 * (cov_next + cov_next.T)
    return mean_next, cov_next


class _EdgeRuntime:
    """Per-edge gear for prediction: geometry, discrete model, feedback."""

    __slots__ = ("edge_id", "frame", "d", "v_ref", "to_node", "model", "solution",
                 "step_advance")

    def __init__(self, edge, frame, model, solution, t_s):
        self.edge_id = edge.id
        self.frame = frame
        self.d = edge.switch_distance
        self.v_ref = edge.v_ref
        self.to_node = edge.to_node
        self.model = model
        self.solution = solution
        self.step_advance = edge.v_ref * t_s

    def ref_vec(self, s):
        # Extends past both edge endpoints; coasting branches rely on it.
        f = self.frame
        return np.array([f.x0 + s * f.ux, f.y0 + s * f.uy, self.v_ref, f.heading])

    def remaining(self, mean):
        f = self.frame
        return (f.x1 - mean[0]) * f.ux + (f.y1 - mean[1]) * f.uy


def build_edge_runtimes(graph: RoadGraph, weights: LqrWeights, t_s,
                        dare_tol=DEFAULT_TOL, dare_max_iter=DEFAULT_MAX_ITER):
    """Discrete models and LQR gains for every edge.

    Edges sharing (heading, v_ref) reuse one Riccati solution.
    """
    runtimes = {}
    cache = {}
    for edge_id in graph.edge_ids():
        edge = graph.edge(edge_id)
        frame = graph.frame(edge_id)
        key = (round(frame.heading, 12), edge.v_ref)
        if key not in cache:
            ref = roadgraph.ReferenceState(0.0, 0.0, edge.v_ref, frame.heading)
            model = edge_model(ref, t_s)
            solution = solve_dare(model.A, model.B, weights,
                                  tol=dare_tol, max_iter=dare_max_iter)
            cache[key] = (model, solution)
        model, solution = cache[key]
        # c depends only on (v_ref, heading), so the cached model carries over.
        runtimes[edge_id] = _EdgeRuntime(edge, frame, model, solution, t_s)
    return runtimes


def _handoff(mean, cov, runtime):
    """Carry position and speed onto a new edge, reset the heading mean."""
    new_mean = mean.copy()
    new_mean[3] = runtime.frame.heading
    ref_s = roadgraph.along_track(runtime.frame, mean[:2])
    return new_mean, cov.copy(), ref_s


def _switch_candidates(graph, runtime, allow_uturn):
    candidates = graph.outgoing(runtime.to_node)
    if allow_uturn:
        return candidates
    reverse = graph.reverse_of(runtime.edge_id)
    forward = tuple(e for e in candidates if e != reverse)
    return forward if forward else candidates  # keep a sole reverse option


def init_branches(graph: RoadGraph, runtimes, state, cov, max_branches,
                  allow_uturn=False):
    """Root branches for a measured state.

    The state projects onto the nearest edge. If it already lies within
    that edge's switch distance of the end node, one root is spawned per
    outgoing edge with the hand-off belief; otherwise a single root keeps
    the measured mean.
    """
    mean = as_state_vector(state)
    cov = np.zeros((STATE_DIM, STATE_DIM)) if cov is None else as_covariance(cov, STATE_DIM)
    edge_id, _, _ = roadgraph.project_to_graph(graph, mean[:2], heading=mean[3])
    runtime = runtimes[edge_id]
    branches = []
    truncated = False
    if runtime.remaining(mean) <= runtime.d:
        candidates = _switch_candidates(graph, runtime, allow_uturn)
        for candidate in candidates:
            if len(branches) >= max_branches:
                truncated = True
                break
            new_mean, new_cov, ref_s = _handoff(mean, cov, runtimes[candidate])
            branch = Branch(len(branches), candidate, None, 0,
                            [new_mean], [new_cov], ref_s)
            branches.append(branch)
    if not branches:
        mean = mean.copy()
        # heading is an angle: keep the tracking error modulo 2*pi so an
        # unwrapped estimate a few turns out does not wind up the regulator
        heading = runtime.frame.heading
        mean[3] = heading + math.remainder(mean[3] - heading, math.tau)
        ref_s = roadgraph.along_track(runtime.frame, mean[:2])
        branch = Branch(0, edge_id, None, 0, [mean], [cov.copy()], ref_s)
        branch.coasting = runtime.remaining(mean) <= runtime.d
        branches.append(branch)
    return branches, truncated


def predict(graph: RoadGraph, runtimes, state, cov=None, horizon=DEFAULT_HORIZON,
            W=None, max_branches=DEFAULT_MAX_BRANCHES, allow_uturn=False,
            t_s=None, params=None) -> PredictionTree:
    """Propagate a branching belief tree over `horizon` steps.

    When spawning a child would exceed `max_branches`, the newest spawn
    requests are dropped first and the parent coasts on instead, so every
    step stays covered; the tree is then flagged truncated.
    """
    horizon = int(horizon)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if max_branches < 1:
        raise ValueError("max_branches must be >= 1")
    W = default_process_noise() if W is None else as_covariance(W, STATE_DIM)
    branches, truncated = init_branches(graph, runtimes, state, cov,
                                        max_branches, allow_uturn)
    # branch.ref_s stays the spawn-time reference; the moving target lives here
    cursors = {b.branch_id: b.ref_s for b in branches}
    frontier = list(branches)
    for k in range(1, horizon + 1):
        next_frontier = []
        for branch in frontier:
            runtime = runtimes[branch.edge_id]
            ref_vec = runtime.ref_vec(cursors[branch.branch_id])
            mean, cov_k = _step_arrays(branch.means[-1], branch.covs[-1],
                                       runtime.model, runtime.solution, ref_vec, W)
            branch.means.append(mean)
            branch.covs.append(cov_k)
            cursors[branch.branch_id] += runtime.step_advance
            if branch.coasting or runtime.remaining(mean) > runtime.d:
                next_frontier.append(branch)
                continue
            candidates = _switch_candidates(graph, runtime, allow_uturn)
            if not candidates:
                branch.coasting = True
                next_frontier.append(branch)
                continue
            spawned = []
            for candidate in candidates:
                if len(branches) >= max_branches:
                    truncated = True
                    break
                new_mean, new_cov, ref_s = _handoff(mean, cov_k, runtimes[candidate])
                child = Branch(len(branches), candidate, branch.branch_id, k,
                               [new_mean], [new_cov], ref_s)
                branches.append(child)
                spawned.append(child)
                cursors[child.branch_id] = ref_s
            if spawned:
                branch.terminal_step = k
                next_frontier.extend(spawned)
            else:
                branch.coasting = True
                next_frontier.append(branch)
        frontier = next_frontier
    tree_params = dict(params or {})
    return PredictionTree(branches=branches, horizon=horizon,
                          t_s=float(t_s) if t_s is not None else float("nan"),
                          params=tree_params, truncated=truncated)


def confidence_ellipse(cov, percentile=0.99):
    """Confidence ellipse of a 2x2 position covariance.

    Returns (semi_major, semi_minor, angle) where the angle orients the
    major axis. The chi-square quantile with two degrees of freedom has
    the closed form -2 ln(1 - p).
    """
    cov = as_covariance(cov, 2, "position covariance")
    p = check_scalar(percentile, "percentile")
    if not 0.0 < p < 1.0:
        raise ValueError(f"percentile must be in (0, 1), got {p}")
    quantile = -2.0 * math.log1p(-p)
    eigvals, eigvecs = np.linalg.eigh(cov)
    semi_minor = math.sqrt(max(eigvals[0], 0.0) * quantile)
    semi_major = math.sqrt(max(eigvals[1], 0.0) * quantile)
    angle = math.atan2(eigvecs[1, 1], eigvecs[0, 1])
    return semi_major, semi_minor, angle


class LqrPredictor(BaseEstimator):
    """Road-graph pedestrian predictor with closed-loop belief branching.

    fit() consumes a road graph (or map document, or path to one) and
    caches per-edge discrete models and feedback gains; predict() builds
    a PredictionTree from a measured state.

    Parameters
    ----------
    t_s : float, sampling interval in seconds.
    q, r : float, diagonal state and input cost scales (used when
        `weights` is None).
    weights : LqrWeights or None, full cost specification.
    process_noise : array (4, 4) or None, per-step noise covariance.
    horizon : int, default prediction length in steps.
    max_branches : int, branch budget per prediction.
    allow_uturn : bool, include reverse edges when switching.
    dare_tol, dare_max_iter : Riccati iteration controls.
    """

    def __init__(self, t_s=0.1, q=0.02, r=1.0, weights=None, process_noise=None,
                 horizon=DEFAULT_HORIZON, max_branches=DEFAULT_MAX_BRANCHES,
                 allow_uturn=False, dare_tol=DEFAULT_TOL,
                 dare_max_iter=DEFAULT_MAX_ITER):
        self.t_s = t_s
        self.q = q
        self.r = r
        self.weights = weights
        self.process_noise = process_noise
        self.horizon = horizon
        self.max_branches = max_branches
        self.allow_uturn = allow_uturn
        self.dare_tol = dare_tol
        self.dare_max_iter = dare_max_iter

    def _resolved_weights(self) -> LqrWeights:
        if self.weights is not None:
            return self.weights
        return LqrWeights.from_scalars(self.q, self.r)

    def _resolved_noise(self):
        if self.process_noise is None:
            return default_process_noise()
        return as_covariance(self.process_noise, STATE_DIM, "process_noise")

    def fit(self, X, y=None):
        """Build per-edge models and gains from a graph or map document."""
        check_scalar(self.t_s, "t_s", minimum=0.0, strict=True)
        if isinstance(X, RoadGraph):
            graph = X
        elif isinstance(X, dict):
            graph = build_graph(X)
        else:
            graph = load_graph(X)
        self.graph_ = graph
        self.W_ = self._resolved_noise()
        self.runtimes_ = build_edge_runtimes(
            graph, self._resolved_weights(), self.t_s,
            dare_tol=self.dare_tol, dare_max_iter=self.dare_max_iter)
        return self

    def predict(self, state, cov=None, horizon=None) -> PredictionTree:
        """Belief tree for one measured state (x, y, v, theta)."""
        if not hasattr(self, "runtimes_"):
            raise RuntimeError("predictor is not fitted; call fit() first")
        horizon = self.horizon if horizon is None else horizon
        params = {"t_s": self.t_s, "q": self.q, "r": self.r,
                  "max_branches": self.max_branches,
                  "allow_uturn": self.allow_uturn}
        return predict(self.graph_, self.runtimes_, state, cov=cov,
                       horizon=horizon, W=self.W_,
                       max_branches=self.max_branches,
                       allow_uturn=self.allow_uturn, t_s=self.t_s,
                       params=params)


# --- prediction documents ---

_CSV_FIELDS = ("branch", "parent", "edge", "step",
               "x", "y", "v", "theta")


def write_prediction_csv(tree: PredictionTree, path):
    """Columnar prediction document: one row per branch per step.

    Columns: branch id, parent id (empty for roots), edge id, step index,
    mean (x, y, v, theta) and the 16 row-major covariance entries.
    """
    header = list(_CSV_FIELDS) + [f"cov_{i}{j}" for i in range(4) for j in range(4)]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for branch in tree.branches:
            parent = "" if branch.parent_id is None else branch.parent_id
            for i, (mean, cov) in enumerate(zip(branch.means, branch.covs)):
                row = [branch.branch_id, parent, branch.edge_id,
                       branch.spawn_step + i]
                row.extend(repr(float(v)) for v in mean)
                row.extend(repr(float(v)) for v in cov.ravel())
                writer.writerow(row)


def tree_to_document(tree: PredictionTree) -> dict:
    """JSON-ready prediction document with full covariances."""
    branches = []
    for branch in tree.branches:
        branches.append({
            "id": branch.branch_id,
            "parent": branch.parent_id,
            "edge": branch.edge_id,
            "spawn_step": branch.spawn_step,
            "means": [[float(v) for v in m] for m in branch.means],
            "covs": [[float(v) for v in c.ravel()] for c in branch.covs],
        })
    return {"format": 1, "horizon": tree.horizon, "t_s": tree.t_s,
            "truncated": tree.truncated, "params": tree.params,
            "branches": branches}


def tree_from_document(document: dict) -> PredictionTree:
    branches = []
    for row in document["branches"]:
        means = [np.array(m, dtype=float) for m in row["means"]]
        covs = [np.array(c, dtype=float).reshape(4, 4) for c in row["covs"]]
        branches.append(Branch(row["id"], row["edge"], row["parent"],
                               row["spawn_step"], means, covs))
    by_id = {b.branch_id: b for b in branches}
    for branch in branches:
        if branch.parent_id is not None:
            parent = by_id[branch.parent_id]
            parent.terminal_step = branch.spawn_step
    return PredictionTree(branches=branches, horizon=document["horizon"],
                          t_s=document["t_s"], params=document.get("params", {}),
                          truncated=document.get("truncated", False))


def write_prediction_json(tree: PredictionTree, path):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(tree_to_document(tree), handle, indent=1)


def read_prediction_json(path) -> PredictionTree:
    with open(path, "r", encoding="utf-8") as handle:
        return tree_from_document(json.load(handle))
