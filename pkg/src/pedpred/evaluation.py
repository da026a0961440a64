"""Trajectory data handling, prediction error metrics, dataset synthesis
and the runtime benchmark.

Error conventions: for a window starting at step t and a horizon of tau
steps, the per-axis error is measured minus predicted position at
t + tau. Per-horizon aggregates average the signed errors over every
(trajectory, start) window, so systematic drift shows up while zero-mean
scatter cancels. The measured error covariance is pooled over all
windows of one horizon and compared against the predicted position
covariances via a Frobenius distance and a determinant difference
(positive when the predictor underestimates the spread).
"""

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from . import roadgraph
from .dynamics import unicycle_rhs
from .exceptions import (
    InsufficientSamples,
    MalformedRow,
    NonMonotoneTime,
    NoValidWindows,
    PedPredError,
    TooShort,
)
from .lqr import LqrWeights
from .predictor import (
    PredictionTree,
    build_edge_runtimes,
    default_process_noise,
)
from .validation import as_covariance, check_scalar

SENSOR_HZ = 52.0


# --- trajectory files ---


@dataclass
class Trajectory:
    """Raw position samples (seconds, meters) for one pedestrian."""

    traj_id: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    label: str = ""

    @property
    def n(self):
        return len(self.t)


def load_trajectories(path):
    """Read a `t,x,y[,id,label]` CSV into trajectories, file order kept."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["t", "x", "y"]:
            raise MalformedRow(f"{path}: header must start with t,x,y")
        extras = header[3:]
        if extras not in ([], ["id"], ["id", "label"]):
            raise MalformedRow(f"{path}: unsupported columns {extras}")
        groups = {}
        order = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise MalformedRow(f"{path}:{line_no}: expected "
                                   f"{len(header)} fields, got {len(row)}")
            try:
                t, x, y = float(row[0]), float(row[1]), float(row[2])
            except ValueError:
                raise MalformedRow(f"{path}:{line_no}: non-numeric t,x,y") from None
            if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
                raise MalformedRow(f"{path}:{line_no}: non-finite t,x,y")
            traj_id = row[3].strip() if len(row) > 3 else "0"
            label = row[4].strip() if len(row) > 4 else ""
            if traj_id not in groups:
                groups[traj_id] = {"t": [], "x": [], "y": [], "label": label}
                order.append(traj_id)
            groups[traj_id]["t"].append(t)
            groups[traj_id]["x"].append(x)
            groups[traj_id]["y"].append(y)
    trajectories = []
    for traj_id in order:
        g = groups[traj_id]
        t = np.array(g["t"])
        if np.any(np.diff(t) <= 0.0):
            raise NonMonotoneTime(
                f"{path}: trajectory {traj_id!r} has non-increasing timestamps")
        trajectories.append(Trajectory(traj_id, t, np.array(g["x"]),
                                       np.array(g["y"]), g["label"]))
    return trajectories


def save_trajectories(path, trajectories):
    """Write trajectories as a `t,x,y,id,label` CSV."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "x", "y", "id", "label"])
        for traj in trajectories:
            for t, x, y in zip(traj.t, traj.x, traj.y):
                writer.writerow([repr(float(t)), repr(float(x)), repr(float(y)),
                                 traj.traj_id, traj.label])


# --- state estimation ---


@dataclass
class StateTrack:
    """Uniformly sampled states (x, y, v, theta) estimated from positions.

    Positions are the resampled measurements; speed and heading come from
    central differences of smoothed positions, so they carry mild lag.
    theta is unwrapped. state_covs, when present, holds one diagonal (4, 4)
    covariance per sample describing the estimation uncertainty.
    """

    traj_id: str
    t: np.ndarray
    states: np.ndarray  # (L, 4)
    t_s: float
    label: str = ""
    state_covs: np.ndarray | None = None  # (L, 4, 4)

    @property
    def positions(self):
        return self.states[:, :2]

    def __len__(self):
        return len(self.t)


def _moving_average(values, window):
    # Centered window; odd reflection at the ends keeps linear trends
    # unbiased, so edge speeds are not dragged toward zero.
    half = window // 2
    padded = np.pad(values, half, mode="reflect", reflect_type="odd")
    csum = np.concatenate([np.zeros(1), np.cumsum(padded)])
    return (csum[window:] - csum[:-window]) / window


def estimate_states(trajectory: Trajectory, t_s=0.1, smooth_window=5) -> StateTrack:
    """Resample a trajectory to the model rate and estimate v and theta.

    Positions are linearly interpolated onto a uniform t_s grid. Speed
    uses central differences of moving-average smoothed positions
    (one-sided at the ends); heading uses a longer centered baseline,
    since walking direction outlives the per-step noise. The smoothing
    residuals set a per-track noise scale; where even the long-baseline
    displacement is noise-dominated the nearest confident heading is
    held (looking ahead at the start) rather than letting unwrapping
    walk off by full turns, and speeds inside the per-step noise floor
    read as standing still. The same noise scale yields per-sample
    estimation covariances.
    """
    check_scalar(t_s, "t_s", minimum=0.0, strict=True)
    if smooth_window < 1 or smooth_window % 2 == 0:
        raise ValueError("smooth_window must be a positive odd integer")
    if trajectory.n < 2:
        raise TooShort(f"trajectory {trajectory.traj_id!r} has {trajectory.n} samples")
    span = trajectory.t[-1] - trajectory.t[0]
    length = int(math.floor(span / t_s + 1e-9)) + 1
    if length < 3:
        raise TooShort(f"trajectory {trajectory.traj_id!r} spans only {span:.3f} s")
    t_grid = trajectory.t[0] + t_s * np.arange(length)
    xr = np.interp(t_grid, trajectory.t, trajectory.x)
    yr = np.interp(t_grid, trajectory.t, trajectory.y)

    xs = _moving_average(xr, smooth_window)
    ys = _moving_average(yr, smooth_window)
    dx = np.empty(length)
    dy = np.empty(length)
    dt = np.empty(length)
    dx[1:-1] = xs[2:] - xs[:-2]
    dy[1:-1] = ys[2:] - ys[:-2]
    dt[1:-1] = 2.0 * t_s
    dx[0], dy[0], dt[0] = xs[1] - xs[0], ys[1] - ys[0], t_s
    dx[-1], dy[-1], dt[-1] = xs[-1] - xs[-2], ys[-1] - ys[-2], t_s

    # iid noise leaves residual variance sigma^2 (1 - 1/w) around the mean
    w = smooth_window
    if w > 1:
        resid = np.concatenate([xr - xs, yr - ys])
        sigma_sq = float(np.mean(resid ** 2)) * w / (w - 1.0)
    else:
        sigma_sq = 0.0
    # smoothed windows one grid step apart share w - 2 samples
    step_var = 4.0 * sigma_sq / (w * w)

    step = np.hypot(dx, dy)
    v = step / dt
    # heading from a ~2 x smooth_window baseline: walking direction changes
    # slowly, and per-step displacements can sit below the noise floor
    k = np.arange(length)
    lo = np.maximum(k - smooth_window, 0)
    hi = np.minimum(k + smooth_window, length - 1)
    dxh, dyh = xs[hi] - xs[lo], ys[hi] - ys[lo]
    step_h = np.hypot(dxh, dyh)
    var_h = 2.0 * sigma_sq / w
    moving = step_h > max(1e-12, 2.0 * math.sqrt(var_h))
    theta = np.zeros(length)
    idx = np.flatnonzero(moving)
    # backfill: a sample held before the first confident heading copies it,
    # not an arbitrary due-east default
    last = math.atan2(dyh[idx[0]], dxh[idx[0]]) if idx.size else 0.0
    for i in range(length):
        if moving[i]:
            last = math.atan2(dyh[i], dxh[i])
        theta[i] = last
    theta = np.unwrap(theta)
    # zero speed only inside the per-step noise floor
    v[step < max(1e-12, math.sqrt(step_var))] = 0.0

    var_v = step_var / dt ** 2
    span = np.maximum(step_h, 0.3 * (hi - lo) * t_s)
    var_theta = np.minimum(var_h / span ** 2, math.pi ** 2 / 3.0)
    state_covs = np.zeros((length, 4, 4))
    state_covs[:, 0, 0] = sigma_sq
    state_covs[:, 1, 1] = sigma_sq
    state_covs[:, 2, 2] = var_v
    state_covs[:, 3, 3] = var_theta

    states = np.column_stack([xr, yr, v, theta])
    return StateTrack(traj_id=trajectory.traj_id, t=t_grid, states=states,
                      t_s=t_s, label=trajectory.label, state_covs=state_covs)


# --- branch pruning ---


def prune_to_measured(tree: PredictionTree, measured):
    """Pick the leaf whose root-to-leaf mean path best matches the data.

    `measured` holds positions for steps 1..m after the prediction start.
    The selected leaf minimizes the summed squared distance over the
    overlap; ties go to the lowest branch id.
    """
    measured = np.asarray(measured, dtype=float).reshape(-1, 2)
    best = None
    for leaf in tree.leaves():
        means, _ = tree.path_states(leaf)
        overlap = min(len(measured), len(means) - 1)
        if overlap <= 0:
            ssd = 0.0
        else:
            diff = means[1:overlap + 1, :2] - measured[:overlap]
            ssd = float(np.sum(diff * diff))
        if best is None or ssd < best[0]:
            best = (ssd, leaf)
    if best is None:
        raise PedPredError("prediction tree has no leaves")
    return best[1]


# --- prediction sources for the metrics harness ---


class LqrSource:
    """Adapter: belief-tree predictor -> pruned position track per window."""

    def __init__(self, predictor):
        self.predictor = predictor

    def window(self, state, horizon, measured_future, state_cov=None):
        tree = self.predictor.predict(state, cov=state_cov, horizon=horizon)
        leaf = prune_to_measured(tree, measured_future)
        means, covs = tree.path_states(leaf)
        return means[:, :2], covs[:, :2, :2]


class GridMdpSource:
    """Adapter: per-goal rollout sampler -> best-goal track per window.

    Runs one rollout bundle per goal and keeps the goal whose sample-mean
    path matches the measured future best (summed squared distance).
    Each window uses a fresh deterministic seed derived from `seed`.
    """

    def __init__(self, predictor, n_samples=None, alpha=None, seed=0):
        self.predictor = predictor
        self.n_samples = n_samples
        self.alpha = alpha
        self.seed = int(seed)
        self._calls = 0

    def window(self, state, horizon, measured_future, state_cov=None):
        # sampling baseline: the start estimate's covariance has no input
        measured = np.asarray(measured_future, dtype=float).reshape(-1, 2)
        window_seed = self.seed * 1000003 + self._calls
        self._calls += 1
        best = None
        for goal_id in self.predictor.goal_ids():
            pred = self.predictor.predict(state[:2], goal_id, horizon=horizon,
                                          n_samples=self.n_samples,
                                          alpha=self.alpha, seed=window_seed)
            overlap = min(len(measured), horizon)
            diff = pred.mean[1:overlap + 1] - measured[:overlap]
            ssd = float(np.sum(diff * diff))
            if best is None or ssd < best[0]:
                best = (ssd, pred)
        return best[1].mean, best[1].cov


# --- error metrics ---


@dataclass
class WindowErrors:
    """Signed errors and predicted covariances for one horizon."""

    traj_index: np.ndarray
    start_index: np.ndarray
    e_x: np.ndarray
    e_y: np.ndarray
    pred_cov: np.ndarray  # (n, 2, 2)

    @property
    def n(self):
        return len(self.e_x)


@dataclass
class ErrorTable:
    """Per-horizon window errors plus aggregate accessors."""

    taus: list
    windows: dict  # tau -> WindowErrors

    def e_x_hat(self, tau):
        return float(np.mean(self.windows[tau].e_x))

    def e_y_hat(self, tau):
        return float(np.mean(self.windows[tau].e_y))

    def e_hat(self, tau):
        return float(math.hypot(self.e_x_hat(tau), self.e_y_hat(tau)))

    def rms(self, tau):
        w = self.windows[tau]
        return float(np.sqrt(np.mean(w.e_x ** 2 + w.e_y ** 2)))

    def summary(self):
        rows = []
        for tau in self.taus:
            rows.append({"tau": tau, "e_x_hat": self.e_x_hat(tau),
                         "e_y_hat": self.e_y_hat(tau), "e_hat": self.e_hat(tau),
                         "rms": self.rms(tau), "n_windows": self.windows[tau].n})
        return rows


def prediction_errors(tracks, source, taus, stride=1) -> ErrorTable:
    """Signed position errors over all (trajectory, start) windows.

    For each start index t (thinned by `stride`) one prediction covers
    the largest feasible horizon and every requested tau up to it is
    read off that prediction. At stride 1 the window count per tau is
    sum_i (L_i - tau) over track lengths L_i.
    """
    taus = sorted({int(tau) for tau in taus})
    if not taus or taus[0] < 1:
        raise ValueError("horizons must be positive integers")
    stride = int(stride)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    tau_max = taus[-1]
    records = {tau: {"i": [], "t": [], "ex": [], "ey": [], "cov": []}
               for tau in taus}
    for i, track in enumerate(tracks):
        length = len(track)
        positions = track.positions
        state_covs = getattr(track, "state_covs", None)
        for start in range(0, length - 1, stride):
            horizon = min(tau_max, length - 1 - start)
            if horizon < taus[0]:
                break
            measured_future = positions[start + 1:start + horizon + 1]
            means, covs = source.window(
                track.states[start], horizon, measured_future,
                None if state_covs is None else state_covs[start])
            for tau in taus:
                if tau > horizon:
                    break
                rec = records[tau]
                rec["i"].append(i)
                rec["t"].append(start)
                rec["ex"].append(positions[start + tau, 0] - means[tau, 0])
                rec["ey"].append(positions[start + tau, 1] - means[tau, 1])
                rec["cov"].append(covs[tau])
    windows = {}
    for tau in taus:
        rec = records[tau]
        if not rec["i"]:
            raise NoValidWindows(f"no window supports horizon {tau}")
        windows[tau] = WindowErrors(
            traj_index=np.array(rec["i"], dtype=int),
            start_index=np.array(rec["t"], dtype=int),
            e_x=np.array(rec["ex"]), e_y=np.array(rec["ey"]),
            pred_cov=np.array(rec["cov"]))
    return ErrorTable(taus=taus, windows=windows)


@dataclass
class CovarianceMetrics:
    """Pooled measured covariance vs predicted covariances at one horizon."""

    tau: int
    p_meas: np.ndarray
    delta_f: float
    delta_lambda: float
    n_windows: int


def covariance_metrics(table: ErrorTable):
    """Frobenius and determinant-difference covariance metrics per horizon.

    The measured covariance pools the signed errors of every window of
    one horizon (unbiased, mean-centered). delta_lambda > 0 means the
    predictor underestimates the measured spread.
    """
    metrics = {}
    for tau in table.taus:
        w = table.windows[tau]
        if w.n < 2:
            raise InsufficientSamples(
                f"horizon {tau} has {w.n} window(s); need >= 2")
        p_meas = np.cov(np.stack([w.e_x, w.e_y]), ddof=1)
        diff = p_meas[None, :, :] - w.pred_cov
        delta_f = float(np.mean(np.linalg.norm(diff, axis=(1, 2))))
        dets = w.pred_cov[:, 0, 0] * w.pred_cov[:, 1, 1] \
            - w.pred_cov[:, 0, 1] * w.pred_cov[:, 1, 0]
        delta_lambda = float(np.mean(np.linalg.det(p_meas) - dets))
        metrics[tau] = CovarianceMetrics(tau=tau, p_meas=p_meas, delta_f=delta_f,
                                         delta_lambda=delta_lambda, n_windows=w.n)
    return metrics


# --- synthetic data ---


def _rk4_step(state, control, dt):
    k1 = unicycle_rhs(state, control)
    k2 = unicycle_rhs(state + 0.5 * dt * k1, control)
    k3 = unicycle_rhs(state + 0.5 * dt * k2, control)
    k4 = unicycle_rhs(state + dt * k3, control)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _entry_edges(graph):
    # rim nodes touch exactly one neighbor; edges leaving them walk into
    # the map, so routes do not start pointed at a dead end
    neighbors = {}
    for edge_id in graph.edge_ids():
        edge = graph.edge(edge_id)
        neighbors.setdefault(edge.from_node, set()).add(edge.to_node)
        neighbors.setdefault(edge.to_node, set()).add(edge.from_node)
    entries = [edge_id for edge_id in graph.edge_ids()
               if len(neighbors[graph.edge(edge_id).from_node]) == 1]
    return entries if entries else list(graph.edge_ids())


def _simulate_route(graph, runtimes, rng, n_steps, t_s, noise_chol, noise_scale,
                    entries=None):
    edge_ids = list(entries) if entries else _entry_edges(graph)
    edge_id = edge_ids[int(rng.integers(len(edge_ids)))]
    runtime = runtimes[edge_id]
    s0 = float(rng.uniform(0.0, 0.75 * runtime.frame.length))
    state = runtime.ref_vec(s0)
    ref_s = s0
    crossed = graph.edge(edge_id).kind == "crosswalk"
    coasting = False
    states = np.empty((n_steps + 1, 4))
    states[0] = state
    for k in range(1, n_steps + 1):
        runtime = runtimes[edge_id]
        u = -runtime.solution.K @ (state - runtime.ref_vec(ref_s))
        state = _rk4_step(state, u, t_s)
        state = state + noise_scale * (noise_chol @ rng.standard_normal(4))
        ref_s += runtime.step_advance
        if not coasting and runtime.remaining(state) <= runtime.d:
            candidates = graph.outgoing(runtime.to_node)
            reverse = graph.reverse_of(edge_id)
            forward = tuple(e for e in candidates if e != reverse)
            candidates = forward if forward else candidates
            if candidates:
                edge_id = candidates[int(rng.integers(len(candidates)))]
                ref_s = roadgraph.along_track(runtimes[edge_id].frame, state[:2])
                crossed = crossed or graph.edge(edge_id).kind == "crosswalk"
            else:
                coasting = True
        states[k] = state
    return states, ("crossing" if crossed else "sidewalk")


def synth_dataset(graph, n=46, n_crossing=29, noise_scale=1.0, seed=0,
                  duration=22.0, sensor_hz=SENSOR_HZ, t_s=0.1, q=0.02, r=1.0,
                  weights=None, W=None, max_attempts=500, with_states=False,
                  entries=None):
    """Simulate pedestrians tracking random routes over the graph.

    Closed-loop nonlinear unicycle at the model rate with per-step
    Gaussian process noise (scaled by `noise_scale`), route choices
    uniform over non-reversing outgoing edges, then position sampling at
    the sensor rate by linear interpolation. Exactly `n_crossing` of the
    `n` trajectories enter a crosswalk at some point (realized by
    per-slot rejection on the route label). Fully deterministic in
    `seed`.

    Routes start on the map's rim edges by default; `entries` restricts
    the start edges instead, e.g. to model a one-sided flow through a
    gate. With `with_states` a second list is returned holding the
    simulator's own model-rate state tracks, for studies that need
    ground truth free of estimation error.
    """
    if not 0 <= n_crossing <= n:
        raise ValueError("n_crossing must lie in [0, n]")
    entries = tuple(entries) if entries is not None else None
    if entries is not None:
        for edge_id in entries:
            graph.edge(edge_id)  # raises UnknownEdge on a typo
    weights = weights if weights is not None else LqrWeights.from_scalars(q, r)
    W = default_process_noise() if W is None else as_covariance(W, 4)
    noise_chol = np.linalg.cholesky(W) if np.any(W) else np.zeros((4, 4))
    runtimes = build_edge_runtimes(graph, weights, t_s)
    n_steps = int(round(duration / t_s))
    n_sensor = int(math.floor(n_steps * t_s * sensor_hz)) + 1
    t_model = t_s * np.arange(n_steps + 1)
    t_sensor = np.arange(n_sensor) / sensor_hz

    wanted = ["crossing"] * n_crossing + ["sidewalk"] * (n - n_crossing)
    trajectories = []
    state_tracks = []
    streams = np.random.SeedSequence(seed).spawn(n)
    for i, (label, stream) in enumerate(zip(wanted, streams)):
        rng = np.random.default_rng(stream)
        for _ in range(max_attempts):
            states, got = _simulate_route(graph, runtimes, rng, n_steps, t_s,
                                          noise_chol, noise_scale, entries)
            if got == label:
                break
        else:
            raise PedPredError(
                f"could not realize a {label!r} route in {max_attempts} attempts")
        x = np.interp(t_sensor, t_model, states[:, 0])
        y = np.interp(t_sensor, t_model, states[:, 1])
        trajectories.append(Trajectory(traj_id=f"synth-{i:03d}", t=t_sensor.copy(),
                                       x=x, y=y, label=label))
        if with_states:
            state_tracks.append(StateTrack(traj_id=f"synth-{i:03d}",
                                           t=t_model.copy(), states=states,
                                           t_s=t_s, label=label))
    return (trajectories, state_tracks) if with_states else trajectories


# --- runtime benchmark ---


@dataclass
class RuntimeRow:
    """Wall-clock statistics for one (method, horizon) pair."""

    method: str
    tau: int
    iterations: int
    mean_s: float
    median_s: float
    min_s: float


def benchmark(tasks, warmup=2):
    """Time callables with wall-clock precision timers.

    `tasks` is an iterable of (method, tau, fn, iterations). Each fn is
    called `warmup` times untimed (caches settle), then `iterations`
    times timed individually.
    """
    rows = []
    for method, tau, fn, iterations in tasks:
        iterations = int(iterations)
        if iterations < 1:
            raise ValueError("iterations must be >= 1")
        for _ in range(warmup):
            fn()
        times = np.empty(iterations)
        for i in range(iterations):
            begin = time.perf_counter()
            fn()
            times[i] = time.perf_counter() - begin
        rows.append(RuntimeRow(method=method, tau=int(tau), iterations=iterations,
                               mean_s=float(times.mean()),
                               median_s=float(np.median(times)),
                               min_s=float(times.min())))
    return rows


def runtime_ratios(rows, baseline="lqr", other="rl"):
    """Per-horizon mean-runtime ratios other/baseline."""
    by_key = {(row.method, row.tau): row for row in rows}
    ratios = {}
    for (method, tau), row in sorted(by_key.items(), key=lambda kv: kv[0][1]):
        if method != other:
            continue
        base = by_key.get((baseline, tau))
        if base is not None:
            ratios[tau] = row.mean_s / base.mean_s
    return ratios


def write_runtime_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method", "tau", "iterations", "mean_s", "median_s",
                         "min_s"])
        for row in rows:
            writer.writerow([row.method, row.tau, row.iterations,
                             repr(row.mean_s), repr(row.median_s),
                             repr(row.min_s)])


def load_runtime_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for record in reader:
            rows.append(RuntimeRow(method=record["method"], tau=int(record["tau"]),
                                   iterations=int(record["iterations"]),
                                   mean_s=float(record["mean_s"]),
                                   median_s=float(record["median_s"]),
                                   min_s=float(record["min_s"])))
    return rows
