"""Command line interface.

Subcommands::

    pedpred predict   one belief-tree prediction from a measured state
    pedpred evaluate  error metrics of a dataset against the predictors
    pedpred bench     wall-clock runtime comparison of both methods
    pedpred synth     synthetic pedestrian dataset generation

Exit codes: 0 success, 2 input error, 3 empty or insufficient dataset,
4 numerical failure. The environment variable PEDPRED_THREADS caps the
number of worker threads (value-function solves run one goal per
thread).
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import evaluation, gridmdp, maps, plots
from .config import RunConfig
from .exceptions import (
    InsufficientSamples,
    MapDocumentError,
    NoConvergence,
    NotStabilizable,
    NoValidWindows,
    OutOfRange,
    PedPredError,
    SingularInnerMatrix,
    TooShort,
    TrajectoryDataError,
    UnknownEdge,
    UnknownNode,
)
from .gridmdp import GridMdpPredictor
from .predictor import (
    LqrPredictor,
    write_prediction_csv,
    write_prediction_json,
)
from .roadgraph import build_graph

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EMPTY = 3
EXIT_NUMERIC = 4

_EMPTY_ERRORS = (NoValidWindows, InsufficientSamples, TooShort)
_NUMERIC_ERRORS = (NoConvergence, NotStabilizable, SingularInnerMatrix)
_INPUT_ERRORS = (MapDocumentError, TrajectoryDataError, OutOfRange, UnknownNode,
                 UnknownEdge, PedPredError, FileNotFoundError, IsADirectoryError,
                 NotADirectoryError, PermissionError, json.JSONDecodeError,
                 KeyError, ValueError, TypeError)


def _parse_floats(text, count, name):
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != count:
        raise ValueError(f"{name} needs {count} comma-separated values")
    return [float(p) for p in parts]


def _parse_taus(text):
    values = sorted({int(p) for p in text.replace(" ", "").split(",") if p})
    if not values or values[0] < 1:
        raise ValueError("--tau values must be positive integers")
    return values


def load_map_document(name):
    """Resolve `builtin:<name>` or read a JSON map file."""
    builtin = maps.resolve_map_name(name)
    if builtin is not None:
        return builtin
    with open(name, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _config_from_args(args):
    cfg = RunConfig() if args.config is None else RunConfig.from_json(args.config)
    overrides = {}
    for key in ("map", "seed", "method", "stride", "horizon", "iterations",
                "rl_iterations", "noise_scale", "duration"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if getattr(args, "tau", None) is not None:
        overrides["taus"] = _parse_taus(args.tau)
    if getattr(args, "n_samples", None) is not None:
        overrides["n_samples"] = args.n_samples
    if getattr(args, "n", None) is not None:
        overrides["n_trajectories"] = args.n
    if getattr(args, "crossing", None) is not None:
        overrides["n_crossing"] = args.crossing
    return cfg.replace(**overrides)


def _build_lqr(cfg, graph) -> LqrPredictor:
    predictor = LqrPredictor(
        t_s=cfg.t_s, q=cfg.q, r=cfg.r,
        process_noise=cfg.resolved_process_noise(), horizon=cfg.horizon,
        max_branches=cfg.max_branches, allow_uturn=cfg.allow_uturn,
        dare_tol=cfg.dare_tol, dare_max_iter=cfg.dare_max_iter)
    return predictor.fit(graph)


def _build_rl(cfg, document, cache_dir) -> GridMdpPredictor:
    predictor = GridMdpPredictor(
        cell_size=cfg.cell_size, gamma=cfg.gamma, reward_road=cfg.reward_road,
        reward_sidewalk=cfg.reward_sidewalk, reward_crosswalk=cfg.reward_crosswalk,
        reward_goal=cfg.reward_goal, alpha=cfg.alpha, n_samples=cfg.n_samples,
        horizon=cfg.horizon, tol=cfg.vi_tol, sidewalk_width=cfg.sidewalk_width,
        crosswalk_width=cfg.crosswalk_width, margin=cfg.margin,
        random_state=cfg.seed, value_cache=cache_dir)
    return predictor.fit(document)


def cmd_predict(args):
    cfg = _config_from_args(args)
    document = load_map_document(cfg.map)
    graph = build_graph(document, default_switch_distance=cfg.d)
    state = _parse_floats(args.state, 4, "--state")
    predictor = _build_lqr(cfg, graph)
    tree = predictor.predict(state, horizon=cfg.horizon)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    if args.out.endswith(".json"):
        write_prediction_json(tree, args.out)
    else:
        write_prediction_csv(tree, args.out)
    if args.plot:
        plots.plot_prediction(graph, tree, args.plot)
    leaves = tree.leaves()
    print(f"predicted {len(tree.branches)} branches ({len(leaves)} leaves) "
          f"over {tree.horizon} steps"
          + (" [truncated]" if tree.truncated else ""))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_synth(args):
    cfg = _config_from_args(args)
    document = load_map_document(cfg.map)
    graph = build_graph(document, default_switch_distance=cfg.d)
    trajectories = evaluation.synth_dataset(
        graph, n=cfg.n_trajectories, n_crossing=cfg.n_crossing,
        noise_scale=cfg.noise_scale, seed=cfg.seed, duration=cfg.duration,
        sensor_hz=cfg.sensor_hz, t_s=cfg.t_s, q=cfg.q, r=cfg.r,
        W=cfg.resolved_process_noise())
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    evaluation.save_trajectories(args.out, trajectories)
    n_crossing = sum(1 for t in trajectories if t.label == "crossing")
    print(f"wrote {len(trajectories)} trajectories "
          f"({n_crossing} crossing) to {args.out}")
    return EXIT_OK


def _evaluate_one(cfg, method, tracks, graph, document, cache_dir):
    if method == "lqr":
        source = evaluation.LqrSource(_build_lqr(cfg, graph))
    else:
        predictor = _build_rl(cfg, document, cache_dir)
        source = evaluation.GridMdpSource(predictor, n_samples=cfg.n_samples,
                                          alpha=cfg.alpha, seed=cfg.seed)
    table = evaluation.prediction_errors(tracks, source, cfg.taus,
                                         stride=cfg.stride)
    return table, evaluation.covariance_metrics(table)


def cmd_evaluate(args):
    cfg = _config_from_args(args)
    document = load_map_document(cfg.map)
    graph = build_graph(document, default_switch_distance=cfg.d)
    trajectories = evaluation.load_trajectories(args.data)
    if not trajectories:
        raise NoValidWindows(f"{args.data}: dataset is empty")
    tracks = [evaluation.estimate_states(t, cfg.t_s, cfg.smooth_window)
              for t in trajectories]
    methods = ["lqr", "rl"] if cfg.method == "both" else [cfg.method]
    if any(m not in ("lqr", "rl") for m in methods):
        raise ValueError(f"unknown method {cfg.method!r}")

    os.makedirs(args.out, exist_ok=True)
    cache_dir = os.path.join(args.out, "value_cache")
    report = {"config": cfg.to_dict(), "methods": {}}
    series = {"e_hat": {}, "delta_f": {}, "delta_lambda": {}}
    for method in methods:
        table, cov = _evaluate_one(cfg, method, tracks, graph, document,
                                   cache_dir)
        rows = table.summary()
        for row in rows:
            row["delta_f"] = cov[row["tau"]].delta_f
            row["delta_lambda"] = cov[row["tau"]].delta_lambda
        report["methods"][method] = {
            "summary": rows,
            "p_meas": {str(tau): cov[tau].p_meas.tolist() for tau in table.taus},
        }
        _write_metrics_csv(os.path.join(args.out, f"metrics_{method}.csv"), rows)
        series["e_hat"][method] = [(r["tau"], r["e_hat"]) for r in rows]
        series["delta_f"][method] = [(r["tau"], r["delta_f"]) for r in rows]
        series["delta_lambda"][method] = [(r["tau"], r["delta_lambda"])
                                          for r in rows]
        print(f"[{method}] " + "  ".join(
            f"tau={r['tau']}: e_hat={r['e_hat']:.3f} m" for r in rows))
    for name, data in series.items():
        _write_series_csv(os.path.join(args.out, f"series_{name}.csv"),
                          data, cfg.taus)
        if args.plot:
            plots.plot_error_series(data, os.path.join(args.out, f"{name}.svg"),
                                    name)
    with open(os.path.join(args.out, "metrics.json"), "w",
              encoding="utf-8") as handle:
        json.dump(report, handle, indent=1)
    print(f"wrote metrics to {args.out}")
    return EXIT_OK


def _write_metrics_csv(path, rows):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["tau", "e_x_hat", "e_y_hat", "e_hat", "rms",
                         "delta_f", "delta_lambda", "n_windows"])
        for row in rows:
            writer.writerow([row["tau"], repr(row["e_x_hat"]),
                             repr(row["e_y_hat"]), repr(row["e_hat"]),
                             repr(row["rms"]), repr(row["delta_f"]),
                             repr(row["delta_lambda"]), row["n_windows"]])


def _write_series_csv(path, data, taus):
    import csv

    methods = sorted(data)
    by_method = {m: dict(points) for m, points in data.items()}
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["tau"] + methods)
        for tau in taus:
            row = [tau]
            for method in methods:
                value = by_method[method].get(tau)
                row.append("" if value is None else repr(value))
            writer.writerow(row)


def _default_bench_state(graph):
    # A sidewalk start heading along its edge, away from the node.
    edge_id = graph.edge_ids()[0]
    frame = graph.frame(edge_id)
    edge = graph.edge(edge_id)
    return [frame.x0, frame.y0, edge.v_ref, frame.heading]


def cmd_bench(args):
    cfg = _config_from_args(args)
    document = load_map_document(cfg.map)
    graph = build_graph(document, default_switch_distance=cfg.d)
    if args.state is not None:
        state = _parse_floats(args.state, 4, "--state")
    elif maps.resolve_map_name(cfg.map) is not None:
        state = [-3.5, -10.0, 1.0, math.pi / 2.0]
    else:
        state = _default_bench_state(graph)

    os.makedirs(args.out, exist_ok=True)
    lqr = _build_lqr(cfg, graph)
    rl = _build_rl(cfg, document, os.path.join(args.out, "value_cache"))
    if args.goal is not None:
        goal_id = args.goal
        if goal_id not in rl.values_:
            raise KeyError(f"unknown goal {goal_id!r}")
    else:
        # Farthest goal: the longest, most representative rollouts.
        start = np.asarray(state[:2])
        goal_id = max(
            rl.goal_ids(),
            key=lambda g: float(np.hypot(*(np.asarray(
                rl.grid_.cell_center(rl.grid_.goal_cells[g])) - start))))
    start_cell = rl.grid_.world_to_cell(state[:2])
    vf = rl.values_[goal_id]

    rl_iterations = cfg.effective_rl_iterations()
    tasks = []
    for tau in cfg.taus:
        tasks.append(("lqr", tau,
                      lambda tau=tau: lqr.predict(state, horizon=tau),
                      cfg.iterations))
        tasks.append(("rl", tau,
                      lambda tau=tau: gridmdp.rollout_positions(
                          rl.grid_, vf, start_cell, tau, cfg.n_samples,
                          cfg.alpha, cfg.seed),
                      rl_iterations))
    rows = evaluation.benchmark(tasks, warmup=args.warmup)
    ratios = evaluation.runtime_ratios(rows)

    evaluation.write_runtime_csv(rows, os.path.join(args.out, "bench.csv"))
    payload = {"config": cfg.to_dict(), "goal": str(goal_id),
               "state": list(map(float, state)),
               "rows": [row.__dict__ for row in rows],
               "ratios": {str(tau): ratio for tau, ratio in ratios.items()}}
    with open(os.path.join(args.out, "bench.json"), "w",
              encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
    if args.plot:
        plots.plot_runtimes(rows, os.path.join(args.out, "bench.svg"))
    for row in rows:
        print(f"{row.method:>4} tau={row.tau:<4} mean {1e3 * row.mean_s:9.2f} ms"
              f"  median {1e3 * row.median_s:9.2f} ms  (n={row.iterations})")
    for tau, ratio in ratios.items():
        print(f"ratio rl/lqr at tau={tau}: {ratio:.1f}x")
    print(f"wrote benchmark to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pedpred",
        description="Pedestrian motion prediction over road graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_tau=False):
        p.add_argument("--map", default=None,
                       help="map JSON path or builtin:<name>")
        p.add_argument("--config", default=None, help="RunConfig JSON path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output file or directory")
        if with_tau:
            p.add_argument("--tau", default=None,
                           help="comma-separated horizons in steps")

    p = sub.add_parser("predict", help="belief-tree prediction for one state")
    common(p)
    p.add_argument("--state", required=True, help="x,y,v,theta")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--plot", default=None, help="optional figure path (.svg)")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="error metrics on a trajectory dataset")
    common(p, with_tau=True)
    p.add_argument("--data", required=True, help="trajectory CSV")
    p.add_argument("--method", choices=("lqr", "rl", "both"), default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("bench", help="runtime comparison of both methods")
    common(p, with_tau=True)
    p.add_argument("--state", default=None, help="x,y,v,theta")
    p.add_argument("--goal", default=None, help="goal id for rollouts")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--rl-iterations", dest="rl_iterations", type=int,
                   default=None)
    p.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("synth", help="synthesize a pedestrian dataset")
    common(p)
    p.add_argument("--n", type=int, default=None, help="trajectory count")
    p.add_argument("--crossing", type=int, default=None,
                   help="how many trajectories must cross the road")
    p.add_argument("--noise-scale", dest="noise_scale", type=float,
                   default=None)
    p.add_argument("--duration", type=float, default=None,
                   help="trajectory duration in seconds")
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _EMPTY_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
