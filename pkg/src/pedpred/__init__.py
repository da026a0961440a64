"""Pedestrian motion prediction over road graphs.

Two predictors share a fit/predict estimator interface:

- :class:`LqrPredictor` propagates a branching Gaussian belief along the
  graph with per-edge linearized models and LQR feedback.
- :class:`GridMdpPredictor` samples rollouts of a Boltzmann policy on a
  semantic grid MDP solved by value iteration.

The :mod:`pedpred.evaluation` module estimates states from raw
trajectories, computes signed error and covariance metrics against
either predictor, synthesizes datasets and benchmarks runtimes.
"""

from .config import RunConfig
from .dynamics import (
    ControlInput,
    DiscreteModel,
    PedestrianState,
    affine_term,
    discretize,
    edge_model,
    jacobians,
    unicycle_rhs,
)
from .gridmdp import (
    CellClass,
    GridMdpPredictor,
    RewardConfig,
    SampledPrediction,
    SemanticGrid,
    ValueFunction,
    rasterize,
    sample_prediction,
    softmax_policy,
    value_iteration,
)
from .lqr import LqrSolution, LqrWeights, solve_dare, tracking_input
from .predictor import (
    Branch,
    GaussianBelief,
    LqrPredictor,
    PredictionTree,
    confidence_ellipse,
    default_process_noise,
    init_branches,
    predict,
    step_belief,
)
from .roadgraph import (
    Edge,
    Node,
    ReferenceState,
    RoadGraph,
    build_graph,
    load_graph,
    outgoing_edges,
    project_to_graph,
    reference_state,
    remaining_distance,
)
from .evaluation import (
    ErrorTable,
    StateTrack,
    Trajectory,
    benchmark,
    covariance_metrics,
    estimate_states,
    load_trajectories,
    prediction_errors,
    prune_to_measured,
    save_trajectories,
    synth_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "Branch", "CellClass", "ControlInput", "DiscreteModel", "Edge",
    "ErrorTable", "GaussianBelief", "GridMdpPredictor", "LqrPredictor",
    "LqrSolution", "LqrWeights", "Node", "PedestrianState", "PredictionTree",
    "ReferenceState", "RewardConfig", "RoadGraph", "RunConfig",
    "SampledPrediction", "SemanticGrid", "StateTrack", "Trajectory",
    "ValueFunction", "affine_term", "benchmark", "build_graph",
    "confidence_ellipse", "covariance_metrics", "default_process_noise",
    "discretize", "edge_model", "estimate_states", "init_branches",
    "jacobians", "load_graph", "load_trajectories", "outgoing_edges",
    "predict", "prediction_errors", "project_to_graph", "prune_to_measured",
    "rasterize", "reference_state", "remaining_distance", "sample_prediction",
    "save_trajectories", "softmax_policy", "solve_dare", "step_belief",
    "synth_dataset", "tracking_input", "unicycle_rhs", "value_iteration",
    "__version__",
]
