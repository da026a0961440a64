import numpy as np
import pytest

import pedpred
from pedpred import maps


@pytest.fixture(scope="session")
def intersection_doc():
    return maps.intersection_document()


@pytest.fixture(scope="session")
def intersection_graph(intersection_doc):
    return pedpred.build_graph(intersection_doc)


@pytest.fixture(scope="session")
def lqr_predictor(intersection_graph):
    return pedpred.LqrPredictor().fit(intersection_graph)


@pytest.fixture(scope="session")
def rl_predictor(intersection_doc):
    return pedpred.GridMdpPredictor().fit(intersection_doc)


def line_document(length=10.0, v_ref=1.0, d=0.5, both_ways=False):
    """Single straight walkway along +x from the origin."""
    edges = [{"id": "ab", "from": "a", "to": "b", "kind": "sidewalk",
              "v_ref": v_ref, "d": d}]
    if both_ways:
        edges.append({"id": "ba", "from": "b", "to": "a", "kind": "sidewalk",
                      "v_ref": v_ref, "d": d})
    return {
        "format": 1,
        "nodes": [{"id": "a", "x": 0.0, "y": 0.0},
                  {"id": "b", "x": length, "y": 0.0}],
        "edges": edges,
        "goals": [{"id": "g", "x": length, "y": 0.0}],
    }


def chain_document(d=0.5):
    """Two straight edges a -> b -> c along +x, 10 m each."""
    return {
        "format": 1,
        "nodes": [{"id": "a", "x": 0.0, "y": 0.0},
                  {"id": "b", "x": 10.0, "y": 0.0},
                  {"id": "c", "x": 20.0, "y": 0.0}],
        "edges": [{"id": "ab", "from": "a", "to": "b", "kind": "sidewalk",
                   "v_ref": 1.0, "d": d},
                  {"id": "bc", "from": "b", "to": "c", "kind": "sidewalk",
                   "v_ref": 1.0, "d": d}],
        "goals": [{"id": "g", "x": 20.0, "y": 0.0}],
    }


def fork_document():
    """Stem a -> b splitting into prongs b -> up and b -> down."""
    return {
        "format": 1,
        "nodes": [{"id": "a", "x": 0.0, "y": 0.0},
                  {"id": "b", "x": 10.0, "y": 0.0},
                  {"id": "up", "x": 10.0, "y": 10.0},
                  {"id": "down", "x": 10.0, "y": -10.0}],
        "edges": [{"id": "ab", "from": "a", "to": "b", "kind": "sidewalk",
                   "v_ref": 1.0, "d": 0.5},
                  {"id": "b-up", "from": "b", "to": "up", "kind": "sidewalk",
                   "v_ref": 1.0, "d": 0.5},
                  {"id": "b-down", "from": "b", "to": "down", "kind": "sidewalk",
                   "v_ref": 1.0, "d": 0.5}],
        "goals": [{"id": "g-up", "x": 10.0, "y": 10.0},
                  {"id": "g-down", "x": 10.0, "y": -10.0}],
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
