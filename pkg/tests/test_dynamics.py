import math

import numpy as np
import pytest
from scipy.linalg import expm

from pedpred.dynamics import (
    CONTROL_DIM,
    STATE_DIM,
    ControlInput,
    PedestrianState,
    affine_term,
    discretize,
    edge_model,
    jacobians,
    unicycle_rhs,
)
from pedpred.roadgraph import ReferenceState


def random_reference(rng):
    return ReferenceState(
        x=float(rng.uniform(-20, 20)),
        y=float(rng.uniform(-20, 20)),
        v=float(rng.uniform(0.2, 3.0)),
        theta=float(rng.uniform(-math.pi, math.pi)),
    )


def numeric_jacobians(ref, h=1e-5):
    """Central finite differences of the continuous dynamics at (ref, u=0)."""
    x0 = ref.as_array()
    u0 = np.zeros(CONTROL_DIM)
    A = np.zeros((STATE_DIM, STATE_DIM))
    for j in range(STATE_DIM):
        dx = np.zeros(STATE_DIM)
        dx[j] = h
        A[:, j] = (unicycle_rhs(x0 + dx, u0) - unicycle_rhs(x0 - dx, u0)) / (2 * h)
    B = np.zeros((STATE_DIM, CONTROL_DIM))
    for j in range(CONTROL_DIM):
        du = np.zeros(CONTROL_DIM)
        du[j] = h
        B[:, j] = (unicycle_rhs(x0, u0 + du) - unicycle_rhs(x0, u0 - du)) / (2 * h)
    return A, B


def expm_discretization(A_c, B_c, t_s):
    """Zero-order hold via the block matrix exponential."""
    n, m = A_c.shape[0], B_c.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_c
    M[:n, n:] = B_c
    E = expm(M * t_s)
    return E[:n, :n], E[:n, n:]


def test_unicycle_rhs_matches_hand_values():
    state = [1.0, 2.0, 2.0, math.pi / 6.0]
    control = [0.3, -0.2]
    dot = unicycle_rhs(state, control)
    assert dot == pytest.approx([2.0 * math.cos(math.pi / 6), 1.0, 0.3, -0.2],
                                abs=1e-15)
    # dataclass inputs are accepted too
    dot2 = unicycle_rhs(PedestrianState(1.0, 2.0, 2.0, math.pi / 6.0),
                        ControlInput(0.3, -0.2))
    assert np.array_equal(dot, dot2)


def test_jacobians_match_finite_differences(rng):
    for _ in range(25):
        ref = random_reference(rng)
        A_c, B_c = jacobians(ref)
        A_num, B_num = numeric_jacobians(ref)
        assert np.max(np.abs(A_c - A_num)) < 1e-8
        assert np.max(np.abs(B_c - B_num)) < 1e-10


def test_state_jacobian_is_nilpotent(rng):
    for _ in range(10):
        A_c, _ = jacobians(random_reference(rng))
        assert np.max(np.abs(A_c @ A_c)) == 0.0


def test_discretization_matches_matrix_exponential(rng):
    for _ in range(100):
        ref = random_reference(rng)
        t_s = float(rng.uniform(0.01, 0.5))
        A_c, B_c = jacobians(ref)
        A, B = discretize(A_c, B_c, t_s)
        A_ref, B_ref = expm_discretization(A_c, B_c, t_s)
        assert np.max(np.abs(A - A_ref)) < 1e-10
        assert np.max(np.abs(B - B_ref)) < 1e-10


def test_discretization_closed_form_structure():
    ref = ReferenceState(0.0, 0.0, 1.5, 0.3)
    A_c, B_c = jacobians(ref)
    A, B = discretize(A_c, B_c, 0.1)
    assert np.allclose(A, np.eye(4) + 0.1 * A_c, atol=0)
    assert np.allclose(B, 0.1 * B_c + 0.005 * (A_c @ B_c), atol=0)


def test_affine_term_frozen_value_heading_north():
    # v = 1, theta = pi/2, t_s = 0.1 gives c = (pi/20, 0, 0, 0) regardless
    # of the reference position.
    for x0, y0 in [(0.0, 0.0), (-3.5, -10.0), (7.0, 2.0)]:
        model = edge_model(ReferenceState(x0, y0, 1.0, math.pi / 2.0), 0.1)
        assert model.c == pytest.approx([math.pi / 20.0, 0.0, 0.0, 0.0], abs=1e-15)
        assert model.c[0] == pytest.approx(0.15707963267948966, abs=1e-15)


def test_affine_term_vanishes_along_the_x_axis():
    model = edge_model(ReferenceState(2.0, -1.0, 1.7, 0.0), 0.1)
    assert np.max(np.abs(model.c)) == 0.0


def test_reference_is_an_exact_solution_of_the_discrete_model(rng):
    # r(s + v t_s) = A r(s) + c must hold everywhere on a straight edge.
    for _ in range(50):
        ref = random_reference(rng)
        t_s = float(rng.uniform(0.02, 0.3))
        model = edge_model(ref, t_s)
        step = ref.v * t_s
        for k in range(4):
            s = k * step
            r_k = ref.as_array() + s * np.array(
                [math.cos(ref.theta), math.sin(ref.theta), 0.0, 0.0])
            r_next = ref.as_array() + (s + step) * np.array(
                [math.cos(ref.theta), math.sin(ref.theta), 0.0, 0.0])
            assert np.max(np.abs(model.A @ r_k + model.c - r_next)) < 1e-12


def test_affine_term_uses_the_defining_identity(rng):
    ref = random_reference(rng)
    A_c, B_c = jacobians(ref)
    A, B = discretize(A_c, B_c, 0.1)
    c = affine_term(ref, A, B, 0.1)
    r0 = ref.as_array()
    r1 = r0 + 0.1 * ref.v * np.array(
        [math.cos(ref.theta), math.sin(ref.theta), 0.0, 0.0])
    assert np.max(np.abs(c - (r1 - A @ r0))) == 0.0


def test_discretize_rejects_nonpositive_sampling_time():
    A_c, B_c = jacobians(ReferenceState(0, 0, 1.0, 0.0))
    for t_s in (0.0, -0.1):
        with pytest.raises(ValueError):
            discretize(A_c, B_c, t_s)
