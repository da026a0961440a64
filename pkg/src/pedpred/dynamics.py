"""Unicycle kinematics and exact discretization around edge references.

The continuous model is

    d/dt [x, y, v, theta] = [v cos(theta), v sin(theta), a, omega]

with controls u = (a, omega). Linearizing at an edge reference (constant
speed rv, constant heading rtheta, zero input) gives a Jacobian A_c with
A_c @ A_c = 0, so the zero-order-hold discretization has exact closed
forms:

    A = I + t_s * A_c
    B = t_s * B_c + (t_s**2 / 2) * A_c @ B_c

The affine term c makes the discrete model exact along the reference:
r_{k+1} = A r_k + B r_u + c for consecutive reference samples.
"""

from dataclasses import dataclass

import numpy as np

from .roadgraph import ReferenceState
from .validation import as_float_array, as_state_vector, check_scalar

STATE_DIM = 4
CONTROL_DIM = 2


@dataclass(frozen=True)
class PedestrianState:
    """Planar state: position (m), speed (m/s), heading (rad)."""

    x: float
    y: float
    v: float
    theta: float

    def as_array(self):
        return np.array([self.x, self.y, self.v, self.theta])

    @classmethod
    def from_array(cls, arr):
        arr = as_state_vector(arr)
        return cls(*map(float, arr))


@dataclass(frozen=True)
class ControlInput:
    """Acceleration (m/s^2) and turn rate (rad/s)."""

    a: float
    omega: float

    def as_array(self):
        return np.array([self.a, self.omega])


@dataclass(frozen=True)
class DiscreteModel:
    """Exact ZOH discretization of the linearized unicycle on one edge."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    t_s: float


def unicycle_rhs(state, control):
    """Continuous-time state derivative of the unicycle."""
    x = as_state_vector(state)
    if hasattr(control, "as_array"):
        control = control.as_array()
    u = as_float_array(control, (CONTROL_DIM,), "control")
    return np.array([x[2] * np.cos(x[3]), x[2] * np.sin(x[3]), u[0], u[1]])


def jacobians(ref: ReferenceState):
    """State and input Jacobians of the unicycle at an edge reference."""
    rv, rtheta = ref.v, ref.theta
    A_c = np.zeros((STATE_DIM, STATE_DIM))
    A_c[0, 2] = np.cos(rtheta)
    A_c[0, 3] = -rv * np.sin(rtheta)
    A_c[1, 2] = np.sin(rtheta)
    A_c[1, 3] = rv * np.cos(rtheta)
    B_c = np.zeros((STATE_DIM, CONTROL_DIM))
    B_c[2, 0] = 1.0
    B_c[3, 1] = 1.0
    return A_c, B_c


def discretize(A_c, B_c, t_s):
    """Exact zero-order-hold discretization for the nilpotent Jacobian."""
    A_c = as_float_array(A_c, (STATE_DIM, STATE_DIM), "A_c")
    B_c = as_float_array(B_c, (STATE_DIM, CONTROL_DIM), "B_c")
    t_s = check_scalar(t_s, "t_s", minimum=0.0, strict=True)
    A = np.eye(STATE_DIM) + t_s * A_c
    B = t_s * B_c + 0.5 * t_s * t_s * (A_c @ B_c)
    return A, B


def affine_term(ref: ReferenceState, A, B, t_s):
    """Constant offset that keeps the reference an exact model solution.

    Computed from the defining property c = r_{k+1} - A r_k - B r_u with
    the reference advanced by rv * t_s along its heading, so the identity
    holds to machine precision on straight edges.
    """
    r0 = ref.as_array()
    step = ref.v * t_s
    r1 = r0 + np.array([step * np.cos(ref.theta), step * np.sin(ref.theta), 0.0, 0.0])
    return r1 - A @ r0  # B @ r_u vanishes: the reference input is zero


def edge_model(ref: ReferenceState, t_s) -> DiscreteModel:
    """Discrete model (A, B, c) for one edge reference."""
    A_c, B_c = jacobians(ref)
    A, B = discretize(A_c, B_c, t_s)
    return DiscreteModel(A=A, B=B, c=affine_term(ref, A, B, t_s), t_s=float(t_s))
