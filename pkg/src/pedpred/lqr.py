"""Infinite-horizon discrete LQR with a state-input cross weight.

The stationary cost matrix solves

    P = Q + A'PA - (A'PB + S)(R + B'PB)^(-1)(B'PA + S')

and the feedback gain is K = (R + B'PB)^(-1)(B'PA + S'). We solve by
fixed-point iteration from P_0 = Q, which is the finite-horizon value
recursion and converges for stabilizable, detectable problems.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import BadWeights, NoConvergence, NotStabilizable, SingularInnerMatrix
from .validation import as_float_array, check_scalar

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10000
_DIVERGENCE_LIMIT = 1e100


@dataclass(frozen=True)
class LqrWeights:
    """Quadratic cost weights: state Q, input R, cross term S."""

    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray = None

    def __post_init__(self):
        n = np.asarray(self.Q).shape[0]
        m = np.asarray(self.R).shape[0]
        object.__setattr__(self, "Q", as_float_array(self.Q, (n, n), "Q"))
        object.__setattr__(self, "R", as_float_array(self.R, (m, m), "R"))
        S = np.zeros((n, m)) if self.S is None else self.S
        object.__setattr__(self, "S", as_float_array(S, (n, m), "S"))

    @classmethod
    def from_scalars(cls, q, r, n=4, m=2):
        """Diagonal weights q * I_n and r * I_m with zero cross term."""
        q = check_scalar(q, "q", minimum=0.0, strict=True)
        r = check_scalar(r, "r", minimum=0.0, strict=True)
        return cls(Q=q * np.eye(n), R=r * np.eye(m))

    def validate(self):
        """Check R positive definite and the composite block PSD."""
        if np.max(np.abs(self.Q - self.Q.T)) > 1e-9 or np.max(np.abs(self.R - self.R.T)) > 1e-9:
            raise BadWeights("Q and R must be symmetric")
        try:
            np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError:
            raise BadWeights("R must be positive definite") from None
        composite = np.block([[self.Q, self.S], [self.S.T, self.R]])
        if np.linalg.eigvalsh(0.5 * (composite + composite.T))[0] < -1e-9:
            raise BadWeights("[[Q, S], [S', R]] must be positive semidefinite")


@dataclass(frozen=True)
class LqrSolution:
    """Stationary cost P, gain K and closed-loop matrix A_K = A - B K."""

    P: np.ndarray
    K: np.ndarray
    A_K: np.ndarray
    iterations: int
    residual: float


def _solve_inner(M, rhs):
    """Solve M @ X = rhs for the input-side inner matrix M.

    Uses the closed-form inverse when M is 2x2, with a determinant
    conditioning check scaled by the matrix magnitude.
    """
    if M.shape == (2, 2):
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        scale = max(1.0, float(np.max(np.abs(M))) ** 2)
        if abs(det) < 1e-14 * scale:
            raise SingularInnerMatrix(f"R + B'PB has determinant {det}")
        inv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / det
        return inv @ rhs
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise SingularInnerMatrix("R + B'PB is singular") from None


def solve_dare(A, B, weights: LqrWeights, tol=DEFAULT_TOL,
               max_iter=DEFAULT_MAX_ITER) -> LqrSolution:
    """Solve the discrete Riccati equation by value iteration from P = Q.

    Raises NoConvergence when the iteration budget is exhausted,
    NotStabilizable when the recursion diverges or the closed loop is not
    strictly stable, and SingularInnerMatrix when R + B'PB degenerates.
    """
    n = np.asarray(A).shape[0]
    m = np.asarray(B).shape[1]
    A = as_float_array(A, (n, n), "A")
    B = as_float_array(B, (n, m), "B")
    weights.validate()
    Q, R, S = weights.Q, weights.R, weights.S

    P = Q.copy()
    iterations = 0
    for iterations in range(1, max_iter + 1):
        PA = P @ A
        PB = P @ B
        gain = _solve_inner(R + B.T @ PB, B.T @ PA + S.T)
        P_next = Q + A.T @ PA - (A.T @ PB + S) @ gain
        P_next = 0.5 * (P_next + P_next.T)
        delta = float(np.max(np.abs(P_next - P)))
        P = P_next
        if not np.isfinite(delta) or np.max(np.abs(P)) > _DIVERGENCE_LIMIT:
            raise NotStabilizable("Riccati recursion diverged")
        if delta < tol:
            break
    else:
        raise NoConvergence(f"no fixed point after {max_iter} iterations")

    K = _solve_inner(R + B.T @ P @ B, B.T @ P @ A + S.T)
    A_K = A - B @ K
    rho = float(np.max(np.abs(np.linalg.eigvals(A_K))))
    if rho >= 1.0:
        raise NotStabilizable(f"closed-loop spectral radius {rho} >= 1")
    residual = float(np.max(np.abs(
        P - (Q + A.T @ P @ A - (A.T @ P @ B + S) @ K))))
    return LqrSolution(P=P, K=K, A_K=A_K, iterations=iterations, residual=residual)


def tracking_input(solution: LqrSolution, state, ref):
    """Feedback law u = r_u - K (x - r_x) for an edge reference.

    The reference input r_u is zero by construction.
    """
    x = np.asarray(state, dtype=float)
    r = ref.as_array() if hasattr(ref, "as_array") else np.asarray(ref, dtype=float)
    return -solution.K @ (x - r)
