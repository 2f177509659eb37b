"""Discrete solution operators of a descriptor system.

Production code only ever applies these maps through trajectory passes.  The
dense :class:`OperatorPanel` exists to verify them on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrators import Scheme, simulate_forward
from .linops import DescriptorSystem, TerminalWeight, adjoint_system, block_diag, dense
from .timegrid import IntervalTrajectory, TimeGrid, reflect

PANEL_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class OperatorPanel:
    """Dense matrices of the solution maps, columns from unit impulses.

    ``u`` and ``y`` are vectorized row-major, i.e. ``vec(u) = u.values.ravel()``.
    """

    B_T: np.ndarray   # n x (N m): input to terminal state
    C_T: np.ndarray   # (N p) x n: initial state to output
    D_T: np.ndarray   # (N p) x (N m): input to output
    A_T: np.ndarray   # n x n: initial state to terminal state
    T_FT: np.ndarray | None = None   # z x (N m): F B_T


def build_panel(sys: DescriptorSystem, grid: TimeGrid, scheme: Scheme,
                F=None) -> OperatorPanel:
    n, m, N = sys.n, sys.m, grid.N
    if n * N > PANEL_LIMIT or N * m > PANEL_LIMIT:
        raise ValueError(f"panel too large for dense assembly (n={n}, m={m}, N={N})")
    zero_u = IntervalTrajectory.zeros(grid, m)
    B_T = np.zeros((n, N * m))
    D_T = np.zeros((N * sys.p, N * m))
    for k in range(N * m):
        e = np.zeros(N * m)
        e[k] = 1.0
        X, Y = simulate_forward(sys, np.zeros(n), IntervalTrajectory(grid, e.reshape(N, m)), scheme)
        B_T[:, k] = X.final
        D_T[:, k] = Y.values.ravel()
    A_T = np.zeros((n, n))
    C_T = np.zeros((N * sys.p, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        X, Y = simulate_forward(sys, e, zero_u, scheme)
        A_T[:, j] = X.final
        C_T[:, j] = Y.values.ravel()
    T_FT = None if F is None else dense(F) @ B_T
    return OperatorPanel(B_T, C_T, D_T, A_T, T_FT)


def input_to_state(sys: DescriptorSystem, u: IntervalTrajectory,
                   scheme: Scheme = Scheme.ImplicitMidpoint) -> np.ndarray:
    X, _ = simulate_forward(sys, np.zeros(sys.n), u, scheme)
    return X.final


def terminal_map(sys: DescriptorSystem, F, x0, u: IntervalTrajectory,
                 scheme: Scheme = Scheme.ImplicitMidpoint) -> np.ndarray:
    F = F.F if isinstance(F, TerminalWeight) else F
    X, _ = simulate_forward(sys, x0, u, scheme)
    return F @ X.final


def input_map_apply(sys: DescriptorSystem, F, u: IntervalTrajectory,
                    scheme: Scheme = Scheme.ImplicitMidpoint):
    """``u -> (F x(T), y)`` with zero initial state."""
    F = F.F if isinstance(F, TerminalWeight) else F
    X, Y = simulate_forward(sys, np.zeros(sys.n), u, scheme)
    return F @ X.final, Y


def output_map_apply(sys_adj: DescriptorSystem, G, z, y_d: IntervalTrajectory,
                     scheme: Scheme = Scheme.ImplicitMidpoint) -> IntervalTrajectory:
    """``(z, y_d) -> C_T G z + D_T y_d`` on the node ``sys_adj``."""
    _, Y = simulate_forward(sys_adj, G @ np.asarray(z, dtype=float), y_d, scheme)
    return Y


def input_map_adjoint(sys: DescriptorSystem, F, z, y_d: IntervalTrajectory,
                      scheme: Scheme = Scheme.ImplicitMidpoint, Wz=None) -> IntervalTrajectory:
    """Adjoint of the F-input map through the adjoint node and time reflection.

    ``F*`` is taken with respect to the ``M`` inner product on the state and
    the Gram matrix ``Wz`` (identity if None) on the terminal space.
    """
    F = dense(F.F if isinstance(F, TerminalWeight) else F)
    Wz = np.eye(F.shape[0]) if Wz is None else dense(Wz)
    Fstar = sys.solve_mass(F.T @ Wz) if F.size else np.zeros((sys.n, 0))
    return reflect(output_map_apply(adjoint_system(sys), Fstar, z, reflect(y_d), scheme))


def _input_map_matrix(sys, F, grid, scheme):
    N, m, p = grid.N, sys.m, sys.p
    z = F.shape[0]
    J = np.zeros((z + N * p, N * m))
    for k in range(N * m):
        e = np.zeros(N * m)
        e[k] = 1.0
        zT, Y = input_map_apply(sys, F, IntervalTrajectory(grid, e.reshape(N, m)), scheme)
        J[:z, k] = zT
        J[z:, k] = Y.values.ravel()
    return J


def _adjoint_map_matrix(sys, F, grid, scheme):
    N, m, p = grid.N, sys.m, sys.p
    z = F.shape[0]
    K = np.zeros((N * m, z + N * p))
    for k in range(z + N * p):
        e = np.zeros(z + N * p)
        e[k] = 1.0
        yd = IntervalTrajectory(grid, e[z:].reshape(N, p))
        K[:, k] = input_map_adjoint(sys, F, e[:z], yd, scheme).values.ravel()
    return K


def adjoint_identity_residual(sys: DescriptorSystem, F, grid: TimeGrid,
                              scheme: Scheme = Scheme.ImplicitMidpoint) -> float:
    """Max-abs gap between the weighted transpose of the F-input map and its
    realization through the adjoint node (with time reflections)."""
    F = dense(F.F if isinstance(F, TerminalWeight) else F)
    N, dt = grid.N, grid.dt
    J = _input_map_matrix(sys, F, grid, scheme)
    K = _adjoint_map_matrix(sys, F, grid, scheme)
    W_in = dt * np.kron(np.eye(N), dense(sys.Wu))
    W_out = block_diag(np.eye(F.shape[0]), dt * np.kron(np.eye(N), dense(sys.Wy)))
    J_star = np.linalg.solve(W_in, J.T @ W_out)
    return float(np.max(np.abs(J_star - K))) if J_star.size else 0.0
