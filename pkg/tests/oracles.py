"""Dense oracles built directly from the step recurrence (independent of evoctrl's passes)."""

import numpy as np

from evoctrl.linops import dense


def step_matrices(sys, dt, theta):
    M, A, B = dense(sys.M), dense(sys.A), dense(sys.B)
    L = M - dt * theta * A
    Phi = np.linalg.solve(L, M + dt * (1 - theta) * A)
    Gam = np.linalg.solve(L, dt * B)
    return Phi, Gam


def dense_maps(sys, grid, theta):
    """Matrices with ``x_N = AT x0 + BT vec(u)`` and ``vec(y) = CT x0 + DT vec(u)``."""
    n, m, p, N = sys.n, sys.m, sys.p, grid.N
    Phi, Gam = step_matrices(sys, grid.dt, theta)
    C, D = dense(sys.C), dense(sys.D)
    # state x_i = P[i] x0 + sum_k Q[i][k] u_k
    P = [np.eye(n)]
    Q = [np.zeros((n, N * m))]
    for i in range(N):
        P.append(Phi @ P[-1])
        q = Phi @ Q[-1]
        q[:, i * m:(i + 1) * m] += Gam
        Q.append(q)
    CT = np.zeros((N * p, n))
    DT = np.zeros((N * p, N * m))
    for i in range(N):
        S_P = (1 - theta) * P[i] + theta * P[i + 1]
        S_Q = (1 - theta) * Q[i] + theta * Q[i + 1]
        CT[i * p:(i + 1) * p] = C @ S_P
        DT[i * p:(i + 1) * p] = C @ S_Q
        DT[i * p:(i + 1) * p, i * m:(i + 1) * m] += D
    return P[-1], Q[-1], CT, DT


def dense_quadratic(sys, spec, x0, theta):
    """``J(s) = J0 + g.s + 1/2 s.H s`` over ``s = vec(u)`` from the dense maps."""
    grid = spec.grid
    N, dt = grid.N, grid.dt
    AT, BT, CT, DT = dense_maps(sys, grid, theta)
    Wy = np.kron(np.eye(N), dense(sys.Wy))
    Wu = np.kron(np.eye(N), dense(sys.Wu))
    r0 = CT @ np.asarray(x0, float) - spec.y_ref.values.ravel()
    H = dt * DT.T @ Wy @ DT + spec.alpha * dt * Wu
    g = dt * DT.T @ Wy @ r0
    J0 = 0.5 * dt * r0 @ Wy @ r0
    t = spec.terminal
    if t is not None and t.dim:
        F, W = dense(t.F), dense(t.gram())
        e0 = F @ (AT @ x0) - t.z_f
        H = H + t.scale * BT.T @ F.T @ W @ F @ BT
        g = g + t.scale * BT.T @ F.T @ W @ e0
        J0 += 0.5 * t.scale * e0 @ W @ e0
    return J0, g, 0.5 * (H + H.T), AT, BT
