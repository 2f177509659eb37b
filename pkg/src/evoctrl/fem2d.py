"""Mixed P1 discretization of the damped wave equation on the L-shape.

Domain ``(0,1)x(0,2) U (1,2)x(0,1)``.  The controlled boundary part ``Gamma1``
is the top edge ``{y=2, 0<=x<=1}`` plus the right edge ``{x=2, 0<=y<=1}``;
``Gamma0`` is the rest.  Vertices at the ends of the ``Gamma1`` segments
belong to ``Gamma0`` for essential conditions.

State ``x = (p, q)``: momentum ``p`` as P1 on vertices off ``Gamma0``, stress
``q`` as vector P1 on all vertices (``qx`` block then ``qy`` block).  With
constant ``rho`` and ``T`` the Hamiltonian weight is
``H = diag(rho^-1 I, T I)`` and::

    M_p p' = -M_d (p/rho) - G^T (T q) + Tr^T Wu u
    M_q q' =  G (p/rho)
    y      =  Tr (p/rho)

where ``G[k, i] = int psi_k . grad phi_i`` couples vector and scalar P1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .linops import SPDSolver, TerminalWeight, block_diag
from .ph import PHNode


# ----------------------------------------------------------------------- mesh


@dataclass(frozen=True, eq=False)
class MeshL:
    n: int
    vertices: np.ndarray        # (nv, 2)
    triangles: np.ndarray       # (nt, 3), counterclockwise
    gamma0_edges: np.ndarray    # (e0, 2) vertex pairs
    gamma1_edges: np.ndarray    # (e1, 2)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def nv(self) -> int:
        return self.vertices.shape[0]

    def areas(self) -> np.ndarray:
        P = self.vertices[self.triangles]
        e1 = P[:, 1] - P[:, 0]
        e2 = P[:, 2] - P[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def gamma0_vertices(self) -> np.ndarray:
        return np.unique(self.gamma0_edges)

    @cached_property
    def free_vertices(self) -> np.ndarray:
        mask = np.ones(self.nv, dtype=bool)
        mask[self.gamma0_vertices] = False
        return np.flatnonzero(mask)

    def edge_length(self, edges) -> float:
        d = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    def write_csv(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        on0 = np.zeros(self.nv, dtype=int)
        on0[self.gamma0_vertices] = 1
        on1 = np.zeros(self.nv, dtype=int)
        on1[np.unique(self.gamma1_edges)] = 1
        with (directory / "vertices.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "x", "y", "gamma0", "gamma1"])
            for i, (x, y) in enumerate(self.vertices):
                w.writerow([i, repr(float(x)), repr(float(y)), on0[i], on1[i]])
        with (directory / "triangles.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "v0", "v1", "v2"])
            for i, t in enumerate(self.triangles):
                w.writerow([i, *map(int, t)])
        with (directory / "boundary_edges.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["v0", "v1", "gamma"])
            for tag, edges in ((0, self.gamma0_edges), (1, self.gamma1_edges)):
                for a, b in edges:
                    w.writerow([int(a), int(b), tag])


def _on_gamma1(p: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    x, y = p[..., 0], p[..., 1]
    top = (np.abs(y - 2.0) < tol) & (x <= 1.0 + tol)
    right = (np.abs(x - 2.0) < tol) & (y <= 1.0 + tol)
    return top | right


def build_lshape_mesh(n: int) -> MeshL:
    """Uniform mesh of squares of side ``1/n``, each cut along its SW-NE diagonal."""
    if int(n) != n or n < 1:
        raise ValueError(f"mesh parameter must be a positive integer, got {n}")
    n = int(n)
    index = -np.ones((2 * n + 1, 2 * n + 1), dtype=int)
    verts = []
    for j in range(2 * n + 1):
        for i in range(2 * n + 1):
            if i > n and j > n:
                continue
            index[i, j] = len(verts)
            verts.append((i / n, j / n))
    tris = []
    for j in range(2 * n):
        for i in range(2 * n):
            if i >= n and j >= n:
                continue
            bl, br = index[i, j], index[i + 1, j]
            tl, tr = index[i, j + 1], index[i + 1, j + 1]
            tris.append((bl, br, tr))
            tris.append((bl, tr, tl))
    V = np.array(verts, dtype=float)
    T = np.array(tris, dtype=int)
    # boundary edges occur in exactly one triangle
    count: dict = {}
    for t in T:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    bnd = np.array(sorted(k for k, c in count.items() if c == 1), dtype=int)
    mid = 0.5 * (V[bnd[:, 0]] + V[bnd[:, 1]])
    g1 = _on_gamma1(mid)
    return MeshL(n, V, T, bnd[~g1], bnd[g1])


def _point_segment_distance(P: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Distances ``(len(P), len(A))`` from points to segments ``[A_k, B_k]``."""
    AB = B - A
    AP = P[:, None, :] - A[None, :, :]
    L2 = np.sum(AB * AB, axis=1)
    t = np.clip(np.sum(AP * AB[None], axis=2) / L2[None], 0.0, 1.0)
    closest = A[None] + t[..., None] * AB[None]
    return np.linalg.norm(P[:, None, :] - closest, axis=2)


def distance_to_gamma0(mesh: MeshL) -> np.ndarray:
    V = mesh.vertices
    E = mesh.gamma0_edges
    d = _point_segment_distance(V, V[E[:, 0]], V[E[:, 1]]).min(axis=1)
    d[mesh.gamma0_vertices] = 0.0
    return d


# ------------------------------------------------------------------ assembly


@dataclass(frozen=True)
class WaveParams:
    """Constant density and tension; damping per triangle (scalar or callable of centroids)."""

    rho: float = 1.0
    T_mod: float = 1.0
    d: object = 0.05

    def __post_init__(self):
        if not (self.rho > 0 and self.T_mod > 0):
            raise ValueError("rho and T_mod must be positive")

    def damping(self, mesh: MeshL) -> np.ndarray:
        if callable(self.d):
            vals = np.asarray(self.d(mesh.centroids()), dtype=float)
        else:
            vals = np.broadcast_to(np.asarray(self.d, dtype=float), (len(mesh.triangles),))
        if vals.shape != (len(mesh.triangles),):
            raise ValueError(f"damping needs one value per triangle, got shape {vals.shape}")
        if np.any(vals < 0):
            raise ValueError("damping must be nonnegative")
        return np.array(vals, dtype=float)


_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def _gradients(mesh: MeshL) -> np.ndarray:
    """Gradients of the three barycentric functions per triangle, ``(nt, 3, 2)``."""
    P = mesh.vertices[mesh.triangles]
    area2 = 2.0 * mesh.areas()
    g = np.empty((len(P), 3, 2))
    for k in range(3):
        a, b = P[:, (k + 1) % 3], P[:, (k + 2) % 3]
        g[:, k, 0] = (a[:, 1] - b[:, 1]) / area2
        g[:, k, 1] = (b[:, 0] - a[:, 0]) / area2
    return g


def p1_mass(mesh: MeshL, coef=None) -> sp.csr_matrix:
    area = mesh.areas() if coef is None else mesh.areas() * coef
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    vals = (area[:, None, None] * _LOCAL_MASS[None]).reshape(len(T), 9).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.nv, mesh.nv))


def gradient_coupling(mesh: MeshL) -> sp.csr_matrix:
    """``G[(c, k), i] = int psi_k grad_c phi_i`` for vector P1 ``psi`` and scalar P1 ``phi``."""
    T = mesh.triangles
    g = _gradients(mesh)
    area = mesh.areas()
    nv = mesh.nv
    rows, cols, vals = [], [], []
    for c in range(2):
        for kl in range(3):
            for il in range(3):
                rows.append(c * nv + T[:, kl])
                cols.append(T[:, il])
                vals.append(area / 3.0 * g[:, il, c])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(2 * nv, nv))


def gamma1_nodes(mesh: MeshL) -> np.ndarray:
    """Control nodes: top segment left to right, then right segment bottom to top."""
    V = mesh.vertices
    n = mesh.n
    top = [np.flatnonzero((np.abs(V[:, 1] - 2) < 1e-12) & (np.abs(V[:, 0] - k / n) < 1e-12))[0]
           for k in range(n + 1)]
    right = [np.flatnonzero((np.abs(V[:, 0] - 2) < 1e-12) & (np.abs(V[:, 1] - k / n) < 1e-12))[0]
             for k in range(n + 1)]
    return np.array(top + right, dtype=int)


def _segment_mass(k: int, h: float) -> np.ndarray:
    M = np.zeros((k, k))
    for e in range(k - 1):
        M[e:e + 2, e:e + 2] += h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    return M


@dataclass(eq=False)
class WaveFEM:
    """Assembled matrices of the wave discretization on one mesh."""

    mesh: MeshL
    params: WaveParams
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        mesh = self.mesh
        if len(mesh.gamma1_edges) == 0:
            raise ValueError("Gamma1 is empty")
        self.free = mesh.free_vertices
        self.u_nodes = gamma1_nodes(mesh)
        M1 = p1_mass(mesh)
        self.M1 = M1
        self.M_p = M1[self.free][:, self.free].tocsr()
        self.M_q = block_diag(M1, M1).tocsr()
        self.M_d = p1_mass(mesh, self.params.damping(mesh))[self.free][:, self.free].tocsr()
        self.G = gradient_coupling(mesh)[:, self.free].tocsr()
        k = mesh.n + 1
        self.Wu = block_diag(_segment_mass(k, mesh.h), _segment_mass(k, mesh.h))
        pos = {v: i for i, v in enumerate(self.free)}
        Tr = sp.lil_matrix((len(self.u_nodes), len(self.free)))
        for r, v in enumerate(self.u_nodes):
            if v in pos:
                Tr[r, pos[v]] = 1.0
        self.Tr = Tr.tocsr()

    @property
    def n_p(self) -> int:
        return len(self.free)

    @property
    def n_q(self) -> int:
        return 2 * self.mesh.nv

    @property
    def n(self) -> int:
        return self.n_p + self.n_q

    @property
    def m(self) -> int:
        return len(self.u_nodes)

    def split(self, x):
        x = np.asarray(x)
        return x[..., : self.n_p], x[..., self.n_p:]

    def H(self) -> sp.csr_matrix:
        rho, Tm = self.params.rho, self.params.T_mod
        return sp.diags(np.concatenate([np.full(self.n_p, 1.0 / rho),
                                        np.full(self.n_q, Tm)])).tocsr()

    def mass(self) -> sp.csr_matrix:
        return block_diag(self.M_p, self.M_q).tocsr()

    def ph_node(self) -> PHNode:
        n_q, m = self.n_q, self.m
        WuTr = sp.csr_matrix(self.Tr.T @ self.Wu)
        FG = sp.bmat([[-self.M_d, -self.G.T, WuTr],
                      [self.G, None, sp.csr_matrix((n_q, m))]]).tocsr()
        KL = sp.hstack([-self.Tr, sp.csr_matrix((m, n_q + m))]).tocsr()
        return PHNode(FG, KL, self.H(), self.mass(), self.Wu)

    def poisson_matrix(self) -> np.ndarray:
        """``G^T M_q^-1 G / T``: Laplacian built from the discrete gradient."""
        if "K" not in self._cache:
            Mq = SPDSolver(self.M_q, "M_q")
            self._cache["K"] = (self.G.T @ Mq.solve(self.G.toarray())) / self.params.T_mod
        return self._cache["K"]

    def displacement_operator(self) -> np.ndarray:
        """Dense ``F_disp`` mapping ``q`` to displacement values on the free vertices."""
        if "F" not in self._cache:
            K = SPDSolver(self.poisson_matrix(), "discrete Laplacian")
            self._cache["F"] = K.solve(self.G.T.toarray())
        return self._cache["F"]

    def discrete_gradient(self, w_free) -> np.ndarray:
        """Vector-P1 Galerkin projection of ``T^-1 grad w``."""
        Mq = SPDSolver(self.M_q, "M_q")
        return Mq.solve(self.G @ np.asarray(w_free, float)) / self.params.T_mod

    def extend(self, w_free) -> np.ndarray:
        """Free-vertex values to all vertices (zero on Gamma0)."""
        out = np.zeros(self.mesh.nv)
        out[self.free] = w_free
        return out

    def kinetic_energy(self, x) -> np.ndarray:
        p = self.split(np.atleast_2d(x))[0]
        return 0.5 / self.params.rho * np.einsum("ij,ij->i", p, (self.M_p @ p.T).T)

    def terminal_weight(self, w_target_free, alpha_T: float = 1.0) -> TerminalWeight:
        """``alpha_T/2 (|p(T)|^2 + |F_disp q(T) - w_f|^2)`` in ``L2`` norms."""
        F = np.zeros((2 * self.n_p, self.n))
        F[: self.n_p, : self.n_p] = np.eye(self.n_p)
        F[self.n_p:, self.n_p:] = self.displacement_operator()
        z = np.concatenate([np.zeros(self.n_p), np.asarray(w_target_free, float)])
        Mp = self.M_p.toarray()
        return TerminalWeight(F, z, alpha_T, block_diag(Mp, Mp))


def assemble_wave(mesh: MeshL, params: WaveParams) -> PHNode:
    return WaveFEM(mesh, params).ph_node()


def displacement_reconstruct(mesh: MeshL, params: WaveParams, q) -> np.ndarray:
    """Nodal displacement on all vertices with ``<T^-1 g(w), g(phi)> = <q, g(phi)>``.

    ``g`` is the discrete gradient (Galerkin projection of ``grad`` onto vector
    P1) and ``phi`` ranges over P1 functions vanishing on ``Gamma0``.
    """
    fem = WaveFEM(mesh, params)
    return fem.extend(fem.displacement_operator() @ np.asarray(q, float))
