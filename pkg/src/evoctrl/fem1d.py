"""P1 finite elements for advection-diffusion-reaction on [0, 1].

PDE ``x_t = (a x')' + b x' + c x`` with ``x(0) = 0``, Dirichlet control
``x(1) = u`` and Neumann observation ``y = (a x')(0)``, or the outward flux
``y = -(a x')(0)`` when ``outward_normal`` is set.

The mesh has ``n`` interior nodes and ``h = 1/(n+1)``.  The full operator
``K[j, k] = -int a phi_k' phi_j' + int b phi_k' phi_j + int c phi_k phi_j`` is
assembled on all ``n+2`` nodes; the boundary value at ``xi=1`` is replaced by
``u`` (its column becomes ``B``) and the flux at ``xi=0`` is read off as the
residual of row 0 (``C``).  Reading the flux this way makes the discrete
transpose coincide with a direct discretization of the adjoint problem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linops import DescriptorSystem

GAUSS_X = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS_W = np.array([0.5, 0.5])

Coefficient = Callable[[np.ndarray], np.ndarray] | float


def _as_function(coef: Coefficient):
    if callable(coef):
        return lambda s: np.broadcast_to(np.asarray(coef(s), dtype=float), np.shape(s))
    val = float(coef)
    return lambda s: np.full(np.shape(s), val)


@dataclass(frozen=True)
class HeatParams:
    n: int
    a: Coefficient = 1.0
    b: Coefficient = 0.0
    c: Coefficient = 0.0
    outward_normal: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"need at least one interior node, got n={self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 2)

    def quadrature(self):
        """Element-wise Gauss points, shape ``(n+1, 2)``."""
        left = self.nodes()[:-1, None]
        return left + self.h * GAUSS_X[None, :]


def _element_data(params: HeatParams):
    q = params.quadrature()
    a = _as_function(params.a)(q)
    if np.any(a <= 0.0):
        i, j = np.argwhere(a <= 0.0)[0]
        raise ValueError(f"diffusion coefficient must be positive, a({q[i, j]:.6g}) = {a[i, j]}")
    b = _as_function(params.b)(q)
    c = _as_function(params.c)(q)
    return a, b, c


def _local_basis(h: float):
    # values and derivatives of the two element shape functions at Gauss points
    phi = np.array([1.0 - GAUSS_X, GAUSS_X])         # (2 local, 2 points)
    dphi = np.array([-1.0, 1.0]) / h                 # (2 local,)
    return phi, dphi


def _assemble_full(params: HeatParams, adjoint: bool = False):
    """Mass and operator matrices on all nodes (dense, small)."""
    n_all = params.n + 2
    h = params.h
    a, b, c = _element_data(params)
    phi, dphi = _local_basis(h)
    Mfull = np.zeros((n_all, n_all))
    Kfull = np.zeros((n_all, n_all))
    for e in range(params.n + 1):
        w = h * GAUSS_W
        for jl in range(2):          # test function
            for kl in range(2):      # trial function
                j, k = e + jl, e + kl
                Mfull[j, k] += np.sum(w * phi[kl] * phi[jl])
                diff = -np.sum(w * a[e]) * dphi[kl] * dphi[jl]
                if adjoint:
                    # weak form of -(b x)' tested with phi_j
                    adv = np.sum(w * b[e] * phi[kl]) * dphi[jl]
                else:
                    adv = np.sum(w * b[e] * phi[jl]) * dphi[kl]
                react = np.sum(w * c[e] * phi[kl] * phi[jl])
                Kfull[j, k] += diff + adv + react
    return Mfull, Kfull


def assemble_heat(params: HeatParams) -> DescriptorSystem:
    Mfull, K = _assemble_full(params)
    I = np.arange(1, params.n + 1)
    last = params.n + 1
    M = sp.csr_matrix(Mfull[np.ix_(I, I)])
    A = sp.csr_matrix(K[np.ix_(I, I)])
    B = K[I, last][:, None]
    sign = -1.0 if params.outward_normal else 1.0
    C = sign * K[0, I][None, :]
    D = np.array([[sign * K[0, last]]])
    return DescriptorSystem(M, A, B, C, D, np.eye(1), np.eye(1))


def assemble_heat_adjoint_reference(params: HeatParams) -> DescriptorSystem:
    """Direct discretization of the adjoint problem.

    ``mu_t = (a mu')' - (b mu)' + c mu``, ``mu(1) = 0``, input ``mu(0)``,
    output ``-(a mu')(1)`` read as the residual of the last row.  With the
    outward-normal observation the input enters with the opposite sign.
    """
    Mfull, K = _assemble_full(params, adjoint=True)
    I = np.arange(1, params.n + 1)
    last = params.n + 1
    M = sp.csr_matrix(Mfull[np.ix_(I, I)])
    A = sp.csr_matrix(K[np.ix_(I, I)])
    sign = -1.0 if params.outward_normal else 1.0
    B = sign * K[I, 0][:, None]
    C = K[last, I][None, :]
    D = np.array([[sign * K[last, 0]]])
    return DescriptorSystem(M, A, B, C, D, np.eye(1), np.eye(1))
