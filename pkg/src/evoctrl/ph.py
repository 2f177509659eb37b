"""Port-Hamiltonian descriptor nodes and energy bookkeeping.

A node is given by ``M_full = [FG; KL]`` acting on the co-energy/input pair
``xi = (H x, u)``::

    M x' = FG xi,     y = -KL xi,     w = RS xi

with stored energy ``E(x) = 1/2 x^T (M H) x``.  Along trajectories
``dE/dt = <y, u>_Wu + xi^T P M_full xi`` with ``P = blkdiag(I, Wu)``;
dissipativity means that quadratic form is nonpositive, and the dissipation
factor satisfies ``2 |RS xi|^2 = -xi^T P M_full xi``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .integrators import Scheme, simulate_forward
from .linops import (DescriptorSystem, TerminalWeight, as_matrix, block_diag, check_symmetric,
                     cholesky_factor, dense, max_abs, sym_sqrt)
from .ocp import CostSpec
from .timegrid import IntervalTrajectory, TimeGrid

EIG_CUTOFF = 1e-12


class NotDissipativeError(ValueError):
    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue


def dissipation_pairing(M_full, Wu) -> np.ndarray:
    """Quadratic-form matrix ``blkdiag(I, Wu) M_full`` of the supplied power pairing."""
    M_full = dense(M_full)
    m = dense(Wu).shape[0]
    n = M_full.shape[0] - m
    return block_diag(np.eye(n), dense(Wu)) @ M_full


def dissipation_factor(M_full, Wu=None, tol: float = EIG_CUTOFF) -> np.ndarray:
    """Factor ``RS`` with ``2 |RS xi|^2 = -xi^T P M_full xi``.

    ``M_full`` is square; ``Wu`` (identity if None) weights its trailing input
    block.  Eigenvalues of ``-sym`` below ``tol * lambda_max`` are dropped;
    a negative eigenvalue beyond that tolerance is rejected.
    """
    M_full = dense(M_full)
    if M_full.shape[0] != M_full.shape[1]:
        raise ValueError(f"M_full must be square, got {M_full.shape}")
    Q = M_full if Wu is None else dissipation_pairing(M_full, Wu)
    S = -0.5 * (Q + Q.T)
    lam, V = np.linalg.eigh(S)
    scale = max(float(np.max(np.abs(lam))) if lam.size else 0.0, max_abs(Q), 1e-300)
    if lam.size and lam[0] < -tol * scale:
        raise NotDissipativeError(
            f"not dissipative: -sym(M_full) has eigenvalue {lam[0]:.3e}", float(lam[0]))
    keep = lam > tol * scale
    return (V[:, keep] * np.sqrt(lam[keep] / 2.0)).T


def factorization_residual(M_full, RS, xi, Wu=None) -> float:
    """``|2 |RS xi|^2 + xi^T P M_full xi|`` for one vector ``xi``."""
    Q = dense(M_full) if Wu is None else dissipation_pairing(M_full, Wu)
    r = RS @ xi
    return abs(2.0 * float(r @ r) + float(xi @ (Q @ xi)))


@dataclass(frozen=True, eq=False)
class PHNode:
    FG: np.ndarray
    KL: np.ndarray
    H: np.ndarray
    M: np.ndarray
    Wu: np.ndarray
    RS: np.ndarray | None = None

    def __post_init__(self):
        for name in ("FG", "KL", "H", "M", "Wu"):
            object.__setattr__(self, name, as_matrix(getattr(self, name)))
        n, m = self.n, self.m
        if self.FG.shape != (n, n + m):
            raise ValueError(f"FG has shape {self.FG.shape}, expected {(n, n + m)}")
        if self.KL.shape != (m, n + m):
            raise ValueError(f"KL has shape {self.KL.shape}, expected {(m, n + m)}")
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected {(n, n)}")
        cholesky_factor(self.H, "H")
        MH = self.M @ self.H
        check_symmetric(MH, "M H")
        if self.RS is None:
            object.__setattr__(self, "RS", dissipation_factor(self.M_full, self.Wu))
        else:
            RS = dense(self.RS)
            if RS.shape[1] != n + m:
                raise ValueError(f"RS has {RS.shape[1]} columns, expected {n + m}")
            object.__setattr__(self, "RS", RS)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def m(self) -> int:
        return self.Wu.shape[0]

    @property
    def M_full(self) -> np.ndarray:
        return np.vstack([dense(self.FG), dense(self.KL)])

    def energy_matrix(self):
        return self.M @ self.H

    def energy(self, x) -> float:
        return 0.5 * float(x @ (self.energy_matrix() @ x))

    def dissipativity_defect(self) -> float:
        """Largest eigenvalue of ``sym(P M_full)``; nonpositive for a dissipative node."""
        Q = dissipation_pairing(self.M_full, self.Wu)
        return float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[-1])

    def skew_defect(self) -> float:
        """``|Q_l + Q_l^T|_max`` of the pairing matrix with the dissipation removed."""
        Q = dissipation_pairing(self.M_full, self.Wu)
        Q_l = Q + 2.0 * self.RS.T @ self.RS
        return max_abs(Q_l + Q_l.T)

    def _blocks(self, rows):
        rows = dense(rows) if rows.shape[0] else np.zeros((0, self.n + self.m))
        n = self.n
        return rows[:, :n] @ dense(self.H), rows[:, n:]

    def descriptor(self, outputs=("y",), extra=None) -> DescriptorSystem:
        """Descriptor realization with outputs stacked in the given order.

        ``"y"`` is the port output (weight ``Wu``), ``"w"`` the dissipation
        output (weight ``4 I`` so that ``1/2 |w|^2_W`` equals the dissipated
        power ``2 |w|^2``), ``"v"`` the rows of ``extra = (CD, Wv)``.
        """
        A = self.FG[:, : self.n] @ self.H
        B = self.FG[:, self.n:]
        Cs, Ds, Ws = [], [], []
        for name in outputs:
            if name == "y":
                C, D = self._blocks(-self.KL)
                W = dense(self.Wu)
            elif name == "w":
                C, D = self._blocks(self.RS)
                W = 4.0 * np.eye(self.RS.shape[0])
            elif name == "v":
                if extra is None:
                    raise ValueError("output 'v' requested without extra=(CD, Wv)")
                C, D = self._blocks(as_matrix(extra[0]))
                W = dense(extra[1])
            else:
                raise ValueError(f"unknown output {name!r}")
            Cs.append(C)
            Ds.append(D)
            Ws.append(W)
        return DescriptorSystem(self.M, A, B, np.vstack(Cs), np.vstack(Ds), self.Wu,
                                block_diag(*Ws))


@dataclass(eq=False)
class EnergyLedger:
    grid: TimeGrid
    stored: np.ndarray        # N+1 node values
    supplied: np.ndarray      # N interval contributions
    dissipated: np.ndarray    # N interval contributions

    def residuals(self) -> np.ndarray:
        """Per-node ``supplied_cum - (stored - stored_0) - dissipated_cum``."""
        sup = np.concatenate([[0.0], np.cumsum(self.supplied)])
        dis = np.concatenate([[0.0], np.cumsum(self.dissipated)])
        return sup - (self.stored - self.stored[0]) - dis

    def total_residual(self) -> float:
        return float(abs(self.residuals()[-1]))

    def scale(self) -> float:
        return float(max(np.sum(np.abs(self.supplied)), np.max(np.abs(self.stored)),
                         np.sum(self.dissipated), 1e-300))

    def write_csv(self, path) -> None:
        sup = np.concatenate([[0.0], np.cumsum(self.supplied)])
        dis = np.concatenate([[0.0], np.cumsum(self.dissipated)])
        res = self.residuals()
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "stored", "supplied_cum", "dissipated_cum", "balance_residual"])
            for i, t in enumerate(self.grid.nodes()):
                w.writerow([repr(float(v)) for v in (t, self.stored[i], sup[i], dis[i], res[i])])


def energy_ledger(ph: PHNode, x0, u: IntervalTrajectory,
                  scheme: Scheme = Scheme.ImplicitMidpoint) -> EnergyLedger:
    """Simulate once, emitting ``y`` and ``w`` at the scheme's stages."""
    sys = ph.descriptor(("y", "w"))
    X, Y = simulate_forward(sys, x0, u, scheme)
    m = ph.m
    y, w = Y.values[:, :m], Y.values[:, m:]
    dt = u.grid.dt
    E = ph.energy_matrix()
    stored = 0.5 * np.einsum("ij,ij->i", X.values, (E @ X.values.T).T)
    supplied = dt * np.einsum("ij,ij->i", y, u.values @ dense(ph.Wu).T)
    dissipated = dt * 2.0 * np.einsum("ij,ij->i", w, w)
    return EnergyLedger(u.grid, stored, supplied, dissipated)


def energy_balance_residual(ph: PHNode, x0, u: IntervalTrajectory,
                            scheme: Scheme = Scheme.ImplicitMidpoint,
                            relative: bool = False) -> float:
    led = energy_ledger(ph, x0, u, scheme)
    r = led.total_residual()
    return r / led.scale() if relative else r


def energy_optimal_reformulate(ph: PHNode, F: TerminalWeight, grid: TimeGrid,
                               Fc=None, z_c=None, tracking=None):
    """Recast ``int <y,u> + terminal`` as a tracking problem on the dissipation output.

    Returns ``(sys, spec)`` where ``sys`` has output ``w`` (followed by ``v``
    when ``tracking = (CD, Wv, v_ref)`` is given) and ``spec`` stacks the
    terminal term ``F`` over ``sqrt(H)`` measured in the ``M`` product.
    For every control::

        J_spec(u) - 1/2 <x0, H x0> = int <y, u>_Wu + F-term (+ tracking)

    A terminal constraint ``Fc x(T) = z_c`` is unaffected by the reformulation
    and is only checked for consistent shapes here.
    """
    if ph.RS is None:
        raise ValueError("port-Hamiltonian node has no dissipation factor")
    if Fc is not None:
        Fc = dense(Fc)
        z_c = np.zeros(Fc.shape[0]) if z_c is None else np.asarray(z_c, float).reshape(-1)
        if Fc.shape != (z_c.size, ph.n):
            raise ValueError(f"Fc shape {Fc.shape} does not match z_c/state dimensions")
    if tracking is None:
        sys = ph.descriptor(("w",))
        y_ref = IntervalTrajectory.zeros(grid, sys.p)
    else:
        CD, Wv, v_ref = tracking
        sys = ph.descriptor(("w", "v"), extra=(CD, Wv))
        y_ref = IntervalTrajectory(
            grid, np.hstack([np.zeros((grid.N, ph.RS.shape[0])), v_ref.values]))
    root = TerminalWeight(sym_sqrt(ph.H), np.zeros(ph.n), 1.0, dense(ph.M))
    terminal = F.stack(root) if F.dim else root
    return sys, CostSpec(y_ref, 0.0, terminal)


def supplied_energy_cost(ph: PHNode, F: TerminalWeight, x0, u: IntervalTrajectory,
                         scheme: Scheme = Scheme.ImplicitMidpoint) -> float:
    """Direct evaluation of ``int <y, u>_Wu + F-term`` (independent of the reformulation)."""
    sys = ph.descriptor(("y",))
    X, Y = simulate_forward(sys, x0, u, scheme)
    dt = u.grid.dt
    val = dt * float(np.sum(Y.values * (u.values @ dense(ph.Wu).T)))
    return val + (F.value(X.final) if F.dim else 0.0)
