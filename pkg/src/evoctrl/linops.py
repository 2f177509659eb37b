"""Matrix helpers and the descriptor-system representation.

A :class:`DescriptorSystem` is the finite-dimensional stand-in for a system
node after spatial discretization::

    M x'(t) = A x(t) + B u(t),    y(t) = C x(t) + D u(t)

The state space carries the inner product ``<x, z>_M = x^T M z``; input and
output spaces carry ``Wu`` and ``Wy``.  ``A x + B u`` is a functional on the
state space (it lives on the ``M``-side of the descriptor equation), so it is
paired with states through the plain dot product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.linalg import lapack

SYM_TOL = 1e-12


class SPDError(ValueError):
    """Raised when a matrix that must be symmetric positive definite is not."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


def is_sparse(a) -> bool:
    return sp.issparse(a)


def as_matrix(a):
    """Return ``a`` as a 2-D float ndarray or a CSR sparse matrix."""
    if sp.issparse(a):
        out = sp.csr_matrix(a, dtype=float)
        out.sort_indices()
        out.sum_duplicates()
        return out
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {arr.shape}")
    return arr


def dense(a) -> np.ndarray:
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)


def max_abs(a) -> float:
    if sp.issparse(a):
        return float(abs(a).max()) if a.nnz else 0.0
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def symmetry_defect(a) -> float:
    """Return ``||a - a^T||_max``."""
    return max_abs(a - a.T)


def check_symmetric(a, name: str = "matrix") -> None:
    scale = max_abs(a)
    if symmetry_defect(a) > SYM_TOL * max(scale, 1e-300):
        raise SPDError(f"{name} is not symmetric (defect {symmetry_defect(a):.3e})")


def cholesky_factor(a, name: str = "matrix") -> np.ndarray:
    """Upper Cholesky factor of a dense copy of ``a``.

    Raises :class:`SPDError` carrying the 1-based index of the failing pivot.
    """
    check_symmetric(a, name)
    c, info = lapack.dpotrf(dense(a), lower=0, clean=1)
    if info > 0:
        raise SPDError(
            f"{name} is not positive definite: Cholesky breakdown at pivot {info}",
            pivot=int(info),
        )
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return c


def solve_spd(mtx, rhs) -> np.ndarray:
    """Solve ``mtx @ x = rhs`` for symmetric positive definite ``mtx``."""
    c = cholesky_factor(mtx, "system matrix")
    return scipy.linalg.cho_solve((c, False), np.asarray(rhs, dtype=float))


class SPDSolver:
    """Reusable solver for a fixed SPD matrix (sparse LU or dense Cholesky)."""

    def __init__(self, mtx, name: str = "matrix"):
        self.n = mtx.shape[0]
        if sp.issparse(mtx):
            check_symmetric(mtx, name)
            # the SPD test itself needs a factorization; keep it cheap for
            # the moderate sizes used here
            if self.n <= 4000:
                cholesky_factor(mtx, name)
            self._lu = sp.linalg.splu(sp.csc_matrix(mtx))
            self._chol = None
        else:
            self._chol = cholesky_factor(mtx, name)
            self._lu = None

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self._lu is not None:
            return self._lu.solve(rhs)
        return scipy.linalg.cho_solve((self._chol, False), rhs)


def inverse_spd(mtx, name: str = "matrix") -> np.ndarray:
    c = cholesky_factor(mtx, name)
    return scipy.linalg.cho_solve((c, False), np.eye(mtx.shape[0]))


def sym_sqrt(mtx) -> np.ndarray:
    """Symmetric square root of a symmetric positive semidefinite matrix."""
    if sp.issparse(mtx):
        diag = mtx.diagonal()
        if (mtx - sp.diags(diag)).nnz == 0 or max_abs(mtx - sp.diags(diag)) == 0.0:
            return sp.diags(np.sqrt(np.clip(diag, 0.0, None))).tocsr()
    a = dense(mtx)
    if np.count_nonzero(a - np.diag(np.diag(a))) == 0:
        return np.diag(np.sqrt(np.clip(np.diag(a), 0.0, None)))
    lam, v = np.linalg.eigh(0.5 * (a + a.T))
    return (v * np.sqrt(np.clip(lam, 0.0, None))) @ v.T


def block_diag(*blocks):
    if any(sp.issparse(b) for b in blocks):
        return sp.block_diag(blocks, format="csr")
    return scipy.linalg.block_diag(*blocks)


def vstack(blocks):
    if any(sp.issparse(b) for b in blocks):
        return sp.vstack(blocks, format="csr")
    return np.vstack(blocks)


def write_mtx(path, mtx) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(mtx) if sp.issparse(mtx) else dense(mtx),
                     precision=17)


def read_mtx(path):
    out = scipy.io.mmread(str(path))
    return as_matrix(out)


@dataclass(frozen=True, eq=False)
class TerminalWeight:
    """Terminal term ``(scale/2) ||F x(T) - z_f||^2_weight``.

    ``weight`` is the Gram matrix of the terminal space (identity when None);
    FEM problems use it to measure ``L^2`` distances honestly.
    """

    F: np.ndarray
    z_f: np.ndarray
    scale: float = 1.0
    weight: np.ndarray | None = None

    def __post_init__(self):
        F = as_matrix(self.F)
        z = np.asarray(self.z_f, dtype=float).reshape(-1)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "z_f", z)
        if F.shape[0] != z.size:
            raise ValueError(f"F has {F.shape[0]} rows but z_f has length {z.size}")
        if not self.scale >= 0.0:
            raise ValueError(f"terminal scale must be nonnegative, got {self.scale}")
        if self.weight is not None:
            W = as_matrix(self.weight)
            if W.shape != (z.size, z.size):
                raise ValueError(f"weight shape {W.shape} does not match z_f length {z.size}")
            check_symmetric(W, "terminal weight")
            object.__setattr__(self, "weight", W)

    @classmethod
    def none(cls, n: int) -> "TerminalWeight":
        return cls(np.zeros((0, n)), np.zeros(0), 0.0)

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    def gram(self):
        return np.eye(self.dim) if self.weight is None else self.weight

    def residual(self, x) -> np.ndarray:
        return self.F @ x - self.z_f

    def value(self, x) -> float:
        r = self.residual(x)
        return 0.5 * self.scale * float(r @ (self.gram() @ r))

    def dual(self, x) -> np.ndarray:
        """Derivative of :meth:`value` with respect to ``x`` (a functional)."""
        r = self.residual(x)
        return self.scale * (self.F.T @ (self.gram() @ r))

    def stack(self, other: "TerminalWeight") -> "TerminalWeight":
        """Concatenate two terminal terms into one with scale 1."""
        blocks = [t for t in (self, other) if t.dim > 0 and t.scale > 0]
        if not blocks:
            return TerminalWeight.none(self.F.shape[1])
        F = vstack([t.F for t in blocks])
        z = np.concatenate([t.z_f for t in blocks])
        W = block_diag(*[t.scale * t.gram() for t in blocks])
        return TerminalWeight(F, z, 1.0, W)


@dataclass(frozen=True, eq=False)
class DescriptorSystem:
    """``M x' = A x + B u``, ``y = C x + D u`` with input/output weights."""

    M: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Wu: np.ndarray | None = None
    Wy: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("M", "A", "B", "C", "D"):
            object.__setattr__(self, name, as_matrix(getattr(self, name)))
        n = self.M.shape[0]
        m = self.B.shape[1]
        p = self.C.shape[0]
        if self.Wu is None:
            object.__setattr__(self, "Wu", np.eye(m))
        if self.Wy is None:
            object.__setattr__(self, "Wy", np.eye(p))
        object.__setattr__(self, "Wu", as_matrix(self.Wu))
        object.__setattr__(self, "Wy", as_matrix(self.Wy))
        expected = {
            "M": (n, n), "A": (n, n), "B": (n, m), "C": (p, n),
            "D": (p, m), "Wu": (m, m), "Wy": (p, p),
        }
        if n == 0:
            raise ValueError("state dimension must be positive")
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"dimension mismatch: {name} has shape {got}, expected {shape}")
        self._cache["M"] = SPDSolver(self.M, "M")
        for name in ("Wu", "Wy"):
            self._cache[name] = cholesky_factor(getattr(self, name), name)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def solve_mass(self, rhs) -> np.ndarray:
        return self._cache["M"].solve(rhs)

    def solve_wu(self, rhs) -> np.ndarray:
        return scipy.linalg.cho_solve((self._cache["Wu"], False), np.asarray(rhs, float))

    def solve_wy(self, rhs) -> np.ndarray:
        return scipy.linalg.cho_solve((self._cache["Wy"], False), np.asarray(rhs, float))

    def replace(self, **changes) -> "DescriptorSystem":
        kw = {k: getattr(self, k) for k in ("M", "A", "B", "C", "D", "Wu", "Wy")}
        kw.update(changes)
        return DescriptorSystem(**kw)

    def generator(self, x, u):
        """Apply the continuous-time node: ``(M^-1 (A x + B u), C x + D u)``."""
        return self.solve_mass(self.A @ x + self.B @ u), self.C @ x + self.D @ u

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in ("M", "A", "B", "C", "D", "Wu", "Wy"):
            write_mtx(directory / f"{name}.mtx", getattr(self, name))

    @classmethod
    def load(cls, directory) -> "DescriptorSystem":
        directory = Path(directory)
        kw = {}
        for name in ("M", "A", "B", "C", "D", "Wu", "Wy"):
            path = directory / f"{name}.mtx"
            if path.exists():
                kw[name] = read_mtx(path)
            elif name in ("Wu", "Wy"):
                kw[name] = None
            else:
                raise FileNotFoundError(path)
        return cls(**kw)


def adjoint_system(sys: DescriptorSystem) -> DescriptorSystem:
    """Adjoint node with respect to the ``M``, ``Wu``, ``Wy`` inner products.

    For all ``(x, u, mu, yd)``::

        (A x + B u)^T mu + <C x + D u, yd>_Wy
            = x^T (A^T mu + C^T Wy yd) + <u, Wu^-1 (B^T mu + D^T Wy yd)>_Wu

    so the adjoint has ``(M^T, A^T, C^T Wy, Wu^-1 B^T, Wu^-1 D^T Wy)`` with the
    roles of the input and output weights exchanged.
    """
    cached = sys._cache.get("adjoint")
    if cached is not None:
        return cached
    Bt = dense(sys.B).T
    Dt = dense(sys.D).T
    Wy = sys.Wy
    Bd = sys.C.T @ Wy
    Cd = sys.solve_wu(Bt)
    Dd = sys.solve_wu(Dt @ dense(Wy))
    adj = DescriptorSystem(
        M=sys.M.T, A=sys.A.T, B=Bd, C=Cd, D=Dd, Wu=sys.Wy, Wy=sys.Wu
    )
    sys._cache["adjoint"] = adj
    adj._cache["adjoint"] = sys
    return adj


def weighted_adjoint_defect(sys: DescriptorSystem, x, u, mu, yd) -> float:
    """Residual of the weighted duality between ``sys`` and its adjoint."""
    adj = adjoint_system(sys)
    lhs = float((sys.A @ x + sys.B @ u) @ mu + (sys.C @ x + sys.D @ u) @ (sys.Wy @ yd))
    rhs = float(x @ (adj.A @ mu + adj.B @ yd) + u @ (sys.Wu @ (adj.C @ mu + adj.D @ yd)))
    return abs(lhs - rhs)
