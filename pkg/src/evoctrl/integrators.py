"""Forward and adjoint time stepping with exact discrete duality.

All three schemes are theta-methods::

    M (x_{i+1} - x_i) / dt = A s_i + B u_i,   s_i = (1 - theta) x_i + theta x_{i+1}
    y_i = C s_i + D u_i

Transposing one step of this recursion (with the ``M``, ``Wu``, ``Wy`` inner
products) gives the same theta-step applied to :func:`adjoint_system`, run
forward in reflected time.  Hence ``simulate_adjoint`` is literally
``simulate_forward`` on the adjoint node, and the duality identity

    <x_N, mu_0>_M + <y, R yd>_Wy = <x_0, mu_N>_M + <u, R ud>_Wu

holds to rounding error for every scheme (``R`` is time reflection).
"""

from __future__ import annotations

import enum
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .linops import DescriptorSystem, adjoint_system, dense
from .timegrid import IntervalTrajectory, NodeTrajectory, TimeGrid, l2_inner, reflect


class Scheme(enum.Enum):
    ExplicitEuler = 0.0
    ImplicitEuler = 1.0
    ImplicitMidpoint = 0.5

    @property
    def theta(self) -> float:
        return self.value

    @classmethod
    def parse(cls, name) -> "Scheme":
        if isinstance(name, Scheme):
            return name
        key = str(name).replace("_", "").replace("-", "").lower()
        for s in cls:
            if s.name.lower() == key:
                return s
        aliases = {"midpoint": cls.ImplicitMidpoint, "ee": cls.ExplicitEuler,
                   "ie": cls.ImplicitEuler, "explicit": cls.ExplicitEuler,
                   "implicit": cls.ImplicitEuler}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown scheme {name!r}")


class SingularStepError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class StabilityWarning(UserWarning):
    pass


class Stepper:
    """Factorized theta-step for one ``(sys, dt, scheme)``."""

    def __init__(self, sys: DescriptorSystem, dt: float, scheme: Scheme):
        self.sys, self.dt, self.scheme = sys, dt, scheme
        th = scheme.theta
        self.explicit = th == 0.0
        # left: M - dt*theta*A, right: M + dt*(1-theta)*A
        lhs = sys.M - dt * th * sys.A
        self.rhs_mat = sys.M + dt * (1.0 - th) * sys.A
        try:
            if sp.issparse(lhs):
                self._lu = sp.linalg.splu(sp.csc_matrix(lhs))
                self._solve = self._lu.solve
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                    lu = scipy.linalg.lu_factor(lhs, check_finite=True)
                if np.any(np.diag(lu[0]) == 0.0):
                    raise RuntimeError("exactly singular")
                self._solve = lambda r: scipy.linalg.lu_solve(lu, r)
        except (RuntimeError, scipy.linalg.LinAlgWarning, np.linalg.LinAlgError) as exc:
            raise SingularStepError(
                f"step matrix M - dt*theta*A is singular (scheme {scheme.name}, dt={dt}): {exc}",
                step=0,
            ) from exc
        if self.explicit:
            self._check_explicit_stability()

    def _check_explicit_stability(self) -> None:
        sys = self.sys
        n = sys.n
        if n <= 400:
            MinvA = sys.solve_mass(dense(sys.A))
            rho = float(np.max(np.abs(np.linalg.eigvals(self.dt * MinvA))))
        else:
            rng = np.random.default_rng(0)
            v = rng.standard_normal(n)
            rho = 0.0
            for _ in range(30):
                w = self.dt * sys.solve_mass(sys.A @ v)
                rho = float(np.linalg.norm(w) / np.linalg.norm(v))
                v = w / np.linalg.norm(w)
        if rho > 2.0:
            warnings.warn(
                f"explicit Euler with dt*|M^-1 A| ~ {rho:.3g} > 2 is likely unstable",
                StabilityWarning, stacklevel=4,
            )

    def step(self, x, Bu):
        return self._solve(self.rhs_mat @ x + self.dt * Bu)


def get_stepper(sys: DescriptorSystem, dt: float, scheme: Scheme) -> Stepper:
    key = ("stepper", float(dt), scheme)
    st = sys._cache.get(key)
    if st is None:
        st = Stepper(sys, dt, scheme)
        sys._cache[key] = st
    return st


def _controls(u, grid: TimeGrid | None, m: int) -> IntervalTrajectory:
    if not isinstance(u, IntervalTrajectory):
        raise TypeError("controls must be an IntervalTrajectory")
    if u.width != m:
        raise ValueError(f"control width {u.width} does not match system input dimension {m}")
    return u


def simulate_forward(sys: DescriptorSystem, x0, u: IntervalTrajectory,
                     scheme: Scheme = Scheme.ImplicitMidpoint):
    """Integrate the descriptor system; returns ``(states, outputs)``."""
    scheme = Scheme.parse(scheme)
    _controls(u, None, sys.m)
    grid = u.grid
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != sys.n:
        raise ValueError(f"initial state has length {x0.size}, expected {sys.n}")
    st = get_stepper(sys, grid.dt, scheme)
    th = scheme.theta
    N = grid.N
    X = np.empty((N + 1, sys.n))
    X[0] = x0
    BU = (sys.B @ u.values.T).T if sys.m else np.zeros((N, sys.n))
    for i in range(N):
        X[i + 1] = st.step(X[i], BU[i])
    S = stage_states(X, th)
    Y = (sys.C @ S.T).T + u.values @ dense(sys.D).T
    return NodeTrajectory(grid, X), IntervalTrajectory(grid, Y)


def stage_states(X: np.ndarray, theta: float) -> np.ndarray:
    return (1.0 - theta) * X[:-1] + theta * X[1:]


def simulate_adjoint(sys: DescriptorSystem, mu_T, source: IntervalTrajectory,
                     scheme: Scheme = Scheme.ImplicitMidpoint):
    """Run the adjoint node of ``sys`` from ``mu_T`` driven by ``source``.

    Time runs in the adjoint's own direction: ``states.values[0] == mu_T`` is
    attached to primal time ``T`` and ``source``/``u_d`` samples are indexed in
    reflected time.  ``u_d`` is returned as the Wu-Riesz representative, i.e.
    ``Wu^-1 (B^T mu_stage + D^T Wy source)``.
    """
    adj = adjoint_system(sys)
    if source.width != sys.p:
        raise ValueError(f"source width {source.width} does not match output dimension {sys.p}")
    return simulate_forward(adj, mu_T, source, scheme)


def duality_residual(sys: DescriptorSystem, x0, u: IntervalTrajectory, mu_T,
                     y_d: IntervalTrajectory, scheme: Scheme = Scheme.ImplicitMidpoint,
                     relative: bool = True, adjoint: DescriptorSystem | None = None) -> float:
    """Discrete integration-by-parts residual between ``sys`` and its adjoint.

    ``adjoint`` overrides the adjoint node (used to inject faults in checks).
    """
    scheme = Scheme.parse(scheme)
    X, Y = simulate_forward(sys, x0, u, scheme)
    adj = adjoint_system(sys) if adjoint is None else adjoint
    Mu, Ud = simulate_forward(adj, mu_T, y_d, scheme)
    x0 = np.asarray(x0, dtype=float)
    mu_T = np.asarray(mu_T, dtype=float)
    terms = [
        float(X.final @ (sys.M @ mu_T)),
        l2_inner(Y, reflect(y_d), sys.Wy),
        -float(x0 @ (sys.M @ Mu.final)),
        -l2_inner(u, reflect(Ud), sys.Wu),
    ]
    res = abs(sum(terms))
    if not relative:
        return res
    scale = sum(abs(t) for t in terms)
    return res / scale if scale > 0 else res
