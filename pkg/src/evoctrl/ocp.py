"""Linear-quadratic optimal control on descriptor systems.

The cost of an input ``u`` is::

    J(u) = 1/2 ||y - y_ref||^2_Wy + alpha/2 ||u||^2_Wu + scale/2 ||F x(T) - z_f||^2_Wz

with the discrete ``L2`` quadrature of :func:`evoctrl.timegrid.l2_inner`.
Gradients are Riesz representatives in the ``Wu``-weighted ``L2`` product and
come from one forward and one adjoint pass; they are exact for the discrete
cost, so the optimality system of the discrete problem holds to rounding.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .integrators import Scheme, get_stepper, simulate_forward
from .linops import DescriptorSystem, TerminalWeight, adjoint_system, block_diag, dense
from .timegrid import IntervalTrajectory, NodeTrajectory, l2_inner, l2_norm, reflect

log = logging.getLogger(__name__)

ARMIJO_STEP = 1.0
ARMIJO_SHRINK = 0.5
ARMIJO_SIGMA = 1e-4
STALL_LIMIT = 10  # iterations improving neither cost nor best stationarity
DENSE_HESSIAN_LIMIT = 2500


@dataclass(frozen=True, eq=False)
class CostSpec:
    y_ref: IntervalTrajectory
    alpha: float = 0.0
    terminal: TerminalWeight | None = None

    def __post_init__(self):
        if not self.alpha >= 0.0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")

    @property
    def grid(self):
        return self.y_ref.grid

    def terminal_for(self, n: int) -> TerminalWeight:
        return TerminalWeight.none(n) if self.terminal is None else self.terminal

    def homogeneous(self, n: int) -> "CostSpec":
        """Same quadratic form with zero reference and zero target."""
        t = self.terminal_for(n)
        return CostSpec(
            IntervalTrajectory.zeros(self.grid, self.y_ref.width), self.alpha,
            TerminalWeight(t.F, np.zeros(t.dim), t.scale, t.weight),
        )


@dataclass(frozen=True)
class Unconstrained:
    def project(self, values: np.ndarray) -> np.ndarray:
        return values

    def sample(self, rng, u: np.ndarray) -> np.ndarray:
        return u + rng.standard_normal(u.shape)


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if np.any(lo > hi):
            raise ValueError("box bounds need lo <= hi componentwise")

    def project(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.lo, self.hi)

    def sample(self, rng, u: np.ndarray) -> np.ndarray:
        lo = np.broadcast_to(self.lo, u.shape)
        hi = np.broadcast_to(self.hi, u.shape)
        return lo + (hi - lo) * rng.random(u.shape)

    def contains(self, values: np.ndarray) -> bool:
        return bool(np.all(values >= self.lo) and np.all(values <= self.hi))


AdmissibleSet = Unconstrained | Box


def project(adm: AdmissibleSet, u: IntervalTrajectory) -> IntervalTrajectory:
    return IntervalTrajectory(u.grid, adm.project(u.values))


@dataclass(eq=False)
class OptResult:
    u_opt: IntervalTrajectory
    x: NodeTrajectory
    y: IntervalTrajectory
    cost_history: list = field(default_factory=list)
    stationarity: float = np.inf
    multiplier: np.ndarray | None = None
    iterations: int = 0
    converged: bool = False
    stationarity_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    message: str = ""

    @property
    def cost(self) -> float:
        return self.cost_history[-1]

    def write_convergence(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "cost", "stationarity", "step"])
            for k, c in enumerate(self.cost_history):
                st = self.stationarity_history[k] if k < len(self.stationarity_history) else ""
                sz = self.step_history[k] if k < len(self.step_history) else ""
                w.writerow([k, repr(float(c)), "" if st == "" else repr(float(st)),
                            "" if sz == "" else repr(float(sz))])


# ---------------------------------------------------------------- evaluation


@dataclass(eq=False)
class _Eval:
    u: IntervalTrajectory
    X: NodeTrajectory
    Y: IntervalTrajectory
    J: float


def _evaluate(sys, spec, x0, u, scheme) -> _Eval:
    X, Y = simulate_forward(sys, x0, u, scheme)
    e = Y - spec.y_ref
    term = spec.terminal_for(sys.n)
    J = 0.5 * l2_inner(e, e, sys.Wy) + 0.5 * spec.alpha * l2_inner(u, u, sys.Wu)
    J += term.value(X.final)
    return _Eval(u, X, Y, J)


def _gradient_from(sys, spec, ev: _Eval, scheme) -> IntervalTrajectory:
    term = spec.terminal_for(sys.n)
    mu0 = sys.solve_mass(term.dual(ev.X.final)) if term.dim else np.zeros(sys.n)
    _, Ud = simulate_forward(adjoint_system(sys), mu0, reflect(ev.Y - spec.y_ref), scheme)
    return reflect(Ud) + spec.alpha * ev.u


def cost(sys: DescriptorSystem, spec: CostSpec, x0, u: IntervalTrajectory,
         scheme: Scheme = Scheme.ImplicitMidpoint) -> float:
    return _evaluate(sys, spec, x0, u, Scheme.parse(scheme)).J


def gradient(sys: DescriptorSystem, spec: CostSpec, x0, u: IntervalTrajectory,
             scheme: Scheme = Scheme.ImplicitMidpoint) -> IntervalTrajectory:
    """Wu-Riesz gradient ``alpha u + J*(F x(T) - z_f, y - y_ref)``."""
    scheme = Scheme.parse(scheme)
    return _gradient_from(sys, spec, _evaluate(sys, spec, x0, u, scheme), scheme)


def coordinate_gradient(sys: DescriptorSystem, g: IntervalTrajectory) -> np.ndarray:
    """Per-sample ``Wu g_i``: the partial derivatives of J divided by ``dt``."""
    return g.values @ dense(sys.Wu).T


def extend_with_input_output(sys: DescriptorSystem, spec: CostSpec):
    """Fold the input penalty into an extra output ``sqrt(alpha) u``.

    Returns ``(sys_ext, spec_ext)`` with ``spec_ext.alpha == 0`` and the same
    cost for every input.
    """
    a = np.sqrt(spec.alpha)
    m = sys.m
    C = sp.vstack([sp.csr_matrix(sys.C), sp.csr_matrix((m, sys.n))]).tocsr() \
        if sp.issparse(sys.C) else np.vstack([sys.C, np.zeros((m, sys.n))])
    D = np.vstack([dense(sys.D), a * np.eye(m)])
    Wy = block_diag(dense(sys.Wy), dense(sys.Wu))
    ext = sys.replace(C=C, D=D, Wy=Wy)
    y_ref = IntervalTrajectory(spec.grid, np.hstack([spec.y_ref.values, np.zeros((spec.grid.N, m))]))
    return ext, CostSpec(y_ref, 0.0, spec.terminal)


# ------------------------------------------------------------------- dense Hessian


def _batched_forward(sys: DescriptorSystem, X0: np.ndarray, U: np.ndarray, grid, scheme):
    """Simulate ``K`` trajectories at once; ``X0`` is ``n x K``, ``U`` is ``N x m x K``.

    Returns the final states ``n x K`` and the outputs ``N x p x K``.
    """
    st = get_stepper(sys, grid.dt, scheme)
    th = scheme.theta
    C = sys.C
    Dm = dense(sys.D)
    x = X0
    Y = np.empty((grid.N, sys.p, X0.shape[1]))
    for i in range(grid.N):
        x_new = st.step(x, sys.B @ U[i])
        Y[i] = C @ ((1.0 - th) * x + th * x_new) + Dm @ U[i]
        x = x_new
    return x, Y


def hessian_matrix(sys: DescriptorSystem, spec: CostSpec,
                   scheme: Scheme = Scheme.ImplicitMidpoint, chunk: int = 256) -> np.ndarray:
    """Dense Hessian of ``J`` in control coordinates.

    ``J(u + s) = J(u) + dt (gc . s + 1/2 s . Q s)`` with ``s`` flattened
    row-major.  Columns come from batched forward/adjoint passes.
    """
    scheme = Scheme.parse(scheme)
    grid = spec.grid
    N, m, n = grid.N, sys.m, sys.n
    adj = adjoint_system(sys)
    term = spec.terminal_for(n)
    Wu = dense(sys.Wu)
    size = N * m
    Q = np.empty((size, size))
    for start in range(0, size, chunk):
        cols = np.arange(start, min(start + chunk, size))
        K = len(cols)
        U = np.zeros((N, m, K))
        U[cols // m, cols % m, np.arange(K)] = 1.0
        xN, Y = _batched_forward(sys, np.zeros((n, K)), U, grid, scheme)
        if term.dim:
            mu0 = sys.solve_mass(term.scale * (term.F.T @ (term.gram() @ (term.F @ xN))))
        else:
            mu0 = np.zeros((n, K))
        _, Ud = _batched_forward(adj, mu0, Y[::-1], grid, scheme)
        G = Ud[::-1] + spec.alpha * U
        Q[:, cols] = np.einsum("ab,nbk->nak", Wu, G).reshape(size, K)
    return 0.5 * (Q + Q.T)


# ------------------------------------------------------------------- solvers


def solve_unconstrained_cg(sys: DescriptorSystem, spec: CostSpec, x0,
                           scheme: Scheme = Scheme.ImplicitMidpoint, tol: float = 1e-10,
                           max_iter: int = 500, u_init: IntervalTrajectory | None = None
                           ) -> OptResult:
    """Conjugate gradients on ``alpha u + J*J u = rhs`` in the Wu-weighted product."""
    scheme = Scheme.parse(scheme)
    grid = spec.grid
    term = spec.terminal_for(sys.n)
    if spec.alpha == 0.0 and term.scale == 0.0:
        log.warning("alpha = 0 and no terminal weight: the normal operator may be singular")
    hom = spec.homogeneous(sys.n)
    zero_x = np.zeros(sys.n)

    def hess(p: IntervalTrajectory) -> IntervalTrajectory:
        return _gradient_from(sys, hom, _evaluate(sys, hom, zero_x, p, scheme), scheme)

    Wu = sys.Wu
    u = IntervalTrajectory.zeros(grid, sys.m) if u_init is None else u_init
    ev0 = _evaluate(sys, spec, x0, IntervalTrajectory.zeros(grid, sys.m), scheme)
    g0norm = l2_norm(_gradient_from(sys, spec, ev0, scheme), Wu)
    ev = ev0 if u_init is None else _evaluate(sys, spec, x0, u, scheme)
    J = ev.J
    r = -_gradient_from(sys, spec, ev, scheme)
    p = r
    rr = l2_inner(r, r, Wu)
    target = tol * (1.0 + g0norm)
    res = OptResult(u, ev.X, ev.Y, [J], np.sqrt(rr), stationarity_history=[np.sqrt(rr)],
                    step_history=[0.0])
    k = 0
    while np.sqrt(rr) > target and k < max_iter:
        Qp = hess(p)
        pQp = l2_inner(p, Qp, Wu)
        if pQp <= 0.0:
            res.message = f"nonpositive curvature {pQp:.3e}"
            break
        a = rr / pQp
        u = u + a * p
        J = J - a * l2_inner(r, p, Wu) + 0.5 * a * a * pQp
        r = r - a * Qp
        rr_new = l2_inner(r, r, Wu)
        p = r + (rr_new / rr) * p
        rr = rr_new
        k += 1
        res.cost_history.append(J)
        res.stationarity_history.append(np.sqrt(rr))
        res.step_history.append(a)
    ev = _evaluate(sys, spec, x0, u, scheme)
    g = _gradient_from(sys, spec, ev, scheme)
    res.u_opt, res.x, res.y = u, ev.X, ev.Y
    res.cost_history[-1] = ev.J
    res.stationarity = l2_norm(g, Wu)
    res.iterations = k
    res.converged = res.stationarity <= target
    if not res.converged and not res.message:
        res.message = f"max_iter={max_iter} reached, |grad|={res.stationarity:.3e} > {target:.3e}"
    return res


def _pg_metric(sys: DescriptorSystem) -> np.ndarray:
    """Diagonal metric for the projection step (lumped Wu)."""
    W = dense(sys.Wu)
    d = W.sum(axis=1)
    if np.any(d <= 0):
        d = np.diag(W).copy()
    return d


def _pg_stationarity(adm, u, gc, d, dt, s0=ARMIJO_STEP) -> float:
    step = u.values - adm.project(u.values - s0 * gc / d)
    return float(np.sqrt(dt * np.sum(step * step * d))) / s0


def _armijo_arc(sys, spec, x0, adm, scheme, ev, gc, direction, s, max_halvings=60):
    """Backtrack along ``P(u + s direction)`` until sufficient decrease holds."""
    grid = ev.u.grid
    for _ in range(max_halvings):
        cand = adm.project(ev.u.values + s * direction)
        du = cand - ev.u.values
        if not np.any(du):
            return None, s
        decrease = grid.dt * float(np.sum(gc * du))
        if decrease < 0.0:
            ev_c = _evaluate(sys, spec, x0, IntervalTrajectory(grid, cand), scheme)
            if ev_c.J <= ev.J + ARMIJO_SIGMA * decrease:
                return ev_c, s
        s *= ARMIJO_SHRINK
    return None, s


def _free_mask(adm, u: np.ndarray, gc: np.ndarray) -> np.ndarray:
    """Variables not held at a bound by the gradient."""
    if not isinstance(adm, Box):
        return np.ones(u.shape, dtype=bool)
    lo = np.broadcast_to(adm.lo, u.shape)
    hi = np.broadcast_to(adm.hi, u.shape)
    at_lo = (u <= lo) & (gc >= 0.0)
    at_hi = (u >= hi) & (gc <= 0.0)
    return ~(at_lo | at_hi)


def _subspace_direction(sys, hom, adm, scheme, u, gc, d, max_cg, eta=1e-2):
    """Preconditioned CG on the quadratic model restricted to the free variables.

    Works in coordinates, where the model is ``gc.s + 1/2 s.(Wu Hess s)``
    (the common factor ``dt`` drops out).  Stops early once ``u + s`` leaves
    the admissible set.
    """
    grid = hom.grid
    Wu = dense(sys.Wu)
    zero_x = np.zeros(sys.n)
    free = _free_mask(adm, u, gc)
    if not np.any(free):
        return None
    r = -np.where(free, gc, 0.0)
    z = r / d
    p = z.copy()
    rz = float(np.sum(r * z))
    r0 = np.sqrt(float(np.sum(r * r)))
    s = np.zeros_like(u)
    for _ in range(max_cg):
        Hp_r = _gradient_from(sys, hom, _evaluate(sys, hom, zero_x, IntervalTrajectory(grid, p),
                                                  scheme), scheme)
        Hp = np.where(free, Hp_r.values @ Wu.T, 0.0)
        pHp = float(np.sum(p * Hp))
        if pHp <= 0.0:
            break
        a = rz / pHp
        s = s + a * p
        r = r - a * Hp
        if np.sqrt(float(np.sum(r * r))) <= eta * r0:
            break
        if isinstance(adm, Box) and not adm.contains(u + s):
            break
        z = r / d
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return s if np.any(s) else None


def solve_projected_gradient(sys: DescriptorSystem, spec: CostSpec, x0, adm: AdmissibleSet,
                             scheme: Scheme = Scheme.ImplicitMidpoint, tol: float = 1e-8,
                             max_iter: int = 1000, u_init: IntervalTrajectory | None = None,
                             subspace_cg: int = 50) -> OptResult:
    """Projected gradient with Armijo backtracking along the projection arc.

    The projection step uses trial step 1.0 first and a Barzilai-Borwein
    estimate afterwards.  Unless ``subspace_cg == 0``, each projection step is
    followed by up to ``subspace_cg`` conjugate-gradient iterations on the
    variables not held at a bound, again accepted by an Armijo search along
    the projected path.  Every accepted step decreases the cost.  The solver
    gives up once ``STALL_LIMIT`` consecutive iterations improve neither the
    cost nor the best stationarity (the tolerance is below what rounding in
    the cost allows).
    """
    scheme = Scheme.parse(scheme)
    grid = spec.grid
    dt = grid.dt
    d = _pg_metric(sys)
    hom = spec.homogeneous(sys.n)
    u0 = IntervalTrajectory.zeros(grid, sys.m) if u_init is None else u_init
    u = project(adm, u0)
    ev = _evaluate(sys, spec, x0, u, scheme)
    gc = coordinate_gradient(sys, _gradient_from(sys, spec, ev, scheme))
    stat = _pg_stationarity(adm, u, gc, d, dt)
    res = OptResult(u, ev.X, ev.Y, [ev.J], stat, stationarity_history=[stat], step_history=[0.0])
    s_trial = ARMIJO_STEP
    k = 0
    stalled, best_stat = 0, stat

    def accept(ev_new, step):
        nonlocal ev, gc, stat
        gc = coordinate_gradient(sys, _gradient_from(sys, spec, ev_new, scheme))
        ev = ev_new
        stat = _pg_stationarity(adm, ev.u, gc, d, dt)
        res.cost_history.append(ev.J)
        res.stationarity_history.append(stat)
        res.step_history.append(step)

    while stat > tol and k < max_iter:
        k += 1
        J_start = ev.J
        u_prev, gc_prev = ev.u.values, gc
        ev_new, s = _armijo_arc(sys, spec, x0, adm, scheme, ev, gc, -gc / d, s_trial)
        if ev_new is None:
            res.message = f"line search stalled at iteration {k}"
            break
        accept(ev_new, s)
        du = ev.u.values - u_prev
        curv = float(np.sum(du * (gc - gc_prev)))
        s_trial = float(np.clip(np.sum(du * du * d) / curv, 1e-12, 1e12)) if curv > 0 \
            else min(2.0 * s, 1e12)
        if stat <= tol or not subspace_cg:
            continue
        direction = _subspace_direction(sys, hom, adm, scheme, ev.u.values, gc, d, subspace_cg)
        if direction is not None:
            ev_new, s = _armijo_arc(sys, spec, x0, adm, scheme, ev, gc, direction, 1.0)
            if ev_new is not None:
                accept(ev_new, s)
        stalled = stalled + 1 if ev.J >= J_start and stat >= best_stat else 0
        best_stat = min(best_stat, stat)
        if stalled >= STALL_LIMIT and stat > tol:
            res.message = (f"cost stagnated at rounding level after {k} iterations, "
                           f"stationarity={stat:.3e}")
            break
    res.u_opt, res.x, res.y = ev.u, ev.X, ev.Y
    res.stationarity = stat
    res.iterations = k
    res.converged = stat <= tol
    if not res.converged and not res.message:
        res.message = f"max_iter={max_iter} reached, stationarity={stat:.3e} > {tol:.3e}"
    return res


# ------------------------------------------------------------------- dense box QP


def _bound_arrays(adm, shape):
    if isinstance(adm, Box):
        lo = np.broadcast_to(np.asarray(adm.lo, float), shape).ravel().copy()
        hi = np.broadcast_to(np.asarray(adm.hi, float), shape).ravel().copy()
    else:
        lo = np.full(int(np.prod(shape)), -np.inf)
        hi = np.full(int(np.prod(shape)), np.inf)
    return lo, hi


def _spd_solve(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(K, check_finite=False), rhs,
                                      check_finite=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.lstsq(K, rhs, cond=1e-14, check_finite=False)[0]


def box_qp_interior_point(Q: np.ndarray, c: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                          tol: float = 1e-10, max_iter: int = 100, d: np.ndarray | None = None,
                          weight: float = 1.0):
    """Mehrotra predictor-corrector for ``min 1/2 u.Qu + c.u`` with ``lo <= u <= hi``.

    ``Q`` must be symmetric positive semidefinite.  Bounds may be infinite;
    variables with ``lo == hi`` are eliminated.  Iterates are strictly
    feasible, so the stopping test is the projected-gradient residual
    ``sqrt(weight * sum d (u - P(u - g/d))^2)`` (``d`` defaults to ones)
    rather than the usual complementarity gap: on nearly singular ``Q`` a
    small gap still leaves sizeable gradients on variables close to a bound.
    Returns ``(u, history)`` with ``u`` the iterate of smallest residual and
    ``history`` listing ``(objective, residual)`` per iteration.
    """
    fixed = lo == hi
    u = np.where(fixed, lo, 0.0)
    free = ~fixed
    if not np.any(free):
        return u, []
    Qf = Q[np.ix_(free, free)]
    cf = c[free] + Q[np.ix_(free, fixed)] @ u[fixed]
    l, h = lo[free], hi[free]
    has_l, has_h = np.isfinite(l), np.isfinite(h)
    x = np.where(has_l & has_h, 0.5 * (l + h), np.where(has_l, l + 1.0, np.where(has_h, h - 1.0, 0.0)))
    zl = np.where(has_l, 1.0, 0.0)
    zh = np.where(has_h, 1.0, 0.0)
    df = np.ones(int(free.sum())) if d is None else np.asarray(d, float)[free]
    n_bounds = max(int(has_l.sum() + has_h.sum()), 1)
    history = []
    best, best_res = x, np.inf

    def slacks(x):
        return np.where(has_l, x - l, 1.0), np.where(has_h, h - x, 1.0)

    for _ in range(max_iter):
        sl, sh = slacks(x)
        g = Qf @ x + cf
        res = float(np.sqrt(weight * np.sum(df * (x - np.clip(x - g / df, l, h)) ** 2)))
        history.append((0.5 * float(x @ g) + 0.5 * float(cf @ x), res))
        if res < best_res:
            best, best_res = x, res
        if res <= tol:
            break
        rd = g - zl + zh
        mu = float(np.sum(sl * zl * has_l) + np.sum(sh * zh * has_h)) / n_bounds
        if mu == 0.0:
            break
        K = Qf + np.diag(zl / sl * has_l + zh / sh * has_h)
        cho = None
        try:
            cho = scipy.linalg.cho_factor(K, check_finite=False)
        except np.linalg.LinAlgError:
            pass

        def direction(cl, ch):
            rhs = -rd + np.where(has_l, cl / sl, 0.0) - np.where(has_h, ch / sh, 0.0)
            dx = scipy.linalg.cho_solve(cho, rhs, check_finite=False) if cho is not None \
                else _spd_solve(K, rhs)
            dzl = np.where(has_l, (cl - zl * dx) / sl, 0.0)
            dzh = np.where(has_h, (ch + zh * dx) / sh, 0.0)
            return dx, dzl, dzh

        def max_step(dx, dzl, dzh):
            a = 1.0
            for v, dv in ((sl, dx), (sh, -dx), (zl, dzl), (zh, dzh)):
                neg = dv < 0
                if np.any(neg):
                    a = min(a, float(np.min(-v[neg] / dv[neg])))
            return a

        dx, dzl, dzh = direction(-sl * zl * has_l, -sh * zh * has_h)
        a = max_step(dx, dzl, dzh)
        mu_aff = float(np.sum((sl + a * dx) * (zl + a * dzl) * has_l)
                       + np.sum((sh - a * dx) * (zh + a * dzh) * has_h)) / n_bounds
        sigma = (mu_aff / mu) ** 3
        cl = (sigma * mu - sl * zl - dx * dzl) * has_l
        ch = (sigma * mu - sh * zh + dx * dzh) * has_h
        dx, dzl, dzh = direction(cl, ch)
        a = min(1.0, 0.995 * max_step(dx, dzl, dzh))
        x, zl, zh = x + a * dx, zl + a * dzl, zh + a * dzh
    u[free] = best
    return u, history


def solve_box_qp_dense(sys: DescriptorSystem, spec: CostSpec, x0, adm: AdmissibleSet,
                       scheme: Scheme = Scheme.ImplicitMidpoint, tol: float = 1e-8,
                       max_iter: int = 100, Q: np.ndarray | None = None) -> OptResult:
    """Assemble the Hessian once and solve the box-constrained QP by interior points.

    Meant for problems too ill-conditioned for first-order methods (e.g.
    ``alpha = 0``) whose ``N * m`` is small enough for a dense ``(N m)^2``
    matrix.  ``tol`` applies to the same projected-gradient residual as
    :func:`solve_projected_gradient`; the reported value is recomputed from a
    fresh forward/adjoint pass at the returned control.
    """
    scheme = Scheme.parse(scheme)
    grid = spec.grid
    N, m, dt = grid.N, sys.m, grid.dt
    if Q is None:
        Q = hessian_matrix(sys, spec, scheme)
    ev0 = _evaluate(sys, spec, x0, IntervalTrajectory.zeros(grid, m), scheme)
    c = coordinate_gradient(sys, _gradient_from(sys, spec, ev0, scheme)).ravel()
    lo, hi = _bound_arrays(adm, (N, m))
    d = _pg_metric(sys)
    u_flat, hist = box_qp_interior_point(Q, c, lo, hi, tol=0.5 * tol, max_iter=max_iter,
                                         d=np.tile(d, N), weight=dt)
    u = IntervalTrajectory(grid, u_flat.reshape(N, m))
    ev = _evaluate(sys, spec, x0, u, scheme)
    gc = coordinate_gradient(sys, _gradient_from(sys, spec, ev, scheme))
    stat = _pg_stationarity(adm, u, gc, d, dt)
    res = OptResult(u, ev.X, ev.Y, [ev0.J + dt * obj for obj, _ in hist] + [ev.J], stat,
                    stationarity_history=[r for _, r in hist] + [stat],
                    step_history=[0.0] * (len(hist) + 1))
    res.iterations = len(hist)
    res.converged = stat <= tol
    if not res.converged:
        res.message = (f"stationarity {stat:.3e} > {tol:.3e} after {len(hist)} "
                       "interior-point iterations")
    return res


def stationarity_residual(sys: DescriptorSystem, spec: CostSpec, x0, adm: AdmissibleSet,
                          u: IntervalTrajectory, scheme: Scheme = Scheme.ImplicitMidpoint,
                          directions: int = 100, seed: int = 0):
    """Sampled certificate for the variational inequality at ``u``.

    Returns ``(value, direction)`` with ``value`` the smallest
    ``<grad J(u), u' - u>_Wu`` over ``directions`` uniformly sampled feasible
    ``u'`` (Gaussian perturbations when unconstrained) and the projected
    steepest-descent point.  A certified optimum has ``value >= -tol``.
    """
    scheme = Scheme.parse(scheme)
    rng = np.random.default_rng(seed)
    g = gradient(sys, spec, x0, u, scheme)
    gc = coordinate_gradient(sys, g)
    d = _pg_metric(sys)
    cands = [adm.sample(rng, u.values) for _ in range(directions)]
    cands.append(adm.project(u.values - ARMIJO_STEP * gc / d))
    best, best_dir = np.inf, None
    for c in cands:
        v = IntervalTrajectory(u.grid, c - u.values)
        slope = l2_inner(g, v, sys.Wu)
        if slope < best:
            best, best_dir = slope, v
    return float(best), best_dir


def solve_terminal_constrained(sys: DescriptorSystem, spec: CostSpec, x0, adm: AdmissibleSet,
                               Fc, z_c, scheme: Scheme = Scheme.ImplicitMidpoint,
                               tol: float = 1e-8, max_iter: int = 30, inner_tol: float = 1e-12,
                               inner_max_iter: int = 5000, rho0: float = 1.0) -> OptResult:
    """Augmented Lagrangian for ``Fc x(T) = z_c``.

    Each outer step minimizes ``J + <lam, r> + rho/2 |r|^2`` with
    ``r = Fc x(T) - z_c``; the extra terms are an additional terminal weight.
    ``lam`` is updated by ``rho r``; ``rho`` grows tenfold whenever the
    infeasibility shrinks by less than a factor 4.
    """
    scheme = Scheme.parse(scheme)
    Fc = dense(Fc)
    z_c = np.asarray(z_c, dtype=float).reshape(-1)
    lam = np.zeros(z_c.size)
    rho = rho0
    base = spec.terminal_for(sys.n)
    u = None
    prev = np.inf
    history: list = []
    res = None
    for outer in range(max_iter):
        aug = TerminalWeight(Fc, z_c - lam / rho, rho)
        sub = CostSpec(spec.y_ref, spec.alpha, base.stack(aug))
        if isinstance(adm, Unconstrained):
            res = solve_unconstrained_cg(sys, sub, x0, scheme, inner_tol, inner_max_iter, u_init=u)
        else:
            res = solve_projected_gradient(sys, sub, x0, adm, scheme, inner_tol, inner_max_iter,
                                           u_init=u)
        u = res.u_opt
        r = Fc @ res.x.final - z_c
        infeas = float(np.linalg.norm(r))
        history.append(cost(sys, spec, x0, u, scheme))
        log.debug("AL outer %d: infeasibility %.3e rho %.1e", outer, infeas, rho)
        if infeas <= tol:
            res.converged = res.converged or res.stationarity <= 10 * inner_tol
            res.message = f"feasible after {outer + 1} outer iterations"
            break
        lam = lam + rho * r
        if infeas > 0.25 * prev:
            rho *= 10.0
        prev = infeas
    else:
        res.converged = False
        res.message = f"infeasibility {infeas:.3e} > {tol:.3e} after {max_iter} outer iterations"
    res.multiplier = lam
    res.cost_history = history
    res.iterations = len(history)
    return res
