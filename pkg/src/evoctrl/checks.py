"""Self-contained invariant suite behind ``evoctrl check``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fem2d import WaveFEM, WaveParams, build_lshape_mesh, displacement_reconstruct
from .integrators import Scheme, StabilityWarning, duality_residual
from .linops import DescriptorSystem, TerminalWeight, adjoint_system
from .ocp import CostSpec, cost, gradient
from .ph import dissipation_factor, energy_ledger, factorization_residual
from .solution_maps import adjoint_identity_residual
from .timegrid import IntervalTrajectory, TimeGrid, l2_inner


def random_spd(rng, n: int, shift: float = 1.0) -> np.ndarray:
    G = rng.standard_normal((n, n))
    return G @ G.T / n + shift * np.eye(n)


def random_system(rng, n: int, m: int, p: int) -> DescriptorSystem:
    """Random descriptor system with a dissipative generator."""
    S = rng.standard_normal((n, n))
    A = -random_spd(rng, n, 0.5) + 0.5 * (S - S.T)
    return DescriptorSystem(random_spd(rng, n), A, rng.standard_normal((n, m)),
                            rng.standard_normal((p, n)), rng.standard_normal((p, m)),
                            random_spd(rng, m), random_spd(rng, p))


def random_dissipative(rng, k: int) -> np.ndarray:
    R = rng.standard_normal((k, k - 1))
    S = rng.standard_normal((k, k))
    return -(R @ R.T) + (S - S.T)


def random_terminal(rng, n: int, rows: int = 2) -> TerminalWeight:
    return TerminalWeight(rng.standard_normal((rows, n)), rng.standard_normal(rows),
                          float(rng.uniform(0.5, 2.0)), random_spd(rng, rows))


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<34} residual={self.residual:.3e}  tol={self.tolerance:.1e}  {status}"


@dataclass(frozen=True)
class Report:
    seed: int
    results: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def text(self) -> str:
        lines = [f"evoctrl check (seed {self.seed})"]
        lines += [r.line() for r in self.results]
        n_fail = sum(not r.passed for r in self.results)
        lines.append("all checks passed" if not n_fail else f"{n_fail} check(s) failed")
        return "\n".join(lines) + "\n"


def _duality(rng, scheme: Scheme, corrupt: bool, trials: int = 20) -> float:
    worst = 0.0
    for _ in range(trials):
        n, m, p, N = (int(v) for v in rng.integers([1, 1, 1, 1], [9, 3, 3, 17]))
        sys = random_system(rng, n, m, p)
        grid = TimeGrid(1.0, N)
        adj = adjoint_system(sys)
        if corrupt:
            adj = adj.replace(C=-adj.C)
        u = IntervalTrajectory(grid, rng.standard_normal((N, m)))
        yd = IntervalTrajectory(grid, rng.standard_normal((N, p)))
        r = duality_residual(sys, rng.standard_normal(n), u, rng.standard_normal(n), yd, scheme,
                             adjoint=adj)
        worst = max(worst, r)
    return worst


def _adjoint_identity(rng, scheme: Scheme, trials: int = 5) -> float:
    worst = 0.0
    for _ in range(trials):
        sys = random_system(rng, 4, 2, 2)
        F = rng.standard_normal((2, 4))
        worst = max(worst, adjoint_identity_residual(sys, F, TimeGrid(1.0, 8), scheme))
    return worst


def _small_problem(rng):
    sys = random_system(rng, 5, 2, 2)
    grid = TimeGrid(1.0, 12)
    spec = CostSpec(IntervalTrajectory(grid, rng.standard_normal((12, 2))), 0.3,
                    random_terminal(rng, 5))
    return sys, spec, rng.standard_normal(5), grid


def _gradient_fd(rng, trials: int = 5) -> float:
    sys, spec, x0, grid = _small_problem(rng)
    u = IntervalTrajectory(grid, rng.standard_normal((grid.N, 2)))
    g = gradient(sys, spec, x0, u)
    worst = 0.0
    for _ in range(trials):
        du = IntervalTrajectory(grid, rng.standard_normal((grid.N, 2)))
        h = 1e-5
        fd = (cost(sys, spec, x0, u + h * du) - cost(sys, spec, x0, u - h * du)) / (2 * h)
        exact = l2_inner(g, du, sys.Wu)
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-300))
    return worst


def _quadratic_expansion(rng, trials: int = 5) -> float:
    """``J(u+du) - J(u) - <g, du> - Q(du)``, with ``Q`` from the homogeneous problem."""
    sys, spec, x0, grid = _small_problem(rng)
    hom = spec.homogeneous(sys.n)
    zero_x = np.zeros(sys.n)
    u = IntervalTrajectory(grid, rng.standard_normal((grid.N, 2)))
    J, g = cost(sys, spec, x0, u), gradient(sys, spec, x0, u)
    worst = 0.0
    for _ in range(trials):
        du = IntervalTrajectory(grid, rng.standard_normal((grid.N, 2)))
        quad = cost(sys, hom, zero_x, du)
        r = cost(sys, spec, x0, u + du) - J - l2_inner(g, du, sys.Wu) - quad
        worst = max(worst, abs(r) / max(abs(J), quad, 1.0))
    return worst


def _convexity(rng, trials: int = 50) -> float:
    sys, spec, x0, grid = _small_problem(rng)
    worst = 0.0
    for _ in range(trials):
        u1 = IntervalTrajectory(grid, rng.standard_normal((grid.N, 2)))
        u2 = IntervalTrajectory(grid, rng.standard_normal((grid.N, 2)))
        lam = float(rng.random())
        mix = cost(sys, spec, x0, lam * u1 + (1 - lam) * u2)
        bound = lam * cost(sys, spec, x0, u1) + (1 - lam) * cost(sys, spec, x0, u2)
        worst = max(worst, mix - bound)
    return max(worst, 0.0)


def _wave_fem(n: int = 4) -> WaveFEM:
    return WaveFEM(build_lshape_mesh(n), WaveParams(1.0, 1.0, 0.05))


def _energy(rng, fem: WaveFEM):
    ph = fem.ph_node()
    grid = TimeGrid(5.0, 50)
    u = IntervalTrajectory(grid, rng.uniform(-1.0, 1.0, (grid.N, ph.m)))
    led = energy_ledger(ph, np.zeros(ph.n), u, Scheme.ImplicitMidpoint)
    return led.total_residual() / led.scale(), max(-float(led.dissipated.min()), 0.0)


def _factorization(rng, trials: int = 100) -> float:
    worst = 0.0
    for _ in range(5):
        Mf = random_dissipative(rng, 6)
        RS = dissipation_factor(Mf)
        scale = float(np.max(np.abs(Mf)))
        for _ in range(trials // 5):
            xi = rng.standard_normal(6)
            worst = max(worst, factorization_residual(Mf, RS, xi) / (scale * (xi @ xi)))
    return worst


def _factorization_wave(rng, fem: WaveFEM, trials: int = 20) -> float:
    ph = fem.ph_node()
    Mf = ph.M_full
    scale = float(np.max(np.abs(Mf)))
    worst = 0.0
    for _ in range(trials):
        xi = rng.standard_normal(ph.n + ph.m)
        worst = max(worst, factorization_residual(Mf, ph.RS, xi, ph.Wu) / (scale * (xi @ xi)))
    return worst


def _f_disp(rng, fem: WaveFEM) -> float:
    mesh, params = fem.mesh, fem.params
    w = rng.standard_normal(fem.n_p)
    rec = displacement_reconstruct(mesh, params, fem.discrete_gradient(w))
    err = float(np.max(np.abs(rec - fem.extend(w))))
    # fields orthogonal to all discrete gradients in the M_q product map to zero
    q = rng.standard_normal(fem.n_q)
    q -= fem.discrete_gradient(fem.displacement_operator() @ q)
    kern = float(np.max(np.abs(displacement_reconstruct(mesh, params, q))))
    return max(err, kern)


def check_suite(seed: int = 0, corrupt_adjoint: bool = False) -> Report:
    """Run every invariant check with one seeded generator.

    ``corrupt_adjoint`` flips the sign of the adjoint output map in the
    duality checks (negative control).
    """
    rng = np.random.default_rng(seed)
    fem = _wave_fem()
    res = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        for scheme in Scheme:
            res.append(CheckResult(f"duality[{scheme.name}]",
                                   _duality(rng, scheme, corrupt_adjoint), 1e-12))
        for scheme in Scheme:
            res.append(CheckResult(f"adjoint_identity[{scheme.name}]",
                                   _adjoint_identity(rng, scheme), 1e-10))
    res.append(CheckResult("gradient_fd", _gradient_fd(rng), 1e-6))
    res.append(CheckResult("quadratic_expansion", _quadratic_expansion(rng), 1e-11))
    res.append(CheckResult("convexity", _convexity(rng), 1e-12))
    bal, neg = _energy(rng, fem)
    res.append(CheckResult("energy_balance", bal, 1e-9))
    res.append(CheckResult("dissipation_nonnegative", neg, 1e-12))
    res.append(CheckResult("factorization", _factorization(rng), 1e-12))
    res.append(CheckResult("factorization_wave", _factorization_wave(rng, fem), 1e-12))
    res.append(CheckResult("f_disp", _f_disp(rng, fem), 1e-10))
    return Report(seed, tuple(res))
