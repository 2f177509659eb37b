"""Experiment configurations, problem builders and artifact writers."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import svg
from .fem1d import HeatParams, assemble_heat
from .fem2d import WaveFEM, WaveParams, build_lshape_mesh, distance_to_gamma0
from .integrators import Scheme, simulate_forward
from .linops import DescriptorSystem
from .ocp import (DENSE_HESSIAN_LIMIT, Box, CostSpec, OptResult, Unconstrained, cost,
                  solve_box_qp_dense, solve_projected_gradient, solve_unconstrained_cg,
                  stationarity_residual)
from .ph import energy_ledger, energy_optimal_reformulate
from .timegrid import IntervalTrajectory, TimeGrid, read_csv, write_csv

log = logging.getLogger(__name__)

EXPERIMENTS = ("heat", "heat5", "wave", "custom")
SOLVERS = ("auto", "cg", "pg", "qp")
SNAPSHOT_TIMES = (1.5, 2.5, 3.5, 4.5, 5.0)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "heat"
    out: str = ""
    n: int = 64
    N: int = 200
    T: float = 2.0
    alpha: float = 0.1
    scheme: str = "implicit_euler"
    solver: str = "auto"
    tol: float = 1e-10
    max_iter: int = 1000
    seed: int = 0
    box_lo: float | None = None
    box_hi: float | None = None
    svg: bool = False
    # heat: affine coefficients a(xi) = a0 + a1 xi, likewise b and c
    a0: float = 1.0
    a1: float = 0.0
    b0: float = 0.0
    b1: float = -1.0
    c0: float = 1.0
    c1: float = 0.0
    flux: str = "outward"
    # wave
    rho: float = 1.0
    T_mod: float = 1.0
    d: float = 0.05
    alpha_T: float = 10.0
    # custom: directory written by DescriptorSystem.save, optional reference CSV
    system: str = ""
    y_ref: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.flux not in ("outward", "inward"):
            raise ConfigError(f"flux must be 'outward' or 'inward', got {self.flux!r}")
        try:
            Scheme.parse(self.scheme)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.n < 1 or self.N < 1 or not self.T > 0:
            raise ConfigError("n, N and T must be positive")
        if self.alpha < 0 or self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("need alpha >= 0, tol > 0 and max_iter >= 1")
        if (self.box_lo is None) != (self.box_hi is None):
            raise ConfigError("box_lo and box_hi must be given together")
        if self.box_lo is not None and self.box_lo > self.box_hi:
            raise ConfigError("box_lo must not exceed box_hi")
        if self.experiment == "custom" and not self.system:
            raise ConfigError("experiment 'custom' needs system = <directory>")

    @property
    def out_dir(self) -> Path:
        return Path(self.out or f"out/{self.experiment}")


DEFAULTS = {
    "heat": {},
    "heat5": {"c0": 5.0},
    "wave": {"n": 8, "N": 100, "T": 5.0, "alpha": 0.0, "scheme": "implicit_midpoint",
             "tol": 1e-8, "box_lo": -1.0, "box_hi": 1.0},
    "custom": {"N": 100, "T": 1.0, "scheme": "implicit_midpoint"},
}

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown key {key!r}")
    kind = _FIELDS[key].type
    text = raw.strip()
    try:
        if kind == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float | None":
            return None if text.lower() in ("none", "") else float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {kind})") from None


def parse_pairs(lines, source: str = "config") -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for k, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{k}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{k}: duplicate key {key!r}")
        out[key] = val
    return out


def make_config(pairs: dict) -> ExperimentConfig:
    """Experiment defaults, then the given raw string values on top."""
    exp = pairs.get("experiment", "heat").strip()
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    values = dict(DEFAULTS[exp])
    values.update({k: _coerce(k, v) for k, v in pairs.items()})
    return ExperimentConfig(**values)


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    """Typed construction: experiment defaults updated by ``overrides``."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    values = dict(DEFAULTS[experiment], experiment=experiment)
    values.update(overrides)
    return ExperimentConfig(**values)


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read a config file; ``overrides`` are ``key=value`` strings applied last."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    pairs = parse_pairs(text.splitlines(), str(path))
    pairs.update(parse_pairs(overrides, "--set"))
    return make_config(pairs)


# ----------------------------------------------------------------- problems


@dataclass(eq=False)
class Problem:
    sys: DescriptorSystem
    spec: CostSpec
    x0: np.ndarray
    adm: object
    scheme: Scheme
    fem: WaveFEM | None = None
    w_target: np.ndarray | None = None


def _affine(c0: float, c1: float):
    return c0 if c1 == 0.0 else (lambda s: c0 + c1 * s)


def heat_params(cfg: ExperimentConfig) -> HeatParams:
    return HeatParams(cfg.n, a=_affine(cfg.a0, cfg.a1), b=_affine(cfg.b0, cfg.b1),
                      c=_affine(cfg.c0, cfg.c1), outward_normal=cfg.flux == "outward")


def admissible_set(cfg: ExperimentConfig, m: int):
    if cfg.box_lo is None:
        return Unconstrained()
    return Box(np.full(m, cfg.box_lo), np.full(m, cfg.box_hi))


def build_problem(cfg: ExperimentConfig) -> Problem:
    grid = TimeGrid(cfg.T, cfg.N)
    scheme = Scheme.parse(cfg.scheme)
    if cfg.experiment in ("heat", "heat5"):
        sys = assemble_heat(heat_params(cfg))
        y_ref = IntervalTrajectory.from_function(grid, lambda t: np.sin(np.pi * t))
        spec = CostSpec(y_ref, cfg.alpha)
        return Problem(sys, spec, np.zeros(sys.n), admissible_set(cfg, sys.m), scheme)
    if cfg.experiment == "wave":
        mesh = build_lshape_mesh(cfg.n)
        fem = WaveFEM(mesh, WaveParams(cfg.rho, cfg.T_mod, cfg.d))
        w_f = distance_to_gamma0(mesh)[fem.free]
        sys, spec = energy_optimal_reformulate(fem.ph_node(), fem.terminal_weight(w_f, cfg.alpha_T),
                                               grid)
        spec = CostSpec(spec.y_ref, cfg.alpha, spec.terminal)
        return Problem(sys, spec, np.zeros(sys.n), admissible_set(cfg, sys.m), scheme, fem, w_f)
    try:
        sys = DescriptorSystem.load(cfg.system)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load system from {cfg.system}: {exc}") from None
    if cfg.y_ref:
        y_ref = read_csv(cfg.y_ref, grid)
        if not isinstance(y_ref, IntervalTrajectory) or y_ref.width != sys.p:
            raise ConfigError(f"{cfg.y_ref}: need {grid.N} rows of {sys.p} outputs")
    else:
        y_ref = IntervalTrajectory.zeros(grid, sys.p)
    return Problem(sys, CostSpec(y_ref, cfg.alpha), np.zeros(sys.n),
                   admissible_set(cfg, sys.m), scheme)


def choose_solver(cfg: ExperimentConfig, prob: Problem) -> str:
    """``cg`` without a box; with a box, ``qp`` when there is no input penalty
    and the dense Hessian is affordable, ``pg`` otherwise."""
    if cfg.solver != "auto":
        return cfg.solver
    if isinstance(prob.adm, Unconstrained):
        return "cg"
    small = prob.spec.grid.N * prob.sys.m <= DENSE_HESSIAN_LIMIT
    return "qp" if prob.spec.alpha == 0.0 and small else "pg"


def solve(cfg: ExperimentConfig, prob: Problem) -> OptResult:
    name = choose_solver(cfg, prob)
    args = (prob.sys, prob.spec, prob.x0)
    if name == "cg":
        if not isinstance(prob.adm, Unconstrained):
            raise ConfigError("solver 'cg' cannot handle box constraints")
        return solve_unconstrained_cg(*args, prob.scheme, cfg.tol, cfg.max_iter)
    if name == "pg":
        return solve_projected_gradient(*args, prob.adm, prob.scheme, cfg.tol, cfg.max_iter)
    return solve_box_qp_dense(*args, prob.adm, prob.scheme, cfg.tol, cfg.max_iter)


# ---------------------------------------------------------------- artifacts


@dataclass(eq=False)
class RunOutcome:
    config: ExperimentConfig
    problem: Problem
    result: OptResult
    metrics: dict
    out_dir: Path


def _write_summary(path: Path, items: dict) -> None:
    lines = []
    for k, v in items.items():
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    path.write_text("\n".join(lines) + "\n")


def _heat_metrics(prob: Problem, res: OptResult) -> dict:
    y, y_ref = res.y.values[:, 0], prob.spec.y_ref.values[:, 0]
    t = res.u_opt.times()
    u = res.u_opt.values[:, 0]
    dt = prob.spec.grid.dt
    half = t < 0.5 * prob.spec.grid.T
    return {
        "tracking_error": float(np.sqrt(dt * np.sum((y - y_ref) ** 2))),
        "tracking_correlation": float(np.corrcoef(y, y_ref)[0, 1]),
        "mean_u_first_half": float(np.mean(u[half])),
        "mean_u_second_half": float(np.mean(u[~half])),
        "state_l2": float(np.sqrt(dt * np.sum(res.x.values[1:] ** 2))),
    }


def _wave_metrics(prob: Problem, res: OptResult) -> dict:
    fem = prob.fem
    ke = fem.kinetic_energy(res.x.values)
    Mp = fem.M_p
    Fd = fem.displacement_operator()
    norm = np.sqrt(float(prob.w_target @ (Mp @ prob.w_target)))

    def rel_error(x_final):
        err = Fd @ fem.split(x_final)[1] - prob.w_target
        return float(np.sqrt(float(err @ (Mp @ err))) / norm)

    X0, _ = simulate_forward(prob.sys, prob.x0, IntervalTrajectory.zeros(prob.spec.grid, prob.sys.m),
                             prob.scheme)
    u = res.u_opt.values
    return {
        "kinetic_final": float(ke[-1]),
        "kinetic_max": float(ke.max()),
        "kinetic_ratio": float(ke[-1] / ke.max()) if ke.max() > 0 else 0.0,
        "displacement_rel_error": rel_error(res.x.final),
        "displacement_rel_error_zero_control": rel_error(X0.final),
        "u_min": float(u.min()),
        "u_max": float(u.max()),
    }


def _write_wave_snapshots(path: Path, prob: Problem, res: OptResult) -> None:
    fem = prob.fem
    grid = prob.spec.grid
    Fd = fem.displacement_operator()
    V = fem.mesh.vertices
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "value"])
        for ts in SNAPSHOT_TIMES:
            if ts > grid.T + 1e-12:
                continue
            i = int(round(ts / grid.dt))
            disp = fem.extend(Fd @ fem.split(res.x.values[i])[1])
            for v in range(fem.mesh.nv):
                w.writerow([repr(float(i * grid.dt)), repr(float(V[v, 0])), repr(float(V[v, 1])),
                            repr(float(disp[v]))])


def write_artifacts(cfg: ExperimentConfig, prob: Problem, res: OptResult, runtime: float) -> dict:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "control.csv", res.u_opt, "u")
    res.write_convergence(out / "convergence.csv")
    grid = prob.spec.grid
    zero = IntervalTrajectory.zeros(grid, prob.sys.m)
    summary = {
        "experiment": cfg.experiment,
        "solver": choose_solver(cfg, prob),
        "converged": res.converged,
        "iterations": res.iterations,
        "cost": float(res.cost),
        "cost_zero_control": float(cost(prob.sys, prob.spec, prob.x0, zero, prob.scheme)),
        "stationarity": float(res.stationarity),
        "certificate": float(stationarity_residual(prob.sys, prob.spec, prob.x0, prob.adm,
                                                   res.u_opt, prob.scheme, seed=cfg.seed)[0]),
    }
    if cfg.experiment == "wave":
        ph = prob.fem.ph_node()
        _, Y = simulate_forward(ph.descriptor(("y",)), prob.x0, res.u_opt, prob.scheme)
        write_csv(out / "output.csv", Y, "y")
        _write_wave_snapshots(out / "state_snapshots.csv", prob, res)
        energy_ledger(ph, prob.x0, res.u_opt, prob.scheme).write_csv(out / "energy.csv")
        metrics = _wave_metrics(prob, res)
    else:
        write_csv(out / "output.csv", res.y, "y")
        write_csv(out / "state_snapshots.csv", res.x, "x")
        metrics = _heat_metrics(prob, res) if cfg.experiment != "custom" else {}
    summary.update(metrics)
    summary["runtime_s"] = round(runtime, 3)
    if res.message:
        summary["message"] = res.message
    _write_summary(out / "summary.txt", summary)
    if cfg.svg:
        _write_svgs(cfg, prob, res)
    return summary


def _write_svgs(cfg: ExperimentConfig, prob: Problem, res: OptResult) -> None:
    out = cfg.out_dir
    t = res.u_opt.times()
    svg.line_plot(out / "control.svg", t, {f"u{j}": res.u_opt.values[:, j]
                                           for j in range(min(res.u_opt.width, 6))}, "control")
    if cfg.experiment == "wave":
        ke = prob.fem.kinetic_energy(res.x.values)
        svg.line_plot(out / "kinetic.svg", res.x.times(), {"kinetic energy": ke}, "kinetic energy")
        disp = prob.fem.extend(prob.fem.displacement_operator() @ prob.fem.split(res.x.final)[1])
        svg.field_plot(out / "displacement.svg", prob.fem.mesh.vertices, disp,
                       "terminal displacement")
    else:
        series = {"y": res.y.values[:, 0]}
        if prob.spec.y_ref.width == 1:
            series["y_ref"] = prob.spec.y_ref.values[:, 0]
        svg.line_plot(out / "output.svg", t, series, "output")


def run_experiment(cfg: ExperimentConfig) -> RunOutcome:
    """Solve the configured problem and write all artifacts to ``cfg.out_dir``."""
    start = time.perf_counter()
    prob = build_problem(cfg)
    res = solve(cfg, prob)
    metrics = write_artifacts(cfg, prob, res, time.perf_counter() - start)
    if not res.converged:
        log.info("solver did not converge: %s", res.message)
    return RunOutcome(cfg, prob, res, metrics, cfg.out_dir)
