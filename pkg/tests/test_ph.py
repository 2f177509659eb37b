import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evoctrl.checks import random_dissipative, random_spd
from evoctrl.fem2d import WaveFEM, WaveParams, build_lshape_mesh
from evoctrl.integrators import Scheme, StabilityWarning
from evoctrl.linops import TerminalWeight
from evoctrl.ocp import cost
from evoctrl.ph import (EnergyLedger, NotDissipativeError, PHNode, dissipation_factor,
                        energy_balance_residual, energy_ledger, energy_optimal_reformulate,
                        factorization_residual, supplied_energy_cost)
from evoctrl.timegrid import IntervalTrajectory, TimeGrid


def random_node(rng, n=4, m=2, lossless=False):
    M = np.diag(rng.uniform(0.5, 2.0, n))
    H = np.diag(rng.uniform(0.5, 2.0, n))
    Wu = random_spd(rng, m)
    if lossless:
        S = rng.standard_normal((n + m, n + m))
        Q = S - S.T
    else:
        Q = random_dissipative(rng, n + m)
    P_inv = np.linalg.inv(np.block([[np.eye(n), np.zeros((n, m))], [np.zeros((m, n)), Wu]]))
    Mf = P_inv @ Q
    return PHNode(Mf[:n], Mf[n:], H, M, Wu)


def test_factor_of_skew_matrix_is_empty():
    S = np.array([[0.0, 2.0, -1.0], [-2.0, 0.0, 3.0], [1.0, -3.0, 0.0]])
    assert dissipation_factor(S).shape == (0, 3)


def test_factor_of_negative_diagonal():
    d = np.array([0.0, 0.4, 2.0, 0.0])
    RS = dissipation_factor(-np.diag(d))
    assert RS.shape == (2, 4)
    # unique up to signs since the nonzero eigenvalues are distinct
    assert np.allclose(np.abs(RS), np.diag(np.sqrt(d / 2))[[1, 2]], atol=1e-15)


def test_not_dissipative_rejected():
    with pytest.raises(NotDissipativeError) as err:
        dissipation_factor(np.diag([-1.0, 0.5]))
    assert err.value.eigenvalue == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        dissipation_factor(np.zeros((2, 3)))


@given(st.integers(0, 2**32 - 1))
def test_factorization_identity_random(seed):
    rng = np.random.default_rng(seed)
    Mf = random_dissipative(rng, 6)
    RS = dissipation_factor(Mf)
    assert RS.shape[0] == np.linalg.matrix_rank(Mf + Mf.T)
    scale = np.max(np.abs(Mf))
    for _ in range(100):
        xi = rng.standard_normal(6)
        assert factorization_residual(Mf, RS, xi) <= 1e-12 * scale * (xi @ xi)


def test_weighted_factorization_on_node(rng):
    node = random_node(rng)
    assert node.dissipativity_defect() <= 1e-12
    assert node.skew_defect() <= 1e-12
    for _ in range(20):
        xi = rng.standard_normal(6)
        r = factorization_residual(node.M_full, node.RS, xi, node.Wu)
        assert r <= 1e-12 * np.max(np.abs(node.M_full)) * (xi @ xi) * 10


def test_wave_dissipation_is_damped_velocity():
    fem = WaveFEM(build_lshape_mesh(3), WaveParams(2.0, 1.5, 0.05))
    ph = fem.ph_node()
    rng = np.random.default_rng(3)
    Mp = fem.M_p.toarray()
    for _ in range(20):
        xi = rng.standard_normal(ph.n + ph.m)
        v = xi[: fem.n_p]
        # constant damping: M_d = d * M_p
        assert abs(2 * np.sum((ph.RS @ xi) ** 2) - 0.05 * v @ Mp @ v) <= 1e-12 * (xi @ xi)


def test_lossless_node_conserves_energy(rng):
    node = random_node(rng, lossless=True)
    assert node.RS.shape[0] == 0
    grid = TimeGrid(3.0, 30)
    x0 = rng.standard_normal(node.n)
    led = energy_ledger(node, x0, IntervalTrajectory.zeros(grid, node.m))
    assert energy_balance_residual(node, x0, IntervalTrajectory.zeros(grid, node.m)) <= 1e-12
    assert np.ptp(led.stored) <= 1e-12 * led.stored[0]


def test_energy_balance_midpoint(rng):
    node = random_node(rng)
    grid = TimeGrid(2.0, 40)
    u = IntervalTrajectory(grid, rng.uniform(-1, 1, (40, node.m)))
    x0 = rng.standard_normal(node.n)
    led = energy_ledger(node, x0, u)
    assert np.all(led.dissipated >= -1e-12)
    assert energy_balance_residual(node, x0, u, relative=True) <= 1e-12
    assert np.max(np.abs(led.residuals())) <= 1e-12 * led.scale()


def test_explicit_euler_breaks_balance():
    # damped oscillator: x = (position-like, velocity-like), no input coupling
    Mf = np.array([[0.0, 1.0, 0.0], [-1.0, -0.3, 1.0], [0.0, -1.0, 0.0]])
    node = PHNode(Mf[:2], Mf[2:], np.eye(2), np.eye(2), np.eye(1))
    grid = TimeGrid(5.0, 50)
    u = IntervalTrajectory(grid, np.sin(np.arange(50))[:, None])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        r = energy_balance_residual(node, [1.0, 0.0], u, Scheme.ExplicitEuler, relative=True)
    assert r > 1e-6
    assert energy_balance_residual(node, [1.0, 0.0], u, relative=True) <= 1e-12


def test_ledger_csv(tmp_path, rng):
    node = random_node(rng)
    grid = TimeGrid(1.0, 4)
    led = energy_ledger(node, np.ones(node.n), IntervalTrajectory(grid, np.ones((4, node.m))))
    led.write_csv(tmp_path / "e.csv")
    data = np.genfromtxt(tmp_path / "e.csv", delimiter=",", names=True)
    assert data.dtype.names == ("t", "stored", "supplied_cum", "dissipated_cum",
                                "balance_residual")
    assert np.array_equal(data["stored"], led.stored)
    assert isinstance(led, EnergyLedger)


@given(st.integers(0, 2**32 - 1))
def test_reformulation_identity(seed):
    rng = np.random.default_rng(seed)
    node = random_node(rng)
    grid = TimeGrid(1.0, 12)
    F = TerminalWeight(rng.standard_normal((2, node.n)), rng.standard_normal(2), 1.7,
                       random_spd(rng, 2))
    sys, spec = energy_optimal_reformulate(node, F, grid)
    x0 = rng.standard_normal(node.n)
    for _ in range(3):
        u = IntervalTrajectory(grid, rng.standard_normal((12, node.m)))
        lhs = cost(sys, spec, x0, u) - node.energy(x0)
        rhs = supplied_energy_cost(node, F, x0, u)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


def test_reformulation_lossless_without_terminal_weight(rng):
    node = random_node(rng, lossless=True)
    grid = TimeGrid(1.0, 10)
    sys, spec = energy_optimal_reformulate(node, TerminalWeight.none(node.n), grid)
    x0 = rng.standard_normal(node.n)
    u = IntervalTrajectory(grid, rng.standard_normal((10, node.m)))
    J = cost(sys, spec, x0, u)
    led = energy_ledger(node, x0, u)
    assert J == pytest.approx(led.stored[-1], rel=1e-12)
    assert np.sum(led.supplied) == pytest.approx(led.stored[-1] - led.stored[0], rel=1e-10)


def test_reformulation_root_of_identity_hamiltonian(rng):
    n, m = 3, 1
    Mf = random_dissipative(rng, n + m)
    node = PHNode(Mf[:n], Mf[n:], np.eye(n), np.eye(n), np.eye(m))
    _, spec = energy_optimal_reformulate(node, TerminalWeight.none(n), TimeGrid(1.0, 2))
    assert np.allclose(spec.terminal.F, np.eye(n), atol=1e-15)
    assert not spec.terminal.z_f.any()


def test_reformulation_rejects_bad_constraint_shape(rng):
    node = random_node(rng)
    with pytest.raises(ValueError):
        energy_optimal_reformulate(node, TerminalWeight.none(node.n), TimeGrid(1.0, 2),
                                   Fc=np.ones((2, node.n + 1)))


def test_node_validation():
    with pytest.raises(ValueError):
        PHNode(np.zeros((2, 3)), np.zeros((1, 3)), np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        PHNode(np.zeros((2, 3)), np.zeros((1, 3)), -np.eye(2), np.eye(2), np.eye(1))
