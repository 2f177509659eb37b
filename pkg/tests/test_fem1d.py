import numpy as np
import pytest

from evoctrl.experiments import build_problem, default_config
from evoctrl.fem1d import HeatParams, assemble_heat, assemble_heat_adjoint_reference
from evoctrl.integrators import Scheme, simulate_forward
from evoctrl.linops import adjoint_system, dense
from evoctrl.ocp import solve_unconstrained_cg
from evoctrl.timegrid import IntervalTrajectory, TimeGrid


def test_hand_assembly_n2():
    sys = assemble_heat(HeatParams(2))
    h = 1.0 / 3.0
    assert np.allclose(dense(sys.A), -np.array([[2.0, -1.0], [-1.0, 2.0]]) / h, atol=1e-13)
    assert np.allclose(dense(sys.M), h / 6 * np.array([[4.0, 1.0], [1.0, 4.0]]), atol=1e-15)
    assert np.allclose(sys.B.ravel(), [0.0, 1.0 / h], atol=1e-13)
    # flux residual of the boundary row: y = x_1 / h when x(0) = 0
    assert np.allclose(dense(sys.C), [[1.0 / h, 0.0]], atol=1e-13)
    assert sys.D[0, 0] == 0.0


def test_outward_normal_flips_observation():
    inward = assemble_heat(HeatParams(5, c=1.0))
    outward = assemble_heat(HeatParams(5, c=1.0, outward_normal=True))
    assert np.array_equal(dense(outward.C), -dense(inward.C))
    assert np.array_equal(dense(outward.A), dense(inward.A))


def test_zero_input_zero_output():
    sys = assemble_heat(HeatParams(10, a=2.0, b=-0.5, c=3.0))
    grid = TimeGrid(1.0, 20)
    _, Y = simulate_forward(sys, np.zeros(10), IntervalTrajectory.zeros(grid, 1),
                            Scheme.ImplicitEuler)
    assert not Y.values.any()


def test_steady_state_flux():
    params = HeatParams(64)
    sys = assemble_heat(params)
    grid = TimeGrid(10.0, 200)
    X, Y = simulate_forward(sys, np.zeros(64), IntervalTrajectory(grid, np.ones((200, 1))),
                            Scheme.ImplicitEuler)
    assert abs(Y.values[-1, 0] - 1.0) <= 1e-2
    assert np.max(np.abs(X.final - params.nodes()[1:-1])) <= 1e-2


def test_nonpositive_diffusion_rejected():
    with pytest.raises(ValueError, match="diffusion"):
        assemble_heat(HeatParams(4, a=lambda s: s - 0.5))
    with pytest.raises(ValueError):
        HeatParams(0)


def _max_diff(a, b):
    return max(np.max(np.abs(dense(getattr(a, k)) - dense(getattr(b, k)))) for k in "MABCD")


@pytest.mark.parametrize("outward", [False, True])
def test_adjoint_reference_with_advection(outward):
    params = HeatParams(16, a=lambda s: 1.0 + s, b=lambda s: -s, c=1.0, outward_normal=outward)
    ref = assemble_heat_adjoint_reference(params)
    assert _max_diff(adjoint_system(assemble_heat(params)), ref) <= 1e-10


def test_reaction_term_self_adjoint():
    base = HeatParams(4)
    react = HeatParams(4, c=1.0)
    dA = dense(assemble_heat(react).A) - dense(assemble_heat(base).A)
    dA_ref = (dense(assemble_heat_adjoint_reference(react).A)
              - dense(assemble_heat_adjoint_reference(base).A))
    assert np.max(np.abs(dA - dA_ref)) <= 1e-14
    assert np.max(np.abs(dA - dense(assemble_heat(react).M))) <= 1e-14


def test_symmetric_diffusion_swaps_boundary_roles():
    params = HeatParams(6, a=lambda s: 1.0 + s * (1.0 - s))
    fwd = assemble_heat(params)
    ref = assemble_heat_adjoint_reference(params)
    assert np.allclose(dense(ref.A), dense(fwd.A), atol=1e-14)
    assert np.allclose(ref.B.ravel(), dense(fwd.C).ravel(), atol=1e-14)
    assert np.allclose(dense(ref.C).ravel(), fwd.B.ravel(), atol=1e-14)


def test_refinement_of_optimal_cost():
    costs = []
    for n in (32, 64):
        prob = build_problem(default_config("heat", n=n))
        res = solve_unconstrained_cg(prob.sys, prob.spec, prob.x0, prob.scheme, tol=1e-10)
        assert res.converged
        costs.append(res.cost)
    assert abs(costs[0] - costs[1]) <= 0.05 * costs[1]
