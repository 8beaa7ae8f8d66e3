import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distorder.adjoint import (
    assemble_gradient, data_misfit, gradient, right_sided_l1, solve_adjoint, solve_sensitivity,
)
from distorder.fem1d import BoundarySpec
from distorder.forward import ProblemSpec, observe, step_forward
from distorder.fracweights import AlphaQuadrature, DistributedWeights, L1Table, TimeGrid, WeightDistribution

NA = 8


def _setup(grid):
    quad = AlphaQuadrature.trapezoid(NA)
    truth = WeightDistribution.from_expr("2*min(alpha,1-alpha)")
    spec = ProblemSpec.build(M=16, a="1+x*(1-x)", bc=BoundarySpec.neumann("0", "1"),
                             u0="x*(1-x)*exp(x)", mu=truth, grid=grid, n_alpha=32)
    data = observe(step_forward(spec), spec)
    mu0 = np.sin(np.pi * quad.nodes) / 10
    mu0[-1] = 0.0
    return spec.with_weight(WeightDistribution.from_samples(mu0), quad), data, mu0, quad


def _J(spec, values, quad, data):
    inside = (quad.nodes > 0) & (quad.nodes < 1)
    dw = DistributedWeights(spec.grid, quad.nodes[inside], (quad.weights * values)[inside])
    return data_misfit(spec, step_forward(spec, weights=dw), data)[1]


GRIDS = {
    "uniform": TimeGrid.uniform(1.0, 32),
    "graded": TimeGrid.explicit(np.linspace(0, 1, 33) ** 2),
}


@pytest.mark.parametrize("name", sorted(GRIDS))
def test_duality_identity(name):
    spec, data, mu0, quad = _setup(GRIDS[name])
    J, G, sol, r = gradient(spec, data)
    w = spec.grid.trapezoid_weights()
    rng = np.random.default_rng(1)
    for _ in range(3):
        h = rng.standard_normal(quad.nodes.size)
        h[0] = h[-1] = 0.0
        ud = solve_sensitivity(spec, sol, h).U[:, 0]
        lin = float(np.sum(w * r * ud))
        assert abs(G.dot(h) - lin) <= 1e-10 * abs(lin)


@pytest.mark.parametrize("name", sorted(GRIDS))
def test_gradient_matches_finite_differences(name):
    spec, data, mu0, quad = _setup(GRIDS[name])
    J, G, sol, r = gradient(spec, data)
    h = np.cos(3 * quad.nodes) * np.sin(np.pi * quad.nodes)
    h[-1] = 0.0
    e = 1e-5
    fd = (_J(spec, mu0 + e * h, quad, data) - _J(spec, mu0 - e * h, quad, data)) / (2 * e)
    assert G.dot(h) == pytest.approx(fd, rel=1e-4)


def test_sensitivity_is_directional_derivative_of_state():
    spec, data, mu0, quad = _setup(GRIDS["uniform"])
    sol = step_forward(spec)
    h = np.zeros_like(mu0)
    h[3] = 1.0
    ud = solve_sensitivity(spec, sol, h).U
    e = 1e-6
    inside = (quad.nodes > 0) & (quad.nodes < 1)
    up = step_forward(spec, weights=DistributedWeights(spec.grid, quad.nodes[inside],
                                                       (quad.weights * (mu0 + e * h))[inside])).U
    dn = step_forward(spec, weights=DistributedWeights(spec.grid, quad.nodes[inside],
                                                       (quad.weights * (mu0 - e * h))[inside])).U
    assert np.allclose((up - dn) / (2 * e), ud, rtol=1e-5, atol=1e-8 * np.abs(ud).max())


def test_zero_residual_gives_zero_gradient():
    spec, _, mu0, quad = _setup(GRIDS["uniform"])
    own = observe(step_forward(spec), spec)
    J, G, _, _ = gradient(spec, own)
    assert J == 0.0 and not np.any(G.values)


@settings(max_examples=20)
@given(st.floats(0.05, 0.95), st.integers(0, 1000))
def test_right_sided_operator_is_the_transpose(alpha, seed):
    grid = TimeGrid.explicit(np.linspace(0, 1, 13) ** 1.5) if seed % 2 else TimeGrid.uniform(1.0, 12)
    tab = L1Table(grid, [alpha])
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((13, 3)), rng.standard_normal((13, 3))
    v[0] = 0.0
    lhs = sum(float(v[n] @ tab.apply(n, u)[0]) for n in range(1, 13))
    rhs = float(np.sum(u * right_sided_l1(tab, v)[0]))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_guards():
    spec, data, mu0, quad = _setup(GRIDS["uniform"])
    sol = step_forward(spec)
    bad = np.ones_like(mu0)
    with pytest.raises(ValueError):
        solve_sensitivity(spec, sol, bad)
    with pytest.raises(ValueError):
        solve_sensitivity(spec, sol, np.zeros(3))
    d = ProblemSpec.build(M=8, bc=BoundarySpec.dirichlet(), mu=WeightDistribution.indicator(0.2, 0.5),
                          grid=TimeGrid.uniform(1, 4))
    dsol = step_forward(d)
    with pytest.raises(ValueError):
        solve_adjoint(d, dsol, np.ones(5))
    short = type(data)(data.times[:-1], data.values[:-1])
    with pytest.raises(ValueError):
        data_misfit(spec, sol, short)
