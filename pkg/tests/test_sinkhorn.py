import itertools
import math

import numpy as np
import pytest

from otguide.errors import CapabilityError, ConfigError, DomainError, InputError, ShapeError
from otguide.measures import uniform_weights
from otguide.sinkhorn import SinkhornConfig, check_marginals, entropy, lp_oracle, sinkhorn_solve


def _two_by_two_closed_form(eps):
    # symmetric fixed point: diagonal x, off-diagonal y, x + y = 1/2, y / x = exp(-1/eps)
    r = math.exp(-1.0 / eps)
    x = 0.5 / (1.0 + r)
    return x, 0.5 - x, r / (1.0 + r)


def test_entropy_examples():
    assert entropy([[1.0]]) == 1.0
    assert entropy(np.full((2, 2), 0.25)) == pytest.approx(1.0 + math.log(4.0), abs=1e-15)
    assert math.isfinite(entropy([[0.5, 0.0], [0.0, 0.5]]))
    with pytest.raises(DomainError):
        entropy([[-0.1, 1.1]])


def test_config_validation():
    for bad in (dict(epsilon=0), dict(tolerance=-1), dict(max_iterations=0)):
        with pytest.raises(ConfigError):
            SinkhornConfig(**bad)


def test_forced_plan():
    sol = sinkhorn_solve([1.0], [1.0], [[0.37]])
    np.testing.assert_allclose(sol.plan, [[1.0]], rtol=1e-15)
    assert sol.transport_cost == pytest.approx(0.37, abs=1e-15)
    assert sol.converged


@pytest.mark.parametrize("log_domain", [True, False])
def test_two_by_two_closed_form(log_domain):
    x, y, cost = _two_by_two_closed_form(0.1)
    sol = sinkhorn_solve([0.5, 0.5], [0.5, 0.5], [[0, 1], [1, 0]], SinkhornConfig(epsilon=0.1, log_domain=log_domain))
    assert sol.transport_cost == pytest.approx(cost, abs=1e-12)
    np.testing.assert_allclose(sol.plan, [[x, y], [y, x]], rtol=1e-10)


def test_constant_cost_gives_independent_coupling():
    a = uniform_weights(3)
    sol = sinkhorn_solve(a, a, np.full((3, 3), 0.7))
    np.testing.assert_allclose(sol.plan, 1 / 9, rtol=1e-12)
    assert sol.transport_cost == pytest.approx(0.7, abs=1e-12)


def test_solution_fields_consistent(rng):
    C = rng.uniform(0, 2, (6, 4))
    a = rng.dirichlet(np.ones(6))
    b = rng.dirichlet(np.ones(4))
    sol = sinkhorn_solve(a, b, C, SinkhornConfig(epsilon=0.2))
    assert sol.converged and sol.marginal_error <= 1e-6
    assert check_marginals(sol.plan, a, b) <= 1e-6
    rebuilt = np.exp((sol.potentials_f[:, None] + sol.potentials_g[None, :] - C) / 0.2)
    np.testing.assert_allclose(rebuilt, sol.plan, rtol=1e-8)
    assert sol.transport_cost == pytest.approx(np.sum(C * sol.plan), rel=1e-14)
    assert sol.reg_objective == pytest.approx(sol.transport_cost - 0.2 * entropy(sol.plan), rel=1e-14)
    assert sol.transport_cost >= 0


def test_nonconvergence_is_reported_not_raised(rng):
    C = rng.uniform(0, 2, (5, 5))
    a = uniform_weights(5)
    sol = sinkhorn_solve(a, a, C, SinkhornConfig(epsilon=1e-3, max_iterations=3, epsilon_scaling=False))
    assert not sol.converged
    assert sol.iterations_used == 3
    assert sol.marginal_error > 1e-6


def test_iteration_budget_respected_with_scaling(rng):
    C = rng.uniform(0, 2, (5, 5))
    a = uniform_weights(5)
    for budget in (1, 2, 7):
        sol = sinkhorn_solve(a, a, C, SinkhornConfig(epsilon=1e-3, max_iterations=budget))
        assert sol.iterations_used <= budget


def test_input_errors():
    with pytest.raises(InputError):
        sinkhorn_solve([1.0], [1.0], [[math.inf]])
    with pytest.raises(ShapeError):
        sinkhorn_solve([0.5, 0.5], [1.0], [[1.0]])


def test_plain_mode_underflow_is_not_converged():
    C = np.array([[0.0, 2.0], [2.0, 0.0]]) + 40.0
    sol = sinkhorn_solve([0.5, 0.5], [0.5, 0.5], C, SinkhornConfig(epsilon=0.05, log_domain=False))
    assert not sol.converged
    ok = sinkhorn_solve([0.5, 0.5], [0.5, 0.5], C, SinkhornConfig(epsilon=0.05))
    assert ok.converged


def test_lp_oracle_examples():
    cost, plan = lp_oracle([0.5, 0.5], [0.5, 0.5], [[0, 1], [1, 0]])
    assert cost == 0.0
    np.testing.assert_array_equal(plan, [[0.5, 0], [0, 0.5]])
    cost, plan = lp_oracle([0.5, 0.5], [0.5, 0.5], [[2, 1], [1, 2]])
    assert cost == 1.0  # identity (2+2)/2 = 2, swap (1+1)/2 = 1
    np.testing.assert_array_equal(plan, [[0, 0.5], [0.5, 0]])


def test_lp_oracle_capability():
    with pytest.raises(CapabilityError):
        lp_oracle(uniform_weights(2), uniform_weights(3), np.ones((2, 3)))
    with pytest.raises(CapabilityError):
        lp_oracle(uniform_weights(8), uniform_weights(8), np.ones((8, 8)))
    with pytest.raises(CapabilityError):
        lp_oracle([0.25, 0.75], [0.5, 0.5], np.ones((2, 2)))


def test_lp_oracle_lower_bounds_sinkhorn(rng):
    for _ in range(10):
        n = int(rng.integers(2, 6))
        C = rng.uniform(0, 2, (n, n))
        a = uniform_weights(n)
        lp, _ = lp_oracle(a, a, C)
        for eps in (0.01, 0.1, 1.0):
            assert lp <= sinkhorn_solve(a, a, C, SinkhornConfig(epsilon=eps, tolerance=1e-10)).transport_cost + 1e-12


def test_check_marginals_examples(rng):
    assert check_marginals([[1.0]], [1.0], [1.0]) == 0.0
    a = rng.dirichlet(np.ones(4))
    b = rng.dirichlet(np.ones(3))
    assert check_marginals(np.outer(a, b), a, b) <= 1e-15
    P = np.outer(a, b)
    P[2, 1] += 1e-3
    assert check_marginals(P, a, b) >= 1e-3 - 1e-15
    with pytest.raises(ShapeError):
        check_marginals(np.ones((2, 2)), [1.0], [0.5, 0.5])


def _instances(rng, count, n):
    for _ in range(count):
        yield rng.uniform(0, 2, (n, n))


def test_small_epsilon_approaches_lp(rng):
    n = 4
    a = uniform_weights(n)
    for C in _instances(rng, 10, n):
        perm_costs = sorted(sum(C[i, p[i]] for i in range(n)) / n for p in itertools.permutations(range(n)))
        assert min(np.diff(perm_costs)) > 0
        lp, _ = lp_oracle(a, a, C)
        sol = sinkhorn_solve(a, a, C, SinkhornConfig(epsilon=1e-3, tolerance=1e-9))
        assert sol.converged
        assert -1e-12 <= sol.transport_cost - lp <= 1e-3 * n * math.log(n) + 1e-6


def test_large_epsilon_approaches_independent_coupling(rng):
    C = rng.uniform(0, 2, (5, 3))
    a = rng.dirichlet(np.ones(5))
    b = rng.dirichlet(np.ones(3))
    sol = sinkhorn_solve(a, b, C, SinkhornConfig(epsilon=1e3))
    assert abs(sol.transport_cost - np.sum(C * np.outer(a, b))) <= 1e-3


def test_transport_cost_monotone_in_epsilon(rng):
    for _ in range(5):
        C = rng.uniform(0, 2, (6, 4))
        a, b = uniform_weights(6), uniform_weights(4)
        costs = [sinkhorn_solve(a, b, C, SinkhornConfig(epsilon=e, tolerance=1e-10)).transport_cost for e in (0.01, 0.1, 1, 10)]
        assert all(x <= y + 1e-12 for x, y in zip(costs, costs[1:]))


def test_log_and_plain_agree(rng):
    for _ in range(5):
        C = rng.uniform(0, 2, (5, 7))
        a, b = uniform_weights(5), uniform_weights(7)
        for eps in (0.1, 0.5, 2.0):
            cfg = dict(epsilon=eps, tolerance=1e-12)
            x = sinkhorn_solve(a, b, C, SinkhornConfig(**cfg)).transport_cost
            y = sinkhorn_solve(a, b, C, SinkhornConfig(log_domain=False, **cfg)).transport_cost
            assert abs(x - y) <= 1e-8


def test_constant_shift_invariance(rng):
    C = rng.uniform(0, 2, (4, 6))
    a, b = uniform_weights(4), uniform_weights(6)
    base = sinkhorn_solve(a, b, C, SinkhornConfig(epsilon=0.1, tolerance=1e-12))
    for c in (0.5, 3.0, -0.25):
        shifted = sinkhorn_solve(a, b, C + c, SinkhornConfig(epsilon=0.1, tolerance=1e-12))
        assert shifted.transport_cost == pytest.approx(base.transport_cost + c, abs=1e-10)
        np.testing.assert_allclose(shifted.plan, base.plan, atol=1e-8)
