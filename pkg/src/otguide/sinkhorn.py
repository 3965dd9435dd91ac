"""Entropic optimal transport: Sinkhorn solver and a brute-force exact oracle.

Conventions: the entropy is ``H(P) = -sum P_ij (log P_ij - 1)`` and the
regularized objective ``<C, P> - eps * H(P)``; its minimizer has the Gibbs form
``P_ij = exp((f_i + g_j - C_ij) / eps)`` with dual potentials f, g.
"""
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CapabilityError, ConfigError, DomainError, InputError, ShapeError
from .measures import as_cost_matrix, as_weights

MAX_ORACLE_SIZE = 7
SCALING_FACTOR = 0.5
STAGE_TOLERANCE = 1e-4


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.05
    max_iterations: int = 10_000
    tolerance: float = 1e-6
    log_domain: bool = True
    # anneal eps down from the cost range with warm starts (log-domain only)
    epsilon_scaling: bool = True

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ConfigError(f"epsilon must be positive, got {self.epsilon!r}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance!r}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be a positive integer, got {self.max_iterations!r}")


@dataclass(frozen=True)
class SinkhornSolution:
    plan: np.ndarray
    potentials_f: np.ndarray
    potentials_g: np.ndarray
    transport_cost: float
    reg_objective: float
    iterations_used: int
    converged: bool
    marginal_error: float
    epsilon: float

    def summary(self):
        return {
            "epsilon": self.epsilon,
            "iterations": self.iterations_used,
            "transport_cost": self.transport_cost,
            "reg_objective": self.reg_objective,
            "marginal_error": self.marginal_error,
            "converged": self.converged,
        }


def entropy(P):
    P = np.asarray(P, dtype=np.float64)
    if np.any(P < 0):
        raise DomainError("coupling has negative entries")
    pos = P[P > 0]
    return float(-np.sum(pos * (np.log(pos) - 1.0)))


def check_marginals(P, a, b):
    """Largest absolute violation of the row/column-sum constraints."""
    P = np.asarray(P, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if P.ndim != 2 or P.shape != (a.shape[0], b.shape[0]):
        raise ShapeError(f"plan shape {P.shape} does not match marginals ({a.shape[0]}, {b.shape[0]})")
    return float(max(np.abs(P.sum(axis=1) - a).max(), np.abs(P.sum(axis=0) - b).max()))


def _validate(a, b, C):
    C = as_cost_matrix(C)
    n, m = C.shape
    a = as_weights(a)
    b = as_weights(b)
    if a.shape[0] != n or b.shape[0] != m:
        raise ShapeError(f"marginals of length ({a.shape[0]}, {b.shape[0]}) do not match cost matrix {C.shape}")
    return a, b, C


def _epsilon_schedule(C, eps):
    span = float(C.max() - C.min())
    stages = []
    e = span
    while e > 2.0 * eps:
        stages.append(e)
        e *= SCALING_FACTOR
    stages.append(eps)
    return stages


def _solve_log(a, b, C, cfg):
    eps = float(cfg.epsilon)
    stages = _epsilon_schedule(C, eps) if cfg.epsilon_scaling else [eps]
    log_a = np.log(a)
    log_b = np.log(b)
    f = np.zeros(C.shape[0])
    g = np.zeros(C.shape[1])
    budget = int(cfg.max_iterations)
    used = 0
    for e in stages[:-1]:
        room = budget - used - 1  # keep one iteration for the target eps
        if room <= 0:
            break
        f, g, it, err = kernels.sinkhorn_log(
            C, log_a, log_b, e, room, max(float(cfg.tolerance), STAGE_TOLERANCE), f, g
        )
        used += it
    f, g, it, err = kernels.sinkhorn_log(C, log_a, log_b, eps, budget - used, float(cfg.tolerance), f, g)
    used += it
    return f, g, used, err


def sinkhorn_solve(a, b, C, cfg=None):
    """Solve the entropic OT problem between weights a and b for cost C.

    Non-convergence within ``cfg.max_iterations`` is not an error; the returned
    solution has ``converged=False`` and the caller decides what to do.
    """
    cfg = cfg or SinkhornConfig()
    a, b, C = _validate(a, b, C)
    if np.any(a == 0) or np.any(b == 0):
        raise InputError("marginals must be strictly positive")
    eps = float(cfg.epsilon)
    if cfg.log_domain:
        f, g, iters, err = _solve_log(a, b, C, cfg)
    else:
        u, v, iters, err = kernels.sinkhorn_plain_numpy(
            C, a, b, eps, int(cfg.max_iterations), float(cfg.tolerance)
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            f = eps * np.log(u)
            g = eps * np.log(v)
    with np.errstate(invalid="ignore", over="ignore"):
        plan = np.exp((f[:, None] + g[None, :] - C) / eps)
    err = float(err)
    converged = bool(np.isfinite(err) and err <= cfg.tolerance and np.all(np.isfinite(plan)))
    if np.all(np.isfinite(plan)):
        cost = float(np.sum(C * plan))
        reg = cost - eps * entropy(plan)
    else:
        cost = reg = math.nan
    return SinkhornSolution(
        plan=plan,
        potentials_f=np.asarray(f),
        potentials_g=np.asarray(g),
        transport_cost=cost,
        reg_objective=reg,
        iterations_used=int(iters),
        converged=converged,
        marginal_error=err,
        epsilon=eps,
    )


def lp_oracle(a, b, C):
    """Exact unregularized OT cost by enumerating permutations.

    Only uniform square problems up to 7x7 are supported: there an optimal plan
    is a permutation matrix scaled by 1/n.
    """
    a, b, C = _validate(a, b, C)
    n, m = C.shape
    if n != m or n > MAX_ORACLE_SIZE:
        raise CapabilityError(f"oracle handles square problems up to {MAX_ORACLE_SIZE}x{MAX_ORACLE_SIZE}, got {C.shape}")
    if np.any(a != 1.0 / n) or np.any(b != 1.0 / n):
        raise CapabilityError("oracle requires uniform marginals")
    rows = np.arange(n)
    best = None
    best_perm = None
    for perm in itertools.permutations(range(n)):
        total = math.fsum(C[rows, perm])
        if best is None or total < best:
            best = total
            best_perm = perm
    plan = np.zeros((n, n))
    plan[rows, best_perm] = 1.0 / n
    return best / n, plan
