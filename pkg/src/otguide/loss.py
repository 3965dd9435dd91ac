"""Aggregation losses over patch/prompt distance matrices.

Both modes are expressed as ``<C, Pi>`` for a coupling Pi: the mean baseline
uses the fixed independent coupling ``a b^T``; the OT mode uses the Sinkhorn
plan and reports the regularized objective. In both cases the gradient with
respect to patch embedding i is ``sum_j Pi_ij grad_u D(u_i, v_j)`` with Pi
held fixed (for OT this is exact by the envelope theorem).
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InputError
from .measures import DEFAULT_METRIC, as_embeddings, build_cost_matrix, cost_gradient, uniform_weights
from .sinkhorn import SinkhornConfig, SinkhornSolution, sinkhorn_solve

MEAN = "mean"
OT = "ot"


@dataclass(frozen=True)
class AggregationMode:
    kind: str = OT
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self):
        if self.kind not in (MEAN, OT):
            raise InputError(f"aggregation mode must be 'mean' or 'ot', got {self.kind!r}")

    @classmethod
    def mean(cls):
        return cls(MEAN)

    @classmethod
    def ot(cls, cfg=None, **kwargs):
        return cls(OT, cfg or SinkhornConfig(**kwargs))

    @property
    def is_ot(self):
        return self.kind == OT


@dataclass(frozen=True)
class LossReport:
    value: float
    transport_cost: float
    coupling: np.ndarray
    patch_gradients: np.ndarray
    mode: AggregationMode
    cost_matrix: np.ndarray
    marginal_error: float = 0.0
    converged: bool = True
    iterations_used: int = 0
    # which scalar the gradients differentiate
    objective: str = "mean"


def independent_coupling(n, m):
    return np.outer(uniform_weights(n), uniform_weights(m))


def mean_loss(us, vs, metric=DEFAULT_METRIC):
    """Average of all n*m patch/prompt distances."""
    return float(build_cost_matrix(us, vs, metric).mean())


def _solve(C, cfg, strict):
    n, m = C.shape
    sol = sinkhorn_solve(uniform_weights(n), uniform_weights(m), C, cfg)
    if strict and not sol.converged:
        raise ConvergenceError(
            f"Sinkhorn did not converge after {sol.iterations_used} iterations "
            f"(marginal error {sol.marginal_error:.3g} > {cfg.tolerance:g})",
            iterations_used=sol.iterations_used,
        )
    return sol


def loss_gradients(mode, us, vs, metric=DEFAULT_METRIC, coupling=None, strict=False):
    """Gradients of the aggregated loss with respect to each patch embedding.

    ``coupling`` skips the solve when the plan is already known.
    """
    U = as_embeddings(us)
    V = as_embeddings(vs)
    if coupling is None:
        if mode.is_ot:
            C = build_cost_matrix(U, V, metric)
            coupling = _solve(C, mode.sinkhorn, strict).plan
        else:
            coupling = independent_coupling(U.shape[0], V.shape[0])
    return cost_gradient(U, V, coupling, metric)


def ot_loss(us, vs, metric=DEFAULT_METRIC, cfg=None, strict=False):
    return evaluate_loss(AggregationMode.ot(cfg), us, vs, metric, strict=strict)


def evaluate_loss(mode, us, vs, metric=DEFAULT_METRIC, strict=False):
    U = as_embeddings(us)
    V = as_embeddings(vs)
    C = build_cost_matrix(U, V, metric)
    if mode.is_ot:
        sol: SinkhornSolution = _solve(C, mode.sinkhorn, strict)
        Pi = sol.plan
        extra = dict(
            value=sol.reg_objective,
            transport_cost=sol.transport_cost,
            marginal_error=sol.marginal_error,
            converged=sol.converged,
            iterations_used=sol.iterations_used,
            objective="regularized",
        )
    else:
        Pi = independent_coupling(*C.shape)
        cost = float(np.sum(C * Pi))
        extra = dict(value=cost, transport_cost=cost)
    grads = cost_gradient(U, V, Pi, metric)
    return LossReport(coupling=Pi, patch_gradients=grads, mode=mode, cost_matrix=C, **extra)
