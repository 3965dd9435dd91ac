"""Embeddings, probability weights, cost matrices and the two angular distances.

Embeddings, weight vectors and cost matrices are plain float64 numpy arrays;
the ``as_*`` helpers validate and convert. Metrics are referred to by name
(``"cosine"`` or ``"geodesic"``).
"""
import math

import numpy as np

from .errors import DomainError, GradientSingularityError, InputError, ShapeError

DEFAULT_METRIC = "cosine"
# |cos| above this makes the arccos derivative blow up
GEODESIC_SINGULAR = 1.0 - 1e-9


def as_embedding(values):
    u = np.asarray(values, dtype=np.float64)
    if u.ndim != 1 or u.size == 0:
        raise ShapeError(f"embedding must be a non-empty vector, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise DomainError("embedding has non-finite entries")
    return u


def as_embeddings(rows):
    """Stack a list of embeddings (or a 2-D array) into an (n, d) array."""
    U = np.asarray(rows, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] == 0 or U.shape[1] == 0:
        raise ShapeError(f"expected a non-empty (n, d) array of embeddings, got shape {U.shape}")
    if not np.all(np.isfinite(U)):
        raise DomainError("embeddings have non-finite entries")
    return U


def as_weights(w, atol=1e-12):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ShapeError(f"weights must be a non-empty vector, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite and nonnegative")
    if abs(math.fsum(w) - 1.0) > atol:
        raise DomainError(f"weights sum to {math.fsum(w)!r}, expected 1")
    return w


def uniform_weights(k):
    if int(k) != k or k < 1:
        raise InputError(f"uniform_weights needs a positive integer, got {k!r}")
    return np.full(int(k), 1.0 / k)


def _check_pair(u, v):
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")


def _norm(u):
    return math.sqrt(float(np.dot(u, u)))


def _similarity(u, v):
    nu = _norm(u)
    nv = _norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DomainError("zero-norm vector has no direction")
    s = float(np.dot(u, v)) / (nu * nv)
    return min(1.0, max(-1.0, s))


def cosine_distance(u, v):
    """1 - cos(u, v), in [0, 2]."""
    u = as_embedding(u)
    v = as_embedding(v)
    _check_pair(u, v)
    return 1.0 - _similarity(u, v)


def geodesic_distance(u, v):
    """Angle between u and v on the unit sphere, in [0, pi]."""
    u = as_embedding(u)
    v = as_embedding(v)
    _check_pair(u, v)
    return math.acos(_similarity(u, v))


METRICS = {"cosine": cosine_distance, "geodesic": geodesic_distance}


def get_metric(metric):
    try:
        return METRICS[metric]
    except KeyError:
        raise InputError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}") from None


def _ds_coefficient(metric, s):
    """dD/ds for D expressed through the cosine similarity s."""
    if metric == "cosine":
        return -np.ones_like(s)
    if metric == "geodesic":
        return -1.0 / np.sqrt(1.0 - s * s)
    raise InputError(f"unknown metric {metric!r}")


def distance_grad(metric, u, v):
    """Gradient of D(u, v) with respect to u."""
    get_metric(metric)
    u = as_embedding(u)
    v = as_embedding(v)
    _check_pair(u, v)
    return cost_gradient(u[None, :], v[None, :], np.ones((1, 1)), metric)[0]


def cost_gradient(U, V, W, metric=DEFAULT_METRIC):
    """Row-wise weighted sum of distance gradients.

    Returns G with ``G[i] = sum_j W[i, j] * grad_u D(U[i], V[j])``. This is the
    cotangent of the cost matrix pulled back to the patch embeddings.
    """
    nu = np.sqrt(np.einsum("id,id->i", U, U))
    nv = np.sqrt(np.einsum("jd,jd->j", V, V))
    if np.any(nu == 0) or np.any(nv == 0):
        raise DomainError("zero-norm vector has no direction")
    S = np.clip((U @ V.T) / np.outer(nu, nv), -1.0, 1.0)
    if metric == "geodesic":
        bad = np.abs(S) >= GEODESIC_SINGULAR
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise GradientSingularityError(
                f"geodesic gradient is singular: patch {i} is collinear with prompt {j}", index=int(i)
            )
    coef = W * _ds_coefficient(metric, S)
    # grad_u s(u, v) = v / (|u||v|) - s u / |u|^2
    G = (coef / np.outer(nu, nv)) @ V
    G -= ((coef * S).sum(axis=1) / nu**2)[:, None] * U
    return G


def build_cost_matrix(us, vs, metric=DEFAULT_METRIC):
    """C[i, j] = metric(us[i], vs[j]), each entry computed by the scalar metric."""
    fn = get_metric(metric)
    U = as_embeddings(us)
    V = as_embeddings(vs)
    if U.shape[1] != V.shape[1]:
        raise ShapeError(f"dimension mismatch: patches have d={U.shape[1]}, prompts d={V.shape[1]}")
    C = np.empty((U.shape[0], V.shape[0]))
    for i in range(U.shape[0]):
        for j in range(V.shape[0]):
            try:
                C[i, j] = fn(U[i], V[j])
            except InputError as exc:
                raise type(exc)(f"at ({i}, {j}): {exc}") from exc
    return C


def as_cost_matrix(C):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or 0 in C.shape:
        raise ShapeError(f"cost matrix must be a non-empty 2-D array, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise InputError("cost matrix has non-finite entries")
    return C
