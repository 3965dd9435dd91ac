"""Hot numeric loops, each with a numba kernel and a numpy fallback.

The public names at the bottom dispatch to one implementation or the other
according to ``_accel.USE_NUMBA``. Both variants are importable directly so
that tests and the benchmark can compare them in a single process.
"""
import math

import numpy as np

from . import _accel

# ---------------------------------------------------------------------------
# log-domain Sinkhorn
# ---------------------------------------------------------------------------


def _sinkhorn_log_py(C, log_a, log_b, eps, max_iter, tol, f, g):
    a = np.exp(log_a)
    b = np.exp(log_b)
    n, m = C.shape
    err = np.inf
    it = 0
    while it < max_iter:
        it += 1
        # f_i = eps*log a_i - eps*LSE_j((g_j - C_ij)/eps)
        A = (g[None, :] - C) / eps
        M = A.max(axis=1)
        f = eps * log_a - eps * (M + np.log(np.exp(A - M[:, None]).sum(axis=1)))
        A = (f[:, None] - C) / eps
        M = A.max(axis=0)
        g = eps * log_b - eps * (M + np.log(np.exp(A - M[None, :]).sum(axis=0)))
        P = np.exp((f[:, None] + g[None, :] - C) / eps)
        err = max(np.abs(P.sum(axis=1) - a).max(), np.abs(P.sum(axis=0) - b).max())
        if not np.isfinite(err) or err <= tol:
            break
    return f, g, it, err


def _sinkhorn_log_nb(C, log_a, log_b, eps, max_iter, tol, f, g):
    n, m = C.shape
    f = f.copy()
    g = g.copy()
    rows = np.empty(n)
    cols = np.empty(m)
    err = np.inf
    it = 0
    while it < max_iter:
        it += 1
        for i in range(n):
            mx = -np.inf
            for j in range(m):
                t = (g[j] - C[i, j]) / eps
                if t > mx:
                    mx = t
            s = 0.0
            for j in range(m):
                s += math.exp((g[j] - C[i, j]) / eps - mx)
            f[i] = eps * log_a[i] - eps * (mx + math.log(s))
        for j in range(m):
            mx = -np.inf
            for i in range(n):
                t = (f[i] - C[i, j]) / eps
                if t > mx:
                    mx = t
            s = 0.0
            for i in range(n):
                s += math.exp((f[i] - C[i, j]) / eps - mx)
            g[j] = eps * log_b[j] - eps * (mx + math.log(s))
        rows[:] = 0.0
        cols[:] = 0.0
        for i in range(n):
            for j in range(m):
                p = math.exp((f[i] + g[j] - C[i, j]) / eps)
                rows[i] += p
                cols[j] += p
        err = 0.0
        for i in range(n):
            d = abs(rows[i] - math.exp(log_a[i]))
            if d > err or d != d:
                err = d
        for j in range(m):
            d = abs(cols[j] - math.exp(log_b[j]))
            if d > err or d != d:
                err = d
        if err != err or err <= tol:
            break
    return f, g, it, err


sinkhorn_log_numpy = _sinkhorn_log_py
sinkhorn_log_numba = _accel.njit(_sinkhorn_log_nb)


def sinkhorn_plain_numpy(C, a, b, eps, max_iter, tol):
    """Classic scaling iterations on the Gibbs kernel exp(-C/eps).

    Returns the scalings (u, v) instead of potentials; may underflow for small
    eps, in which case ``err`` comes back non-finite.
    """
    K = np.exp(-C / eps)
    u = np.ones(C.shape[0])
    v = np.ones(C.shape[1])
    err = np.inf
    it = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        while it < max_iter:
            it += 1
            u = a / (K @ v)
            v = b / (K.T @ u)
            P = u[:, None] * K * v[None, :]
            err = max(np.abs(P.sum(axis=1) - a).max(), np.abs(P.sum(axis=0) - b).max())
            if not np.isfinite(err) or err <= tol:
                break
    return u, v, it, err


# ---------------------------------------------------------------------------
# bilinear crop-and-resize and its adjoint
# ---------------------------------------------------------------------------


def axis_taps(start, size, p):
    """Source indices and blend weights for one axis of a crop-and-resize.

    Output sample k reads source coordinate ``start + (k + 0.5) * size / p - 0.5``
    (pixel-centre alignment), clamped to the crop window.
    Returns ``(i0, i1, w1)``; the sample is ``(1 - w1) * x[i0] + w1 * x[i1]``.
    """
    lo = float(start)
    hi = float(start + size - 1)
    src = start + (np.arange(p) + 0.5) * (size / p) - 0.5
    src = np.clip(src, lo, hi)
    i0 = np.floor(src).astype(np.int64)
    w1 = src - i0
    i1 = np.minimum(i0 + 1, start + size - 1)
    return i0, i1, w1


def _axis_matrix(i0, i1, w1, length):
    R = np.zeros((len(i0), length))
    k = np.arange(len(i0))
    np.add.at(R, (k, i0), 1.0 - w1)
    np.add.at(R, (k, i1), w1)
    return R


def crop_resize_numpy(img, ytaps, xtaps):
    Ry = _axis_matrix(*ytaps, img.shape[0])
    Rx = _axis_matrix(*xtaps, img.shape[1])
    return np.einsum("sw,rwc->rsc", Rx, np.tensordot(Ry, img, axes=1))


def crop_resize_adjoint_numpy(cot, ytaps, xtaps, out):
    """Accumulate the transposed crop of ``cot`` into ``out`` (in place)."""
    Ry = _axis_matrix(*ytaps, out.shape[0])
    Rx = _axis_matrix(*xtaps, out.shape[1])
    out += np.einsum("sw,hsc->hwc", Rx, np.tensordot(Ry.T, cot, axes=1))
    return out


def _crop_resize_nb(img, yi0, yi1, yw, xi0, xi1, xw):
    p = yi0.shape[0]
    q = xi0.shape[0]
    nc = img.shape[2]
    out = np.empty((p, q, nc))
    for r in range(p):
        a0 = yi0[r]
        a1 = yi1[r]
        wy = yw[r]
        for s in range(q):
            b0 = xi0[s]
            b1 = xi1[s]
            wx = xw[s]
            for c in range(nc):
                top = (1.0 - wx) * img[a0, b0, c] + wx * img[a0, b1, c]
                bot = (1.0 - wx) * img[a1, b0, c] + wx * img[a1, b1, c]
                out[r, s, c] = (1.0 - wy) * top + wy * bot
    return out


def _crop_resize_adjoint_nb(cot, yi0, yi1, yw, xi0, xi1, xw, out):
    p = yi0.shape[0]
    q = xi0.shape[0]
    nc = cot.shape[2]
    for r in range(p):
        a0 = yi0[r]
        a1 = yi1[r]
        wy = yw[r]
        for s in range(q):
            b0 = xi0[s]
            b1 = xi1[s]
            wx = xw[s]
            for c in range(nc):
                t = cot[r, s, c]
                out[a0, b0, c] += (1.0 - wy) * (1.0 - wx) * t
                out[a0, b1, c] += (1.0 - wy) * wx * t
                out[a1, b0, c] += wy * (1.0 - wx) * t
                out[a1, b1, c] += wy * wx * t
    return out


_crop_resize_jit = _accel.njit(_crop_resize_nb)
_crop_resize_adjoint_jit = _accel.njit(_crop_resize_adjoint_nb)


def crop_resize_numba(img, ytaps, xtaps):
    return _crop_resize_jit(img, *ytaps, *xtaps)


def crop_resize_adjoint_numba(cot, ytaps, xtaps, out):
    return _crop_resize_adjoint_jit(cot, *ytaps, *xtaps, out)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if _accel.USE_NUMBA:
    sinkhorn_log = sinkhorn_log_numba
    crop_resize = crop_resize_numba
    crop_resize_adjoint = crop_resize_adjoint_numba
else:
    sinkhorn_log = sinkhorn_log_numpy
    crop_resize = crop_resize_numpy
    crop_resize_adjoint = crop_resize_adjoint_numpy
