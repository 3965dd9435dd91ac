"""Patch-to-prompt assignment, cost-plane coordinates and tangent pushforwards.

The cost plane is R^m, the space of a patch's distances to the m prompts;
``phi(u) = [D(u, v_1), ..., D(u, v_m)]``. A patch-embedding gradient g is
pushed forward to the plane as ``w = J_phi(u) g``, whose j-th entry is the rate
at which the gradient step changes the distance to prompt j.
"""
import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .loss import evaluate_loss
from .measures import DEFAULT_METRIC, as_embedding, as_embeddings, build_cost_matrix, cost_gradient, get_metric


@dataclass(frozen=True)
class AssignmentReport:
    assigned: np.ndarray  # (n,) closest prompt index per patch
    counts: np.ndarray  # (m,)
    distances: np.ndarray  # (n, m) rows are phi(u_i)


@dataclass(frozen=True)
class TangentReport:
    phi: np.ndarray  # (n, m)
    w: np.ndarray  # (n, m)
    coupling: np.ndarray  # (n, m) plan used for the gradients
    assigned: np.ndarray
    labels: tuple
    mode: str
    epsilon: float
    metric: str
    objective: str

    @property
    def mixing(self):
        """Plan rows normalized to sum to one (per-patch prompt weights)."""
        return self.coupling / self.coupling.sum(axis=1, keepdims=True)


def phi(u, prompts, metric=DEFAULT_METRIC):
    fn = get_metric(metric)
    u = as_embedding(u)
    return np.array([fn(u, v) for v in prompts.embeddings])


def pushforward(u, prompts, metric, g):
    u = as_embedding(u)
    g = as_embedding(g)
    V = prompts.embeddings
    # row j of the Jacobian of phi is grad_u D(u, v_j)
    J = np.stack([cost_gradient(u[None, :], V[j : j + 1], np.ones((1, 1)), metric)[0] for j in range(V.shape[0])])
    return J @ g


def assign_patches(us, prompts, metric=DEFAULT_METRIC):
    C = build_cost_matrix(us, prompts.embeddings, metric)
    assigned = np.argmin(C, axis=1)  # first minimum wins ties
    return AssignmentReport(assigned, np.bincount(assigned, minlength=C.shape[1]), C)


def balance_metrics(report):
    """(smallest prompt count, entropy of the count distribution / log m)."""
    counts = np.asarray(report.counts if hasattr(report, "counts") else report)
    m = counts.shape[0]
    total = counts.sum()
    p = counts[counts > 0] / total
    h = float(-np.sum(p * np.log(p)))
    # + 0.0 turns -0.0 into 0.0
    return int(counts.min()), (h / math.log(m) + 0.0 if m > 1 else 1.0)


def tangent_report(us, prompts, metric, mode, strict=False):
    U = as_embeddings(us)
    rep = evaluate_loss(mode, U, prompts.embeddings, metric, strict=strict)
    w = np.stack([pushforward(u, prompts, metric, g) for u, g in zip(U, rep.patch_gradients)])
    return TangentReport(
        phi=rep.cost_matrix,
        w=w,
        coupling=rep.coupling,
        assigned=np.argmin(rep.cost_matrix, axis=1),
        labels=prompts.labels,
        mode=mode.kind,
        epsilon=mode.sinkhorn.epsilon if mode.is_ot else math.inf,
        metric=metric,
        objective=rep.objective,
    )


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_tangent_csv(report, path):
    n, m = report.phi.shape
    header = (
        ["patch"]
        + [f"phi_{j}" for j in range(m)]
        + [f"w_{j}" for j in range(m)]
        + ["assigned"]
        + [f"mix_{j}" for j in range(m)]
    )
    mix = report.mixing
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i in range(n):
            out.writerow(
                [i]
                + [repr(float(x)) for x in report.phi[i]]
                + [repr(float(x)) for x in report.w[i]]
                + [int(report.assigned[i])]
                + [repr(float(x)) for x in mix[i]]
            )


def _esc(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def tangent_svg(report, jx, jy, arrow_scale=1.0, size=480):
    """SVG 1.1 quiver plot of one coordinate pair of the cost plane.

    Points are phi(u_i); arrows are the descent direction -w_i times
    ``arrow_scale``.
    """
    pad = 60
    P = report.phi[:, [jx, jy]]
    A = -arrow_scale * report.w[:, [jx, jy]]
    ends = P + A
    allpts = np.vstack([P, ends])
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    span = np.where(hi - lo > 1e-12, hi - lo, 1.0)
    lo = lo - 0.05 * span
    span = span * 1.1
    inner = size - 2 * pad

    def tx(pt):
        return pad + (pt[0] - lo[0]) / span[0] * inner, size - pad - (pt[1] - lo[1]) / span[1] * inner

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        "<metadata>"
        f"mode={_esc(report.mode)}; epsilon={report.epsilon!r}; metric={_esc(report.metric)}; "
        f"objective={_esc(report.objective)}; arrow_scale={float(arrow_scale)!r}; arrows=-w"
        "</metadata>",
        '<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto">'
        '<path d="M0,0 L6,3 L0,6 z" fill="#444"/></marker></defs>',
        f'<rect x="{pad}" y="{pad}" width="{inner}" height="{inner}" fill="none" stroke="#888"/>',
        f'<text x="{size / 2:.1f}" y="{size - 15}" text-anchor="middle" font-size="14">'
        f"D(u, {_esc(report.labels[jx])})</text>",
        f'<text x="18" y="{size / 2:.1f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {size / 2:.1f})">D(u, {_esc(report.labels[jy])})</text>',
        f'<text x="{pad}" y="{pad - 10}" font-size="11">{_esc(report.mode)} (tick range x: '
        f"{lo[0]:.3g}..{lo[0] + span[0]:.3g}, y: {lo[1]:.3g}..{lo[1] + span[1]:.3g})</text>",
    ]
    for i in range(P.shape[0]):
        x0, y0 = tx(P[i])
        x1, y1 = tx(ends[i])
        color = colors[int(report.assigned[i]) % len(colors)]
        parts.append(
            f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" stroke="#444" '
            f'stroke-width="1" marker-end="url(#head)"/>'
        )
        parts.append(f'<circle cx="{x0:.2f}" cy="{y0:.2f}" r="3" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plane_pairs(m):
    """Coordinate pairs to plot: one plane for m=2, every pair for m>=3."""
    if m < 2:
        raise ValueError("the cost plane needs at least two prompts")
    return list(itertools.combinations(range(m), 2))
