"""Command-line interface.

    otguide solve COST.csv [--epsilon X] [--out DIR]
    otguide optimize --config RUN.conf [--out DIR]
    otguide diagnose --config RUN.conf [--run DIR | --patches CSV] [--out DIR]
    otguide compare --config RUN.conf [--out DIR]

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure
(Sinkhorn non-convergence with --strict, singular gradients).
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _accel
from .config import build_scene, load_config
from .diagnostics import (
    assign_patches,
    balance_metrics,
    plane_pairs,
    tangent_report,
    tangent_svg,
    write_tangent_csv,
)
from .errors import ConvergenceError, InputError, NumericalError
from .fileio import read_matrix_csv, read_vector_csv, write_matrix_csv, write_ppm, write_trajectory_csv
from .loss import MEAN, OT
from .measures import as_embeddings, uniform_weights
from .pipeline import PromptSet, evaluation_state, optimize
from .sinkhorn import SinkhornConfig, sinkhorn_solve

log = logging.getLogger("otguide")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _json_line(record):
    return json.dumps(record, separators=(", ", ": "))


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve(args, **extra):
    overrides = dict(seed=args.seed, epsilon=args.epsilon, mode=args.mode, **extra)
    if args.strict:
        overrides["strict"] = True
    return load_config(args.config, **overrides)


def _write_manifest(out, cfg, name="manifest.conf"):
    (out / name).write_text(cfg.to_manifest(), encoding="utf-8")


def _write_assignment(path, report):
    n, m = report.distances.shape
    rows = np.column_stack([np.arange(n), report.assigned, report.distances])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["patch", "assigned"] + [f"phi_{j}" for j in range(m)]) + "\n")
        for i, j, *d in rows.tolist():
            fh.write(",".join([str(int(i)), str(int(j))] + [repr(float(x)) for x in d]) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_solve(args):
    C = read_matrix_csv(args.cost)
    a = read_vector_csv(args.a) if args.a else uniform_weights(C.shape[0])
    b = read_vector_csv(args.b) if args.b else uniform_weights(C.shape[1])
    base = load_config(args.config) if args.config else None
    cfg = SinkhornConfig(
        epsilon=args.epsilon if args.epsilon is not None else (base.epsilon if base else 0.05),
        max_iterations=args.max_iterations or (base.max_iterations if base else 10_000),
        tolerance=args.tolerance or (base.tolerance if base else 1e-6),
        log_domain=not args.plain,
    )
    sol = sinkhorn_solve(a, b, C, cfg)
    out = _outdir(args.out)
    write_matrix_csv(out / "plan.csv", sol.plan)
    line = _json_line(sol.summary())
    (out / "summary.json").write_text(line + "\n", encoding="utf-8")
    print(line)
    if not sol.converged:
        if args.strict or (base and base.strict):
            raise ConvergenceError(
                f"Sinkhorn did not converge in {sol.iterations_used} iterations", sol.iterations_used
            )
        log.warning("Sinkhorn did not converge (marginal error %.3g)", sol.marginal_error)
    return EXIT_OK


def _run(cfg, kind):
    scene = build_scene(cfg)
    z, traj = optimize(cfg.optimizer_config(kind), scene.generator, scene.sampler, scene.encoder, scene.prompts, scene.z0)
    state = evaluation_state(
        z, scene.generator, scene.sampler, scene.encoder, scene.prompts,
        cfg.aggregation_mode(kind), cfg.n_patches, cfg.seed, cfg.metric,
    )
    return scene, z, traj, state


def cmd_optimize(args):
    cfg = _resolve(args, iterations=args.iterations)
    out = _outdir(args.out)
    _write_manifest(out, cfg)
    scene, z, traj, state = _run(cfg, cfg.mode)
    write_ppm(out / "image.ppm", scene.generator.generate(z))
    write_trajectory_csv(out / "trajectory.csv", traj)
    report = assign_patches(state.embeddings, scene.prompts, cfg.metric)
    _write_assignment(out / "assignment.csv", report)
    write_matrix_csv(out / "patches.csv", state.embeddings)
    write_matrix_csv(out / "prompts.csv", scene.prompts.embeddings)
    write_matrix_csv(out / "latent.csv", z[None, :])
    min_count, ent = balance_metrics(report)
    print(_json_line({"mode": cfg.mode, "seed": cfg.seed, "final_loss": traj.loss[-1],
                      "counts": report.counts.tolist(), "min_count": min_count, "normalized_entropy": ent}))
    return EXIT_OK


def _emit_tangents(out, report, arrow_scale, stem="tangent"):
    write_tangent_csv(report, out / f"{stem}.csv")
    m = report.phi.shape[1]
    if m < 2:
        print(f"{stem}: the cost plane needs at least 2 prompts (got {m}); SVG not written, CSV only",
              file=sys.stderr)
        return
    for jx, jy in plane_pairs(m):
        (out / f"{stem}_{jx}_{jy}.svg").write_text(tangent_svg(report, jx, jy, arrow_scale), encoding="utf-8")


def cmd_diagnose(args):
    config_path = args.config
    if args.run and not config_path and (Path(args.run) / "manifest.conf").exists():
        config_path = str(Path(args.run) / "manifest.conf")
    args.config = config_path
    cfg = _resolve(args)
    out = _outdir(args.out)
    if args.run or args.patches:
        patches_path = args.patches or str(Path(args.run) / "patches.csv")
        prompts_path = args.prompts or (str(Path(args.run) / "prompts.csv") if args.run else None)
        us = as_embeddings(read_matrix_csv(patches_path))
        if prompts_path:
            labels = [s.strip() for s in cfg.prompt_labels.split(",")] if cfg.prompt_labels else None
            prompts = PromptSet.from_vectors(read_matrix_csv(prompts_path), labels)
        else:
            prompts = build_scene(cfg).prompts
        if prompts.embeddings.shape[1] != us.shape[1]:
            raise InputError(f"patch embeddings have d={us.shape[1]} but prompts have d={prompts.embeddings.shape[1]}")
    else:
        scene, _, _, state = _run(cfg, cfg.mode)
        us, prompts = state.embeddings, scene.prompts
    _write_manifest(out, cfg)
    report = tangent_report(us, prompts, cfg.metric, cfg.aggregation_mode(), strict=cfg.strict)
    _emit_tangents(out, report, cfg.arrow_scale)
    return EXIT_OK


def cmd_compare(args):
    cfg = _resolve(args, iterations=args.iterations)
    out = _outdir(args.out)
    _write_manifest(out, cfg)
    lines = []
    header = None
    for kind in (OT, MEAN):
        scene, z, traj, state = _run(cfg, kind)
        write_trajectory_csv(out / f"trajectory_{kind}.csv", traj)
        report = assign_patches(state.embeddings, scene.prompts, cfg.metric)
        _write_assignment(out / f"assignment_{kind}.csv", report)
        write_ppm(out / f"image_{kind}.ppm", scene.generator.generate(z))
        tangents = tangent_report(state.embeddings, scene.prompts, cfg.metric, cfg.aggregation_mode(kind))
        _emit_tangents(out, tangents, cfg.arrow_scale, stem=f"tangent_{kind}")
        min_count, ent = balance_metrics(report)
        m = report.counts.shape[0]
        header = ["mode", "seed", "min_count", "normalized_entropy", "mix_std"] + [f"count_{j}" for j in range(m)]
        mix_std = float(tangents.mixing[:, 0].std())
        lines.append([kind, str(cfg.seed), str(min_count), repr(ent), repr(mix_std)] + [str(int(c)) for c in report.counts])
        print(_json_line({"mode": kind, "seed": cfg.seed, "min_count": min_count, "normalized_entropy": ent,
                          "counts": report.counts.tolist(), "mix_std": mix_std}))
    with open(out / "balance.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in lines:
            fh.write(",".join(row) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--mode", choices=(OT, MEAN))
    p.add_argument("--strict", action="store_true", help="treat Sinkhorn non-convergence as fatal (exit 3)")


def build_parser():
    parser = argparse.ArgumentParser(prog="otguide", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="entropic OT between uniform (or given) weights for a cost CSV")
    p.add_argument("cost", help="headerless cost-matrix CSV")
    p.add_argument("--a", help="source weights CSV (default uniform)")
    p.add_argument("--b", help="target weights CSV (default uniform)")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--plain", action="store_true", help="plain scaling iterations instead of log-domain")
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("optimize", help="run latent gradient descent and write image, trajectory, assignment")
    p.add_argument("--iterations", type=int)
    _common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("diagnose", help="tangent report (CSV + SVG) for a run, embedding CSVs, or a fresh run")
    p.add_argument("--run", help="output directory of a previous optimize run")
    p.add_argument("--patches", help="patch embeddings CSV")
    p.add_argument("--prompts", help="prompt embeddings CSV")
    _common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("compare", help="run OT and mean modes on identical seeds and report balance")
    p.add_argument("--iterations", type=int)
    _common(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    log.info("kernel backend: %s", _accel.backend_name())
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
