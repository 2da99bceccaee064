"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 numerical failure (inner solver
non-convergence or a failed certificate).
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import json
import logging
import os
import sys
from typing import List, Optional

from . import __version__
from . import boundedness as bd
from . import certify as ct
from . import config as cfgmod
from . import grid as gr
from . import mollify as mo
from . import solver as sv
from . import store
from .errors import LGFlowError, NonConvergence

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
log = logging.getLogger("lgflow")


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def threads(requested: Optional[int]) -> int:
    """``--threads``, else ``LGF_THREADS``, else the available parallelism."""
    if requested is not None:
        n = requested
    elif os.environ.get("LGF_THREADS"):
        try:
            n = int(os.environ["LGF_THREADS"])
        except ValueError:
            raise LGFlowError(f"LGF_THREADS must be an integer, got {os.environ['LGF_THREADS']!r}")
    else:
        n = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    if n < 1:
        raise LGFlowError("thread count must be >= 1")
    return n


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands

def cmd_solve(args) -> int:
    cfg = cfgmod.load_config(args.config)
    prob = cfgmod.build_problem(cfg)
    scfg = cfgmod.solve_config(cfg)

    def progress(s):
        log.info("step %d t=%.6g iters=%d gap=%.3g", s.k, s.t, s.inner_iters, s.gap)

    status, code = "converged", EXIT_OK
    try:
        traj = sv.solve(prob, scfg, progress)
    except NonConvergence as exc:
        traj, status, code = exc.best, f"nonconvergence at step {exc.step_index}", EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
    meta = {"problem": prob.name, "T": prob.T, "solve": scfg.to_dict(), "status": status}
    outs = store.save_trajectory(args.out, traj, meta)
    store.write_manifest(args.out, "solve", cfg.hash, cfg.seed, outs, {"status": status})
    print(f"{args.out}: {traj.n_steps} steps, {status}")
    return code


def cmd_certify(args) -> int:
    traj = store.load_trajectory(args.traj_dir)
    settings = {}
    cfg_hash, seed = None, None
    if args.config:
        cfg = cfgmod.load_config(args.config)
        settings, cfg_hash, seed = dict(cfg.certify), cfg.hash, cfg.seed
        settings.setdefault("seed", cfg.seed)
    battery = args.battery if args.battery is not None else int(settings.get("battery", 16))
    seed = args.seed if args.seed is not None else int(settings.get("seed", 0))
    tol = args.tol if args.tol is not None else settings.get("tol")
    fam = ct.TestFunctionFamily(count=battery, seed=seed,
                                canonical=bool(settings.get("canonical", True)))
    rep = ct.certify(traj, fam, tol=tol)
    out = args.out or os.path.join(args.traj_dir, "certificate")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "certificate.json"), "w") as fh:
        fh.write(rep.to_json())
    store.write_manifest(out, "certify", cfg_hash, seed, ["certificate.json"],
                         {"pass": rep.passed})
    for r in rep.results:
        print(f"{r.condition:16s} residual={r.residual:.3e} tol={r.tol:.1e} "
              f"{'PASS' if r.passed else 'FAIL'}")
    print("overall:", "PASS" if rep.passed else "FAIL")
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def cmd_sweep_mu(args) -> int:
    cfg = cfgmod.load_config(args.config)
    prob = cfgmod.build_problem(cfg)
    scfg = cfgmod.solve_config(cfg)
    n = threads(args.threads)
    if n > 1:
        with cf.ThreadPoolExecutor(max_workers=n) as ex:
            rep = sv.stability_sweep(prob, args.mus, scfg, executor=ex)
    else:
        rep = sv.stability_sweep(prob, args.mus, scfg)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "sweep.json"), rep.to_dict())
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mu", "distance_to_next", "max_dual_norm", "conjugate_violation",
                    "mu_gap_min", "mu_gap_max"])
        for i, m in enumerate(rep.mus):
            d = rep.distances[i] if i < len(rep.distances) else ""
            w.writerow([repr(m), repr(d) if d != "" else "", repr(rep.max_dual_norm[i]),
                        repr(rep.conjugate_violation[i]), repr(rep.mu_gap_min[i]),
                        repr(rep.mu_gap_max[i])])
    store.write_manifest(args.out, "sweep-mu", cfg.hash, cfg.seed, ["sweep.json", "sweep.csv"])
    print(f"{args.out}: distances {['%.3e' % d for d in rep.distances]}")
    return EXIT_OK


def cmd_mollify(args) -> int:
    traj = store.load_trajectory(args.traj_dir)
    rows = mo.area_strict_report(traj.u, args.deltas)
    os.makedirs(args.out, exist_ok=True)
    mo.write_report_csv(os.path.join(args.out, "mollify.csv"), rows)
    store.write_manifest(args.out, "mollify", None, None, ["mollify.csv"])
    for r in rows:
        print(f"delta={r.delta:g} l1={r.l1_gap:.4e} area={r.area_gap:.4e} trace={r.trace_gap:.4e}")
    return EXIT_OK


def cmd_degiorgi(args) -> int:
    traj = store.load_trajectory(args.traj_dir)
    t0 = args.t0 if args.t0 is not None else float(traj.times[-1])
    cyl = bd.Cylinder(tuple(args.center), t0, args.rho, args.theta)
    dcfg = bd.DeGiorgiConfig(k0=args.k0, xi=args.xi, r=args.r, c_cal=args.c_cal,
                             max_levels=args.max_levels)
    res = bd.degiorgi_supbound(traj.u, cyl, dcfg)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "degiorgi.json"), "w") as fh:
        fh.write(res.to_json())
    res.write_table_csv(os.path.join(args.out, "degiorgi_levels.csv"))
    store.write_manifest(args.out, "degiorgi", None, None,
                         ["degiorgi.json", "degiorgi_levels.csv"])
    print(f"bound={res.bound:.6g} actual_max={res.actual_max:.6g} sound={res.sound} "
          f"converged={res.converged}")
    return EXIT_OK


def cmd_example_radial(args) -> int:
    g = bd.centred_grid(args.n, args.grid)
    u = bd.unbounded_example(args.n, g, args.t)
    rows = bd.ball_max_growth(u)
    os.makedirs(args.out, exist_ok=True)
    gr.write_field(os.path.join(args.out, "unbounded.lgf"), u)
    with open(os.path.join(args.out, "growth.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "radius", "max", "ratio"])
        prev = None
        for j, r, m in rows:
            w.writerow([j, repr(r), repr(m), repr(m / prev) if prev else ""])
            prev = m
    store.write_manifest(args.out, "example-radial", None, None, ["unbounded.lgf", "growth.csv"])
    for j, r, m in rows:
        print(f"j={j} radius={r:g} max={m:.6g}")
    return EXIT_OK


def cmd_export_csv(args) -> int:
    traj = store.load_trajectory(args.traj_dir)
    os.makedirs(args.out, exist_ok=True)
    outs = []
    for k in range(0, len(traj.u), args.every):
        name = f"u_{k:04d}.csv"
        gr.write_csv(os.path.join(args.out, name), traj.u.frames[k])
        outs.append(name)
    store.write_manifest(args.out, "export-csv", None, None, outs)
    print(f"{args.out}: {len(outs)} frames")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgflow", description="Linear-growth gradient flows: "
                                "solve, certify and analyse discrete trajectories.")
    p.add_argument("--version", action="version", version=f"lgflow {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on parallel workers (default: LGF_THREADS or available CPUs)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("solve", help="solve the flow described by a config file")
    s.add_argument("config", help="TOML or JSON run config")
    s.add_argument("--out", required=True, help="output trajectory directory")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("certify", help="check a stored trajectory against the solution conditions")
    s.add_argument("traj_dir", help="trajectory directory written by 'solve'")
    s.add_argument("--config", help="config whose [certify] section supplies defaults")
    s.add_argument("--battery", type=int, default=None,
                   help="number of random test functions besides the canonical set (default 16)")
    s.add_argument("--seed", type=int, default=None, help="seed of the random test functions")
    s.add_argument("--tol", type=float, default=None,
                   help="tolerance for every condition (default: per-method defaults)")
    s.add_argument("--out", default=None, help="report directory (default TRAJ_DIR/certificate)")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("sweep-mu", help="stability sweep over regularization parameters")
    s.add_argument("config", help="TOML or JSON run config")
    s.add_argument("--mus", type=_floats, default=[0.1, 0.05, 0.025, 0.0125],
                   help="comma-separated, strictly decreasing (default 0.1,0.05,0.025,0.0125)")
    s.add_argument("--out", required=True, help="report directory")
    s.set_defaults(func=cmd_sweep_mu)

    s = sub.add_parser("mollify", help="area-strict convergence report of time mollification")
    s.add_argument("traj_dir", help="trajectory directory")
    s.add_argument("--deltas", type=_floats, default=[0.2, 0.1, 0.05, 0.025],
                   help="comma-separated, strictly decreasing (default 0.2,0.1,0.05,0.025)")
    s.add_argument("--out", required=True, help="report directory")
    s.set_defaults(func=cmd_mollify)

    s = sub.add_parser("degiorgi", help="level-set sup bound on a backward cylinder")
    s.add_argument("traj_dir", help="trajectory directory")
    s.add_argument("--center", type=_floats, required=True, help="cylinder centre, e.g. 0.5,0.5")
    s.add_argument("--t0", type=float, default=None, help="top time (default: final stamp)")
    s.add_argument("--rho", type=float, required=True, help="cylinder radius")
    s.add_argument("--theta", type=float, required=True, help="time aspect: length is theta*rho")
    s.add_argument("--r", type=float, default=4.0, help="integrability exponent, > dimension")
    s.add_argument("--xi", type=float, default=1.0, help="free parameter xi > 0")
    s.add_argument("--k0", type=float, default=0.0, help="base level")
    s.add_argument("--c-cal", type=float, default=1.0, help="calibrated constant")
    s.add_argument("--max-levels", type=int, default=60, help="level iterations")
    s.add_argument("--out", required=True, help="report directory")
    s.set_defaults(func=cmd_degiorgi)

    s = sub.add_parser("example-radial", help="unbounded explicit solution and its ball maxima")
    s.add_argument("--n", type=int, default=2, help="dimension (1 or 2)")
    s.add_argument("--grid", type=int, default=257,
                   help="odd cells per axis on [-1, 1]; the origin is a cell centre")
    s.add_argument("--t", type=float, default=0.0, help="time")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_example_radial)

    s = sub.add_parser("export-csv", help="export trajectory frames as CSV")
    s.add_argument("traj_dir", help="trajectory directory")
    s.add_argument("--every", type=int, default=1, help="export every k-th frame")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_export_csv)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        threads(args.threads)
        if getattr(args, "every", 1) < 1:
            raise LGFlowError("--every must be >= 1")
        return args.func(args)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LGFlowError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
