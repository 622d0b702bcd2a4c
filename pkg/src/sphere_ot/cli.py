"""Command line: ``sphere-ot {generate,solve,study,check}``.

Exit codes: 0 success, 1 a property check failed, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .cloud import CLOUD_KINDS, PointCloud, generate_cloud, write_nodes
from .config import load_config
from .cost import transport_map
from .densities import NodalDensity, parse_density
from .exceptions import ConfigError, NumericalError
from .harness import STUDY_COLUMNS, convergence_study, property_suite, write_study_csv
from .solver import TransportProblem, shift_u

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
SOLVE_COLUMNS = ("index", "x", "y", "z", "u", "grad_x", "grad_y", "grad_z", "Tx", "Ty", "Tz")


def _thread_limit(threads):
    if threads is None:
        env = os.environ.get("SPHERE_OT_THREADS")
        threads = int(env) if env else None
    if threads is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(threads))


def _header(cfg, extra=()):
    lines = [f"# sphere_ot version: {__version__}", f"# config_sha256: {cfg.digest()}"]
    lines += [f"# config.{k} = {'' if v is None else v}" for k, v in cfg.items()]
    lines += [f"# {line}" for line in extra]
    return "\n".join(lines) + "\n"


def _cloud(cfg):
    if cfg.cloud in CLOUD_KINDS:
        return PointCloud.generate(cfg.cloud, cfg.n, alpha=cfg.alpha, C_r=cfg.C_r)
    path = cfg.cloud[5:] if cfg.cloud.startswith("file:") else cfg.cloud
    return PointCloud.generate("file", path=path, alpha=cfg.alpha, C_r=cfg.C_r)


def cmd_generate(args):
    nodes = generate_cloud(args.kind, args.n)
    if args.out:
        write_nodes(args.out, nodes)
        if args.obj:
            PointCloud.from_nodes(nodes).write_obj(args.obj)
    else:
        np.savetxt(sys.stdout, nodes, fmt="%.17g")
    return EXIT_OK


def cmd_solve(args, cfg):
    cloud = _cloud(cfg)
    model = cfg.cost_model()
    f1d = parse_density(cfg.f1, cloud)
    f1 = f1d.values if isinstance(f1d, NodalDensity) else f1d(cloud.nodes)
    f2 = parse_density(cfg.f2, cloud)
    problem = TransportProblem(cloud, model, f1, f2, cfg.solver_config())
    v, report = problem.solve()
    u = shift_u(cloud, v)
    grad = cloud.to_tangent(problem.gradient(u))
    T = transport_map(model, cloud.nodes, grad)
    rep = [f"report.{k} = {v_}" for k, v_ in report.as_dict().items()]
    rep.append(f"report.R = {model.R}")
    print(_header(cfg).rstrip())
    for line in rep:
        print(line)
    if args.out:
        table = np.column_stack([np.arange(cloud.n), cloud.nodes, u, grad, T])
        with open(args.out, "w") as fh:
            fh.write(_header(cfg, rep))
            fh.write(",".join(SOLVE_COLUMNS) + "\n")
            for row in table:
                fh.write(",".join([str(int(row[0]))] + [f"{x:.17g}" for x in row[1:]]) + "\n")
    return EXIT_OK


def study_levels(cfg):
    if cfg.levels < 1:
        raise ConfigError("levels must be at least 1")
    if cfg.cloud == "icosahedral":
        return [10 * 4 ** (k + 2) + 2 for k in range(cfg.levels)]
    if cfg.cloud == "fibonacci":
        return [cfg.n * 4**k for k in range(cfg.levels)]
    raise ConfigError("studies generate their clouds; use cloud = icosahedral or fibonacci")


def cmd_study(args, cfg):
    rows = convergence_study(cfg.potential, cfg.eps, study_levels(cfg), cfg.cloud, cfg.cost_model(),
                             cfg.solver_config())
    text = ",".join(STUDY_COLUMNS)
    print(_header(cfg).rstrip())
    print(text)
    for r in rows:
        print(",".join(str(r[k]) for k in STUDY_COLUMNS))
    if args.out:
        meta = {"sphere_ot version": __version__, "config_sha256": cfg.digest()}
        meta.update({f"config.{k}": ("" if v is None else v) for k, v in cfg.items()})
        write_study_csv(args.out, rows, metadata=meta)
    return EXIT_OK


def cmd_check(args, cfg):
    config = cfg.solver_config(eikonal_sign=-1 if args.broken_eikonal else 1)
    cloud = PointCloud.generate("fibonacci", cfg.n, alpha=cfg.alpha, C_r=cfg.C_r)
    results = property_suite(cloud, cfg.cost_model(), trials=cfg.trials, seed=cfg.seed, config=config)
    print(_header(cfg).rstrip())
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def build_parser():
    p = argparse.ArgumentParser(prog="sphere-ot", description="Optimal transport on the sphere.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a point cloud")
    g.add_argument("--kind", default="fibonacci", help=f"one of {', '.join(CLOUD_KINDS)}")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--out", help="node file (default: stdout)")
    g.add_argument("--obj", help="also write the triangulation as Wavefront OBJ")

    def common(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads (env SPHERE_OT_THREADS)")
        sp.add_argument("--cloud", help="icosahedral, fibonacci or a node file path")
        sp.add_argument("--n", type=int)
        sp.add_argument("--cost", help="squared or log")
        sp.add_argument("--R", type=float)
        sp.add_argument("--map-convention", choices=["full", "half"])
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--damping", type=float)
        sp.add_argument("--tau-constant", type=float)
        sp.add_argument("--delta-mode", choices=["zero", "tau"])
        sp.add_argument("--n-pairs", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")

    s = sub.add_parser("solve", help="solve a transport problem")
    common(s)
    s.add_argument("--f1", help="source density (uniform, vmf[:k[:w]], twobump[:k[:w]], file:PATH)")
    s.add_argument("--f2", help="target density (same forms)")
    s.add_argument("--renormalize-f2", action="store_const", const=True, default=None)

    st = sub.add_parser("study", help="manufactured-solution convergence study")
    common(st)
    st.add_argument("--levels", type=int)
    st.add_argument("--potential", choices=["zonal_linear", "zonal_bump"])
    st.add_argument("--eps", type=float)

    c = sub.add_parser("check", help="run the scheme property suite")
    common(c)
    c.add_argument("--trials", type=int)
    c.add_argument("--broken-eikonal", action="store_true", help=argparse.SUPPRESS)
    return p


_NOT_CONFIG = {"command", "config", "out", "obj", "verbose", "broken_eikonal", "kind"}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            return cmd_generate(args)
        overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
        if args.command == "check" and args.n is None and args.config is None:
            overrides["n"] = 500
        cfg = load_config(args.config, overrides)
        with _thread_limit(cfg.threads):
            return {"solve": cmd_solve, "study": cmd_study, "check": cmd_check}[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        best = getattr(exc, "best_residual", None)
        if best is not None:
            print(f"best residual: {best:.6e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
