"""Command-line front end.

Every command writes plain CSV/JSON into ``--out``; figures are left to
external tools.  Exit codes: 0 success, 2 config error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .core import ConfigError, DataError, NumericError, SolverConfig, substream
from .density import DensityModel, density_from_dict, standard_gaussian
from .io import read_points, write_points, write_table
from .solver import fit_general
from .transport import FlowFormatError, FlowRecord

log = logging.getLogger("advot")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _solver_flags(p):
    p.add_argument("--config", type=Path, help="JSON file with solver settings")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--iters", type=int, help="number of iterations")
    p.add_argument("--nr", type=int, help="representers per cloud")
    p.add_argument("--precondition", type=_on_off, metavar="on|off")
    p.add_argument("--optimizer", choices=("implicit", "gda"))
    p.add_argument("--map", dest="map_family", choices=("radial_erf", "radial_iq", "multinomial"))


def _overrides(args) -> dict:
    out = {}
    for flag, key in (("seed", "rng_seed"), ("iters", "max_iterations"), ("nr", "n_representers"),
                      ("precondition", "precondition"), ("map_family", "map_family")):
        val = getattr(args, flag, None)
        if val is not None:
            out[key] = val
    if getattr(args, "optimizer", None) is not None:
        out["optimizer"] = "implicit" if args.optimizer == "implicit" else "explicit_gda"
    return out


def _config(args, defaults=None) -> SolverConfig:
    cfg = SolverConfig.from_json(args.config) if args.config else SolverConfig(**(defaults or {}))
    over = _overrides(args)
    return cfg.updated(**over) if over else cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load_flow(path) -> FlowRecord:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    return FlowRecord.load(path)


def cmd_fit(args):
    cfg = _config(args)
    x = read_points(args.source, "source points")
    y = read_points(args.target, "target points")
    res = fit_general(x, y, cfg)
    out = _out(args)
    res.flow.save(out / "flow.json")
    res.diagnostics.write_csv(out / "diagnostics.csv")
    last = res.diagnostics[-1] if len(res.diagnostics) else None
    _write_json(out / "summary.json", {
        "iterations": res.iterations, "termination": res.termination,
        "final_cost": None if last is None else last.cost,
        "final_constraint": None if last is None else last.constraint})


def cmd_replay(args):
    flow = _load_flow(args.flow)
    pts = read_points(args.points)
    _check_dim(flow, pts)
    write_points(_out(args) / "mapped.csv", flow.apply(pts), prefix="y")


def _check_dim(flow, pts):
    if pts.shape[1] != flow.dim:
        raise DataError(f"points have {pts.shape[1]} columns but the flow is {flow.dim}-dimensional")


def _read_density(path):
    try:
        return density_from_dict(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a density description ({exc})") from exc


def cmd_density(args):
    flow = _load_flow(args.flow)
    pts = read_points(args.points)
    _check_dim(flow, pts)
    target = _read_density(args.target_density) if args.target_density else standard_gaussian(flow.dim)
    if target.dim != flow.dim:
        raise DataError(f"target density is {target.dim}-dimensional but the flow is {flow.dim}")
    model = DensityModel(flow, target)
    logp = model.log_density(pts)
    out = _out(args)
    header = [f"x{j}" for j in range(flow.dim)] + ["log_density"]
    write_table(out / "logdensity.csv", header, np.column_stack([pts, logp]).tolist())
    _write_json(out / "summary.json", {"points": int(pts.shape[0]),
                                       "singular": model.singular_count,
                                       "negative_determinant": model.negative_count})


def cmd_generate(args):
    flow = _load_flow(args.flow)
    if args.n < 1:
        raise ConfigError("--n must be positive")
    seed = 0 if args.seed is None else args.seed
    z = substream(seed, "generate").standard_normal((args.n, flow.dim))
    write_points(_out(args) / "samples.csv", flow.apply(z))


def cmd_recover_1d(args):
    cfg = _config(args, experiments.RECOVER_1D_DEFAULTS)
    seed = cfg.rng_seed if args.seed is None else args.seed
    rec = experiments.recover_1d(args.n, seed, cfg=cfg)
    out = _out(args)
    write_table(out / "map.csv", ["x", "t_fit", "t_true"], rec.table().tolist())
    rec.fit.diagnostics.write_csv(out / "diagnostics.csv")
    rec.fit.flow.save(out / "flow.json")
    _write_json(out / "summary.json", {
        "initial_l1": rec.initial_l1, "final_l1": rec.final_l1,
        "monotone_fraction": rec.monotone, "final_cost": rec.final_cost,
        "oracle_cost": rec.oracle_cost, "iterations": rec.fit.iterations})


def cmd_trimodal_2d(args):
    cfg = _config(args, experiments.TRIMODAL_DEFAULTS)
    seed = cfg.rng_seed if args.seed is None else args.seed
    out = _out(args)
    if args.sweep_nr:
        rows = []
        for n_r in args.sweep_nr:
            for s in range(seed, seed + args.seeds):
                run = experiments.trimodal_2d(s, n_representers=n_r, cfg=cfg,
                                              kl_every=cfg.max_iterations, n_eval=args.n_eval)
                rows.append((n_r, s, run.kl_initial, run.kl_final))
        write_table(out / "sweep.csv", ["n_representers", "seed", "kl_initial", "kl_final"], rows)
        return
    run = experiments.trimodal_2d(seed, n_representers=cfg.n_representers, cfg=cfg,
                                  kl_every=args.kl_every, n_eval=args.n_eval)
    write_table(out / "kl.csv", ["iteration", "kl", "stderr"],
                [(-1, run.kl_initial, None)] + run.kl_trace)
    write_table(out / "density_grid.csv", ["iteration", "x0", "x1", "log_density"],
                [(it, *pt, lp) for it in sorted(run.densities)
                 for pt, lp in zip(run.grid.tolist(), run.densities[it])])
    write_table(out / "passive_grid.csv", ["iteration", "point", "x0", "x1"],
                [(it, i, *pt) for it in sorted(run.trajectories)
                 for i, pt in enumerate(run.trajectories[it].tolist())])
    run.fit.diagnostics.write_csv(out / "diagnostics.csv")
    run.fit.flow.save(out / "flow.json")
    _write_json(out / "summary.json", {"kl_initial": run.kl_initial, "kl_final": run.kl_final,
                                       "iterations": run.fit.iterations})


def cmd_bench_dim(args):
    cfg = _config(args, experiments.BENCH_DEFAULTS)
    seed = cfg.rng_seed if args.seed is None else args.seed
    iters = args.iters if args.iters is not None else 30
    rows = experiments.bench_dim(args.dims, iters=iters, n_samples=args.n, seed=seed,
                                 n_representers=cfg.n_representers,
                                 cfg=cfg.updated(max_iterations=iters + 10))
    out = _out(args)
    write_table(out / "timing.csv", ["d", "mean_time", "std"], [(r.dim, r.mean, r.std) for r in rows])
    _write_json(out / "summary.json", {"r2": experiments.linear_fit_r2(
        [r.dim for r in rows], [r.mean for r in rows])})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advot", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a flow from source to target samples")
    p.add_argument("source", type=Path)
    p.add_argument("target", type=Path)
    _solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("replay", help="map points through a saved flow")
    p.add_argument("flow", type=Path)
    p.add_argument("points", type=Path)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("density", help="log-density of points under a saved flow")
    p.add_argument("flow", type=Path)
    p.add_argument("points", type=Path)
    p.add_argument("--target-density", type=Path,
                   help="JSON density of the flow's target (default: standard normal)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("generate", help="push standard normal draws through a saved flow")
    p.add_argument("flow", type=Path)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("recover-1d", help="1D optimal map recovery experiment")
    _solver_flags(p)
    p.add_argument("--n", type=int, default=1000, help="samples per batch")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recover_1d)

    p = sub.add_parser("trimodal-2d", help="2D tri-modal density estimation experiment")
    _solver_flags(p)
    p.add_argument("--kl-every", type=int, default=100)
    p.add_argument("--n-eval", type=int, default=10000, help="Monte Carlo points for KL")
    p.add_argument("--sweep-nr", type=_int_list, help="comma-separated N_r values to sweep")
    p.add_argument("--seeds", type=int, default=10, help="seeds per N_r in a sweep")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trimodal_2d)

    p = sub.add_parser("bench-dim", help="time per iteration against the dimension")
    _solver_flags(p)
    p.add_argument("--dims", type=_int_list, default=[2, 4, 8, 16, 32, 64])
    p.add_argument("--n", type=int, default=200, help="samples per cloud")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_dim)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FlowFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
