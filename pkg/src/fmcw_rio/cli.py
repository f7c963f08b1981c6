"""Command line entry point: ``fmcw-rio <subcommand> ...``.

Data files go to ``--out``; a JSON summary goes to stdout. Validation
problems exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, metrics, radar
from .errors import ConfigError, DatasetError, DomainError, InitializationError

log = logging.getLogger("fmcw_rio")


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _vector(text):
    try:
        vals = [float(x) for x in text.replace(" ", "").split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected vx,vy,vz, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three components, got {len(vals)}")
    return vals


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def _emit(summary):
    print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))


def _velocity(args):
    if args.velocity is not None:
        return args.velocity
    return [args.speed, 0.0, 0.0]


# ------------------------------------------------------------------ subcommands


def cmd_noise_sim(args):
    cfg = radar.load_chirp_config(args.config or "rc1")
    res = analysis.noise_sim(cfg, args.speed, args.samples, args.seed)
    if args.out:
        analysis.write_histogram_csv(res["histogram"], args.out)
    return res["summary"]


def cmd_approx_error(args):
    cfg = radar.load_chirp_config(args.config or "rc1")
    grid = analysis.approx_error(cfg, _velocity(args), args.spacing, args.limit, args.samples,
                                 args.seed, args.workers)
    if args.out:
        grid.write_csv(args.out)
    return grid.meta


def cmd_contour(args):
    names = args.config or ["rc2"]
    grids = [analysis.contour(radar.load_chirp_config(n), _velocity(args), args.spacing, args.limit)
             for n in names]
    if args.out:
        fields = {}
        for g in grids:
            prefix = g.meta["config"]
            for k, v in g.fields.items():
                fields[f"{prefix}_{k}"] = v
        analysis.GridResult(grids[0].azimuth_deg, grids[0].elevation_deg, fields).write_csv(args.out)
    return {"configs": [g.meta for g in grids]}


def cmd_alias_region(args):
    cfg = radar.load_chirp_config(args.config or "rc1")
    grid = analysis.alias_region(cfg, _velocity(args), args.spacing, args.limit)
    if args.out:
        grid.write_csv(args.out)
    return grid.meta


def cmd_synth(args):
    from .sim import generate_dataset, write_dataset

    scenario = analysis.load_scenario(args.config)
    over = {}
    if args.chirp:
        over["chirp"] = args.chirp
    tr = {k: v for k, v in (("kind", args.trajectory), ("speed", args.speed), ("duration", args.duration))
          if v is not None}
    if tr:
        over["trajectory"] = tr
    scenario = analysis._merge(scenario, over)
    traj, env, cfg, rig, seed = analysis.build_scenario(scenario, args.seed)
    ds = generate_dataset(traj, env, cfg, rig, seed)
    out = Path(args.out or "dataset.jsonl")
    write_dataset(ds, out)
    truth_path = Path(args.truth_out) if args.truth_out else out.with_suffix(".truth.tum")
    metrics.write_tum(truth_path, metrics.trajectory_from_poses((s.t, s.R, s.p) for s in ds.truth))
    summary = analysis.synth_summary(ds)
    summary.update({"dataset": str(out), "truth": str(truth_path), "seed": seed, "chirp": cfg.name,
                    "trajectory": traj.kind, "speed": traj.speed})
    return summary


def cmd_odom(args):
    from .estimator import load_estimator_config, run_odometry
    from .sim import read_dataset

    if not args.dataset:
        raise ConfigError("--dataset is required", "dataset")
    cfg = load_estimator_config(args.config or "noise")
    ds = read_dataset(args.dataset)
    res = run_odometry(ds, cfg)
    prefix = args.out or str(Path(args.dataset).with_suffix(""))
    low, high = Path(prefix + ".lowrate.tum"), Path(prefix + ".highrate.tum")
    metrics.write_tum(low, metrics.trajectory_from_poses(res.low_rate))
    metrics.write_tum(high, metrics.trajectory_from_poses(res.high_rate))
    summary = {"lowrate": str(low), "highrate": str(high), "poses": len(res.low_rate),
               "runtime": res.runtime_stats(), "diagnostics": res.diagnostics[:20]}
    if args.map_out and res.map is not None:
        res.map.export(args.map_out)
        summary["map"] = str(args.map_out)
    return summary


def cmd_eval(args):
    if not (args.estimate and args.truth):
        raise ConfigError("--estimate and --truth are required", "estimate")
    est = metrics.read_tum(args.estimate)
    ref = metrics.read_tum(args.truth)
    m = metrics.evaluate(est, ref, args.segment, args.tol)
    summary = m.summary()
    summary["ape"] = f"{m.ape_rmse:.3f} ± {m.ape_std:.3f}"
    summary["rpe"] = f"{m.rpe_rmse:.3f} ± {m.rpe_std:.3f}"
    if args.out:
        with Path(args.out).open("w") as fh:
            fh.write("kind,index,error_m\n")
            for name, errs in (("ape", m.ape_errors), ("rpe", m.rpe_errors)):
                for i, e in enumerate(errs):
                    fh.write("%s,%d,%.9g\n" % (name, i, e))
    return summary


# ---------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fmcw-rio", description="FMCW radar noise analysis and radar-inertial odometry")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_help, multi=False):
        if multi:
            sp.add_argument("--config", action="append", help=config_help)
        else:
            sp.add_argument("--config", help=config_help)
        sp.add_argument("--seed", type=_seed, default=0)
        sp.add_argument("--out", help="output path")
        return sp

    def velocity(sp, default_speed):
        sp.add_argument("--speed", type=float, default=default_speed, help="forward speed, m/s")
        sp.add_argument("--velocity", type=_vector, help="radar-frame velocity vx,vy,vz (overrides --speed)")

    def grid(sp, limit):
        sp.add_argument("--spacing", type=float, default=1.0, help="cell spacing, deg")
        sp.add_argument("--limit", type=float, default=limit, help="half-width of the grid, deg")

    chirp_help = "chirp preset (rc1..rc4) or YAML file"

    sp = common(sub.add_parser("noise-sim", help="Doppler residual error histogram"), chirp_help)
    sp.add_argument("--speed", type=float, default=3.995)
    sp.add_argument("--samples", type=int, default=100_000)
    sp.set_defaults(func=cmd_noise_sim)

    sp = common(sub.add_parser("approx-error", help="MC vs first-order Doppler std over the FOV"), chirp_help)
    velocity(sp, 3.995)
    grid(sp, 60.0)
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--workers", type=int, default=4)
    sp.set_defaults(func=cmd_approx_error)

    sp = common(sub.add_parser("contour", help="equal Doppler/angle noise level set"),
                chirp_help + "; repeat for several", multi=True)
    velocity(sp, 1.0)
    grid(sp, 89.0)
    sp.set_defaults(func=cmd_contour)

    sp = common(sub.add_parser("alias-region", help="aliased part of the FOV"), chirp_help)
    velocity(sp, 11.0)
    grid(sp, 60.0)
    sp.set_defaults(func=cmd_alias_region)

    sp = common(sub.add_parser("synth", help="simulate a dataset"), "scenario YAML file")
    sp.add_argument("--chirp", help=chirp_help)
    sp.add_argument("--trajectory", help="trajectory kind")
    sp.add_argument("--speed", type=float)
    sp.add_argument("--duration", type=float)
    sp.add_argument("--truth-out", help="truth TUM path (default: next to the dataset)")
    sp.set_defaults(func=cmd_synth, seed=None)

    sp = common(sub.add_parser("odom", help="run the odometry on a dataset"),
                "estimator preset (base, noise, geometry, noise+baro) or YAML file")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--map-out", help="export the landmark map as 'x y z' lines")
    sp.set_defaults(func=cmd_odom)

    sp = common(sub.add_parser("eval", help="APE/RPE of a TUM estimate against TUM truth"), "unused")
    sp.add_argument("--estimate", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--segment", type=float, default=10.0, help="RPE segment length, m")
    sp.add_argument("--tol", type=float, default=0.01, help="association tolerance, s")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = args.func(args)
    except (ConfigError, DomainError, DatasetError, InitializationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
