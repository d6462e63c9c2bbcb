"""Command-line entry point: ``hawkesbias <subcommand> ...``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
Every run writes one ``*.manifest.json`` next to its outputs; ``rerun``
replays a manifest.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import CostSurface, FitResult, GridConfig, MultiStartConfig, cost_surface, fit
from .config import ConfigError, experiment_config, load_config, preset_path
from .errors import (
    DegenerateProfileError,
    DomainError,
    FitFailureError,
    HawkesError,
    NonpositiveIntensityError,
    TruncationError,
)
from .experiments import EXPERIMENTS, SweepResult, run_experiment
from .kernels import family_class
from .parallel import default_jobs
from .preprocess import IntensityProfile, bundle, concatenate, detrend, inject_outliers, randomize
from .residuals import residual_report
from .series import read_series, write_series
from .simulate import HawkesParams, simulate_hawkes

log = logging.getLogger("hawkesbias")

OUTDIR_ENV = "HAWKESBIAS_OUTDIR"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
_NUMERIC = (FitFailureError, TruncationError, NonpositiveIntensityError, DegenerateProfileError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _outdir(args):
    d = Path(getattr(args, "outdir", None) or os.environ.get(OUTDIR_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _out_path(args, default_name):
    if getattr(args, "output", None):
        p = Path(args.output)
        if not p.is_absolute() and getattr(args, "outdir", None):
            p = Path(args.outdir) / p
        p.parent.mkdir(parents=True, exist_ok=True)
        return p
    return _outdir(args) / default_name


def _kernel_from_args(args):
    cls = family_class(args.kernel)
    kw = {}
    for name in cls.fit_params:
        val = getattr(args, name, None)
        if val is None:
            raise UsageError(f"--{name} is required for the {cls.family} kernel")
        kw[name] = val
    if cls.family == "approx_power_law":
        kw["M"], kw["m"] = args.M, args.m
    return cls(**kw)


def _add_kernel_args(p, required=True):
    p.add_argument("--kernel", required=required, help="exp | omori | cutoff_pl | approx_pl")
    p.add_argument("--tau", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--tau0", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--M", type=int, default=15)
    p.add_argument("--m", type=float, default=5.0)


def _read_input(args, path=None):
    """Read a series; repeated timestamps are rejected unless ``--allow-ties``."""
    try:
        return read_series(path or args.input, allow_ties=args.allow_ties)
    except DomainError as exc:
        raise UsageError(f"{path or args.input}: {exc}") from None


def _multistart(args, family):
    cls = family_class(family)
    d = len(cls.fit_params)
    ms = MultiStartConfig()
    if args.starts is not None:
        g = round(args.starts ** (1.0 / d))
        if g**d != args.starts:
            raise UsageError(f"--starts must be a perfect power of {d} for {cls.family}")
        ms.grid_size = int(g)
    ms.top_k = args.top_k
    ms.jobs = args.jobs
    return ms


# ------------------------------------------------------------------ commands

def cmd_simulate(args):
    kernel = _kernel_from_args(args)
    params = HawkesParams(args.mu, args.n, kernel)
    s = simulate_hawkes(params, args.T, args.burn, args.seed, method=args.method, cap=int(args.cap))
    out = _out_path(args, "series.csv" if args.csv else "series.txt")
    write_series(s, out)
    print(f"{len(s)} events on {s.window} -> {out}", file=sys.stderr)
    return [out], {"params": params.to_dict()}


def cmd_fit(args):
    s = _read_input(args)
    family = family_class(args.kernel).family
    res = fit(s, family, _multistart(args, family))
    text = json.dumps(res.to_dict(), indent=2) + "\n"
    if args.output:
        out = _out_path(args, "fit.json")
        out.write_text(text)
        print(f"n_hat={res.n_hat:.6g} mu_hat={res.mu_hat:.6g} psi_hat={res.psi_hat} -> {out}", file=sys.stderr)
        return [out], {}
    sys.stdout.write(text)
    return [], {}


def _load_params(path):
    d = json.loads(Path(path).read_text())
    if "n_hat" in d:
        return FitResult.from_dict(d).params()
    return HawkesParams.from_dict(d)


def cmd_residuals(args):
    s = _read_input(args)
    params = _load_params(args.params)
    rep = residual_report(s, params, args.lags)
    summary = rep.summary()
    summary["passes_5pct"] = bool(rep.passes(0.05))
    text = json.dumps(summary, indent=2) + "\n"
    outputs = []
    if args.output:
        out = _out_path(args, "residuals.json")
        out.write_text(text)
        outputs.append(out)
    else:
        sys.stdout.write(text)
    if args.dump:
        dump = _out_path(argparse.Namespace(output=args.dump, outdir=args.outdir), "residuals.csv")
        u = np.concatenate([[np.nan], rep.u])
        with open(dump, "w") as fh:
            fh.write("xi,u\n")
            for a, b in zip(rep.xi, u):
                fh.write(f"{a:.17g},{'' if math.isnan(b) else format(b, '.17g')}\n")
        outputs.append(dump)
    return outputs, {}


def cmd_transform(args):
    op = args.op
    if op == "concatenate":
        s = concatenate([_read_input(args, p) for p in args.input], args.gap)
    else:
        if len(args.input) != 1:
            raise UsageError(f"{op} takes exactly one --input")
        s = _read_input(args, args.input[0])
        if op == "outliers":
            s = inject_outliers(s, args.fraction, args.multiplier, args.seed)
        elif op == "bundle":
            s = bundle(s, args.delta, edge=args.edge)
        elif op == "randomize":
            s = randomize(s, args.delta, args.seed)
        elif op == "detrend":
            if not args.profile:
                raise UsageError("detrend needs --profile")
            s = detrend(s, IntensityProfile.from_csv(args.profile), periodic=args.periodic)
    out = _out_path(args, f"{op}.txt")
    write_series(s, out)
    return [out], {}


def cmd_surface(args):
    s = _read_input(args)
    cls = family_class(args.kernel)
    names = cls.fit_params
    if len(names) != 2:
        raise UsageError(f"surface needs a two-parameter kernel, {cls.family} has {len(names)}")
    bounds = {names[0]: (args.psi1_min, args.psi1_max, args.grid), names[1]: (args.psi2_min, args.psi2_max, args.grid)}
    surf = cost_surface(s, cls, GridConfig(bounds, jobs=args.jobs))
    out = _out_path(args, "surface.csv")
    surf.to_csv(out)
    return [out], {"local_minima": [[float(surf.psi1[i]), float(surf.psi2[j])] for i, j in surf.local_minima()[:5]]}


def _write_curves(curves, path):
    with open(path, "w") as fh:
        fh.write("epsilon,t,count,plateau,T95,T99\n")
        for eps, c in curves.items():
            for t, v in zip(c["t"], c["count"]):
                fh.write(f"{eps:.10g},{t:.10g},{v:.10g},{c['plateau']:.10g},{c['T95']:.10g},{c['T99']:.10g}\n")


def cmd_experiment(args):
    flat = {}
    if args.preset:
        p = preset_path(args.preset)
        if p is None:
            raise UsageError(f"unknown preset {args.preset!r}")
        flat.update(load_config(p))
    if args.config:
        flat.update(load_config(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        flat.update(_parse_set(k.strip(), v.strip()))
    flat.pop("experiment", None)
    cfg = experiment_config(
        flat,
        realizations=args.realizations,
        scale=args.scale,
        seed=args.seed,
        jobs=args.jobs,
        T=args.T,
        burn_in=args.burn,
    )
    result = run_experiment(args.id, cfg)
    outdir = _outdir(args)
    outputs = []
    if isinstance(result, tuple):
        extra, result = result
        if all(isinstance(v, CostSurface) for v in extra.values()):
            for rep, surf in extra.items():
                sp = outdir / f"{args.id}_rep{rep}.csv"
                surf.to_csv(sp)
                outputs.append(sp)
        else:
            cp = outdir / f"{args.id}_curves.csv"
            _write_curves(extra, cp)
            outputs.append(cp)
    if isinstance(result, SweepResult):
        path, meta = result.write(outdir / f"{args.id}.csv")
        outputs += [path, meta]
    elif isinstance(result, dict):
        cp = outdir / f"{args.id}.csv"
        _write_curves(result, cp)
        outputs.append(cp)
    else:
        from .experiments import _write_rows

        cp = outdir / f"{args.id}.csv"
        _write_rows(cp, result)
        outputs.append(cp)
    return outputs, {"config": cfg.to_dict()}


def _parse_set(key, val):
    from .config import parse_config

    return parse_config(f"{key} = {val}")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "residuals": cmd_residuals,
    "transform": cmd_transform,
    "surface": cmd_surface,
    "experiment": cmd_experiment,
}


# ------------------------------------------------------------------ parser

def build_parser():
    p = _Parser(prog="hawkesbias", description="Hawkes process simulation, calibration and bias experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, jobs=False):
        sp.add_argument("--outdir", help=f"output directory (default ${OUTDIR_ENV} or .)")
        sp.add_argument("--output", "-o")
        if jobs:
            sp.add_argument("--jobs", type=int, default=default_jobs())

    s = sub.add_parser("simulate", help="simulate a Hawkes process")
    _add_kernel_args(s)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--n", type=float, required=True)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--burn", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", choices=["branching", "thinning"], default="branching")
    s.add_argument("--cap", type=float, default=1e8)
    s.add_argument("--csv", action="store_true", help="write the CSV variant")
    common(s)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="maximum-likelihood fit")
    f.add_argument("--kernel", required=True)
    f.add_argument("--input", "-i", required=True)
    f.add_argument("--starts", type=int, help="multi-start grid points in total (default 5 per parameter)")
    f.add_argument("--top-k", type=int, help="launch the simplex only from the best k grid nodes")
    f.add_argument("--allow-ties", action="store_true")
    common(f, jobs=True)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("residuals", help="time-rescaling goodness of fit")
    r.add_argument("--input", "-i", required=True)
    r.add_argument("--params", required=True, help="fit JSON or HawkesParams JSON")
    r.add_argument("--lags", type=int)
    r.add_argument("--dump", help="CSV of residuals and uniformized values")
    r.add_argument("--allow-ties", action="store_true")
    common(r)
    r.set_defaults(func=cmd_residuals)

    t = sub.add_parser("transform", help="transform a series file")
    t.add_argument("op", choices=["outliers", "bundle", "randomize", "detrend", "concatenate"])
    t.add_argument("--input", "-i", required=True, action="append")
    t.add_argument("--fraction", type=float, default=0.01)
    t.add_argument("--multiplier", type=float, default=2.0)
    t.add_argument("--delta", type=float, default=1.0)
    t.add_argument("--edge", choices=["right", "left"], default="right")
    t.add_argument("--profile", help="CSV of bin_start,rate")
    t.add_argument("--periodic", action="store_true")
    t.add_argument("--gap", type=float, default=0.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--allow-ties", action="store_true")
    common(t)
    t.set_defaults(func=cmd_transform)

    c = sub.add_parser("surface", help="profile cost on a parameter grid")
    c.add_argument("--kernel", required=True)
    c.add_argument("--input", "-i", required=True)
    c.add_argument("--grid", type=int, default=25)
    c.add_argument("--psi1-min", type=float, default=1e-4)
    c.add_argument("--psi1-max", type=float, default=1e2)
    c.add_argument("--psi2-min", type=float, default=0.05)
    c.add_argument("--psi2-max", type=float, default=5.0)
    c.add_argument("--allow-ties", action="store_true")
    common(c, jobs=True)
    c.set_defaults(func=cmd_surface)

    e = sub.add_parser("experiment", help="run a bias experiment")
    e.add_argument("id", choices=sorted(EXPERIMENTS))
    e.add_argument("--config")
    e.add_argument("--preset")
    e.add_argument("--set", action="append", metavar="KEY=VALUE")
    e.add_argument("--realizations", type=int)
    e.add_argument("--scale", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--T", type=float)
    e.add_argument("--burn", type=float)
    common(e, jobs=True)
    e.set_defaults(func=cmd_experiment)

    m = sub.add_parser("rerun", help="replay a run manifest")
    m.add_argument("manifest")
    m.add_argument("--outdir", help="write outputs here instead of the recorded locations")
    m.set_defaults(func=None)
    return p


# ------------------------------------------------------------------ manifest

def _jsonable_args(args):
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def _write_manifest(args, outputs, extra, seconds):
    manifest = {
        "subcommand": args.command,
        "args": _jsonable_args(args),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": [str(Path(p).resolve()) for p in _as_list(getattr(args, "input", None))],
        "outputs": [str(Path(p).resolve()) for p in outputs],
        "wall_seconds": seconds,
        **extra,
    }
    if outputs:
        path = Path(outputs[0]).with_suffix(".manifest.json")
    else:
        path = _outdir(args) / f"{args.command}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _as_list(x):
    if x is None:
        return []
    return x if isinstance(x, list) else [x]


def _rerun_namespace(manifest_path, outdir):
    m = json.loads(Path(manifest_path).read_text())
    ns = argparse.Namespace(**m["args"])
    ns.command = m["subcommand"]
    if outdir is not None:
        ns.outdir = outdir
        if getattr(ns, "output", None):
            ns.output = Path(ns.output).name
        if getattr(ns, "dump", None):
            ns.dump = Path(ns.dump).name
    ns.func = COMMANDS[ns.command]
    return ns


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        if args.command == "rerun":
            args = _rerun_namespace(args.manifest, args.outdir)
        t0 = time.time()
        outputs, extra = args.func(args)
        _write_manifest(args, outputs, extra, time.time() - t0)
        return EXIT_OK
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HawkesError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
