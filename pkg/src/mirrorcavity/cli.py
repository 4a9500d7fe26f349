"""Command-line interface.

Subcommands
-----------
steady          print (and optionally write) the steady branches with their
                eigenvalues and stability flags
stability-map   classify all branches over a 2-d parameter grid, CSV/JSON
g2              sweep g2(0) along one parameter axis, CSV/JSON
simulate        run the positive-P ensemble integrator, JSON
verify          emit the cross-validation report, JSON

Exit codes: 0 success, 2 configuration problem, 3 numerical failure,
4 simulation quality (too many diverged trajectories).

Parameters come from a flat key=value config file (keys omega_c, omega_m,
g, gamma1, gamma2, drive_re, drive_im) and can be overridden per key by
flags of the same name.  All files are written atomically (temp + rename).
JSON outputs carry a schema_version and, unless --reproducible is given, a
generation timestamp.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from .correlation import (G2_SWEEP_COLUMNS, SingularDenominatorError, g2_sweep,
                          g2_sweep_record)
from .fluctuations import MarginalStabilityError
from .model import ModelParams, load_config, params_from_mapping
from .reduced import cavity_steady_states
from .sde import (IntegratorConfig, SimulationQualityError, UndefinedEstimateError,
                  integrate_paths, simulate, write_trace_file)
from .stability import (AxisSpec, STABILITY_MAP_COLUMNS, classify, stability_map,
                        stability_map_record)
from .verify import verification_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_SIM_QUALITY = 4

SCHEMA_VERSION = 1

_PARAM_FLAGS = ("omega_c", "omega_m", "g", "gamma1", "gamma2", "drive_re", "drive_im")


class ConfigError(Exception):
    pass


def _atomic_write(path: str, data: str | bytes) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    """Recursively coerce numpy scalars and map non-finite floats to None."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return {"re": _jsonable(z.real), "im": _jsonable(z.imag)}
    return obj


def _json_text(payload: dict, reproducible: bool) -> str:
    doc = {"schema_version": SCHEMA_VERSION}
    if not reproducible:
        doc["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    doc.update(payload)
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _csv_text(columns, records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([repr(x) if isinstance(x, float) else x for x in rec])
    return buf.getvalue()


def _emit(args, text: str) -> None:
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def _build_params(args) -> ModelParams:
    mapping: dict = {}
    if args.config:
        try:
            mapping.update(load_config(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        except ValueError as exc:
            raise ConfigError(str(exc))
    for key in _PARAM_FLAGS:
        val = getattr(args, key)
        if val is not None:
            mapping[key] = val
    try:
        return params_from_mapping(mapping)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="flat key=value parameter file")
    for key in _PARAM_FLAGS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float,
                            default=None, help=f"override {key}")
    parser.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="tabular output format (simulate/verify always emit JSON)")
    parser.add_argument("--reproducible", action="store_true",
                        help="omit the timestamp so reruns are byte-identical")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed")


def _axis_arg(parser, name, help_text):
    parser.add_argument(name, nargs=4, metavar=("FIELD", "START", "STOP", "N"),
                        required=True, help=help_text)


def _parse_axis(spec) -> AxisSpec:
    field, start, stop, num = spec
    try:
        return AxisSpec.linspace(field, float(start), float(stop), int(num))
    except ValueError as exc:
        raise ConfigError(str(exc))


# --- subcommands -------------------------------------------------------------

STEADY_COLUMNS = ("branch_id", "n", "re_alpha0", "im_alpha0",
                  "re_l1", "im_l1", "re_l2", "im_l2", "stable")
EQ19_COLUMNS = ("re_l1_printed", "im_l1_printed", "re_l2_printed", "im_l2_printed")


def cmd_steady(args) -> int:
    from .stability import eigenvalues_closed_form

    params = _build_params(args)
    columns = STEADY_COLUMNS + (EQ19_COLUMNS if args.eq19_as_printed else ())
    records = []
    for st in cavity_steady_states(params):
        rep = classify(st, params)
        rec = (st.branch_id, st.n, st.alpha0.real, st.alpha0.imag,
               rep.lambda1.real, rep.lambda1.imag,
               rep.lambda2.real, rep.lambda2.imag, int(rep.stable))
        if args.eq19_as_printed:
            p1, p2 = eigenvalues_closed_form(params, st.n, printed_variant=True)
            rec = rec + (p1.real, p1.imag, p2.real, p2.imag)
        records.append(rec)
    if args.format == "json":
        rows = [dict(zip(columns, map(float, rec))) for rec in records]
        _emit(args, _json_text({"branches": rows}, args.reproducible))
    elif args.out:
        _emit(args, _csv_text(columns, records))
    else:
        lines = ["  ".join(f"{c:>13}" for c in columns)]
        for rec in records:
            lines.append("  ".join(f"{x:13.6g}" for x in rec))
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_stability_map(args) -> int:
    params = _build_params(args)
    axis1 = _parse_axis(args.axis1)
    axis2 = _parse_axis(args.axis2)
    rows = stability_map(params, axis1, axis2)
    records = [stability_map_record(r) for r in rows]
    if args.format == "json":
        payload = {"columns": list(STABILITY_MAP_COLUMNS),
                   "rows": [list(map(float, rec)) for rec in records]}
        _emit(args, _json_text(payload, args.reproducible))
    else:
        _emit(args, _csv_text(STABILITY_MAP_COLUMNS, records))
    if args.plot:
        from .plots import render_stability_map

        target = _figure_path(args, "stability_map")
        render_stability_map(rows, axis1.field, axis2.field, target)
    return EXIT_OK


def cmd_g2(args) -> int:
    params = _build_params(args)
    axis = _parse_axis(args.axis)
    rows = g2_sweep(params, axis, mode=args.mode)
    records = [g2_sweep_record(r) for r in rows]
    if args.format == "json":
        payload = {"columns": list(G2_SWEEP_COLUMNS), "mode": args.mode,
                   "rows": [list(map(float, rec)) for rec in records]}
        _emit(args, _json_text(payload, args.reproducible))
    else:
        _emit(args, _csv_text(G2_SWEEP_COLUMNS, records))
    if args.plot:
        from .plots import render_g2_sweep

        target = _figure_path(args, "g2_sweep")
        render_g2_sweep(rows, axis.field, target, mode=args.mode)
    return EXIT_OK


def _figure_path(args, stem: str) -> str:
    if args.out:
        base, _ = os.path.splitext(args.out)
        return base + ".png"
    return stem + ".png"


def cmd_simulate(args) -> int:
    params = _build_params(args)
    try:
        config = IntegratorConfig(
            dt=args.dt, t_end=args.t_end, n_traj=args.n_traj, seed=args.seed,
            divergence_cutoff=args.cutoff, max_discard_fraction=args.max_discard,
            n_batches=args.n_batches, branch_id=args.branch,
            stationary_init=not args.cold_start, debug_checks=args.debug_checks)
    except ValueError as exc:
        raise ConfigError(str(exc))
    stats = simulate(params, config, system=args.system)
    if args.dump_traces:
        _, paths, _ = integrate_paths(params, config, system=args.system,
                                      stride=args.trace_stride)
        write_trace_file(args.dump_traces, paths)
    payload = {"config": config.to_dict(), "system": args.system,
               "stats": stats.to_dict()}
    _emit(args, _json_text(payload, args.reproducible))
    return EXIT_OK


def cmd_verify(args) -> int:
    params = _build_params(args)
    mc_config = None
    if not args.no_mc:
        try:
            mc_config = IntegratorConfig(dt=args.mc_dt, t_end=args.mc_t_end,
                                         n_traj=args.mc_n_traj, seed=args.seed)
        except ValueError as exc:
            raise ConfigError(str(exc))
    report = verification_report(params, n_pairs=args.n_pairs,
                                 branch_id=args.branch, mc_config=mc_config,
                                 include_mc=not args.no_mc)
    _emit(args, _json_text(report, args.reproducible))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mirrorcavity",
        description="steady states, stability, fluctuations and photon statistics "
                    "of a driven cavity with a damped movable mirror")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steady", help="solve and classify the steady branches")
    _add_common(p)
    p.add_argument("--eq19-as-printed", action="store_true",
                   help="also report the closed-form eigenvalues with the "
                        "sign-flipped radical, for auditing against the "
                        "numeric spectrum")
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("stability-map", help="stability over a 2-d parameter grid")
    _add_common(p)
    _axis_arg(p, "--axis1", "outer sweep axis, e.g. --axis1 drive_abs 0.1 3 40")
    _axis_arg(p, "--axis2", "inner sweep axis, e.g. --axis2 g 0 0.5 40")
    p.add_argument("--plot", action="store_true",
                   help="render a PNG figure next to the data file")
    p.set_defaults(func=cmd_stability_map)

    p = sub.add_parser("g2", help="sweep g2(0) along one parameter axis")
    _add_common(p)
    _axis_arg(p, "--axis", "sweep axis, e.g. --axis drive_abs 0.05 2.0 60")
    p.add_argument("--mode", choices=("paper", "corrected"), default="paper",
                   help="mixed-moment coefficient convention of the covariance route")
    p.add_argument("--plot", action="store_true",
                   help="render a PNG figure next to the data file")
    p.set_defaults(func=cmd_g2)

    p = sub.add_parser("simulate", help="positive-P ensemble integration")
    _add_common(p)
    p.add_argument("--system", choices=("full", "reduced"), default="full")
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--t-end", type=float, default=6.0)
    p.add_argument("--n-traj", type=int, default=10000)
    p.add_argument("--cutoff", type=float, default=None,
                   help="divergence cutoff (default 1e6 max(1, |E|/gamma1))")
    p.add_argument("--max-discard", type=float, default=0.01)
    p.add_argument("--n-batches", type=int, default=20)
    p.add_argument("--branch", type=int, default=None,
                   help="branch id to linearize around (default: lowest stable)")
    p.add_argument("--cold-start", action="store_true",
                   help="start every trajectory exactly at the fixed point")
    p.add_argument("--debug-checks", action="store_true",
                   help="track the noise-factor reconstruction residual")
    p.add_argument("--dump-traces", metavar="PATH",
                   help="also write trajectories as a binary trace file")
    p.add_argument("--trace-stride", type=int, default=1,
                   help="record every k-th step in the trace dump")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="cross-validation report (JSON)")
    _add_common(p)
    p.add_argument("--n-pairs", type=int, default=1000,
                   help="random stable matrices for the covariance cross-check")
    p.add_argument("--branch", type=int, default=None)
    p.add_argument("--no-mc", action="store_true",
                   help="skip the Monte Carlo section")
    p.add_argument("--mc-n-traj", type=int, default=4000)
    p.add_argument("--mc-dt", type=float, default=1e-4)
    p.add_argument("--mc-t-end", type=float, default=6.0)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationQualityError as exc:
        print(f"simulation quality error: {exc}", file=sys.stderr)
        return EXIT_SIM_QUALITY
    except (MarginalStabilityError, SingularDenominatorError, UndefinedEstimateError,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
