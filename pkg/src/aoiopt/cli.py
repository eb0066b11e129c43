"""Command-line front end (``aoiopt``)."""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

from . import experiments as ex
from . import simnet, validate
from .config import load_config, split_list
from .core import NetworkShape, Objective, SecondOrderPoint
from .errors import AoIError
from .report import emit_report, read_csv, render_svg, write_csv, write_timings
from .secondorder import approx_aoi_moment
from .twostate import optimize_two_state
from .wag import optimize_wag

EPILOG = f"""\
Configuration files hold 'key = value' lines ('#' starts a comment); keys
mirror the long options with '_' for '-' (e.g. r_step = 0.05).  Options given
on the command line override the file.

Simulation runs are spread over {simnet.THREADS_ENV} threads (default: all
cores); results do not depend on the thread count.
"""

# option name -> (converter, default applied after merging with the config file)
OPTIONS = {
    "C": (str, None),
    "N": (str, None),
    "w": (str, None),
    "z": (str, None),
    "r": (float, None),
    "s": (float, None),
    "H": (int, None),
    "slots": (int, None),
    "runs": (int, None),
    "seed": (int, None),
    "r_step": (float, 0.01),
    "h_max": (int, 15),
    "k_trunc": (int, 1000),
    "out": (str, "."),
    "format": (str, "both"),
    "seq_file": (str, None),
    "budget": (int, None),
    "screen_slots": (int, None),
    "screen_runs": (int, None),
    "screen_keep": (int, None),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="key = value configuration file")
    g.add_argument("--C", help="clusters (comma list allowed for compare/efficiency)")
    g.add_argument("--N", help="active users per cluster (comma list allowed)")
    g.add_argument("--w", help="active-user weight(s); 'auto' means N/(N+1)")
    g.add_argument("--z", help="AoI moment order(s), comma list")
    g.add_argument("--r", type=float, help="Idle->TX probability (ALOHA p for simulate)")
    g.add_argument("--s", type=float, help="TX->Idle probability")
    g.add_argument("--H", type=int, help="WaG wait slots")
    g.add_argument("--slots", type=int, help="slots per run")
    g.add_argument("--runs", type=int, help="independent runs")
    g.add_argument("--seed", type=int, help="base seed (default 42 + hash of the experiment id)")
    g.add_argument("--r-step", dest="r_step", type=float, help="grid step for r and p")
    g.add_argument("--h-max", dest="h_max", type=int, help="largest H in WaG grids")
    g.add_argument("--k-trunc", dest="k_trunc", type=int, help="covariance-sum truncation")
    g.add_argument("--out", help="output directory")
    g.add_argument("--format", choices=("csv", "svg", "both"), help="report format")
    g.add_argument("--seq-file", dest="seq_file", help="pre-assigned sequence file")
    g.add_argument("--budget", type=int, help="WaG_R slots per run per grid cell")
    g.add_argument("--screen-slots", dest="screen_slots", type=int, help="screening slots")
    g.add_argument("--screen-runs", dest="screen_runs", type=int, help="screening runs")
    g.add_argument("--screen-keep", dest="screen_keep", type=int,
                   help="candidates kept per objective after screening (0 = exhaustive)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoiopt",
        description="AoI analysis, optimisation and simulation for random access networks.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("approx", help="approximate E[AoI^z] from (m, v2)")
    p.add_argument("--m", type=float, required=True, help="delivery mean")
    p.add_argument("--v2", type=float, required=True, help="temporal variance")
    _add_common(p)

    p = sub.add_parser("analyze", help="means, variances and AoI roots of one policy")
    p.add_argument("model", choices=("two-state", "wag"))
    _add_common(p)

    p = sub.add_parser("optimize", help="grid-search the analytic objective")
    p.add_argument("model", choices=("two-state", "wag"))
    _add_common(p)

    p = sub.add_parser("simulate", help="simulate one policy")
    p.add_argument("--policy", default="two-state",
                   choices=("two-state", "wag", "aloha", "ata", "pre-assigned"))
    _add_common(p)

    p = sub.add_parser("sweep", help="empirical parameter sweep")
    p.add_argument("model", choices=("aloha", "wag"))
    _add_common(p)

    p = sub.add_parser("validate", help="acceptance checks; exit status 1 on any failure")
    p.add_argument("suite", choices=("mismatch", "optimality", "lemmas", "oracle"))
    _add_common(p)

    for name, text in (("compare", "policy comparison"), ("efficiency", "WaG versus WaG_R")):
        p = sub.add_parser(name, help=text)
        _add_common(p)

    p = sub.add_parser("report", help="re-render figures from a report CSV")
    p.add_argument("csv", help="CSV written by an experiment")
    _add_common(p)
    return parser


def merge_options(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from --config, then from defaults."""
    file_vals = load_config(args.config) if getattr(args, "config", None) else {}
    for key, (conv, default) in OPTIONS.items():
        if getattr(args, key, None) is None:
            if key in file_vals:
                setattr(args, key, conv(file_vals[key]))
            else:
                setattr(args, key, default)
    return args


def _ints(value: str) -> list[int]:
    return [int(v) for v in split_list(str(value))]


def _shapes(args) -> list[NetworkShape]:
    Cs, Ns = _ints(args.C or "1"), _ints(args.N or "1")
    return [NetworkShape(C, N) for C, N in itertools.product(Cs, Ns)]


def _shape(args) -> NetworkShape:
    shapes = _shapes(args)
    if len(shapes) != 1:
        raise AoIError("this command takes a single C and N")
    return shapes[0]


def _z_list(args, default=(1,)) -> tuple[int, ...]:
    return tuple(_ints(args.z)) if args.z else tuple(default)


def _objective(args, shape: NetworkShape) -> Objective:
    w = split_list(args.w)[0] if args.w else "1"
    w_val = shape.N / (shape.N + 1.0) if w == "auto" else float(w)
    return Objective(w_val, _z_list(args)[0])


def _screen(args, default):
    if args.screen_keep == 0:
        return None
    if args.screen_slots is None and args.screen_runs is None and args.screen_keep is None:
        return default
    base = default or simnet.Screen(20_000, 5, 8)
    return simnet.Screen(
        args.screen_slots or base.slots, args.screen_runs or base.runs, args.screen_keep or base.keep
    )


def _print_pairs(pairs) -> None:
    for key, val in pairs:
        if isinstance(val, float):
            val = f"{val:.10g}"
        print(f"{key} = {val}")


def _policy(args, shape: NetworkShape):
    kind = args.policy
    if kind in ("two-state", "wag") and args.r is None:
        raise AoIError(f"--r is required for the {kind} policy")
    if kind == "two-state":
        return simnet.TwoState(args.r, args.s if args.s is not None else 1.0)
    if kind == "wag":
        return simnet.Wag(args.r, args.H if args.H is not None else 1)
    if kind == "aloha":
        return simnet.SlottedAloha(args.r) if args.r is not None else simnet.slotted_aloha(shape.N)
    if kind == "ata":
        return simnet.age_threshold_aloha(shape.N)
    if not args.seq_file:
        raise AoIError("--seq-file is required for the pre-assigned policy")
    return simnet.load_sequences(args.seq_file, shape)


def cmd_approx(args) -> int:
    p = SecondOrderPoint(args.m, args.v2)
    for z in _z_list(args, (1, 2, 3)):
        mom = approx_aoi_moment(p, z)
        _print_pairs([(f"E[AoI^{z}]", mom), (f"E[AoI^{z}]^(1/{z})", mom ** (1.0 / z))])
    return 0


def cmd_analyze(args) -> int:
    shape = _shape(args)
    obj = _objective(args, shape)
    if args.r is None:
        raise AoIError("--r is required")
    b = args.s if args.model == "two-state" else args.H
    if b is None:
        raise AoIError("--s is required" if args.model == "two-state" else "--H is required")
    if args.model == "two-state":
        from .twostate import TwoStateParams, two_state_means, two_state_variances

        lt = TwoStateParams(args.r, b).to_lambda_theta()
        means = two_state_means(lt, shape)
        variances = two_state_variances(lt, shape, args.k_trunc)
    else:
        from .wag import WagParams, wag_means, wag_variances

        params = WagParams(args.r, b)
        means = wag_means(params, shape)
        variances = wag_variances(params, shape, args.k_trunc)
    rows = ex.analyze_rows(args.model, shape, obj, args.r, b, args.k_trunc)
    _print_pairs([("m_a", means[0]), ("v_a2", variances[0]), ("m_p", means[1]),
                  ("v_p2", variances[1]), (f"AoI_a root z={obj.z}", rows[0].theoretical),
                  (f"AoI_p root z={obj.z}", rows[1].theoretical), (f"F w={obj.w:.4g}", rows[2].theoretical)])
    return 0


def cmd_optimize(args) -> int:
    shape = _shape(args)
    obj = _objective(args, shape)
    if args.model == "two-state":
        best, f = optimize_two_state(shape, obj, args.r_step, args.k_trunc)
        _print_pairs([("r", best.r), ("s", best.s), ("F", f)])
    else:
        best, f = optimize_wag(shape, obj, args.r_step, args.h_max, args.k_trunc)
        _print_pairs([("r", best.r), ("H", best.H), ("F", f)])
    return 0


def cmd_simulate(args) -> int:
    shape = _shape(args)
    obj = _objective(args, shape)
    cfg = simnet.SimConfig(
        shape, _policy(args, shape), args.slots or 10_000, args.runs or 10,
        args.seed if args.seed is not None else ex.default_seed("simulate"),
        z_max=max(3, obj.z), objective=obj,
    )
    res = simnet.simulate(cfg)
    pairs = [("policy", repr(cfg.policy)), ("m_hat_a", res.m_hat_a), ("v2_hat_a", res.v2_hat_a),
             ("m_hat_p", res.m_hat_p), ("v2_hat_p", res.v2_hat_p)]
    for z in range(1, cfg.z_max + 1):
        pairs += [(f"AoI_a root z={z}", res.aoi_root(z)), (f"AoI_p root z={z}", res.aoi_root(z, False))]
    pairs += [(f"F_hat w={obj.w:.4g} z={obj.z}", res.f_hat), ("seed", cfg.seed), ("rng", simnet.RNG_ID)]
    _print_pairs(pairs)
    return 0


def cmd_sweep(args) -> int:
    shape = _shape(args)
    obj = _objective(args, shape)
    seed = args.seed if args.seed is not None else ex.default_seed(f"sweep-{args.model}")
    runs = args.runs or 20
    screen = _screen(args, None)
    if args.model == "aloha":
        p, f = simnet.sweep_optimal_aloha(shape, obj, args.slots or 10_000, runs, seed,
                                          args.r_step, screen)
        _print_pairs([("p", p), ("F_hat", f), ("seed", seed)])
    else:
        slots = args.budget or args.slots or 10_000
        out = simnet.sweep_wag_empirical(shape, obj, slots, runs, seed, args.r_step, args.h_max, screen)
        _print_pairs([("r", out.policy.r), ("H", out.policy.H), ("F_hat", out.f_hat),
                      ("low_confidence", out.low_confidence), ("seed", seed)])
    return 0


def cmd_validate(args) -> int:
    checks = []
    runs, slots = args.runs or 100, args.slots or 10_000
    if args.suite == "mismatch":
        for exp, fn in (("mismatch-two-state", validate.check_two_state_mismatch),
                        ("mismatch-wag", validate.check_wag_mismatch)):
            cfg = ex.ExperimentConfig(exp, runs=runs, slots=slots, k_trunc=args.k_trunc,
                                      seed=args.seed, out_dir=args.out, format=args.format)
            rows = ex.run_mismatch(cfg)
            emit_report(rows, args.out, exp, args.format)
            checks += fn(rows=rows)
    elif args.suite == "optimality":
        cfg = ex.ExperimentConfig("optimality", runs=runs, slots=slots, seed=args.seed,
                                  r_step=args.r_step)
        rows = ex.run_optimality(cfg)
        emit_report(rows, args.out, "optimality", args.format)
        checks += validate.check_optimality(rows=rows)
    else:
        for fn in validate.VALIDATIONS[args.suite]:
            checks += fn()
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def _experiment_config(args, name: str, runs: int, slots: int, screen=None):
    return ex.ExperimentConfig(
        name,
        shapes=tuple(_shapes(args)) if (args.C or args.N) else (),
        z_list=_z_list(args, (1, 2, 3)),
        w_list=tuple(split_list(args.w)) if args.w else ("auto", "0.5"),
        slots=slots,
        runs=runs,
        seed=args.seed,
        k_trunc=args.k_trunc,
        r_step=args.r_step,
        h_max=args.h_max,
        out_dir=args.out,
        format=args.format,
        seq_file=args.seq_file,
        budget=args.budget,
        screen=screen,
    )


def cmd_compare(args) -> int:
    cfg = _experiment_config(args, "compare", args.runs or 100, args.slots or 100_000,
                             _screen(args, ex.COMPARE_SCREEN))
    if not cfg.seq_file:
        print("note: no --seq-file given; the pre-assigned policy is omitted", file=sys.stderr)
    timings: list = []
    rows = ex.run_compare(cfg, timings)
    for path in emit_report(rows, cfg.out_dir, "compare", cfg.format):
        print(path)
    print(write_timings(timings, Path(cfg.out_dir) / "compare_timing.csv"))
    for c in validate.compare_checks(rows):
        print(c.line())
    return 0


def cmd_efficiency(args) -> int:
    cfg = _experiment_config(args, "efficiency", args.runs or 100, args.slots or 100_000)
    timings: list = []
    rows = ex.run_efficiency(cfg, timings)
    for path in emit_report(rows, cfg.out_dir, "efficiency", cfg.format):
        print(path)
    print(write_timings(timings, Path(cfg.out_dir) / "efficiency_timing.csv"))
    return 0


def cmd_report(args) -> int:
    rows = read_csv(args.csv)
    stem = Path(args.csv).stem
    paths = render_svg(rows, args.out, stem) if args.format != "csv" else []
    if args.format in ("csv", "both") and Path(args.out).resolve() != Path(args.csv).parent.resolve():
        paths.append(write_csv(rows, Path(args.out) / f"{stem}.csv"))
    for path in paths:
        print(path)
    return 0


COMMANDS = {
    "approx": cmd_approx,
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
    "compare": cmd_compare,
    "efficiency": cmd_efficiency,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = merge_options(parser.parse_args(argv))
    try:
        return COMMANDS[args.command](args)
    except (AoIError, ValueError, OSError) as exc:
        print(f"aoiopt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
