"""Command-line entry point.

Exit codes: 0 success, 2 validation failure, 3 budget produced no result,
4 I/O error.  The default seed comes from FAREPLAN_SEED when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import bench as bench_mod
from . import casegen, game, model, report
from .choice import eval_context, welfare
from .descent import DescentConfig
from .model import FareVector, Instance
from .second_stage import export_milp, solve_exact

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_RESULT = 3
EXIT_IO = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _default_seed() -> int | None:
    raw = os.environ.get("FAREPLAN_SEED")
    return int(raw) if raw else None


def _load_instance(path) -> Instance:
    try:
        instance = model.load(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    except model.SchemaError as exc:
        raise CliError(f"{path}: {exc}", EXIT_VALIDATION) from exc
    problems = model.validate(instance)
    if problems:
        msg = "\n".join(f"  {v}" for v in problems[:20])
        raise CliError(f"{path}: instance fails validation:\n{msg}",
                       EXIT_VALIDATION)
    return instance


def _load_fares(path) -> FareVector:
    try:
        with open(path) as fh:
            return FareVector.from_json(json.load(fh))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    except (json.JSONDecodeError, model.SchemaError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_VALIDATION) from exc


def _write_json(path, payload) -> None:
    try:
        if path == "-":
            json.dump(payload, sys.stdout, indent=1)
            sys.stdout.write("\n")
        else:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1)
                fh.write("\n")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _parse_weights(raw: str) -> tuple[float, float, float]:
    parts = [float(x) for x in raw.split(",")]
    if len(parts) != 3:
        raise CliError(f"expected 'pax,rev,vmt', got {raw!r}", EXIT_VALIDATION)
    return tuple(parts)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = casegen.SyntheticConfig(**json.load(fh))
        except OSError as exc:
            raise CliError(f"cannot read {args.config}: {exc}", EXIT_IO)
        except TypeError as exc:
            raise CliError(f"bad generator config: {exc}", EXIT_VALIDATION)
    else:
        preset = {
            "tiny": casegen.tiny_config,
            "desk": casegen.desk_config,
            "large": casegen.large_config,
        }[args.preset]
        cfg = preset()
    if args.seed is not None:
        cfg = casegen.SyntheticConfig(**{**cfg.__dict__, "seed": args.seed})
    instance = casegen.generate(cfg)
    try:
        model.save(instance, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO)
    print(f"wrote {args.out}: {len(instance.passenger_types)} passenger "
          f"types, {len(instance.routes)} routes, "
          f"{len(instance.categories)} categories")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        instance = model.load(args.instance)
    except OSError as exc:
        raise CliError(f"cannot read {args.instance}: {exc}", EXIT_IO)
    except model.SchemaError as exc:
        raise CliError(f"{args.instance}: {exc}", EXIT_VALIDATION)
    problems = model.validate(instance)
    if problems:
        for v in problems:
            print(v)
        return EXIT_VALIDATION
    print(f"{args.instance}: ok ({instance.hash_hex()[:16]})")
    return EXIT_OK


def cmd_eval(args) -> int:
    instance = _load_instance(args.instance)
    fares = _load_fares(args.fares)
    if args.activations == "auto":
        sol = solve_exact(instance, fares)
        bits = sol.activations
        bd = sol.welfare
    else:
        ctx = eval_context(instance)
        try:
            vec = [int(x) for x in args.activations.split(",")] \
                if args.activations else []
        except ValueError:
            raise CliError(f"bad activation vector {args.activations!r}",
                           EXIT_VALIDATION)
        if len(vec) != ctx.n_cats:
            raise CliError(
                f"expected {ctx.n_cats} activation flags, got {len(vec)}",
                EXIT_VALIDATION)
        bits = {cid: v for cid, v in zip(ctx.cat_ids, vec)}
        bd = welfare(instance, fares, bits)
    payload = {
        "instance_hash": instance.hash_hex(),
        "activations": {str(k): int(v) for k, v in sorted(bits.items())},
        "welfare": {"pax_term": bd.pax_term, "rev_term": bd.rev_term,
                    "vmt_term": bd.vmt_term, "total": bd.total},
    }
    _write_json(args.out, payload)
    return EXIT_OK


def _solve_config_echo(args) -> dict:
    return {
        "algorithm": args.algo,
        "time_limit": args.time_limit,
        "trajectories": args.trajectories,
        "ws_time": args.ws_time,
        "ws_proc": args.ws_proc,
        "anchors": args.anchors,
        "epsilon": args.epsilon,
        "seed": args.seed,
    }


def cmd_solve(args) -> int:
    instance = _load_instance(args.instance)
    seed = args.seed if args.seed is not None else (_default_seed() or 0)
    t0 = time.monotonic()
    max_traj = args.trajectories
    if args.time_limit is None and max_traj is None:
        max_traj = 3  # count-based default keeps runs reproducible
    try:
        fares, value, meta = bench_mod.run_algorithm(
            instance, args.algo, seed, time_limit=args.time_limit,
            max_trajectories=max_traj, ws_time=args.ws_time,
            ws_proc=args.ws_proc, D=args.anchors, epsilon=args.epsilon,
            heuristic_fallback=args.heuristic_fallback)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_VALIDATION)
    if fares is None:
        raise CliError("budget produced no result", EXIT_NO_RESULT)
    wall = time.monotonic() - t0
    rep = report.build_run_report(instance, args.algo,
                                  _solve_config_echo(args), fares,
                                  wall_clock=wall, seed=seed)
    _write_json(args.out, rep.to_json())
    if args.log_csv and "logs" in meta:
        report.write_trajectory_csv(args.log_csv, meta["logs"])
    return EXIT_OK


def cmd_bench_suite(args) -> int:
    instance = _load_instance(args.instance)
    base_seed = args.seed if args.seed is not None else (_default_seed() or 0)
    seeds = [base_seed + i for i in range(args.trials)]
    rows = bench_mod.benchmark_suite(
        instance, seeds, time_limit=args.time_limit,
        max_trajectories=args.trajectories, threads=args.threads,
        heuristic_fallback=args.heuristic_fallback)
    bench_mod.write_bench_csv(args.out, rows)
    for line in bench_mod.surplus_table(rows):
        print(f"{line['algorithm']:>12}: trials={line['trials']} "
              f"min={line['min_surplus']:+.2f} avg={line['avg_surplus']:+.2f} "
              f"max={line['max_surplus']:+.2f} (surplus vs mean BO)")
    return EXIT_OK


def cmd_bench_gap(args) -> int:
    instance = _load_instance(args.instance)
    seed = args.seed if args.seed is not None else (_default_seed() or 0)
    rows = bench_mod.sos2_gap_study(instance, args.lines, seed=seed)
    bench_mod.write_gap_csv(args.out, rows)
    gaps = [r.gap_pct for r in rows]
    print(f"lines={len(rows)} mean_gap={np.mean(gaps):.4f}% "
          f"max_gap={np.max(gaps):.4f}% min_gap={np.min(gaps):.6f}%")
    return EXIT_OK


def cmd_game(args) -> int:
    instance = _load_instance(args.instance)
    seed = args.seed if args.seed is not None else (_default_seed() or 0)
    ctx = eval_context(instance)
    weights = {
        ctx.transit_id: game.OperatorWeights(*_parse_weights(args.weights_tr)),
        ctx.mod_id: game.OperatorWeights(*_parse_weights(args.weights_mod)),
    }
    result = game.iterated_best_response(
        instance, weights, epsilon=args.epsilon, seed=seed,
        max_rounds=args.max_rounds)
    from .choice import operator_revenue
    f_tr = operator_revenue(instance, result.fares, None, ctx.transit_id)
    f_mod = operator_revenue(instance, result.fares, None, ctx.mod_id)
    payload = {
        "instance_hash": instance.hash_hex(),
        "converged": result.converged,
        "rounds": result.rounds,
        "fares": result.fares.to_json(),
        "objectives": {str(k): v for k, v in result.objectives.items()},
        "nc_revenues": {"transit": f_tr, "mod": f_mod},
    }
    _write_json(args.out, payload)
    if args.transcript:
        import csv as _csv
        with open(args.transcript, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["round", "operator", "obj_before", "obj_after",
                        "base", "markup"])
            for row in result.transcript:
                w.writerow([row.round, row.operator, f"{row.obj_before!r}",
                            f"{row.obj_after!r}", f"{row.base!r}",
                            f"{row.markup!r}"])
    if not result.converged:
        print("warning: best response did not converge "
              f"within {args.max_rounds} rounds", file=sys.stderr)
    return EXIT_OK


def cmd_allocate(args) -> int:
    if args.from_results:
        game_path, allied_path = args.from_results
        try:
            with open(game_path) as fh:
                nc = json.load(fh)
            with open(allied_path) as fh:
                allied = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read results: {exc}", EXIT_IO)
        try:
            f_tr = float(nc["nc_revenues"]["transit"])
            f_mod = float(nc["nc_revenues"]["mod"])
            revs = allied["operator_revenues"]
            f_allied = float(revs["transit"]) + float(revs["mod"])
        except KeyError as exc:
            raise CliError(f"result file missing field {exc}", EXIT_VALIDATION)
    else:
        if args.nc_tr is None or args.nc_mod is None or args.allied is None:
            raise CliError("need --from-results or all of --nc-tr/--nc-mod/"
                           "--allied", EXIT_VALIDATION)
        f_tr, f_mod, f_allied = args.nc_tr, args.nc_mod, args.allied
    result = game.allocate(f_tr, f_mod, f_allied)
    _write_json(args.out, {
        "f_nc_transit": result.f_nc_transit,
        "f_nc_mod": result.f_nc_mod,
        "f_allied": result.f_allied,
        "delta": result.delta,
        "phi_transit": result.phi_transit,
        "phi_mod": result.phi_mod,
    })
    return EXIT_OK


def cmd_regime_sweep(args) -> int:
    instance = _load_instance(args.instance)
    seed = args.seed if args.seed is not None else (_default_seed() or 0)
    grids = []
    for chunk in args.grid.split(";"):
        if chunk.strip():
            grids.append(_parse_weights(chunk.strip()))
    if not grids:
        raise CliError("empty weight grid", EXIT_VALIDATION)
    rows = []
    raw = []
    for w in grids:
        inst_w = model.with_weights(instance, *w)
        fares, value, _ = bench_mod.run_algorithm(
            inst_w, args.algo, seed, time_limit=args.time_limit,
            max_trajectories=args.trajectories,
            heuristic_fallback=args.heuristic_fallback)
        rep = report.build_run_report(inst_w, args.algo, {"weights": w},
                                      fares, wall_clock=0.0, seed=seed)
        raw.append((w, rep))
    pax_best = max(r.welfare.pax_term for _, r in raw)
    rev_best = max(r.welfare.rev_term for _, r in raw)
    vmt_best = min(r.welfare.vmt_term for _, r in raw)

    def pct(val, best):
        return 100.0 * val / best if best not in (0, 0.0) else 0.0

    for w, rep in raw:
        rows.append({
            "mu_pax": w[0], "mu_rev": w[1], "mu_vmt": w[2],
            "price_min": rep.price_min, "price_mean": rep.price_mean,
            "price_max": rep.price_max,
            "pax_pct": pct(rep.welfare.pax_term, pax_best),
            "rev_pct": pct(rep.welfare.rev_term, rev_best),
            "vmt_pct": pct(rep.welfare.vmt_term, vmt_best),
            "utilization_pct": rep.utilization_pct,
            "welfare_total": rep.welfare.total,
        })
    report.write_sweep_csv(args.out, rows)
    print(f"wrote {args.out}: {len(rows)} regimes")
    return EXIT_OK


def cmd_export_lp(args) -> int:
    instance = _load_instance(args.instance)
    fares = _load_fares(args.fares)
    try:
        export_milp(instance, fares, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO)
    print(f"wrote {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fareplan",
        description="Cooperative fare design for transit+MOD alliances.")
    p.add_argument("--threads", type=int, default=1,
                   help="worker pool size for benchmark runs")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    g.add_argument("--preset", choices=["tiny", "desk", "large"],
                   default="desk")
    g.add_argument("--config", help="generator config JSON")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("validate", help="validate an instance file")
    v.add_argument("instance")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("eval", help="evaluate fares on an instance")
    e.add_argument("instance")
    e.add_argument("--fares", required=True)
    e.add_argument("--activations", default="auto",
                   help="'auto' or comma-separated 0/1 flags")
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("solve", help="optimize fares")
    s.add_argument("instance")
    s.add_argument("--algo", default="sos2cd-mdr",
                   choices=list(bench_mod.ALL_ALGORITHMS))
    s.add_argument("--time-limit", type=float, default=None)
    s.add_argument("--trajectories", type=int, default=None)
    s.add_argument("--ws-time", type=float, default=0.0)
    s.add_argument("--ws-proc", choices=["uniform", "bo"], default="uniform")
    s.add_argument("--anchors", type=int, default=11)
    s.add_argument("--epsilon", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--heuristic-fallback", action="store_true")
    s.add_argument("--out", default="-")
    s.add_argument("--log-csv", default=None)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="benchmark harnesses")
    bsub = b.add_subparsers(dest="bench_command", required=True)
    bs = bsub.add_parser("suite", help="all algorithms, shared seeds")
    bs.add_argument("instance")
    bs.add_argument("--trials", type=int, default=10)
    bs.add_argument("--time-limit", type=float, default=None)
    bs.add_argument("--trajectories", type=int, default=None)
    bs.add_argument("--seed", type=int, default=None)
    bs.add_argument("--threads", type=int, default=1)
    bs.add_argument("--heuristic-fallback", action="store_true")
    bs.add_argument("--out", required=True)
    bs.set_defaults(func=cmd_bench_suite)
    bg = bsub.add_parser("sos2-gap", help="line-search gap study")
    bg.add_argument("instance")
    bg.add_argument("--lines", type=int, default=100)
    bg.add_argument("--seed", type=int, default=None)
    bg.add_argument("--out", required=True)
    bg.set_defaults(func=cmd_bench_gap)

    gm = sub.add_parser("game", help="non-cooperative equilibrium")
    gm.add_argument("instance")
    gm.add_argument("--weights-tr", required=True,
                    help="transit weights 'pax,rev,vmt'")
    gm.add_argument("--weights-mod", required=True,
                    help="mod weights 'pax,rev,vmt'")
    gm.add_argument("--epsilon", type=float, default=1e-4)
    gm.add_argument("--max-rounds", type=int, default=50)
    gm.add_argument("--seed", type=int, default=None)
    gm.add_argument("--out", default="-")
    gm.add_argument("--transcript", default=None)
    gm.set_defaults(func=cmd_game)

    al = sub.add_parser("allocate", help="revenue allocation")
    al.add_argument("--from-results", nargs=2,
                    metavar=("GAME_JSON", "RUN_JSON"))
    al.add_argument("--nc-tr", type=float, default=None)
    al.add_argument("--nc-mod", type=float, default=None)
    al.add_argument("--allied", type=float, default=None)
    al.add_argument("--out", default="-")
    al.set_defaults(func=cmd_allocate)

    rs = sub.add_parser("regime-sweep", help="one run per weight vector")
    rs.add_argument("instance")
    rs.add_argument("--grid", required=True,
                    help="semicolon-separated weight triples")
    rs.add_argument("--algo", default="sos2cd-mdr",
                    choices=list(bench_mod.ALL_ALGORITHMS))
    rs.add_argument("--time-limit", type=float, default=None)
    rs.add_argument("--trajectories", type=int, default=None)
    rs.add_argument("--seed", type=int, default=None)
    rs.add_argument("--heuristic-fallback", action="store_true")
    rs.add_argument("--out", required=True)
    rs.set_defaults(func=cmd_regime_sweep)

    x = sub.add_parser("export-lp", help="write the activation model as LP")
    x.add_argument("instance")
    x.add_argument("--fares", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_lp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
