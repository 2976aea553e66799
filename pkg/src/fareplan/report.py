"""Self-verifying run reports and CSV emission for sweeps and benchmarks."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .choice import WelfareBreakdown, eval_context
from .model import FareVector, Instance
from .second_stage import SecondStageSolution, solve_exact


@dataclass
class RunReport:
    instance_hash: str
    algorithm: str
    config: dict
    fares: FareVector
    welfare: WelfareBreakdown
    activations: dict[int, int]
    ridership_by_town: dict[str, float]
    ridership_by_category: dict[int, float]
    operator_revenues: dict[str, float]
    price_min: float
    price_mean: float
    price_max: float
    utilization_pct: float
    wall_clock: float
    seed: int | None

    def to_json(self) -> dict:
        return {
            "instance_hash": self.instance_hash,
            "algorithm": self.algorithm,
            "config": self.config,
            "fares": self.fares.to_json(),
            "welfare": {
                "pax_term": self.welfare.pax_term,
                "rev_term": self.welfare.rev_term,
                "vmt_term": self.welfare.vmt_term,
                "total": self.welfare.total,
            },
            "activations": {str(k): v for k, v in sorted(self.activations.items())},
            "ridership_by_town": dict(sorted(self.ridership_by_town.items())),
            "ridership_by_category": {
                str(k): v for k, v in sorted(self.ridership_by_category.items())
            },
            "operator_revenues": self.operator_revenues,
            "price_min": self.price_min,
            "price_mean": self.price_mean,
            "price_max": self.price_max,
            "utilization_pct": self.utilization_pct,
            "wall_clock": self.wall_clock,
            "seed": self.seed,
        }


def solution_summary(instance: Instance, sol: SecondStageSolution):
    """Town/category ridership, operator revenues and price stats at a
    second-stage solution."""
    ctx = eval_context(instance)
    ridden = ctx.opt_N * sol.s_flat
    by_town: dict[str, float] = {}
    for ti in range(ctx.n_types):
        town = ctx.towns[ti] or ""
        lo, hi = ctx.type_start[ti], ctx.type_start[ti + 1]
        by_town[town] = by_town.get(town, 0.0) + float(ridden[lo:hi].sum())
    by_cat: dict[int, float] = {cid: 0.0 for cid in ctx.cat_ids}
    for j in range(ctx.n_opts):
        c = ctx.opt_cat[j]
        if c >= 0:
            by_cat[ctx.cat_ids[c]] += float(ridden[j])
    y = sol.y
    rev = {}
    comp_tr = ctx.route_mat[:, 0] * y[0] + ctx.route_mat[:, 1] * y[1]
    comp_mod = ctx.route_mat[:, 2] * y[2] + ctx.route_mat[:, 3] * y[3]
    factor = np.ones(ctx.n_routes)
    de = ctx.route_cat >= 0
    factor[de] = 1.0 - y[4] * sol.bits[ctx.route_cat[de]]
    rev["transit"] = float((ridden * (comp_tr * factor)[ctx.opt_route]).sum())
    rev["mod"] = float((ridden * (comp_mod * factor)[ctx.opt_route]).sum())
    total_pax = float(ctx.N.sum())
    util = 100.0 * float(ridden.sum()) / total_pax if total_pax else 0.0
    prices = sol.p_vec
    return by_town, by_cat, rev, util, prices


def build_run_report(instance: Instance, algorithm: str, config: dict,
                     fares: FareVector, wall_clock: float,
                     seed: int | None,
                     component_cap: int = 20) -> RunReport:
    sol = solve_exact(instance, fares, component_cap=component_cap)
    by_town, by_cat, revs, util, prices = solution_summary(instance, sol)
    return RunReport(
        instance_hash=instance.hash_hex(),
        algorithm=algorithm,
        config=config,
        fares=fares,
        welfare=sol.welfare,
        activations=sol.activations,
        ridership_by_town=by_town,
        ridership_by_category=by_cat,
        operator_revenues=revs,
        price_min=float(prices.min()) if len(prices) else 0.0,
        price_mean=float(prices.mean()) if len(prices) else 0.0,
        price_max=float(prices.max()) if len(prices) else 0.0,
        utilization_pct=util,
        wall_clock=wall_clock,
        seed=seed,
    )


def verify_run_report(instance: Instance, report: RunReport,
                      tol: float = 1e-9) -> bool:
    """Re-evaluate the reported fares and confirm the reported welfare."""
    if report.instance_hash != instance.hash_hex():
        return False
    sol = solve_exact(instance, report.fares)
    scale = max(1.0, abs(report.welfare.total))
    return abs(sol.welfare.total - report.welfare.total) <= tol * scale


SWEEP_COLUMNS = ["mu_pax", "mu_rev", "mu_vmt", "price_min", "price_mean",
                 "price_max", "pax_pct", "rev_pct", "vmt_pct",
                 "utilization_pct", "welfare_total"]


def write_sweep_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in SWEEP_COLUMNS})


def write_trajectory_csv(path, logs) -> None:
    """One row per accepted point across trajectories."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trajectory", "step", "objective",
                         "beta0_tr", "betaDelta_tr", "beta0_mod",
                         "betaDelta_mod", "Lambda"])
        for ti, log in enumerate(logs):
            for si, (y, w) in enumerate(log.accepted):
                writer.writerow([ti, si, f"{w!r}"] + [f"{v!r}" for v in y])
