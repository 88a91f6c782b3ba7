"""Command-line entry point: ``oco-s2 run | sweep <kind> | comparator-check | bound-report``.

Exit codes: 0 success, 2 configuration error, 3 comparator did not converge,
4 I/O error.
"""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .comparator import (
    DIAGNOSTIC_COLUMNS,
    aggregate_diagnostics,
    diagnostics_rows,
)
from .config import SWEEP_ALIASES, load_config
from .costs import estimate_constants
from .experiments import (
    RECORD_COLUMNS,
    aggregate,
    realize,
    run_one,
    run_sweep,
)
from .learner import PredictionError, prediction_source
from .lti import ConfigurationError, generate_disturbances
from .metrics import (
    bound_terms,
    participation_factor,
    regret_bound_tuned,
    regret_report,
    theory_constants,
)
from .output import csv_text, json_text, write_atomic

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON config (sections model, cost, learner, comparator, sweep, output)")
    p.add_argument("--seed", type=int, help="base seed; overrides OCO_S2_SEED and the config")
    p.add_argument("--seeds", type=int, help="number of consecutive seeds starting at the base seed")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--format", choices=("csv", "json"), help="record/trajectory file format")
    p.add_argument("--grid", help="comma-separated sweep values, e.g. 1,10,200")
    p.add_argument("--variant", choices=("plain", "prediction"))
    p.add_argument("--predictions", help="zero | oracle | prev | noisy:<scale>")
    p.add_argument("--svg", action="store_true", help="also write simple SVG plots")
    p.add_argument("--timing", action="store_true", help="record wall-clock runtime_ms (outputs then differ between runs)")


def build_parser():
    parser = _Parser(prog="oco-s2", description="Block online learning with stateful costs and sparse communication.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("run", help="single learner run against its hindsight comparator"))
    sp = sub.add_parser("sweep", help="parameter sweep")
    sp.add_argument("kind", choices=sorted(SWEEP_ALIASES))
    _common(sp)
    _common(sub.add_parser("comparator-check", help="comparator feasibility diagnostics per seed"))
    _common(sub.add_parser("bound-report", help="theory constants and bound vs empirical regret"))
    return parser


def _parse_grid(text):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            v = float(tok)
        except ValueError:
            raise ConfigurationError(f"bad grid value {tok!r}") from None
        vals.append(int(v) if v.is_integer() and not re.search(r"[.eE]", tok) else v)
    if not vals:
        raise ConfigurationError("empty grid")
    return vals


def _resolve(args):
    cfg = load_config(args.config, seed=args.seed, seeds=args.seeds)
    if args.out:
        cfg.output.dir = args.out
    if args.format:
        cfg.output.format = args.format
    if args.svg:
        cfg.output.svg = True
    if args.timing:
        cfg.output.timing = True
    if args.variant:
        cfg.learner.variant = args.variant
    if args.predictions:
        cfg.learner.predictions = args.predictions
    if cfg.output.format not in ("csv", "json"):
        raise ConfigurationError(f"output.format must be csv or json, got {cfg.output.format!r}")
    if cfg.learner.variant == "prediction":
        prediction_source(cfg.learner.predictions)  # validates the source name
    if args.jobs < 1:
        raise ConfigurationError("--jobs must be >= 1")
    return cfg


def _audit(cfg, model, rc):
    """Constants at the first seed's realization, for the manifest."""
    seed = cfg.seeds()[0]
    d = generate_disturbances(rc.T, model.n_d, seed, cfg.model.disturbance_params())
    H = rc.memory(model.rho)
    ac = estimate_constants(model, rc.cost(), H, d.D_d, d)
    tc = theory_constants(model, ac, rc.m, rc.N, d.D_d)
    return {"seed": seed, "H": H, "D_d": d.D_d, "assumption": asdict(ac), "theory": asdict(tc)}


def _manifest(cfg, command, out, extra=None):
    model = cfg.system()
    rc = cfg.run_config(model)
    doc = {
        "command": command,
        "artifact_version": __version__,
        "config_path": cfg.path,
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds()),
        "output_dir": str(out),
        "constants_audit": _audit(cfg, model, rc),
    }
    if extra:
        doc.update(extra)
    write_atomic(out / "manifest.json", json_text(doc))
    return model, rc


def _records_file(out, fmt, records, name="records"):
    rows = [r.row() for r in records]
    if fmt == "json":
        write_atomic(out / f"{name}.json", json_text(rows))
    else:
        write_atomic(out / f"{name}.csv", csv_text(RECORD_COLUMNS, rows))


def _summary_file(out, rows):
    header = ("setting", "metric", "mean", "std", "n")
    write_atomic(out / "summary.csv", csv_text(header, [asdict(r) for r in rows]))


def cmd_run(cfg, args):
    out = Path(cfg.output.dir)
    model, rc = _manifest(cfg, "run", out)
    seed = cfg.seeds()[0]
    real = realize(model, seed, rc.T, rc.cost(), cfg.model.disturbance_params(), rc.budget_fraction, cfg.solver())
    rec, res = run_one(model, rc, real, seed, real.diagnostics.success, cfg.output.timing)
    rep = regret_report(res, real.solution, rc.cost(), rc.T, rc.K, rc.m, model.n_u)
    traj = res.trajectory
    n_u, n_x = model.n_u, model.n_x
    header = ["t", *(f"u{j + 1}" for j in range(n_u)), *(f"chi{j + 1}" for j in range(n_x)),
              *(f"d{j + 1}" for j in range(model.n_d)), "stage_cost"]
    rows = [
        [t + 1, *traj.u[t], *traj.chi[t], *traj.d[t], traj.stage_costs[t]] for t in range(rc.T)
    ]
    if cfg.output.format == "json":
        write_atomic(out / "trajectory.json", json_text([dict(zip(header, r)) for r in rows]))
    else:
        write_atomic(out / "trajectory.csv", csv_text(header, rows))
    report = rep.as_dict()
    report.update(
        seed=seed, variant=rc.variant, predictions=rc.predictions if rc.variant == "prediction" else None,
        T=rc.T, K=rc.K, H=rec["H"], m=rc.m, N=rc.N, eta_B=rc.eta, V_T=real.V_T,
        bound_rhs=rec["bound"], comparator=asdict(real.diagnostics),
    )
    write_atomic(out / "report.json", json_text(report))
    print(f"regret {rep.regret:.6g} (avg {rep.avg_regret:.6g}), comm {rep.comm_total}, wrote {out}")
    return EXIT_OK if real.diagnostics.success else EXIT_SOLVER


def cmd_sweep(cfg, args):
    out = Path(cfg.output.dir)
    grid = _parse_grid(args.grid) if args.grid else None
    plan = cfg.plan(args.kind, grid)
    _manifest(cfg, f"sweep {args.kind}", out, {"sweep": {"kind": plan.kind, "grid": list(plan.grid)}})
    records, diags = run_sweep(plan, jobs=args.jobs)
    rows = aggregate(records)
    _records_file(out, cfg.output.format, records)
    _summary_file(out, rows)
    write_atomic(
        out / "comparator_diagnostics.csv",
        diagnostics_rows([(f"T={T}", seed, dg) for (seed, T), dg in diags]),
    )
    if cfg.output.svg:
        from .plots import sweep_svg

        write_atomic(out / f"sweep_{args.kind}.svg", sweep_svg(plan, rows))
    failed = [r for r in records if not r.comparator_success]
    for r in failed:
        print(f"comparator did not converge: {r.setting} seed {r.seed}", file=sys.stderr)
    print(f"{len(records)} records, {len(plan.grid)} settings, wrote {out}")
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_comparator_check(cfg, args):
    out = Path(cfg.output.dir)
    model, rc = _manifest(cfg, "comparator-check", out)
    items = []
    for seed in cfg.seeds():
        real = realize(model, seed, rc.T, rc.cost(), cfg.model.disturbance_params(), rc.budget_fraction, cfg.solver())
        items.append((f"T={rc.T}", seed, real.diagnostics))
    write_atomic(out / "comparator_diagnostics.csv", diagnostics_rows(items))
    agg = aggregate_diagnostics([d for _, _, d in items])
    summary = {
        "success": agg["success_rate"],
        "iterations": agg["iterations_mean"],
        "path_length": agg["path_length_mean"],
        "budget_slack": agg["budget_slack_mean"],
        "max_dynamics_residual": agg["max_dynamics_residual"],
        "max_box_violation": agg["max_box_violation"],
        "max_path_budget_violation": agg["max_path_budget_violation"],
        "max_relative_objective_mismatch": agg["max_relative_objective_mismatch"],
    }
    write_atomic(out / "comparator_summary.csv", csv_text(DIAGNOSTIC_COLUMNS, [summary]))
    write_atomic(out / "comparator_summary.json", json_text(agg))
    print(f"success rate {agg['success_rate']:g} over {agg['n']} solves, wrote {out}")
    return EXIT_OK if agg["success_rate"] == 1.0 else EXIT_SOLVER


def _bound_entry(model, rc, seeds, params, solver, timing):
    per_seed, ok = [], True
    for seed in seeds:
        real = realize(model, seed, rc.T, rc.cost(), params, rc.budget_fraction, solver)
        ok &= real.diagnostics.success
        rec, res = run_one(model, rc, real, seed, real.diagnostics.success, timing)
        H = rec["H"]
        ac = estimate_constants(model, rc.cost(), H, real.d.D_d, real.d)
        G_P = ac.G_beta if rc.G_P is None else rc.G_P
        tc = theory_constants(model, replace(ac, G_P=G_P), rc.m, rc.N, real.d.D_d)
        mismatch = res.pred_mismatch or 0.0
        entry = {
            "seed": seed,
            "V_T": real.V_T,
            "D_d": real.d.D_d,
            "regret": rec["final_regret"],
            "bound_rhs": rec["bound"],
            "bound_terms": bound_terms(tc, ac.D, real.V_T, rc.eta, rc.K, rc.T, H, model.rho,
                                       rc.variant, mismatch) if rc.eta > 0 else None,
            "tuned_bound": regret_bound_tuned(tc, ac.D, real.V_T, rc.K, rc.T),
            "assumption": asdict(ac),
            "theory": asdict(tc),
        }
        per_seed.append(entry)
    regrets = np.array([e["regret"] for e in per_seed])
    bounds = np.array([e["bound_rhs"] for e in per_seed])
    return {
        "T": rc.T, "K": rc.K, "H": rc.memory(model.rho),
        "m": rc.m, "N": rc.N, "eta_B": rc.eta, "variant": rc.variant,
        "participation_term": participation_factor(rc.N, rc.m),
        "mean_regret": float(regrets.mean()),
        "std_regret": float(regrets.std(ddof=1)) if regrets.size > 1 else 0.0,
        "mean_bound_rhs": float(bounds.mean()),
        "bound_dominates": bool(regrets.mean() <= bounds.mean()),
        "per_seed": per_seed,
    }, ok


def cmd_bound_report(cfg, args):
    out = Path(cfg.output.dir)
    model, rc = _manifest(cfg, "bound-report", out)
    params, solver = cfg.model.disturbance_params(), cfg.solver()
    entries, ok = [], True
    if cfg.sweep.kind or args.grid:
        plan = cfg.plan(cfg.sweep.kind or "k", _parse_grid(args.grid) if args.grid else None)
        configs = [plan.setting(v) for v in plan.grid]
    else:
        configs = [("base", rc)]
    for label, c in configs:
        e, good = _bound_entry(model, c, cfg.seeds(), params, solver, cfg.output.timing)
        e["setting"] = label
        entries.append(e)
        ok &= good
    write_atomic(out / "bound_report.json", json_text({"settings": entries}))
    for e in entries:
        print(f"{e['setting']}: mean regret {e['mean_regret']:.6g} <= bound {e['mean_bound_rhs']:.6g}: "
              f"{e['bound_dominates']} (participation term {e['participation_term']:g})")
    return EXIT_OK if ok else EXIT_SOLVER


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "comparator-check": cmd_comparator_check,
    "bound-report": cmd_bound_report,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigurationError, PredictionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
