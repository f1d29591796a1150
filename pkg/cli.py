"""
GnarLab — Command Line
Subcommands: simulate, fit, select, infer, eval, bench, diag, preprocess.
Vorrang der Einstellungen: CLI-Flag > Konfigurationsdatei > Umgebung (.env).
"""
import argparse
import json
import logging
from pathlib import Path

from core.campaign import run_campaign, simulate_dataset
from core.errors import GnarError
from core.estimator import FitOptions, fit, refit
from core.formatters import (
    format_coefficient_table, format_diagnostics, format_fit_summary, format_selection,
)
from core.inference import confidence_intervals
from core.initializer import init_pool
from core.metrics import evaluate
from core.network import diagnostics, row_normalize
from core.preprocess import load_counts
from core.refinement import refine_and_refit
from core.scenarios import config_from_mapping, load_configs, load_defaults, parse_grid
from core.selection import select_g
from integrations import files

logger = logging.getLogger("gnarlab.cli")


# ─── PARSER ───────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    output = argparse.ArgumentParser(add_help=False)
    output.add_argument("--out-dir", help="Ausgabeverzeichnis")

    config = argparse.ArgumentParser(add_help=False)
    config.add_argument("--config", help="INI-Datei mit [defaults] und [run.<name>]")

    seed = argparse.ArgumentParser(add_help=False)
    seed.add_argument("--seed", type=int, help="Master-Seed")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--threads", type=int, help="Worker (Threads im Fit, Prozesse in bench)")
    search.add_argument("--restarts", type=int, help="Restarts im Init-Pool")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--g-grid", help="Kandidaten für G, z.B. '2,3,4' oder '1-6'")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--edges", required=True, help="Edge-Liste (from,to = Follower,Followee; 1-basiert)")
    data.add_argument("--panel", required=True, help="Panel im Langformat (node,t,y)")
    data.add_argument("--covariates", help="Kovariaten (node,<name>...)")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--run", help="Nur diesen Run aus der Konfiguration")
    scen.add_argument("--scenario", type=int)
    scen.add_argument("--network", choices=["sbm", "powerlaw"])
    scen.add_argument("--N", type=int, dest="n_nodes")
    scen.add_argument("--T", type=int, dest="n_periods")
    scen.add_argument("--G0", type=int, dest="g0")
    scen.add_argument("--sigma", type=float)
    scen.add_argument("--replications", type=int)

    parser = argparse.ArgumentParser(prog="gnarlab", description="Netzwerk-VAR mit latenten Gruppen")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[output, config, seed, scen], help="Datensatz aus einem Szenario simulieren")
    p.add_argument("--replication", type=int, default=1, help="Replikation b (bestimmt die Seeds)")

    p = sub.add_parser("fit", parents=[output, config, seed, search, data], help="Modell mit festem G schätzen")
    p.add_argument("--G", type=int, required=True, dest="n_groups")
    p.add_argument("--no-refine", action="store_true")

    p = sub.add_parser("select", parents=[output, config, seed, search, grid, data], help="G per GIC wählen")
    p.add_argument("--lambda", type=float, dest="lambda_nt", help="λ_NT überschreiben")

    p = sub.add_parser("infer", parents=[output], help="Koeffiziententabelle zu einem Fit")
    p.add_argument("--fit", required=True, dest="fit_path")
    p.add_argument("--edges")
    p.add_argument("--panel")
    p.add_argument("--covariates")
    p.add_argument("--level", type=float, default=0.95)

    p = sub.add_parser("eval", parents=[output], help="Fit gegen bekannte Wahrheit auswerten")
    p.add_argument("--fit", required=True, dest="fit_path")
    p.add_argument("--edges", required=True)
    p.add_argument("--truth-params", required=True)
    p.add_argument("--truth-membership", required=True)

    p = sub.add_parser("bench", parents=[output, config, seed, search, grid, scen], help="Simulationskampagne ausführen")
    p.add_argument("--db", help="SQLAlchemy-URL für die Run-Registry")

    p = sub.add_parser("diag", parents=[output], help="Netzwerk-Diagnostik")
    p.add_argument("--edges", required=True)

    p = sub.add_parser("preprocess", parents=[output], help="Zählwerte → zentriertes Panel")
    p.add_argument("--counts", required=True, help="Zählwerte im Langformat (node,t,count)")
    p.add_argument("--covariates")
    p.add_argument("--intercept", action="store_true", help="Konstante als Kovariate anhängen")

    return parser


# ─── HELPER FUNCTIONS ─────────────────────────────────

def _pick(flag, fallback):
    return flag if flag is not None else fallback


def _out_dir(args, env: dict) -> Path:
    path = Path(_pick(args.out_dir, env["OUT_DIR"]))
    path.mkdir(parents=True, exist_ok=True)
    return path


_CONFIG_KEYS = {
    "seed": "SEED", "restarts": "RESTARTS", "tol": "TOL", "max_iter": "MAX_ITER",
    "profile_budget": "PROFILE_BUDGET", "g_grid": "G_GRID",
}


def _settings(args, env: dict) -> dict:
    """Umgebung, überschrieben durch [defaults] aus --config."""
    settings = dict(env)
    if getattr(args, "config", None):
        for key, value in load_defaults(args.config).items():
            if key in _CONFIG_KEYS:
                settings[_CONFIG_KEYS[key]] = value
    return settings


def _fit_options(args, env: dict) -> FitOptions:
    return FitOptions(tol=env["TOL"], max_iter=env["MAX_ITER"], threads=_pick(args.threads, env["THREADS"]))


def _load_data(args) -> tuple:
    net = files.read_edge_list(args.edges)
    w = row_normalize(net)
    panel = files.read_panel(args.panel, args.covariates)
    if panel.N != net.n_nodes:
        raise GnarError(f"Panel hat {panel.N} Knoten, Netz {net.n_nodes}")
    return net, w, panel


def _scenario_configs(args, env: dict) -> list:
    overrides = {
        "seed": args.seed,
        "restarts": getattr(args, "restarts", None),
        "g_grid": parse_grid(args.g_grid) if getattr(args, "g_grid", None) else None,
        "scenario": args.scenario,
        "network": args.network,
        "N": args.n_nodes,
        "T": args.n_periods,
        "G0": args.g0,
        "sigma": args.sigma,
        "replications": args.replications,
    }
    base = {
        "seed": env["SEED"], "restarts": env["RESTARTS"], "burn_in": env["BURN_IN"], "tol": env["TOL"],
        "max_iter": env["MAX_ITER"], "profile_budget": env["PROFILE_BUDGET"],
    }
    if args.config:
        configs = load_configs(args.config, overrides, base)
        if args.run:
            configs = [c for c in configs if c.name == args.run]
            if not configs:
                raise GnarError(f"Run '{args.run}' nicht in {args.config}")
        return configs
    return [config_from_mapping(args.run or "default", base, overrides)]


# ─── COMMANDS ─────────────────────────────────────────

def cmd_simulate(args, env: dict) -> int:
    out = _out_dir(args, env)
    for config in _scenario_configs(args, env):
        net, _, _, params, truth, panel = simulate_dataset(config, args.replication)
        target = out / config.name
        files.write_edge_list(net, target / "edges.csv")
        files.write_blocks(net, target / "blocks.csv")
        files.write_panel(panel, target / "panel.csv", target / "covariates.csv")
        files.write_params(params, target / "params_true.json")
        files.write_membership(truth, target / "membership_true.csv")
        logger.info(f"Simuliert: {target} (N={panel.N}, T={panel.T}, G0={params.n_groups})")
    return 0


def cmd_fit(args, env: dict) -> int:
    env = _settings(args, env)
    _, w, panel = _load_data(args)
    seed = _pick(args.seed, env["SEED"])
    options = _fit_options(args, env)
    pool = init_pool(panel, w, args.n_groups, restarts=_pick(args.restarts, env["RESTARTS"]), rng_seed=seed)
    result = fit(panel, w, args.n_groups, pool, options, seed=seed)
    if not args.no_refine:
        result, _ = refine_and_refit(result, panel, w, budget=env["PROFILE_BUDGET"], rng_seed=seed,
                                     threads=options.threads)
    out = _out_dir(args, env)
    files.write_fit(result, out / f"fit_G{args.n_groups}.json")
    files.write_membership(result.membership, out / f"membership_G{args.n_groups}.csv")
    print(format_fit_summary(result))
    return 0


def cmd_select(args, env: dict) -> int:
    from integrations.plotting import plot_gic_curve
    env = _settings(args, env)
    _, w, panel = _load_data(args)
    grid = parse_grid(args.g_grid) if args.g_grid else tuple(env.get("G_GRID") or range(1, 7))
    selection = select_g(
        panel, w, grid, lambda_nt=args.lambda_nt, options=_fit_options(args, env),
        restarts=_pick(args.restarts, env["RESTARTS"]), rng_seed=_pick(args.seed, env["SEED"]),
        budget=env["PROFILE_BUDGET"],
    )
    out = _out_dir(args, env)
    files.write_gic_curve(selection, out / "gic_curve.csv")
    plot_gic_curve(selection, out / "gic_curve.png")
    files.write_fit(selection.best_fit(), out / f"fit_G{selection.g_hat}.json")
    print(format_selection(selection))
    return 0


def cmd_infer(args, env: dict) -> int:
    result = files.read_fit(args.fit_path)
    panel = w = None
    if args.edges and args.panel:
        _, w, panel = _load_data(args)
        result = refit(panel, w, result.membership, previous=result.params)
    inference = confidence_intervals(result, args.level, panel, w)
    out = _out_dir(args, env)
    files.write_coefficients(inference, out / "coefficients.csv")
    print(format_coefficient_table(inference))
    return 0


def cmd_eval(args, env: dict) -> int:
    result = files.read_fit(args.fit_path)
    w = row_normalize(files.read_edge_list(args.edges))
    truth_params = files.read_params(args.truth_params)
    truth = files.read_membership(args.truth_membership, truth_params.n_groups)
    report = evaluate(result.params, result.membership, truth_params, truth, w)
    out = _out_dir(args, env)
    files.write_json(report.to_dict(), out / "metrics.json")
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_bench(args, env: dict) -> int:
    out = _out_dir(args, env)
    threads = _pick(args.threads, env["THREADS"])
    db_url = _pick(args.db, env["DATABASE_URL"])
    failures = 0
    for config in _scenario_configs(args, env):
        result = run_campaign(config, out, threads=threads, db_url=db_url)
        failures += result.failures
        print(f"{config.name}: {result.metrics_path} ({result.failures} Fehler)")
    return 1 if failures else 0


def cmd_diag(args, env: dict) -> int:
    net = files.read_edge_list(args.edges)
    diag = diagnostics(net, row_normalize(net))
    out = _out_dir(args, env)
    files.write_json(diag.to_dict(), out / "diagnostics.json")
    print(format_diagnostics(diag))
    return 0


def cmd_preprocess(args, env: dict) -> int:
    panel = load_counts(args.counts, args.covariates, add_intercept=args.intercept)
    out = _out_dir(args, env)
    files.write_panel(panel, out / "panel.csv", out / "covariates.csv" if panel.p else None)
    print(f"Panel: N={panel.N}, T={panel.T}, p={panel.p} → {out / 'panel.csv'}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "diag": cmd_diag,
    "preprocess": cmd_preprocess,
}


def run(argv, env: dict) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, env)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command} fehlgeschlagen: {e}")
        return 2
