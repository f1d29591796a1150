"""
GnarLab — Campaign Runner
Simulationsstudie: pro Replikation Netz ziehen, Memberships und Kovariaten ziehen, simulieren,
für jedes G im Grid fitten und verfeinern, Inferenz, GIC-Auswahl, Oracle-Fit und Metriken.
Ergebnis: Metrik-CSV (eine Zeile pro Replikation, G und Schätzer) und Zusammenfassung.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path
from typing import Optional

import numpy as np

from core.errors import GnarError, InferenceError
from core.estimator import FitOptions, oracle_fit
from core.formatters import METRIC_COLUMNS, SUMMARY_COLUMNS, format_metric_row, format_summary_row
from core.inference import confidence_intervals
from core.initializer import node_estimates
from core.metrics import coverage_error, coverage_rate, evaluate, msr_table
from core.model import NoiseSpec, simulate
from core.network import diagnostics, gen_powerlaw, gen_sbm, row_normalize
from core.scenarios import ScenarioConfig, config_dict, draw_covariates, draw_membership, write_config_echo
from core.selection import default_lambda, fit_pipeline, gic

logger = logging.getLogger("gnarlab.campaign")


@dataclass
class ReplicationOutcome:
    b: int
    rows: list = field(default_factory=list)
    coverage: dict = field(default_factory=dict)    # (G, estimator) → Indikatoren
    g_hat: Optional[int] = None
    gic_values: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class CampaignResult:
    name: str
    metrics_path: Path
    summary_path: Path
    rows: list
    summary: list
    failures: int
    g_hats: list


def replication_seeds(seed: int, b: int) -> dict:
    """Unabhängige Seeds pro Replikation und Zweck, nur aus (seed, b) abgeleitet."""
    draws = np.random.default_rng([seed, b]).integers(0, 2 ** 32, size=5)
    return dict(zip(("network", "membership", "covariates", "noise", "fit"), (int(d) for d in draws)))


def simulate_dataset(config: ScenarioConfig, b: int) -> tuple:
    """(Netz, W, Diagnostik, wahre Parameter, wahre Membership, Panel) für Replikation b."""
    seeds = replication_seeds(config.seed, b)
    if config.network == "sbm":
        net = gen_sbm(config.N, config.communities, seeds["network"])
    else:
        net = gen_powerlaw(config.N, seeds["network"])
    w = row_normalize(net)
    diag = diagnostics(net, w)

    truth_params = config.true_params()
    truth = draw_membership(config.N, config.pi, np.random.default_rng(seeds["membership"]))
    z = draw_covariates(config.N, config.p, np.random.default_rng(seeds["covariates"]))
    panel = simulate(truth_params, truth, w, z, config.T, NoiseSpec(config.sigma, config.noise),
                     seeds["noise"], burn_in=config.burn_in)
    return net, w, diag, truth_params, truth, panel


def run_replication(config: ScenarioConfig, b: int) -> ReplicationOutcome:
    seeds = replication_seeds(config.seed, b)
    _, w, diag, truth_params, truth, panel = simulate_dataset(config, b)

    options = FitOptions(tol=config.tol, max_iter=config.max_iter, threads=1)
    estimates = node_estimates(panel, w)
    lam = default_lambda(config.N, config.T, diag)

    fits, gics = {}, {}
    for g in config.g_grid:
        fit_seed = int(np.random.default_rng([seeds["fit"], g]).integers(0, 2 ** 32))
        refined, raw = fit_pipeline(panel, w, g, config.restarts, options, fit_seed,
                                    config.profile_budget, estimates)
        fits[g] = refined
        gics[g] = gic(raw, g, lam)
    g_hat = min(config.g_grid, key=lambda g: (gics[g], g))

    outcome = ReplicationOutcome(b=b, g_hat=g_hat, gic_values=gics)

    def record(fit_result, g, estimator):
        inference = None
        if g == config.G0:
            try:
                inference = confidence_intervals(fit_result, config.level, panel, w)
            except InferenceError as e:
                logger.warning(f"Replikation {b}, G={g}: keine Inferenz ({e})")
        report = evaluate(fit_result.params, fit_result.membership, truth_params, truth, w,
                          inference, g_hat if estimator == "gnar" else None)
        if report.coverage:
            outcome.coverage[(g, estimator)] = report.coverage
        outcome.rows.append(format_metric_row(config, g, b, estimator, report, report.g_hat))

    for g in config.g_grid:
        record(fits[g], g, "gnar")
    record(oracle_fit(panel, w, truth), config.G0, "oracle")
    return outcome


def _safe_replication(config: ScenarioConfig, b: int) -> ReplicationOutcome:
    try:
        return run_replication(config, b)
    except (GnarError, ValueError, np.linalg.LinAlgError) as e:
        logger.error(f"Replikation {b} von '{config.name}' fehlgeschlagen: {e}", exc_info=True)
        return ReplicationOutcome(b=b, error=str(e))


def summarize(config: ScenarioConfig, outcomes: list) -> list:
    ok = [o for o in outcomes if not o.failed]
    failures = len(outcomes) - len(ok)
    g_hats = [o.g_hat for o in ok]
    keys = [(g, "gnar") for g in config.g_grid] + [(config.G0, "oracle")]
    rates = msr_table(g_hats, config.g_grid) if g_hats else {}

    summary = []
    for g, estimator in keys:
        rows = [r for o in ok for r in o.rows if r["G"] == g and r["estimator"] == estimator]
        indicators = [o.coverage[(g, estimator)] for o in ok if (g, estimator) in o.coverage]
        ae = coverage_error(indicators, config.level) if indicators else {}
        cov = coverage_rate(indicators) if indicators else {}
        rate = rates.get(g) if estimator == "gnar" else None
        summary.append(format_summary_row(config, g, estimator, rows, ae, cov, rate, failures))
    return summary


def run_campaign(config: ScenarioConfig, out_dir, threads: int = 1, db_url: Optional[str] = None) -> CampaignResult:
    """Alle Replikationen; Prozess-Pool über Replikationen, Schreiben erfolgt danach in Reihenfolge b."""
    from integrations.files import write_csv, write_json

    run_dir = Path(out_dir) / config.name
    write_config_echo(config, run_dir / "config_echo.ini")
    logger.info(
        f"Kampagne '{config.name}': Szenario {config.scenario}, {config.network}, N={config.N}, "
        f"T={config.T}, G0={config.G0}, B={config.replications}, Grid {list(config.g_grid)}"
    )

    registry = _open_registry(db_url, config, run_dir)

    reps = range(1, config.replications + 1)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_safe_replication, repeat(config), reps))
    else:
        outcomes = []
        for b in reps:
            outcomes.append(_safe_replication(config, b))
            if b % 10 == 0:
                logger.info(f"Kampagne '{config.name}': {b}/{config.replications} Replikationen")

    rows = [r for o in outcomes for r in o.rows]
    summary = summarize(config, outcomes)
    failures = sum(1 for o in outcomes if o.failed)
    metrics_path = write_csv(rows, METRIC_COLUMNS, run_dir / "metrics.csv")
    summary_path = write_csv(summary, SUMMARY_COLUMNS, run_dir / "summary.csv")

    if failures:
        logger.warning(f"Kampagne '{config.name}': {failures} Replikationen fehlgeschlagen")
    if registry is not None:
        record = _close_registry(registry, outcomes, failures)
        write_json(record, run_dir / "registry.json")
    logger.info(f"Kampagne '{config.name}' fertig: {metrics_path}")

    return CampaignResult(
        name=config.name, metrics_path=metrics_path, summary_path=summary_path, rows=rows,
        summary=summary, failures=failures, g_hats=[o.g_hat for o in outcomes if not o.failed],
    )


# ─── REGISTRY ─────────────────────────────────────────

def _open_registry(db_url: Optional[str], config: ScenarioConfig, run_dir: Path):
    if not db_url:
        return None
    from models.database import Campaign, init_db
    session_factory = init_db(db_url)
    session = session_factory()
    campaign = Campaign(
        name=config.name, scenario=config.scenario, network=config.network, n_nodes=config.N,
        n_periods=config.T, g0=config.G0, seed=config.seed, config=config_dict(config),
        out_dir=str(run_dir),
    )
    session.add(campaign)
    session.commit()
    return session, campaign


def _close_registry(registry, outcomes: list, failures: int) -> dict:
    """Replikationen eintragen, Kampagne abschließen; liefert die gespeicherte Kampagnenzeile."""
    from models.database import ReplicationRecord, utcnow
    session, campaign = registry
    for o in outcomes:
        if o.failed:
            session.add(ReplicationRecord(campaign_id=campaign.id, replication=o.b, n_groups=0,
                                          status="failed", error=o.error))
            continue
        for r in o.rows:
            session.add(ReplicationRecord(
                campaign_id=campaign.id, replication=o.b, n_groups=r["G"], estimator=r["estimator"],
                rho_hat=r["rho_hat"], rmse_beta=r["rmse_beta"], rmse_nu=r["rmse_nu"],
                rmse_zeta=r["rmse_zeta"], rmse_beta_all=r["rmse_beta_all"], rmse_nu_all=r["rmse_nu_all"],
                rmse_zeta_all=r["rmse_zeta_all"], g_hat=r["g_hat"],
            ))
    campaign.replications = len(outcomes)
    campaign.failures = failures
    campaign.finished = True
    campaign.finished_at = utcnow()
    session.commit()
    record = campaign.to_dict()
    session.close()
    return record
