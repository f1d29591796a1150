"""
GnarLab — Formatters
Formatiert Ergebnisse für CSV-Zeilen (Metriken, Zusammenfassungen) und Konsolen-Ausgabe.
"""
from typing import Optional

import numpy as np

METRIC_COLUMNS = [
    "scenario", "network", "N", "T", "G", "b", "estimator",
    "rho_hat", "rmse_beta", "rmse_nu", "rmse_zeta",
    "rmse_beta_all", "rmse_nu_all", "rmse_zeta_all",
    "ae_cp_beta", "ae_cp_nu", "ae_cp_zeta", "g_hat",
]

SUMMARY_COLUMNS = [
    "scenario", "network", "N", "T", "G", "estimator", "replications", "failures",
    "rho_hat", "rmse_beta", "rmse_nu", "rmse_zeta",
    "rmse_beta_all", "rmse_nu_all", "rmse_zeta_all",
    "ae_cp_beta", "ae_cp_nu", "ae_cp_zeta",
    "coverage_beta", "coverage_nu", "coverage_zeta", "msr",
]

COEFFICIENT_COLUMNS = ["group", "coefficient", "estimate", "se", "ci_lo", "ci_hi", "p_value"]

FLOAT_FORMAT = "%.10g"
RULE = "━━━━━━━━━━━━━━━━━━━━━━━━━━━━"


def _num(x) -> Optional[float]:
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def format_metric_row(config, g: int, b: int, estimator: str, report, g_hat: Optional[int] = None) -> dict:
    """Eine Zeile der Metrik-CSV; b ist 1-basiert."""
    data = report.to_dict()
    row = {
        "scenario": config.scenario,
        "network": config.network,
        "N": config.N,
        "T": config.T,
        "G": g,
        "b": b,
        "estimator": estimator,
    }
    for col in METRIC_COLUMNS[7:-1]:
        row[col] = _num(data.get(col))
    row["g_hat"] = g_hat
    return row


def format_summary_row(config, g: int, estimator: str, rows: list, ae_cp: dict, coverage: dict,
                       msr: Optional[float], failures: int) -> dict:
    """Mittelwerte über Replikationen; AE_cp und Coverage kommen aggregiert herein."""
    out = {
        "scenario": config.scenario,
        "network": config.network,
        "N": config.N,
        "T": config.T,
        "G": g,
        "estimator": estimator,
        "replications": len(rows),
        "failures": failures,
    }
    for col in ("rho_hat", "rmse_beta", "rmse_nu", "rmse_zeta", "rmse_beta_all", "rmse_nu_all", "rmse_zeta_all"):
        values = [r[col] for r in rows if r.get(col) is not None]
        out[col] = float(np.mean(values)) if values else None
    for fam in ("beta", "nu", "zeta"):
        out[f"ae_cp_{fam}"] = _num(ae_cp.get(fam)) if ae_cp else None
        out[f"coverage_{fam}"] = _num(coverage.get(fam)) if coverage else None
    out["msr"] = msr
    return out


# ─── KONSOLE ──────────────────────────────────────────

def format_fit_summary(fit, title: str = "FIT") -> str:
    sizes = fit.membership.group_sizes()
    lines = [
        f"{title} G={fit.n_groups}",
        RULE,
        f"Loss Q:        {fit.loss:.6g}",
        f"Iterationen:   {fit.n_iterations} (konvergiert: {'ja' if fit.converged else 'nein'})",
        f"Restart:       {fit.init_index}",
        f"Gruppengrößen: {', '.join(str(int(s)) for s in sizes)}",
    ]
    if fit.refinement:
        switched = fit.refinement.get("switched", [])
        lines.append(f"Refinement:    {len(switched)} Wechsel (Δ^r={fit.refinement['delta_threshold']:.3g})")
    lines.append("")
    for g in range(fit.n_groups):
        beta = ", ".join(f"{v:+.4f}" for v in fit.params.beta[g])
        lines.append(f"  Gruppe {g + 1}: ν={fit.params.nu[g]:+.4f}  β=[{beta}]")
    return "\n".join(lines)


def format_coefficient_table(inference) -> str:
    lines = [
        f"KOEFFIZIENTEN ({inference.level:.0%}-Intervalle, σ̂²={inference.sigma2_hat:.4g})",
        RULE,
        f"{'Gruppe':>6}  {'Koeffizient':<14} {'Schätzung':>10} {'SE':>9} {'p-Wert':>9}",
    ]
    for row in inference.rows():
        se = f"{row['se']:.4f}" if row["se"] is not None else "-"
        pv = f"{row['p_value']:.4f}" if row["p_value"] is not None else "-"
        lines.append(
            f"{row['group']:>6}  {row['coefficient']:<14} {row['estimate']:>10.4f} {se:>9} {pv:>9}"
        )
    return "\n".join(lines)


def format_selection(selection) -> str:
    lines = [f"GIC-AUSWAHL (λ_NT={selection.lambda_nt:.4g})", RULE]
    for g, value in zip(selection.g_grid, selection.gic_values):
        mark = "  ← Ĝ" if g == selection.g_hat else ""
        lines.append(f"  G={g:<3} GIC={value:.6f}{mark}")
    return "\n".join(lines)


def format_diagnostics(diag) -> str:
    return "\n".join([
        "NETZWERK-DIAGNOSTIK",
        RULE,
        f"r_p:            {diag.r_p:.6g}",
        f"σ_max(W+Wᵀ):    {diag.sigma_max_sym:.6g}",
        f"Ø Out-Degree:   {diag.mean_degree:.3f}",
        f"Max Out-Degree: {diag.max_degree}",
        f"90%-Quantil:    {diag.degree_q90:.3f}",
        f"Status:         {diag.status}",
    ])
