"""
GnarLab — Metrics
Majority-Mapping, Fehlerraten der Memberships, RMSE-Familien, Coverage-Fehler und
Modellwahl-Rate. Alles reine Funktionen auf Arrays; Labels intern 0-basiert.
"""
import itertools
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from core.inference import InferenceResult
from core.model import GnarParams, Membership, transition_matrix
from core.network import WeightMatrix

logger = logging.getLogger("gnarlab.eval")

MAX_PERM_GROUPS = 8
NOMINAL_LEVEL = 0.95
FAMILIES = ("beta", "nu", "zeta")


@dataclass
class MetricsReport:
    rho_hat: float
    rmse_beta_all: float
    rmse_nu_all: float
    rmse_zeta_all: float
    rmse_beta: Optional[float] = None
    rmse_nu: Optional[float] = None
    rmse_zeta: Optional[float] = None
    ae_cp_beta: Optional[float] = None
    ae_cp_nu: Optional[float] = None
    ae_cp_zeta: Optional[float] = None
    rho_hat_perm: Optional[float] = None
    g_hat: Optional[int] = None
    permutation: Optional[list] = None
    coverage: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("coverage")
        return out


def _check_same_nodes(est: Membership, truth: Membership):
    if est.n_nodes != truth.n_nodes:
        raise ValueError(f"Memberships auf verschiedenen Knoten ({est.n_nodes} vs {truth.n_nodes})")


# ─── MEMBERSHIPS ──────────────────────────────────────

def confusion(est: Membership, truth: Membership) -> np.ndarray:
    """G×G0-Tabelle #{i: ĝ_i = g, g_i^0 = g'}."""
    _check_same_nodes(est, truth)
    table = np.zeros((est.n_groups, truth.n_groups), dtype=int)
    np.add.at(table, (est.labels, truth.labels), 1)
    return table


def majority_map(est: Membership, truth: Membership) -> np.ndarray:
    """χ(g) = argmax_g' der Konfusionszeile; leere Cluster und Gleichstände → kleinstes g'."""
    return confusion(est, truth).argmax(axis=1)


def membership_error(est: Membership, truth: Membership) -> float:
    chi = majority_map(est, truth)
    return float(np.mean(truth.labels != chi[est.labels]))


def _permutations(g: int):
    if g > MAX_PERM_GROUPS:
        raise ValueError(f"Permutationssuche nur bis G={MAX_PERM_GROUPS} (G={g})")
    return itertools.permutations(range(g))


def membership_error_perm(est: Membership, truth: Membership) -> float:
    """ρ̂*: kleinste Fehlerrate über alle Label-Permutationen (G = G0)."""
    _check_same_nodes(est, truth)
    if est.n_groups != truth.n_groups:
        raise ValueError(f"ρ̂* braucht G = G0 (G={est.n_groups}, G0={truth.n_groups})")
    table = confusion(est, truth)
    best = max(sum(table[perm[k], k] for k in range(truth.n_groups)) for perm in _permutations(est.n_groups))
    return float(1.0 - best / est.n_nodes)


# ─── RMSE ─────────────────────────────────────────────

def rmse_all(est_params: GnarParams, est_mem: Membership, true_params: GnarParams,
             true_mem: Membership, w: WeightMatrix) -> dict:
    """Knotengemittelte Fehler über die zugeordneten Gruppenparameter und Zeilen von B."""
    _check_same_nodes(est_mem, true_mem)
    if est_params.p != true_params.p:
        raise ValueError("Geschätzte und wahre Parameter haben verschiedenes p")
    gh, g0 = est_mem.labels, true_mem.labels
    zeta = np.linalg.norm(est_params.zeta[gh] - true_params.zeta[g0], axis=1)
    nu = np.abs(est_params.nu[gh] - true_params.nu[g0])
    b_hat = transition_matrix(est_params, est_mem, w)
    b_true = transition_matrix(true_params, true_mem, w)
    beta = np.linalg.norm(b_hat - b_true, axis=1)
    return {
        "rmse_beta_all": float(beta.mean()),
        "rmse_nu_all": float(nu.mean()),
        "rmse_zeta_all": float(zeta.mean()),
    }


def best_permutation(est_params: GnarParams, true_params: GnarParams) -> tuple:
    """Permutation π mit minimalem ‖β̂_π − β⁰‖; Gleichstand → lexikografisch erste."""
    if est_params.n_groups != true_params.n_groups:
        raise ValueError(
            f"Permutations-RMSE braucht G = G0 (G={est_params.n_groups}, G0={true_params.n_groups})"
        )
    best, best_err = None, np.inf
    for perm in _permutations(est_params.n_groups):
        err = float(np.linalg.norm(est_params.beta[np.ix_(perm, perm)] - true_params.beta))
        if err < best_err:
            best, best_err = perm, err
    return tuple(best), best_err


def rmse_perm(est_params: GnarParams, true_params: GnarParams) -> dict:
    perm, err_beta = best_permutation(est_params, true_params)
    aligned = est_params.permuted(perm)
    return {
        "rmse_beta": err_beta,
        "rmse_nu": float(np.linalg.norm(aligned.nu - true_params.nu)),
        "rmse_zeta": float(np.linalg.norm(aligned.zeta - true_params.zeta)),
        "permutation": list(perm),
    }


# ─── COVERAGE ─────────────────────────────────────────

def coverage_indicators(inference: InferenceResult, true_params: GnarParams,
                        perm: Optional[Sequence[int]] = None) -> dict:
    """
    Pro Familie ein bool-Array: enthält das Intervall den wahren Wert?
    perm[k] ist die geschätzte Gruppe zur wahren Gruppe k. Fehlende Intervalle zählen als verfehlt.
    """
    g0 = true_params.n_groups
    perm = list(perm) if perm is not None else list(range(g0))
    by_group = {gi.group: gi for gi in inference.groups}

    def covers(gi, k, value):
        lo, hi = gi.ci_lo[k], gi.ci_hi[k]
        return bool(np.isfinite(lo) and np.isfinite(hi) and lo <= value <= hi)

    beta = np.zeros((g0, g0), dtype=bool)
    nu = np.zeros(g0, dtype=bool)
    zeta = np.zeros((g0, true_params.p), dtype=bool)
    for k in range(g0):
        gi = by_group[perm[k]]
        for m in range(g0):
            beta[k, m] = covers(gi, perm[m], true_params.beta[k, m])
        nu[k] = covers(gi, g0, true_params.nu[k])
        for q in range(true_params.p):
            zeta[k, q] = covers(gi, g0 + 1 + q, true_params.zeta[k, q])
    return {"beta": beta.ravel(), "nu": nu, "zeta": zeta.ravel()}


def coverage_error(indicators: Sequence[dict], level: float = NOMINAL_LEVEL) -> dict:
    """AE_cp pro Familie: Mittel über Komponenten von |Coverage-Rate − level|."""
    if not indicators:
        raise ValueError("coverage_error braucht mindestens eine Replikation")
    out = {}
    for fam in FAMILIES:
        stacked = np.vstack([np.asarray(ind[fam], dtype=float) for ind in indicators])
        if stacked.shape[1] == 0:
            out[fam] = None
            continue
        out[fam] = float(np.abs(stacked.mean(axis=0) - level).mean())
    return out


def coverage_rate(indicators: Sequence[dict]) -> dict:
    """Empirische Coverage pro Familie (gepoolt über Komponenten)."""
    out = {}
    for fam in FAMILIES:
        stacked = np.concatenate([np.asarray(ind[fam], dtype=float) for ind in indicators])
        out[fam] = float(stacked.mean()) if stacked.size else None
    return out


# ─── MODELLWAHL ───────────────────────────────────────

def msr(g_hats: Sequence[int], g: int) -> float:
    if len(g_hats) == 0:
        raise ValueError("msr braucht mindestens eine Replikation")
    return float(np.mean(np.asarray(g_hats) == g))


def msr_table(g_hats: Sequence[int], g_grid: Sequence[int]) -> dict:
    return {int(g): msr(g_hats, g) for g in g_grid}


# ─── ZUSAMMENFASSUNG ──────────────────────────────────

def evaluate(est_params: GnarParams, est_mem: Membership, true_params: GnarParams, true_mem: Membership,
             w: WeightMatrix, inference: Optional[InferenceResult] = None,
             g_hat: Optional[int] = None) -> MetricsReport:
    """Alle Metriken einer Replikation; Permutationsgrößen nur für G = G0."""
    report = MetricsReport(
        rho_hat=membership_error(est_mem, true_mem),
        g_hat=g_hat,
        **rmse_all(est_params, est_mem, true_params, true_mem, w),
    )
    if est_params.n_groups == true_params.n_groups and est_params.n_groups <= MAX_PERM_GROUPS:
        perm_rmse = rmse_perm(est_params, true_params)
        report.rmse_beta = perm_rmse["rmse_beta"]
        report.rmse_nu = perm_rmse["rmse_nu"]
        report.rmse_zeta = perm_rmse["rmse_zeta"]
        report.permutation = perm_rmse["permutation"]
        report.rho_hat_perm = membership_error_perm(est_mem, true_mem)
        if inference is not None:
            ind = coverage_indicators(inference, true_params, report.permutation)
            report.coverage = ind
            ae = coverage_error([ind], level=inference.level)
            report.ae_cp_beta, report.ae_cp_nu, report.ae_cp_zeta = ae["beta"], ae["nu"], ae["zeta"]
    return report
