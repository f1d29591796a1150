"""
GnarLab — Inference
Plug-in-Kovarianz σ̂²(X_gᵀX_g)^{-1}, Standardfehler, Konfidenzintervalle und
zweiseitige Gauß-p-Werte für ξ̂_g bei den (verfeinerten) Memberships.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, stats

from core.errors import InferenceError
from core.estimator import FitResult, loss
from core.model import Panel
from core.network import WeightMatrix

logger = logging.getLogger("gnarlab.infer")

DEFAULT_LEVEL = 0.95
SINGULAR_RTOL = 1e-10


@dataclass
class GroupInference:
    group: int                    # 0-basiert
    names: list
    xi_hat: np.ndarray
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    p_value: np.ndarray
    n_nodes: int
    singular: bool = False


@dataclass
class InferenceResult:
    groups: list
    sigma2_hat: float
    level: float
    dof: int
    extra: dict = field(default_factory=dict)

    def rows(self) -> list:
        """Koeffiziententabelle: eine Zeile pro (Gruppe, Koeffizient), Gruppen 1-basiert."""
        out = []
        for gi in self.groups:
            for k, name in enumerate(gi.names):
                out.append({
                    "group": gi.group + 1,
                    "coefficient": name,
                    "estimate": float(gi.xi_hat[k]),
                    "se": _opt(gi.se[k]),
                    "ci_lo": _opt(gi.ci_lo[k]),
                    "ci_hi": _opt(gi.ci_hi[k]),
                    "p_value": _opt(gi.p_value[k]),
                })
        return out


def _opt(x: float) -> Optional[float]:
    return None if not np.isfinite(x) else float(x)


def coefficient_names(g: int, n_groups: int, z_names: list) -> list:
    """beta_g_g' (1-basiert), nu, zeta_k bzw. intercept für eine Konstanten-Spalte."""
    names = [f"beta_{g + 1}_{h + 1}" for h in range(n_groups)]
    names.append("nu")
    for k, zn in enumerate(z_names):
        names.append("intercept" if zn == "intercept" else f"zeta_{k + 1}")
    return names


# ─── VARIANZ + KOVARIANZ ──────────────────────────────

def _dof(fit: FitResult, n: int, t: int) -> int:
    g_count, p = fit.n_groups, fit.params.p
    dof = n * t - g_count * (g_count + p + 1)
    if dof <= 0:
        raise InferenceError(f"Nicht-positive Freiheitsgrade: NT={n * t}, Parameter={n * t - dof}")
    return dof


def residual_variance(fit: FitResult, panel: Optional[Panel] = None,
                      w: Optional[WeightMatrix] = None) -> float:
    """
    σ̂² = RSS / (NT − G(G+p+1)). Mit Panel und W wird RSS direkt berechnet,
    sonst aus den gespeicherten Gram-Statistiken.
    """
    if panel is not None and w is not None:
        q, _ = loss(fit.params, fit.membership, panel, w)
        rss = q * panel.N * panel.T
        dof = _dof(fit, panel.N, panel.T)
        return float(rss / dof)

    rss = 0.0
    rows = 0
    n_nodes = 0
    for g, gram in enumerate(fit.grams):
        if gram is None:
            continue
        xi = fit.params.xi(g)
        rss += gram.yty - 2.0 * float(xi @ gram.xty) + float(xi @ gram.xtx @ xi)
        rows += gram.n_rows
        n_nodes += gram.n_nodes
    if n_nodes == 0:
        raise InferenceError("Keine Gram-Statistiken vorhanden")
    t = rows // n_nodes
    return float(max(rss, 0.0) / _dof(fit, n_nodes, t))


def covariance(fit: FitResult, g: int, sigma2: Optional[float] = None) -> tuple:
    """(Kovarianzmatrix von ξ̂_g, singulär?). Pseudo-Inverse bei Rangdefizit."""
    if g < 0 or g >= fit.n_groups:
        raise InferenceError(f"Gruppe {g + 1} existiert nicht (G={fit.n_groups})")
    gram = fit.grams[g] if g < len(fit.grams) else None
    if gram is None:
        raise InferenceError(f"Gruppe {g + 1} ist leer: keine Kovarianz")
    if sigma2 is None:
        sigma2 = residual_variance(fit)
    xtx = gram.xtx
    vals = np.linalg.eigvalsh(xtx)
    rank = int((vals > SINGULAR_RTOL * max(float(vals.max()), 1e-300)).sum())
    singular = rank < xtx.shape[0]
    if singular:
        logger.warning(f"Gram-Matrix von Gruppe {g + 1} singulär (Rang {rank}/{xtx.shape[0]})")
    inv = linalg.pinvh(xtx, rtol=SINGULAR_RTOL)
    cov = sigma2 * inv
    return 0.5 * (cov + cov.T), singular


def confidence_intervals(fit: FitResult, level: float = DEFAULT_LEVEL, panel: Optional[Panel] = None,
                         w: Optional[WeightMatrix] = None, z_names: Optional[list] = None) -> InferenceResult:
    if not 0.0 < level < 1.0:
        raise ValueError(f"level muss in (0, 1) liegen (ist {level})")
    sigma2 = residual_variance(fit, panel, w)
    n = panel.N if panel is not None else sum(gr.n_nodes for gr in fit.grams if gr is not None)
    t = panel.T if panel is not None else _rows_per_node(fit)
    dof = _dof(fit, n, t)
    if z_names is None:
        z_names = panel.z_names if panel is not None else [f"z{k + 1}" for k in range(fit.params.p)]
    crit = float(stats.norm.ppf(0.5 * (1.0 + level)))

    sizes = fit.membership.group_sizes()
    groups = []
    for g in range(fit.n_groups):
        names = coefficient_names(g, fit.n_groups, z_names)
        xi = fit.params.xi(g)
        k = xi.size
        gram = fit.grams[g] if g < len(fit.grams) else None
        if gram is None:
            nan = np.full(k, np.nan)
            groups.append(GroupInference(g, names, xi, nan, nan.copy(), nan.copy(), nan.copy(),
                                         int(sizes[g]), singular=True))
            continue
        cov, singular = covariance(fit, g, sigma2)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        if singular:
            # nicht identifizierte Richtungen: keine Intervalle
            null = _unidentified(gram.xtx)
            se = np.where(null, np.nan, se)
        lo, hi = xi - crit * se, xi + crit * se
        with np.errstate(divide="ignore", invalid="ignore"):
            zstat = np.where(se > 0, np.abs(xi) / se, np.where(xi == 0, 0.0, np.inf))
        pval = np.where(np.isnan(se), np.nan, 2.0 * stats.norm.sf(zstat))
        groups.append(GroupInference(g, names, xi, se, lo, hi, pval, int(sizes[g]), singular))

    return InferenceResult(groups=groups, sigma2_hat=sigma2, level=level, dof=dof,
                           extra={"critical_value": crit})


def _rows_per_node(fit: FitResult) -> int:
    grams = [g for g in fit.grams if g is not None]
    return sum(g.n_rows for g in grams) // max(1, sum(g.n_nodes for g in grams))


def _unidentified(xtx: np.ndarray, rtol: float = SINGULAR_RTOL) -> np.ndarray:
    """Koeffizienten mit Gewicht im Nullraum von XᵀX."""
    vals, vecs = np.linalg.eigh(xtx)
    tol = rtol * max(float(vals.max()), 1e-300)
    null = vecs[:, vals <= tol]
    if null.size == 0:
        return np.zeros(xtx.shape[0], dtype=bool)
    return (np.abs(null) > 1e-8).any(axis=1)
