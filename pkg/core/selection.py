"""
GnarLab — Group Selection
Wahl der Gruppenzahl über das Group Information Criterion:
    GIC(G) = log Q(G) + λ_NT · G
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from core.errors import SelectionError
from core.estimator import FitOptions, FitResult, fit
from core.initializer import init_pool, node_estimates
from core.model import Panel
from core.network import NetDiagnostics, Network, WeightMatrix, diagnostics
from core.refinement import DEFAULT_BUDGET, refine_and_refit

logger = logging.getLogger("gnarlab.select")

DEGREE_CAP = 10


@dataclass
class SelectionResult:
    g_grid: list
    gic_values: list
    fits: dict                      # G → verfeinerter FitResult
    g_hat: int
    lambda_nt: float
    losses: list = field(default_factory=list)

    def best_fit(self) -> FitResult:
        return self.fits[self.g_hat]

    def curve(self) -> list:
        """Zeilen (G, GIC, Q) für Plot und CSV."""
        return [{"G": g, "gic": v, "loss": q} for g, v, q in zip(self.g_grid, self.gic_values, self.losses)]


def default_lambda(n: int, t: int, net_diag: NetDiagnostics) -> float:
    """λ_NT = N^{0.1} T^{-0.5} / (2 min{10, n_0.9})."""
    if n < 1 or t < 1:
        raise ValueError(f"N und T müssen >= 1 sein (N={n}, T={t})")
    q90 = max(float(net_diag.degree_q90), 1e-12)
    return n ** 0.1 * t ** -0.5 / (2.0 * min(DEGREE_CAP, q90))


def gic(fit_result: FitResult, n_groups: int, lambda_nt: float) -> float:
    q = float(fit_result.loss)
    if not q > 0:
        raise SelectionError(
            f"GIC bei Loss {q:.3g} nicht definiert (log 0): exakter Fit ohne Rauschen, "
            f"positive Noise-Untergrenze verwenden"
        )
    return float(np.log(q) + lambda_nt * n_groups)


def fit_pipeline(panel: Panel, w: WeightMatrix, n_groups: int, restarts: int = 100,
                 options: Optional[FitOptions] = None, rng_seed: int = 0,
                 budget: int = DEFAULT_BUDGET, estimates: Optional[list] = None,
                 refine_labels: bool = True) -> tuple:
    """init_pool → fit → refine → refit. Gibt (verfeinerter Fit, Fit vor Refinement) zurück."""
    options = options or FitOptions()
    pool = init_pool(panel, w, n_groups, restarts=restarts, rng_seed=rng_seed, estimates=estimates)
    raw = fit(panel, w, n_groups, pool, options, seed=rng_seed)
    if not refine_labels:
        return raw, raw
    refined, _ = refine_and_refit(raw, panel, w, budget=budget, rng_seed=rng_seed, threads=options.threads)
    return refined, raw


def select_g(panel: Panel, w: WeightMatrix, g_grid: Sequence[int], lambda_nt: Optional[float] = None,
             options: Optional[FitOptions] = None, restarts: int = 100, rng_seed: int = 0,
             budget: int = DEFAULT_BUDGET, net_diag: Optional[NetDiagnostics] = None,
             grid_threads: int = 1) -> SelectionResult:
    """
    Voller Fit pro Kandidat G; Ĝ = argmin GIC, Gleichstand → kleineres G.
    Der GIC nutzt den Loss vor dem Refinement, die zurückgegebenen Fits sind verfeinert.
    """
    grid = sorted({int(g) for g in g_grid})
    if not grid:
        raise SelectionError("G-Grid ist leer")
    if grid[0] < 1:
        raise SelectionError(f"G muss >= 1 sein (Grid {grid})")

    if lambda_nt is None:
        if net_diag is None:
            net_diag = diagnostics(Network((w.weights > 0).astype(np.int8)), w)
        lambda_nt = default_lambda(panel.N, panel.T, net_diag)

    estimates = node_estimates(panel, w)

    def run(g):
        # Seed pro G, damit das Ergebnis nicht von der Grid-Reihenfolge abhängt
        seed = int(np.random.default_rng([rng_seed, g]).integers(0, 2 ** 32))
        return fit_pipeline(panel, w, g, restarts, options, seed, budget, estimates)

    if grid_threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=grid_threads) as pool:
            pairs = list(pool.map(run, grid))
    else:
        pairs = [run(g) for g in grid]

    fits, values, losses = {}, [], []
    for g, (refined, raw) in zip(grid, pairs):
        fits[g] = refined
        values.append(gic(raw, g, lambda_nt))
        losses.append(float(raw.loss))

    best = int(np.argmin(values))
    g_hat = grid[best]
    logger.info(f"GIC-Auswahl: Ĝ={g_hat} aus {grid} (λ_NT={lambda_nt:.4g})")
    return SelectionResult(g_grid=grid, gic_values=values, fits=fits, g_hat=g_hat,
                           lambda_nt=float(lambda_nt), losses=losses)
