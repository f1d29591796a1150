"""
GnarLab — Initializer
Start-Memberships: Ridge-Regressionen pro Knoten auf zentrierten Daten,
danach drei k-Means-Varianten (Momentum, Fixed Effect, Netzwerkeffekt).
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.model import Membership, Panel
from core.network import WeightMatrix

logger = logging.getLogger("gnarlab.init")

KMEANS_MAX_ITER = 300
RIDGE_SCALE = 0.01
RIDGE_FLOOR = 1e-6


# ─── RIDGE PRO KNOTEN ─────────────────────────────────

@dataclass
class NodeEstimate:
    b: np.ndarray          # b̂_ij für j ∈ 𝒩_i
    v: float               # Momentum
    f: float               # Fixed Effect ẑᵀζ
    neighbors: np.ndarray
    lam: float


def ridge_lambda(x: np.ndarray) -> float:
    """λ = 0.01 · Σ_t ‖x_it‖² / (n_i + 1) + 1e-6, x hat Form T×(n_i+1)."""
    return RIDGE_SCALE * float((x ** 2).sum()) / x.shape[1] + RIDGE_FLOOR


def node_ridge(panel: Panel, w: WeightMatrix, i: int) -> NodeEstimate:
    if panel.T < 2:
        raise ValueError("Ridge-Initialisierung braucht T >= 2")
    cur, lag = panel.current, panel.lagged
    mean_cur = cur.mean(axis=1)
    mean_lag = lag.mean(axis=1)
    neighbors = w.followees(i)
    wi = w.weights[i, neighbors]

    centered_lag = lag[neighbors] - mean_lag[neighbors][:, None]          # n_i×T
    x = np.column_stack([(wi[:, None] * centered_lag).T, lag[i] - mean_lag[i]])
    y = cur[i] - mean_cur[i]

    lam = ridge_lambda(x)
    coef = np.linalg.solve(x.T @ x + lam * np.eye(x.shape[1]), x.T @ y)
    b, v = coef[:-1], float(coef[-1])
    f = float(mean_cur[i] - (b * wi * mean_lag[neighbors]).sum() - v * mean_lag[i])
    return NodeEstimate(b=b, v=v, f=f, neighbors=neighbors, lam=lam)


def node_estimates(panel: Panel, w: WeightMatrix) -> list:
    return [node_ridge(panel, w, i) for i in range(panel.N)]


# ─── K-MEANS ──────────────────────────────────────────

def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return pts.reshape(-1, 1) if pts.ndim == 1 else pts


def kmeans(points, k: int, rng_seed: int, max_iter: int = KMEANS_MAX_ITER) -> np.ndarray:
    """
    Lloyd mit zufälligen Datenpunkten als Startzentren. Leere Cluster werden mit dem Punkt
    neu besetzt, der am weitesten von seinem Zentrum entfernt liegt.
    """
    pts = _as_points(points)
    m = pts.shape[0]
    if k < 1 or m < k:
        raise ValueError(f"k-Means braucht M >= k >= 1 (M={m}, k={k})")
    rng = np.random.default_rng(rng_seed)
    centers = pts[rng.choice(m, size=k, replace=False)].copy()
    labels = np.full(m, -1)

    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        own = d2[np.arange(m), new_labels]
        counts = np.bincount(new_labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            # nur aus Clustern mit mehr als einem Punkt stehlen
            candidates = np.where(counts[new_labels] > 1, own, -1.0)
            far = int(candidates.argmax())
            counts[new_labels[far]] -= 1
            new_labels[far] = c
            counts[c] = 1
            own[far] = 0.0
        new_centers = np.vstack([pts[new_labels == c].mean(axis=0) for c in range(k)])
        if np.array_equal(new_labels, labels) and np.array_equal(new_centers, centers):
            break
        labels, centers = new_labels, new_centers
    return labels


# ─── POOL ─────────────────────────────────────────────

def network_effect_features(estimates: list, n_groups: int, rng_seed: int) -> np.ndarray:
    """
    Pooled b̂_ij in G² Cluster, pro Knoten Mittelwert je Cluster (0 wenn leer),
    davor v̂_i. Ergebnis N×(1+G²).
    """
    pooled = np.concatenate([e.b for e in estimates])
    owner = np.concatenate([np.full(e.b.size, i) for i, e in enumerate(estimates)])
    k = n_groups ** 2
    if pooled.size < k:
        logger.warning(f"Nur {pooled.size} Netzwerkeffekte für k={k}: reduziere k")
        k = max(1, pooled.size)
    codes = kmeans(pooled, k, rng_seed)

    n = len(estimates)
    sums = np.zeros((n, n_groups ** 2))
    counts = np.zeros((n, n_groups ** 2))
    np.add.at(sums, (owner, codes), pooled)
    np.add.at(counts, (owner, codes), 1.0)
    b_tilde = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    v = np.array([e.v for e in estimates])
    return np.column_stack([v, b_tilde])


def init_pool(panel: Panel, w: WeightMatrix, n_groups: int, restarts: int = 100,
              rng_seed: int = 0, estimates: Optional[list] = None) -> list:
    """
    Pro Restart drei Kandidaten (Momentum, Fixed Effect, Netzwerkeffekt).
    Identische Partitionen werden entfernt (Reihenfolge bleibt erhalten).
    """
    if restarts < 1:
        raise ValueError("restarts muss >= 1 sein")
    estimates = estimates if estimates is not None else node_estimates(panel, w)
    v = np.array([e.v for e in estimates])
    f = np.array([e.f for e in estimates])

    seen = set()
    pool = []
    for r in range(restarts):
        rng = np.random.default_rng([rng_seed, r])
        s_v, s_f, s_b, s_net = (int(s) for s in rng.integers(0, 2 ** 32, size=4))
        candidates = [
            kmeans(v, n_groups, s_v),
            kmeans(f, n_groups, s_f),
            kmeans(network_effect_features(estimates, n_groups, s_b), n_groups, s_net),
        ]
        for labels in candidates:
            mem = Membership(labels, n_groups).canonical()
            key = mem.labels.tobytes()
            if key not in seen:
                seen.add(key)
                pool.append(mem)

    logger.info(f"Init-Pool G={n_groups}: {len(pool)} verschiedene Startwerte aus {3 * restarts} Kandidaten")
    return pool
