"""
GnarLab — Network
Netzwerk-Repräsentation, Zufallsgeneratoren (SBM, Power-Law) und Strukturdiagnostik.

Konvention: a_ij = 1 heißt "Knoten i folgt Knoten j". Der Out-Degree n_i zählt,
wie vielen Knoten i folgt; die Zeilen-Normierung w_ij = a_ij / n_i hängt nur davon ab.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.errors import NetworkError

logger = logging.getLogger("gnarlab.network")

POWERLAW_EXPONENT = 2.5
POWERLAW_SCALE = 4
ROW_SUM_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


# ─── TYPES ─────────────────────────────────────────────

@dataclass(frozen=True)
class Network:
    """Binäre Adjazenz ohne Diagonale. Nach dem Erzeugen nicht mehr veränderbar."""
    adjacency: np.ndarray
    blocks: Optional[np.ndarray] = None  # SBM-Communities (0-basiert), sonst None

    def __post_init__(self):
        adj = np.asarray(self.adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise NetworkError(f"Adjazenz muss quadratisch sein, ist {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise NetworkError("Adjazenz darf nur 0/1 enthalten")
        if np.any(np.diag(adj) != 0):
            i = int(np.flatnonzero(np.diag(adj))[0])
            raise NetworkError(f"Self-Loop an Knoten {i + 1}")
        object.__setattr__(self, "adjacency", _frozen(adj.astype(np.int8)))
        if self.blocks is not None:
            object.__setattr__(self, "blocks", _frozen(np.asarray(self.blocks, dtype=int)))

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def out_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())


@dataclass(frozen=True)
class WeightMatrix:
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(np.asarray(self.weights, dtype=float)))

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    def followees(self, i: int) -> np.ndarray:
        """𝒩_i: alle Knoten, denen i folgt."""
        return np.flatnonzero(self.weights[i])

    def followers(self, i: int) -> np.ndarray:
        """Alle Knoten, die i folgen."""
        return np.flatnonzero(self.weights[:, i])


@dataclass
class NetDiagnostics:
    stationary_dist: np.ndarray
    r_p: float
    sigma_max_sym: float
    mean_degree: float
    max_degree: int
    degree_q90: float
    converged: bool = True
    status: str = "ok"
    iterations: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "r_p": self.r_p,
            "sigma_max_sym": self.sigma_max_sym,
            "mean_degree": self.mean_degree,
            "max_degree": self.max_degree,
            "degree_q90": self.degree_q90,
            "converged": self.converged,
            "status": self.status,
            "iterations": dict(self.iterations),
            "stationary_dist": [float(x) for x in self.stationary_dist],
        }


# ─── NORMIERUNG ────────────────────────────────────────

def row_normalize(net: Network) -> WeightMatrix:
    """w_ij = a_ij / n_i. Knoten ohne Followee sind ein Fehler (vorher reparieren)."""
    deg = net.out_degree
    isolated = np.flatnonzero(deg == 0)
    if isolated.size:
        raise NetworkError(
            f"Knoten {int(isolated[0]) + 1} hat Out-Degree 0 "
            f"({isolated.size} Knoten betroffen): Daten vorher reparieren"
        )
    return WeightMatrix(net.adjacency / deg[:, None].astype(float))


def _repair_out_degree(adj: np.ndarray, rng: np.random.Generator) -> int:
    """Jeder Knoten ohne Followee bekommt eine Kante zu einem zufälligen anderen Knoten."""
    n = adj.shape[0]
    repaired = 0
    for i in np.flatnonzero(adj.sum(axis=1) == 0):
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        adj[i, j] = 1
        repaired += 1
    return repaired


# ─── GENERATOREN ──────────────────────────────────────

def community_sizes(n: int, c: int) -> np.ndarray:
    """floor(N/C) pro Community, der Rest geht an die ersten Communities."""
    sizes = np.full(c, n // c, dtype=int)
    sizes[: n % c] += 1
    return sizes


def sbm_probabilities(n: int) -> tuple:
    """(p_in, p_out) = (2 log N / N, log N / N), auf [0, 1] geclippt."""
    p_out = np.log(n) / n
    return float(np.clip(2 * p_out, 0.0, 1.0)), float(np.clip(p_out, 0.0, 1.0))


def gen_sbm(n: int, c: int, rng_seed: int) -> Network:
    """Stochastic Block Model mit C gleich großen Communities."""
    if c < 1 or n < c:
        raise NetworkError(f"SBM braucht N >= C >= 1 (N={n}, C={c})")
    if n < 2:
        raise NetworkError("SBM braucht mindestens 2 Knoten")
    rng = np.random.default_rng(rng_seed)
    blocks = np.repeat(np.arange(c), community_sizes(n, c))
    p_in, p_out = sbm_probabilities(n)

    same = blocks[:, None] == blocks[None, :]
    prob = np.where(same, p_in, p_out)
    adj = (rng.random((n, n)) < prob).astype(np.int8)
    np.fill_diagonal(adj, 0)
    repaired = _repair_out_degree(adj, rng)
    if repaired:
        logger.debug(f"SBM: {repaired} Knoten ohne Followee repariert")
    return Network(adj, blocks=blocks)


def powerlaw_pmf(k_cap: int, exponent: float = POWERLAW_EXPONENT) -> np.ndarray:
    """P(d = k) ∝ k^(-exponent) für k = 1..k_cap."""
    k = np.arange(1, k_cap + 1, dtype=float)
    weights = k ** (-exponent)
    return weights / weights.sum()


def gen_powerlaw(n: int, rng_seed: int) -> Network:
    """
    Power-Law-Netz über In-Degrees: d̃_i ~ k^-2.5 auf 1..N, d_i = min(4·d̃_i, N-1),
    danach d_i zufällige Follower für Knoten i.
    """
    if n < 5:
        raise NetworkError(f"Power-Law-Generator braucht N >= 5 (N={n})")
    rng = np.random.default_rng(rng_seed)
    pmf = powerlaw_pmf(n)
    d_tilde = rng.choice(np.arange(1, n + 1), size=n, p=pmf)
    in_deg = np.minimum(POWERLAW_SCALE * d_tilde, n - 1)

    adj = np.zeros((n, n), dtype=np.int8)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        followers = rng.choice(others, size=int(in_deg[i]), replace=False)
        adj[followers, i] = 1
    _repair_out_degree(adj, rng)
    return Network(adj)


# ─── DIAGNOSTIK ───────────────────────────────────────

def _stationary_distribution(w: np.ndarray, tol: float, max_iter: int) -> tuple:
    n = w.shape[0]
    p = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        p_new = w.T @ p
        p_new /= p_new.sum()
        if np.abs(p_new - p).sum() < tol:
            return p_new, True, it
        p = p_new
    return p, False, max_iter


def _spectral_norm_sym(s: np.ndarray, tol: float, max_iter: int) -> tuple:
    # Power-Iteration auf S², damit ±λ-Paare nicht oszillieren
    n = s.shape[0]
    v = np.ones(n) + np.arange(n) / (10.0 * n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for it in range(1, max_iter + 1):
        sv = s @ v
        norm_sv = np.linalg.norm(sv)
        if norm_sv == 0.0:
            return 0.0, True, it
        u = s @ sv
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return float(norm_sv), True, it
        sigma_new = float(np.sqrt(norm_u))
        v = u / norm_u
        if abs(sigma_new - sigma) <= tol * max(1.0, sigma_new):
            return sigma_new, True, it
        sigma = sigma_new
    return sigma, False, max_iter


def diagnostics(net: Network, w: WeightMatrix, tol: float = 1e-10,
                max_iter: int = 10000) -> NetDiagnostics:
    """Stationäre Verteilung p_N, r_p, σ_max(W+Wᵀ) und Degree-Statistiken."""
    weights = w.weights
    if not np.allclose(weights.sum(axis=1), 1.0, atol=1e-10):
        raise NetworkError("Diagnostik braucht eine zeilenstochastische W")

    p, p_ok, p_it = _stationary_distribution(weights, tol, max_iter)
    sigma, s_ok, s_it = _spectral_norm_sym(weights + weights.T, tol, max_iter)
    deg = net.out_degree

    converged = p_ok and s_ok
    status = "ok"
    if not converged:
        status = "not_converged"
        logger.warning(
            f"Power-Iteration nicht konvergiert (p_N: {p_ok}, σ_max: {s_ok}): "
            f"Kette evtl. reduzibel oder periodisch, letzte Iteration wird gemeldet"
        )

    return NetDiagnostics(
        stationary_dist=p,
        r_p=float(p @ p),
        sigma_max_sym=float(sigma),
        mean_degree=float(deg.mean()),
        max_degree=int(deg.max()),
        degree_q90=float(np.quantile(deg, 0.9)),
        converged=converged,
        status=status,
        iterations={"stationary": p_it, "sigma_max": s_it},
    )
