"""
GnarLab — GNAR Model
Parametrisierung, Stationaritätsprüfung, Übergangsmatrix B und Vorwärtssimulation.

Gruppenlabels sind intern 0-basiert (0..G-1); Dateien und Tabellen zeigen 1..G.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from core.errors import NonStationaryError
from core.network import WeightMatrix

logger = logging.getLogger("gnarlab.model")

DEFAULT_BURN_IN = 200
NOISE_KINDS = ("gaussian", "uniform")


# ─── TYPES ─────────────────────────────────────────────

@dataclass
class GnarParams:
    beta: np.ndarray   # G×G, beta[g, g'] = Effekt eines Followees aus g' auf Follower aus g
    nu: np.ndarray     # G
    zeta: np.ndarray   # G×p

    def __post_init__(self):
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        zeta = np.asarray(self.zeta, dtype=float)
        if zeta.size == 0:
            zeta = np.zeros((self.nu.size, 0))
        elif zeta.ndim == 1:
            zeta = zeta.reshape(self.nu.size, -1)
        self.zeta = zeta
        g = self.nu.size
        if self.beta.shape != (g, g) or self.zeta.shape[0] != g:
            raise ValueError(
                f"Inkonsistente Dimensionen: beta {self.beta.shape}, nu {self.nu.shape}, zeta {self.zeta.shape}"
            )
        if not (np.isfinite(self.beta).all() and np.isfinite(self.nu).all() and np.isfinite(self.zeta).all()):
            raise ValueError("GnarParams enthalten nicht-endliche Werte")

    @property
    def n_groups(self) -> int:
        return self.nu.size

    @property
    def p(self) -> int:
        return self.zeta.shape[1]

    def xi(self, g: int) -> np.ndarray:
        """ξ_g = (β_gᵀ, ν_g, ζ_gᵀ)ᵀ."""
        return np.concatenate([self.beta[g], [self.nu[g]], self.zeta[g]])

    def xi_matrix(self) -> np.ndarray:
        """(G+p+1)×G, Spalte g ist ξ_g."""
        return np.column_stack([self.xi(g) for g in range(self.n_groups)])

    @classmethod
    def from_xi(cls, xis: Sequence[np.ndarray], p: int) -> "GnarParams":
        g = len(xis)
        xis = np.asarray(xis, dtype=float)
        return cls(beta=xis[:, :g], nu=xis[:, g], zeta=xis[:, g + 1: g + 1 + p].reshape(g, p))

    @classmethod
    def zeros(cls, g: int, p: int) -> "GnarParams":
        return cls(np.zeros((g, g)), np.zeros(g), np.zeros((g, p)))

    def permuted(self, perm: Sequence[int]) -> "GnarParams":
        """Neue Label-Reihenfolge: Gruppe k der Ausgabe ist Gruppe perm[k] der Eingabe."""
        perm = np.asarray(perm, dtype=int)
        return GnarParams(self.beta[np.ix_(perm, perm)], self.nu[perm], self.zeta[perm])

    def copy(self) -> "GnarParams":
        return GnarParams(self.beta.copy(), self.nu.copy(), self.zeta.copy())

    def to_dict(self) -> dict:
        return {
            "G": self.n_groups,
            "p": self.p,
            "beta": self.beta.ravel().tolist(),
            "nu": self.nu.tolist(),
            "zeta": self.zeta.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GnarParams":
        g, p = int(data["G"]), int(data["p"])
        return cls(
            beta=np.asarray(data["beta"], dtype=float).reshape(g, g),
            nu=np.asarray(data["nu"], dtype=float),
            zeta=np.asarray(data["zeta"], dtype=float).reshape(g, p),
        )


@dataclass
class Membership:
    labels: np.ndarray   # 0-basiert
    n_groups: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int).ravel()
        if self.n_groups < 1:
            raise ValueError("Membership braucht G >= 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_groups):
            raise ValueError(f"Labels außerhalb von [1, {self.n_groups}]")

    @property
    def n_nodes(self) -> int:
        return self.labels.size

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_groups)

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.labels == g)

    def canonical(self) -> "Membership":
        """Labels nach erstem Auftreten umnummerieren (Partition bleibt gleich)."""
        mapping = {}
        out = np.empty_like(self.labels)
        for idx, lab in enumerate(self.labels):
            if lab not in mapping:
                mapping[lab] = len(mapping)
            out[idx] = mapping[lab]
        return Membership(out, self.n_groups)

    def one_based(self) -> list:
        return (self.labels + 1).tolist()

    @classmethod
    def from_one_based(cls, labels: Sequence[int], n_groups: Optional[int] = None) -> "Membership":
        arr = np.asarray(labels, dtype=int) - 1
        return cls(arr, n_groups or int(arr.max()) + 1)

    def copy(self) -> "Membership":
        return Membership(self.labels.copy(), self.n_groups)


@dataclass
class Panel:
    Y: np.ndarray          # N×(T+1), Spalte t = Y_{·t}, t = 0..T
    Z: np.ndarray          # N×p
    z_names: list = field(default_factory=list)

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z.reshape(-1, 1)
        if Z.size == 0:
            Z = np.zeros((self.Y.shape[0], 0))
        self.Z = Z
        if self.Y.ndim != 2 or self.Y.shape[1] < 2:
            raise ValueError("Panel braucht N×(T+1) mit T >= 1")
        if self.Z.shape[0] != self.Y.shape[0]:
            raise ValueError(f"Kovariaten haben {self.Z.shape[0]} Zeilen, Panel hat {self.Y.shape[0]} Knoten")
        if not (np.isfinite(self.Y).all() and np.isfinite(self.Z).all()):
            raise ValueError("Panel enthält fehlende oder nicht-endliche Werte")
        if not self.z_names:
            self.z_names = [f"z{k + 1}" for k in range(self.Z.shape[1])]

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    @property
    def T(self) -> int:
        return self.Y.shape[1] - 1

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def current(self) -> np.ndarray:
        """Y_it für t = 1..T."""
        return self.Y[:, 1:]

    @property
    def lagged(self) -> np.ndarray:
        """Y_i(t-1) für t = 1..T."""
        return self.Y[:, :-1]


@dataclass
class NoiseSpec:
    sigma: float = 1.0
    kind: str = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma muss > 0 sein (ist {self.sigma})")
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"Unbekannte Noise-Verteilung: {self.kind}")

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "uniform":
            half = self.sigma * np.sqrt(3.0)
            return rng.uniform(-half, half, size=shape)
        return self.sigma * rng.standard_normal(shape)


# ─── OPERATIONEN ──────────────────────────────────────

def transition_matrix(params: GnarParams, mem: Membership, w: WeightMatrix) -> np.ndarray:
    """b_ij = w_ij β_{g_i g_j} für i ≠ j, b_ii = ν_{g_i}."""
    g = mem.labels
    if w.n_nodes != g.size:
        raise ValueError(f"W hat {w.n_nodes} Knoten, Membership {g.size}")
    b = w.weights * params.beta[np.ix_(g, g)]
    np.fill_diagonal(b, params.nu[g])
    return b


def check_stationarity(params: GnarParams) -> tuple:
    """(stationär?, margin) mit margin = 1 - (max|β| + max|ν|)."""
    total = float(np.abs(params.beta).max() + np.abs(params.nu).max())
    margin = 1.0 - total
    return margin > 0, margin


def fixed_effects(params: GnarParams, mem: Membership, Z: np.ndarray) -> np.ndarray:
    """μ_z mit μ_z,i = z_iᵀ ζ_{g_i}."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape[1] == 0:
        return np.zeros(mem.n_nodes)
    return np.einsum("ik,ik->i", Z, params.zeta[mem.labels])


def stationary_mean(params: GnarParams, mem: Membership, w: WeightMatrix, Z: np.ndarray) -> np.ndarray:
    """(I - B)^{-1} μ_z."""
    b = transition_matrix(params, mem, w)
    return np.linalg.solve(np.eye(b.shape[0]) - b, fixed_effects(params, mem, Z))


def simulate(params: GnarParams, mem: Membership, w: WeightMatrix, Z: np.ndarray, T: int,
             noise: NoiseSpec, rng_seed: int, burn_in: int = DEFAULT_BURN_IN,
             allow_nonstationary: bool = False, z_names: Optional[list] = None) -> Panel:
    """
    y_t = B y_{t-1} + μ_z + ε_t, Start bei y = 0 vor dem Burn-in.
    Liefert ein Panel mit T+1 Spalten (y_0 .. y_T).
    """
    if T < 1:
        raise ValueError("T muss >= 1 sein")
    if burn_in < 0:
        raise ValueError("burn_in muss >= 0 sein")
    ok, margin = check_stationarity(params)
    if not ok:
        if not allow_nonstationary:
            raise NonStationaryError(
                f"max|β| + max|ν| = {1 - margin:.4f} >= 1: Override nötig für Simulation"
            )
        logger.warning(f"Simuliere nicht-stationäre Parameter (margin={margin:.4f})")

    rng = np.random.default_rng(rng_seed)
    b = transition_matrix(params, mem, w)
    mu = fixed_effects(params, mem, Z)
    n = mem.n_nodes
    eps = noise.draw(rng, (burn_in + T, n))

    y = np.zeros(n)
    for s in range(burn_in):
        y = b @ y + mu + eps[s]
    out = np.empty((n, T + 1))
    out[:, 0] = y
    for t in range(1, T + 1):
        y = b @ y + mu + eps[burn_in + t - 1]
        out[:, t] = y
    return Panel(out, np.asarray(Z, dtype=float), list(z_names or []))


def simulate_noiseless(params: GnarParams, mem: Membership, w: WeightMatrix, Z: np.ndarray, T: int,
                       y0: np.ndarray, z_names: Optional[list] = None) -> Panel:
    """Deterministische Rekursion ab y_0 ohne Innovationen; der Übergang von y_0 ist die einzige Anregung."""
    b = transition_matrix(params, mem, w)
    mu = fixed_effects(params, mem, Z)
    out = np.empty((mem.n_nodes, T + 1))
    out[:, 0] = np.asarray(y0, dtype=float)
    for t in range(1, T + 1):
        out[:, t] = b @ out[:, t - 1] + mu
    return Panel(out, np.asarray(Z, dtype=float), list(z_names or []))
