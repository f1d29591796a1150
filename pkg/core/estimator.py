"""
GnarLab — Estimator
Quadratischer Loss, gruppenweise Design-Blöcke, geschlossene Lösung pro Gruppe
und der alternierende Algorithmus (Membership-Sweeps ↔ Gruppen-Solves).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from core.errors import EmptyGroupError, FitError
from core.model import GnarParams, Membership, Panel
from core.network import WeightMatrix

logger = logging.getLogger("gnarlab.estimate")

TIE_TOL = 1e-13


# ─── TYPES ─────────────────────────────────────────────

@dataclass
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 100
    max_sweeps: int = 100
    threads: int = 1


@dataclass
class GroupGram:
    """Suffiziente Statistiken eines Design-Blocks."""
    xtx: np.ndarray
    xty: np.ndarray
    yty: float
    n_rows: int
    n_nodes: int

    def to_dict(self) -> dict:
        return {
            "xtx": self.xtx.tolist(),
            "xty": self.xty.tolist(),
            "yty": float(self.yty),
            "n_rows": int(self.n_rows),
            "n_nodes": int(self.n_nodes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroupGram":
        return cls(
            xtx=np.asarray(data["xtx"], dtype=float),
            xty=np.asarray(data["xty"], dtype=float),
            yty=float(data["yty"]),
            n_rows=int(data["n_rows"]),
            n_nodes=int(data["n_nodes"]),
        )


@dataclass
class DesignBlocks:
    X: list
    Y: list
    nodes: list
    n_groups: int
    p: int

    @property
    def n_columns(self) -> int:
        return self.n_groups + self.p + 1

    def gram(self, g: int) -> Optional[GroupGram]:
        x, y = self.X[g], self.Y[g]
        if x.shape[0] == 0:
            return None
        return GroupGram(x.T @ x, x.T @ y, float(y @ y), x.shape[0], self.nodes[g].size)


@dataclass
class FitResult:
    params: GnarParams
    membership: Membership
    loss: float
    loss_trace: list
    grams: list                      # pro Gruppe GroupGram oder None (leer)
    converged: bool
    n_iterations: int
    init_index: int = 0
    node_losses: Optional[np.ndarray] = None
    seed: Optional[int] = None
    refinement: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    @property
    def n_groups(self) -> int:
        return self.params.n_groups

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "labels": self.membership.one_based(),
            "loss": float(self.loss),
            "loss_trace": [float(q) for q in self.loss_trace],
            "converged": bool(self.converged),
            "n_iterations": int(self.n_iterations),
            "init_index": int(self.init_index),
            "seed": self.seed,
            "grams": [g.to_dict() if g is not None else None for g in self.grams],
            "refinement": self.refinement,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        params = GnarParams.from_dict(data["params"])
        return cls(
            params=params,
            membership=Membership.from_one_based(data["labels"], params.n_groups),
            loss=float(data["loss"]),
            loss_trace=list(data.get("loss_trace", [])),
            grams=[GroupGram.from_dict(g) if g is not None else None for g in data.get("grams", [])],
            converged=bool(data.get("converged", False)),
            n_iterations=int(data.get("n_iterations", 0)),
            init_index=int(data.get("init_index", 0)),
            seed=data.get("seed"),
            refinement=data.get("refinement"),
            extra=data.get("extra") or {},
        )


# ─── BAUSTEINE ────────────────────────────────────────

def group_lags(panel: Panel, w: WeightMatrix, labels: np.ndarray, n_groups: int) -> np.ndarray:
    """Ỹ_{i(t-1),g'} = Σ_j w_ij Y_j(t-1) 1(g_j = g'), Form (G, N, T)."""
    lag = panel.lagged
    out = np.empty((n_groups, panel.N, panel.T))
    for g in range(n_groups):
        out[g] = w.weights @ (lag * (labels == g)[:, None])
    return out


def _node_design(panel: Panel, lags: np.ndarray) -> np.ndarray:
    """Volles Design (N, T, G+1+p); Zeile (i, t) ist 𝒳_{i(t-1)}ᵀ."""
    n, t = panel.N, panel.T
    z = np.broadcast_to(panel.Z[:, None, :], (n, t, panel.p))
    return np.concatenate([np.moveaxis(lags, 0, -1), panel.lagged[:, :, None], z], axis=2)


def _residuals(params: GnarParams, labels: np.ndarray, panel: Panel, lags: np.ndarray) -> np.ndarray:
    coef = params.beta[labels]                               # N×G
    net = np.einsum("ng,gnt->nt", coef, lags)
    fixed = np.einsum("ik,ik->i", panel.Z, params.zeta[labels]) if panel.p else 0.0
    return panel.current - net - params.nu[labels][:, None] * panel.lagged - np.reshape(fixed, (-1, 1))


def _check_dims(params: GnarParams, mem: Membership, panel: Panel, w: WeightMatrix):
    if mem.n_nodes != panel.N or w.n_nodes != panel.N:
        raise ValueError(f"Dimensionen passen nicht: Membership {mem.n_nodes}, Panel {panel.N}, W {w.n_nodes}")
    if params.n_groups != mem.n_groups or params.p != panel.p:
        raise ValueError(
            f"Parameter (G={params.n_groups}, p={params.p}) passen nicht zu Membership/Panel "
            f"(G={mem.n_groups}, p={panel.p})"
        )


# ─── LOSS ─────────────────────────────────────────────

def loss(params: GnarParams, mem: Membership, panel: Panel, w: WeightMatrix) -> tuple:
    """Q = N^{-1} Σ_i Q_i mit Q_i = T^{-1} Σ_t r_it². Gibt (Q, Q_i-Vektor) zurück."""
    _check_dims(params, mem, panel, w)
    lags = group_lags(panel, w, mem.labels, mem.n_groups)
    node_q = (_residuals(params, mem.labels, panel, lags) ** 2).mean(axis=1)
    return float(node_q.mean()), node_q


def build_design(panel: Panel, w: WeightMatrix, mem: Membership, n_groups: int) -> DesignBlocks:
    """Stapelt 𝒳_{i(t-1)}ᵀ und Y_it pro Gruppe (Knoten aufsteigend, dann t = 1..T)."""
    labels = mem.labels
    if labels.size and labels.max() >= n_groups:
        raise ValueError(f"Membership-Labels überschreiten G={n_groups}")
    full = _node_design(panel, group_lags(panel, w, labels, n_groups))
    k = full.shape[2]
    xs, ys, nodes = [], [], []
    for g in range(n_groups):
        idx = np.flatnonzero(labels == g)
        xs.append(full[idx].reshape(-1, k))
        ys.append(panel.current[idx].reshape(-1))
        nodes.append(idx)
    return DesignBlocks(xs, ys, nodes, n_groups, panel.p)


def design_loss(params: GnarParams, blocks: DesignBlocks) -> float:
    """(NT)^{-1} Σ_g ‖Y_g − X_g ξ_g‖²."""
    rss = 0.0
    n_rows = 0
    for g in range(blocks.n_groups):
        r = blocks.Y[g] - blocks.X[g] @ params.xi(g)
        rss += float(r @ r)
        n_rows += blocks.Y[g].size
    return rss / n_rows


# ─── SOLVE ────────────────────────────────────────────

def solve_group(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-Norm-Kleinste-Quadrate über QR mit Pivotisierung (gelsy)."""
    if x.shape[0] == 0:
        raise EmptyGroupError("Leerer Design-Block: Gruppe hat keine Mitglieder")
    xi, _, rank, _ = linalg.lstsq(x, y, lapack_driver="gelsy")
    if rank < x.shape[1]:
        logger.debug(f"Rangdefizites Design ({rank}/{x.shape[1]}): Minimum-Norm-Lösung")
    return xi


def _solve_all(panel: Panel, w: WeightMatrix, mem: Membership,
               previous: Optional[GnarParams]) -> tuple:
    g_count = mem.n_groups
    blocks = build_design(panel, w, mem, g_count)
    xis, grams = [], []
    for g in range(g_count):
        try:
            xis.append(solve_group(blocks.X[g], blocks.Y[g]))
            grams.append(blocks.gram(g))
        except EmptyGroupError:
            # leere Gruppe bleibt wählbar, behält altes ξ_g
            stale = previous.xi(g) if previous is not None else np.zeros(blocks.n_columns)
            xis.append(stale)
            grams.append(None)
            logger.debug(f"Gruppe {g + 1} leer: behalte vorheriges ξ_g")
    return GnarParams.from_xi(xis, panel.p), grams


# ─── MEMBERSHIP-UPDATE ────────────────────────────────

def _pick(delta: np.ndarray, scale: float) -> int:
    """Kleinste Loss-Änderung; Gleichstand (relativ TIE_TOL) an den kleinsten Index."""
    best = delta.min()
    return int(np.flatnonzero(delta <= best + TIE_TOL * max(scale, 1e-300))[0])


def _sweep_deltas(params: GnarParams, labels: np.ndarray, panel: Panel, w: WeightMatrix,
                  lags: np.ndarray, resid: np.ndarray, lag_ss: np.ndarray) -> tuple:
    """Δ-Loss aller Knoten × Gruppen beim aktuellen Zustand: (N×G, Skala pro Knoten)."""
    n = panel.N
    beta, nu = params.beta, params.nu
    fixed = panel.Z @ params.zeta.T if panel.p else np.zeros((n, params.n_groups))
    net = np.einsum("hit,gh->itg", lags, beta)
    own = panel.current[:, :, None] - net - panel.lagged[:, :, None] * nu[None, None, :] - fixed[:, None, :]
    own_ss = (own ** 2).sum(axis=1)
    idx = np.arange(n)
    delta = own_ss - own_ss[idx, labels][:, None]
    scale = own_ss[idx, labels].copy()

    fidx, iidx = np.nonzero(w.weights)                       # f folgt i
    if fidx.size:
        wf = w.weights[fidx, iidx]
        cross = np.einsum("et,et->e", resid[fidx], panel.lagged[iidx])
        gk = labels[fidx]
        c = wf[:, None] * (beta[gk, :] - beta[gk, labels[iidx]][:, None])
        np.add.at(delta, iidx, -2.0 * c * cross[:, None] + c ** 2 * lag_ss[iidx][:, None])
        np.add.at(scale, iidx, (resid[fidx] ** 2).sum(axis=1))
    return delta, scale


def update_memberships(params: GnarParams, mem: Membership, panel: Panel, w: WeightMatrix,
                       max_sweeps: int = 100) -> tuple:
    """
    Sequenzielle Sweeps i = 1..N bei festen Parametern, bis ein kompletter Sweep nichts ändert.
    Ein Labelwechsel von i ändert Q_i und Q_k für alle k, die i folgen; nur diese
    Residuen werden inkrementell nachgezogen. Gibt (Membership, #Wechsel, #Sweeps) zurück.

    Zu Beginn jedes Sweeps werden alle Δ vektorisiert berechnet. Ein Knoten wird nur dann
    einzeln neu bewertet, wenn sich in seiner 2-Hop-Umgebung im laufenden Sweep etwas bewegt hat.
    """
    _check_dims(params, mem, panel, w)
    g_count = mem.n_groups
    labels = mem.labels.copy()
    weights = w.weights
    cur_y, lag_y, z = panel.current, panel.lagged, panel.Z
    t_len = panel.T

    lags = group_lags(panel, w, labels, g_count)
    resid = _residuals(params, labels, panel, lags)
    xi = params.xi_matrix()
    beta = params.beta
    followers = [w.followers(i) for i in range(panel.N)]
    followees = [w.followees(i) for i in range(panel.N)]
    lag_ss = (lag_y ** 2).sum(axis=1)

    def node_delta(i: int, cur: int) -> tuple:
        x_i = np.concatenate(
            [lags[:, i, :].T, lag_y[i][:, None], np.broadcast_to(z[i], (t_len, panel.p))], axis=1
        )
        own = cur_y[i][:, None] - x_i @ xi                       # T×G
        own_ss = (own ** 2).sum(axis=0)
        delta = own_ss - own_ss[cur]
        scale = own_ss[cur]
        c = None
        f = followers[i]
        if f.size:
            wf = weights[f, i]
            cross = resid[f] @ lag_y[i]
            gk = labels[f]
            c = wf[:, None] * (beta[gk, :] - beta[gk, cur][:, None])   # F×G
            delta = delta + (-2.0 * c * cross[:, None] + c ** 2 * lag_ss[i]).sum(axis=0)
            scale += float((resid[f] ** 2).sum())
        return delta, scale, own, c

    moves = 0
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        changed = 0
        cached, cached_scale = _sweep_deltas(params, labels, panel, w, lags, resid, lag_ss)
        dirty = np.zeros(panel.N, dtype=bool)
        for i in range(panel.N):
            cur = labels[i]
            if not dirty[i] and _pick(cached[i], cached_scale[i]) == cur:
                continue
            delta, scale, own, c = node_delta(i, cur)
            new = _pick(delta, scale)
            if new == cur:
                continue

            f = followers[i]
            resid[i] = own[:, new]
            if f.size:
                resid[f] -= c[:, new][:, None] * lag_y[i][None, :]
                shift = weights[f, i][:, None] * lag_y[i][None, :]
                lags[cur][f] -= shift
                lags[new][f] += shift
            labels[i] = new
            changed += 1

            dirty[f] = True
            dirty[followees[i]] = True
            for k in f:
                dirty[followees[k]] = True

        moves += changed
        if changed == 0:
            break
    else:
        logger.warning(f"Membership-Sweeps nach {max_sweeps} Durchläufen nicht stabil")

    return Membership(labels, g_count), moves, sweeps


# ─── FIT ──────────────────────────────────────────────

@dataclass
class _Restart:
    """Zustand eines Restarts zwischen zwei Iterationen."""
    index: int
    mem: Membership
    params: GnarParams
    grams: list
    q: float
    node_q: np.ndarray
    trace: list
    iterations: int = 0
    stalled: int = 0
    converged: bool = False
    done: bool = False
    copies: int = 1

    def key(self) -> tuple:
        return self.mem.labels.tobytes(), self.stalled

    def result(self) -> FitResult:
        return FitResult(
            params=self.params, membership=self.mem, loss=self.q, loss_trace=self.trace, grams=self.grams,
            converged=self.converged, n_iterations=self.iterations, init_index=self.index,
            node_losses=self.node_q,
        )


def _start_restart(panel: Panel, w: WeightMatrix, n_groups: int, init: Membership, index: int) -> _Restart:
    mem = Membership(init.labels, n_groups)
    params, grams = _solve_all(panel, w, mem, None)
    q, node_q = loss(params, mem, panel, w)
    return _Restart(index, mem, params, grams, q, node_q, [q])


def _step_restart(state: _Restart, panel: Panel, w: WeightMatrix, options: FitOptions) -> _Restart:
    """Eine Iteration: Membership-Sweeps, dann Gruppen-Solve."""
    if state.iterations >= options.max_iter:
        state.done = True
        return state
    state.iterations += 1
    new_mem, _, _ = update_memberships(state.params, state.mem, panel, w, options.max_sweeps)
    if np.array_equal(new_mem.labels, state.mem.labels):
        # gleiche Labels → Solve würde dieselben ξ liefern, relative Abnahme 0
        state.converged = state.done = True
        return state
    state.mem = new_mem
    state.params, state.grams = _solve_all(panel, w, new_mem, state.params)
    q_new, state.node_q = loss(state.params, new_mem, panel, w)
    state.trace.append(q_new)
    rel = (state.q - q_new) / max(abs(state.q), 1e-300)
    state.q = q_new
    state.stalled = state.stalled + 1 if rel < options.tol else 0
    if state.stalled >= 3:
        logger.debug(f"Restart {state.index}: Labels wechseln ohne Loss-Abnahme: Abbruch")
        state.done = True
    elif state.iterations >= options.max_iter:
        state.done = True
    return state


def _merge(active: list) -> list:
    """Restarts im selben Zustand laufen identisch weiter; der kleinste Index bleibt."""
    kept = {}
    for state in active:
        first = kept.setdefault(state.key(), state)
        if first is not state:
            first.copies += state.copies
    return list(kept.values())


def fit(panel: Panel, w: WeightMatrix, n_groups: int, init_pool: Sequence[Membership],
        options: Optional[FitOptions] = None, seed: Optional[int] = None) -> FitResult:
    """
    Alternierender Algorithmus für jede Startmembership; bester Restart (kleinstes Q) gewinnt.
    Alle Restarts laufen im Gleichschritt; landen zwei im selben Zustand, wird nur der mit
    kleinerem Index weitergerechnet (gleicher Endloss, kleinerer Index gewinnt ohnehin).
    """
    if not init_pool:
        raise ValueError("init_pool ist leer")
    options = options or FitOptions()

    def start(item):
        idx, init = item
        try:
            return _start_restart(panel, w, n_groups, init, idx)
        except (np.linalg.LinAlgError, ValueError) as e:
            logger.warning(f"Restart {idx} fehlgeschlagen: {e}")
            return None

    def step(state):
        try:
            return _step_restart(state, panel, w, options)
        except (np.linalg.LinAlgError, ValueError) as e:
            logger.warning(f"Restart {state.index} fehlgeschlagen: {e}")
            return None

    items = list(enumerate(init_pool))
    pool = ThreadPoolExecutor(max_workers=options.threads) if options.threads > 1 and len(items) > 1 else None
    run = pool.map if pool is not None else map
    try:
        active = [s for s in run(start, items) if s is not None]
        finished = []
        while active:
            active = [s for s in run(step, _merge(active)) if s is not None]
            finished.extend(s for s in active if s.done)
            active = [s for s in active if not s.done]
    finally:
        if pool is not None:
            pool.shutdown()

    finite = [s for s in finished if np.isfinite(s.q)]
    if not finite:
        raise FitError(f"Keiner von {len(items)} Restarts lieferte einen endlichen Loss")
    best = min(finite, key=lambda s: (s.q, s.index)).result()
    best.seed = seed
    best.extra["n_restarts"] = len(items)
    best.extra["n_converged"] = sum(s.copies for s in finite if s.converged)

    logger.info(
        f"Fit G={n_groups}: Q={best.loss:.6g} nach {best.n_iterations} Iterationen "
        f"(Restart {best.init_index}/{len(items)}, konvergiert={best.converged})"
    )
    return best


def refit(panel: Panel, w: WeightMatrix, mem: Membership,
          previous: Optional[GnarParams] = None) -> FitResult:
    """Ein einzelner Gruppen-Solve bei festen Labels (z.B. nach Refinement oder Oracle)."""
    params, grams = _solve_all(panel, w, mem, previous)
    q, node_q = loss(params, mem, panel, w)
    return FitResult(
        params=params, membership=mem.copy(), loss=q, loss_trace=[q], grams=grams,
        converged=True, n_iterations=0, node_losses=node_q,
    )


def oracle_fit(panel: Panel, w: WeightMatrix, truth: Membership) -> FitResult:
    """Oracle-Schätzer: Gruppen-Kleinste-Quadrate mit bekannten Memberships."""
    result = refit(panel, w, truth)
    result.extra["oracle"] = True
    return result
