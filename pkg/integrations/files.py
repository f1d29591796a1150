"""
GnarLab — File Integration
CSV/JSON-Adapter für Edge-Listen, Panels, Kovariaten, Parameter, Memberships,
Fit-Ergebnisse und Ergebnis-Tabellen. Knoten und Gruppen sind in Dateien 1-basiert.
"""
import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from core.errors import NetworkError
from core.estimator import FitResult
from core.formatters import COEFFICIENT_COLUMNS, FLOAT_FORMAT
from core.model import GnarParams, Membership, Panel
from core.network import Network

logger = logging.getLogger("gnarlab.files")

EDGE_COLUMNS = ("from", "to")
EDGE_ALIASES = {"follower": "from", "followee": "to"}
PANEL_COLUMNS = ("node", "t", "y")


def _prepare(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ─── TABELLEN ─────────────────────────────────────────

def write_csv(rows: list, columns: list, path) -> Path:
    """Deterministische CSV: feste Spaltenreihenfolge, festes Float-Format, '\\n' als Zeilenende."""
    path = _prepare(path)
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_coefficients(inference, path) -> Path:
    return write_csv(inference.rows(), COEFFICIENT_COLUMNS, path)


def write_gic_curve(selection, path) -> Path:
    return write_csv(selection.curve(), ["G", "gic", "loss"], path)


# ─── NETZWERK ─────────────────────────────────────────

def read_edge_list(path, n_nodes: Optional[int] = None) -> Network:
    """Kanten (from, to) = (Follower, Followee), 1-basiert. Ohne n_nodes gilt N = größte ID."""
    frame = pd.read_csv(path).rename(columns=EDGE_ALIASES)
    missing = set(EDGE_COLUMNS) - set(frame.columns)
    if missing:
        raise NetworkError(f"Edge-Liste ohne Spalten {sorted(missing)}: {path}")
    src = frame["from"].to_numpy(dtype=int)
    dst = frame["to"].to_numpy(dtype=int)
    n = n_nodes if n_nodes is not None else int(max(src.max(initial=0), dst.max(initial=0)))
    if n < 1:
        raise NetworkError(f"Edge-Liste ist leer: {path}")
    bad = (src < 1) | (src > n) | (dst < 1) | (dst > n)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise NetworkError(f"Kante {src[k]}→{dst[k]} außerhalb von 1..{n}")
    loops = np.flatnonzero(src == dst)
    if loops.size:
        raise NetworkError(f"Self-Loop an Knoten {src[loops[0]]}")
    adj = np.zeros((n, n), dtype=np.int8)
    adj[src - 1, dst - 1] = 1
    if len(frame) != int(adj.sum()):
        logger.warning(f"Edge-Liste enthält {len(frame) - int(adj.sum())} doppelte Kanten")
    return Network(adj)


def write_edge_list(net: Network, path) -> Path:
    src, dst = np.nonzero(net.adjacency)
    return write_csv(
        [{"from": int(i) + 1, "to": int(j) + 1} for i, j in zip(src, dst)],
        list(EDGE_COLUMNS), path,
    )


def write_blocks(net: Network, path) -> Optional[Path]:
    if net.blocks is None:
        return None
    return write_csv(
        [{"node": i + 1, "community": int(c) + 1} for i, c in enumerate(net.blocks)],
        ["node", "community"], path,
    )


# ─── PANEL + KOVARIATEN ───────────────────────────────

def read_panel_matrix(path) -> np.ndarray:
    """Langes Format (node, t, y), t = 0..T → N×(T+1)."""
    frame = pd.read_csv(path)
    missing = set(PANEL_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"Panel-CSV ohne Spalten {sorted(missing)}: {path}")
    wide = frame.pivot(index="node", columns="t", values="y").sort_index().sort_index(axis=1)
    nodes = wide.index.to_numpy()
    if not np.array_equal(nodes, np.arange(1, nodes.size + 1)):
        raise ValueError("Panel: Knoten-IDs müssen lückenlos 1..N sein")
    if wide.isna().any().any():
        raise ValueError("Panel enthält fehlende Werte")
    return wide.to_numpy(dtype=float)


def read_covariates(path, n_nodes: int) -> tuple:
    """CSV mit Spalte node und je einer Spalte pro Kovariate → (N×p, Namen)."""
    frame = pd.read_csv(path)
    if "node" not in frame.columns:
        raise ValueError(f"Kovariaten-CSV ohne Spalte 'node': {path}")
    frame = frame.sort_values("node")
    if not np.array_equal(frame["node"].to_numpy(), np.arange(1, n_nodes + 1)):
        raise ValueError(f"Kovariaten müssen genau die Knoten 1..{n_nodes} abdecken")
    names = [c for c in frame.columns if c != "node"]
    return frame[names].to_numpy(dtype=float), names


def read_panel(panel_path, covariates_path=None) -> Panel:
    y = read_panel_matrix(panel_path)
    if covariates_path is None:
        return Panel(y, np.zeros((y.shape[0], 0)))
    z, names = read_covariates(covariates_path, y.shape[0])
    return Panel(y, z, names)


def write_panel(panel: Panel, path, covariates_path=None) -> Path:
    n, t1 = panel.Y.shape
    frame = pd.DataFrame({
        "node": np.repeat(np.arange(1, n + 1), t1),
        "t": np.tile(np.arange(t1), n),
        "y": panel.Y.ravel(),
    })
    path = _prepare(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if covariates_path is not None:
        cov = pd.DataFrame(panel.Z, columns=panel.z_names)
        cov.insert(0, "node", np.arange(1, n + 1))
        cov.to_csv(_prepare(covariates_path), index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


# ─── PARAMETER + MEMBERSHIPS ──────────────────────────

def write_json(data: dict, path) -> Path:
    path = _prepare(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_params(params: GnarParams, path) -> Path:
    return write_json(params.to_dict(), path)


def read_params(path) -> GnarParams:
    return GnarParams.from_dict(read_json(path))


def write_membership(mem: Membership, path) -> Path:
    return write_csv(
        [{"node": i + 1, "group": g} for i, g in enumerate(mem.one_based())], ["node", "group"], path,
    )


def read_membership(path, n_groups: Optional[int] = None) -> Membership:
    frame = pd.read_csv(path).sort_values("node")
    return Membership.from_one_based(frame["group"].to_numpy(dtype=int), n_groups)


def write_fit(fit: FitResult, path) -> Path:
    return write_json(fit.to_dict(), path)


def read_fit(path) -> FitResult:
    return FitResult.from_dict(read_json(path))
