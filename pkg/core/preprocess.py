"""
GnarLab — Preprocessing
Rohdaten (Zählwerte pro Knoten und Zeitpunkt) → zentriertes Panel:
    Ỹ_it = log(1 + X_it),  Y_it = Ỹ_it − N^{-1} Σ_j Ỹ_jt
"""
import logging
from typing import Optional

import numpy as np
import pandas as pd

from core.model import Panel

logger = logging.getLogger("gnarlab.preprocess")

COUNT_COLUMNS = ("node", "t", "count")


def preprocess_real(counts, covariates=None, z_names: Optional[list] = None,
                    add_intercept: bool = False) -> Panel:
    """counts: N×(T+1) Zählwerte >= 0. Kovariaten N×p oder None."""
    x = np.asarray(counts, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"Zählwerte müssen eine N×T-Matrix sein, Form {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("Zählwerte enthalten fehlende oder nicht-endliche Werte")
    if (x < 0).any():
        i, t = np.argwhere(x < 0)[0]
        raise ValueError(f"Negativer Zählwert bei Knoten {i + 1}, Zeitpunkt {t}")

    y_log = np.log1p(x)
    y = y_log - y_log.mean(axis=0, keepdims=True)

    n = x.shape[0]
    z = np.zeros((n, 0)) if covariates is None else np.asarray(covariates, dtype=float)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    names = list(z_names) if z_names else [f"z{k + 1}" for k in range(z.shape[1])]
    if add_intercept:
        z = np.column_stack([np.ones(n), z])
        names = ["intercept"] + names
    logger.info(f"Preprocessing: N={n}, T+1={x.shape[1]}, p={z.shape[1]}")
    return Panel(y, z, names)


def counts_from_long(frame: pd.DataFrame) -> np.ndarray:
    """Langes Format (node, t, count) mit 1-basierten Knoten → N×(T+1)-Matrix."""
    missing = set(COUNT_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"Spalten fehlen: {sorted(missing)}")
    if frame.duplicated(["node", "t"]).any():
        raise ValueError("Doppelte (node, t)-Einträge")
    wide = frame.pivot(index="node", columns="t", values="count").sort_index().sort_index(axis=1)
    nodes = wide.index.to_numpy()
    if nodes.min() != 1 or not np.array_equal(nodes, np.arange(1, nodes.size + 1)):
        raise ValueError("Knoten-IDs müssen lückenlos 1..N sein")
    if wide.isna().any().any():
        r, c = np.argwhere(wide.isna().to_numpy())[0]
        raise ValueError(f"Fehlender Zählwert für Knoten {wide.index[r]}, Zeitpunkt {wide.columns[c]}")
    return wide.to_numpy(dtype=float)


def load_counts(path, covariates_path=None, add_intercept: bool = False) -> Panel:
    """Liest Zählwerte (und optional Kovariaten) aus CSV und wendet preprocess_real an."""
    from integrations.files import read_covariates
    counts = counts_from_long(pd.read_csv(path))
    z, names = (None, None)
    if covariates_path is not None:
        z, names = read_covariates(covariates_path, counts.shape[0])
    return preprocess_real(counts, z, names, add_intercept=add_intercept)
