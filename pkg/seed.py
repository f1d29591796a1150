"""
GnarLab - Seed Script
Schreibt einen kleinen Demo-Datensatz (Szenario 1, SBM, G0=2) für die CLI-Befehle.
"""
import sys
from pathlib import Path

from app import create_config
from core.campaign import simulate_dataset
from core.scenarios import ScenarioConfig
from integrations import files

DEMO = dict(name="demo", scenario=1, network="sbm", N=60, T=120, G0=2, replications=1)


def write_demo(out_dir, seed: int = 2024) -> dict:
    """Simuliert den Demo-Datensatz und schreibt alle Eingabedateien. Gibt die Pfade zurück."""
    config = ScenarioConfig(seed=seed, **DEMO)
    net, _, diag, params, truth, panel = simulate_dataset(config, 1)
    target = Path(out_dir) / config.name
    paths = {
        "edges": files.write_edge_list(net, target / "edges.csv"),
        "panel": files.write_panel(panel, target / "panel.csv", target / "covariates.csv"),
        "covariates": target / "covariates.csv",
        "params": files.write_params(params, target / "params_true.json"),
        "membership": files.write_membership(truth, target / "membership_true.csv"),
    }
    paths["summary"] = {
        "N": panel.N, "T": panel.T, "G0": params.n_groups, "edges": net.n_edges,
        "mean_degree": diag.mean_degree, "sizes": truth.group_sizes().tolist(),
    }
    return paths


if __name__ == "__main__":
    cfg = create_config()
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(cfg["OUT_DIR"])
    paths = write_demo(out, cfg["SEED"])
    s = paths["summary"]
    d = paths["edges"].parent

    print(f"""
=============================================
  GNARLAB DEMO-DATEN ERSTELLT
=============================================
  Knoten:    {s['N']}
  Perioden:  {s['T']}
  Gruppen:   {s['G0']} (Größen {s['sizes']})
  Kanten:    {s['edges']} (Ø Out-Degree {s['mean_degree']:.2f})
  Ordner:    {d}
=============================================

  1. python app.py diag --edges {d}/edges.csv
  2. python app.py fit --G 2 --edges {d}/edges.csv --panel {d}/panel.csv --covariates {d}/covariates.csv
  3. python app.py select --g-grid 1-4 --edges {d}/edges.csv --panel {d}/panel.csv --covariates {d}/covariates.csv
  4. python app.py infer --fit out/fit_G2.json --edges {d}/edges.csv --panel {d}/panel.csv --covariates {d}/covariates.csv
""")
