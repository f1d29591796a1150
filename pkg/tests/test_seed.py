from integrations import files
from seed import DEMO, write_demo


def test_write_demo(tmp_path) -> None:
    paths = write_demo(tmp_path, seed=1)
    summary = paths["summary"]
    assert summary["N"] == DEMO["N"]
    assert summary["T"] == DEMO["T"]
    assert sum(summary["sizes"]) == DEMO["N"]
    net = files.read_edge_list(paths["edges"])
    assert net.n_nodes == DEMO["N"]
    panel = files.read_panel(paths["panel"], paths["covariates"])
    assert panel.p == 2
    assert files.read_params(paths["params"]).n_groups == 2
