import numpy as np
import pytest

from core.errors import NonStationaryError
from core.model import (
    GnarParams, Membership, NoiseSpec, Panel, check_stationarity, fixed_effects, simulate,
    simulate_noiseless, stationary_mean, transition_matrix,
)
from core.network import Network, row_normalize


def _params() -> GnarParams:
    return GnarParams(beta=[[0.1, 0.2], [0.3, 0.4]], nu=[0.5, 0.6], zeta=[[1.0], [2.0]])


# ─── PARAMETER ────────────────────────────────────────

def test_params_reject_inconsistent_shapes() -> None:
    with pytest.raises(ValueError, match="Inkonsistente Dimensionen"):
        GnarParams(beta=np.zeros((2, 3)), nu=np.zeros(2), zeta=np.zeros((2, 1)))


def test_params_reject_non_finite() -> None:
    with pytest.raises(ValueError):
        GnarParams(beta=[[np.nan]], nu=[0.1], zeta=[[0.0]])


def test_xi_stacks_beta_nu_zeta() -> None:
    params = _params()
    assert params.xi(1).tolist() == [0.3, 0.4, 0.6, 2.0]
    assert params.xi_matrix().shape == (4, 2)
    rebuilt = GnarParams.from_xi([params.xi(0), params.xi(1)], p=1)
    assert np.array_equal(rebuilt.beta, params.beta)


def test_params_without_covariates() -> None:
    params = GnarParams(beta=[[0.2]], nu=[0.3], zeta=[])
    assert params.p == 0
    assert params.zeta.shape == (1, 0)
    assert params.xi(0).tolist() == [0.2, 0.3]


def test_permuted_relabels_rows_and_columns() -> None:
    swapped = _params().permuted((1, 0))
    assert swapped.beta.tolist() == [[0.4, 0.3], [0.2, 0.1]]
    assert swapped.nu.tolist() == [0.6, 0.5]
    assert swapped.zeta.ravel().tolist() == [2.0, 1.0]


# ─── MEMBERSHIP ───────────────────────────────────────

def test_membership_rejects_out_of_range_labels() -> None:
    with pytest.raises(ValueError):
        Membership([0, 2], 2)


def test_membership_canonical_relabels_by_first_occurrence() -> None:
    mem = Membership([2, 2, 0, 1], 3).canonical()
    assert mem.labels.tolist() == [0, 0, 1, 2]
    assert mem.n_groups == 3


def test_membership_one_based_conversion() -> None:
    mem = Membership.from_one_based([1, 2, 2])
    assert mem.labels.tolist() == [0, 1, 1]
    assert mem.n_groups == 2
    assert mem.one_based() == [1, 2, 2]
    assert mem.group_sizes().tolist() == [1, 2]
    assert mem.members(1).tolist() == [1, 2]


# ─── PANEL + NOISE ────────────────────────────────────

def test_panel_views() -> None:
    y = np.arange(12, dtype=float).reshape(3, 4)
    panel = Panel(y, np.zeros((3, 0)))
    assert (panel.N, panel.T, panel.p) == (3, 3, 0)
    assert panel.current[0].tolist() == [1.0, 2.0, 3.0]
    assert panel.lagged[0].tolist() == [0.0, 1.0, 2.0]


def test_panel_rejects_missing_values() -> None:
    y = np.ones((2, 3))
    y[1, 2] = np.nan
    with pytest.raises(ValueError, match="nicht-endliche"):
        Panel(y, np.zeros((2, 0)))


def test_panel_names_covariates() -> None:
    panel = Panel(np.ones((2, 3)), np.ones((2, 2)))
    assert panel.z_names == ["z1", "z2"]


def test_noise_spec_validation() -> None:
    with pytest.raises(ValueError):
        NoiseSpec(0.0)
    with pytest.raises(ValueError):
        NoiseSpec(1.0, "cauchy")


def test_uniform_noise_has_requested_sd() -> None:
    draws = NoiseSpec(2.0, "uniform").draw(np.random.default_rng(0), 200_000)
    assert draws.std() == pytest.approx(2.0, rel=0.02)
    assert np.abs(draws).max() <= 2.0 * np.sqrt(3.0)


# ─── OPERATIONEN ──────────────────────────────────────

def test_transition_matrix_entries() -> None:
    net = Network(np.array([[0, 1, 1], [1, 0, 0], [0, 1, 0]]))
    w = row_normalize(net)
    mem = Membership([0, 1, 1], 2)
    b = transition_matrix(_params(), mem, w)
    assert b[0, 1] == pytest.approx(0.5 * 0.2)
    assert b[0, 2] == pytest.approx(0.5 * 0.2)
    assert b[1, 0] == pytest.approx(0.3)
    assert b[2, 1] == pytest.approx(0.4)
    assert np.diag(b).tolist() == [0.5, 0.6, 0.6]
    assert b[1, 2] == 0.0


def test_check_stationarity_margin(true_params) -> None:
    ok, margin = check_stationarity(true_params)
    assert ok
    assert margin == pytest.approx(1.0 - 0.3 - 0.6)
    ok, _ = check_stationarity(GnarParams([[0.6]], [0.5], []))
    assert not ok


def test_fixed_effects_use_group_zeta() -> None:
    mem = Membership([0, 1], 2)
    mu = fixed_effects(_params(), mem, np.array([[1.0], [3.0]]))
    assert mu.tolist() == [1.0, 6.0]


def test_simulate_is_reproducible(true_params, truth, w, covariates) -> None:
    a = simulate(true_params, truth, w, covariates, 20, NoiseSpec(), rng_seed=3)
    b = simulate(true_params, truth, w, covariates, 20, NoiseSpec(), rng_seed=3)
    c = simulate(true_params, truth, w, covariates, 20, NoiseSpec(), rng_seed=4)
    assert a.Y.shape == (40, 21)
    assert np.array_equal(a.Y, b.Y)
    assert not np.array_equal(a.Y, c.Y)
    assert a.z_names == ["z1", "z2"]


def test_simulate_refuses_non_stationary_params(truth, w, covariates) -> None:
    params = GnarParams(np.full((2, 2), 0.6), [0.5, 0.5], np.zeros((2, 2)))
    with pytest.raises(NonStationaryError):
        simulate(params, truth, w, covariates, 5, NoiseSpec(), rng_seed=0)
    panel = simulate(params, truth, w, covariates, 5, NoiseSpec(), rng_seed=0, burn_in=5,
                     allow_nonstationary=True)
    assert panel.T == 5


def test_noiseless_recursion_stays_at_stationary_mean(true_params, truth, w, covariates) -> None:
    mean = stationary_mean(true_params, truth, w, covariates)
    panel = simulate_noiseless(true_params, truth, w, covariates, 10, mean)
    assert np.allclose(panel.Y, mean[:, None], atol=1e-10)


def test_simulated_mean_approaches_stationary_mean(true_params, truth, w, covariates) -> None:
    panel = simulate(true_params, truth, w, covariates, 4000, NoiseSpec(), rng_seed=9)
    mean = stationary_mean(true_params, truth, w, covariates)
    assert np.abs(panel.Y.mean(axis=1) - mean).max() < 0.3


def test_single_group_without_network_effect_is_ar1() -> None:
    w = row_normalize(Network(np.array([[0, 1], [1, 0]])))
    params = GnarParams(beta=[[0.0]], nu=[0.5], zeta=[])
    panel = simulate(params, Membership([0, 0], 1), w, np.zeros((2, 0)), 100_000, NoiseSpec(), rng_seed=4)
    for y in panel.Y:
        assert np.corrcoef(y[1:], y[:-1])[0, 1] == pytest.approx(0.5, abs=0.01)
