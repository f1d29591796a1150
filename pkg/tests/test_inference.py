import numpy as np
import pytest
from scipy import stats

from core.errors import InferenceError
from core.estimator import refit
from core.inference import (
    coefficient_names, confidence_intervals, covariance, residual_variance,
)
from core.model import Membership, NoiseSpec, Panel, simulate


def test_coefficient_names() -> None:
    assert coefficient_names(0, 2, ["z1", "z2"]) == ["beta_1_1", "beta_1_2", "nu", "zeta_1", "zeta_2"]
    assert coefficient_names(1, 1, ["intercept"]) == ["beta_2_1", "nu", "intercept"]


def test_residual_variance_from_panel_and_grams_agree(panel, w, truth) -> None:
    fit = refit(panel, w, truth)
    direct = residual_variance(fit, panel, w)
    from_grams = residual_variance(fit)
    assert from_grams == pytest.approx(direct, rel=1e-8)
    assert direct == pytest.approx(fit.loss * panel.N * panel.T / (panel.N * panel.T - 2 * 5))


def test_covariance_is_scaled_inverse_gram(panel, w, truth) -> None:
    fit = refit(panel, w, truth)
    cov, singular = covariance(fit, 0, sigma2=2.0)
    assert not singular
    np.testing.assert_allclose(cov, 2.0 * np.linalg.inv(fit.grams[0].xtx), rtol=1e-6)
    assert np.allclose(cov, cov.T)


def test_covariance_rejects_unknown_group(panel, w, truth) -> None:
    fit = refit(panel, w, truth)
    with pytest.raises(InferenceError):
        covariance(fit, 2)


def test_confidence_intervals(panel, w, truth, true_params) -> None:
    fit = refit(panel, w, truth)
    inf = confidence_intervals(fit, 0.95, panel, w)
    crit = inf.extra["critical_value"]
    assert crit == pytest.approx(1.959964, rel=1e-6)
    assert inf.dof == panel.N * panel.T - 2 * (2 + 2 + 1)
    assert inf.level == 0.95

    for gi in inf.groups:
        assert not gi.singular
        assert np.all(gi.se > 0)
        np.testing.assert_allclose(gi.ci_hi - gi.ci_lo, 2 * crit * gi.se)
        np.testing.assert_allclose(gi.p_value, 2 * stats.norm.sf(np.abs(gi.xi_hat) / gi.se))
        assert gi.n_nodes == 20

    rows = inf.rows()
    assert len(rows) == 10
    assert rows[0]["group"] == 1 and rows[0]["coefficient"] == "beta_1_1"
    assert rows[-1]["group"] == 2 and rows[-1]["coefficient"] == "zeta_2"


def test_wider_level_gives_wider_intervals(panel, w, truth) -> None:
    fit = refit(panel, w, truth)
    narrow = confidence_intervals(fit, 0.8, panel, w)
    wide = confidence_intervals(fit, 0.99, panel, w)
    assert np.all(wide.groups[0].ci_hi - wide.groups[0].ci_lo > narrow.groups[0].ci_hi - narrow.groups[0].ci_lo)


def test_confidence_intervals_reject_bad_level(panel, w, truth) -> None:
    fit = refit(panel, w, truth)
    with pytest.raises(ValueError):
        confidence_intervals(fit, 1.0, panel, w)


def test_empty_group_has_no_intervals(panel, w) -> None:
    fit = refit(panel, w, Membership(np.zeros(panel.N, dtype=int), 2))
    inf = confidence_intervals(fit, 0.95, panel, w)
    empty = inf.groups[1]
    assert empty.singular
    assert np.all(np.isnan(empty.se))
    assert all(row["se"] is None for row in inf.rows() if row["group"] == 2)
    assert np.all(np.isfinite(inf.groups[0].se))


def test_collinear_covariates_are_flagged(true_params, truth, w) -> None:
    z = np.random.default_rng(3).standard_normal((truth.n_nodes, 1))
    data = simulate(true_params, truth, w, np.hstack([z, z]), 60, NoiseSpec(), rng_seed=4)
    fit = refit(data, w, truth)
    inf = confidence_intervals(fit, 0.95, data, w)
    for gi in inf.groups:
        assert gi.singular
        assert np.all(np.isfinite(gi.se[:3]))
        assert np.all(np.isnan(gi.se[3:]))
        assert np.all(np.isnan(gi.p_value[3:]))


def test_intervals_cover_truth_for_large_panel(true_params, truth, w, covariates) -> None:
    data = simulate(true_params, truth, w, covariates, 1500, NoiseSpec(), rng_seed=8)
    fit = refit(data, w, truth)
    inf = confidence_intervals(fit, 0.9999, data, w)
    for g, gi in enumerate(inf.groups):
        xi = true_params.xi(g)
        assert np.all((gi.ci_lo <= xi) & (xi <= gi.ci_hi))


@pytest.mark.parametrize("scale", [0.1, 10.0, -2.0])
def test_rescaled_covariate_rescales_zeta_and_keeps_p_values(panel, w, truth, scale) -> None:
    scaled = Panel(panel.Y, panel.Z * np.array([1.0, scale]), list(panel.z_names))
    base = confidence_intervals(refit(panel, w, truth), 0.95, panel, w)
    other = confidence_intervals(refit(scaled, w, truth), 0.95, scaled, w)
    k = 2 + 1 + 1
    for a, b in zip(base.groups, other.groups):
        np.testing.assert_allclose(b.xi_hat[k], a.xi_hat[k] / scale, rtol=1e-8)
        np.testing.assert_allclose(b.se[k], a.se[k] / abs(scale), rtol=1e-8)
        np.testing.assert_allclose(b.xi_hat[:k], a.xi_hat[:k], rtol=1e-8, atol=1e-12)
        np.testing.assert_allclose(b.se[:k], a.se[:k], rtol=1e-8)
        np.testing.assert_allclose(b.p_value, a.p_value, rtol=1e-8, atol=1e-12)
