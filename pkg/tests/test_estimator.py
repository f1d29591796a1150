import numpy as np
import pytest

from core.errors import EmptyGroupError, FitError
from core.estimator import (
    FitOptions, FitResult, build_design, design_loss, fit, group_lags, loss, oracle_fit, refit,
    solve_group, update_memberships,
)
from core.initializer import init_pool
from core.model import GnarParams, Membership


def _flip(mem: Membership, i: int) -> Membership:
    labels = mem.labels.copy()
    labels[i] = 1 - labels[i]
    return Membership(labels, mem.n_groups)


# ─── LOSS ─────────────────────────────────────────────

def test_group_lags_split_network_average(panel, w, truth) -> None:
    lags = group_lags(panel, w, truth.labels, 2)
    assert lags.shape == (2, panel.N, panel.T)
    assert np.allclose(lags.sum(axis=0), w.weights @ panel.lagged)


def test_loss_is_zero_at_truth_without_noise(clean_panel, w, truth, true_params) -> None:
    q, node_q = loss(true_params, truth, clean_panel, w)
    assert q == pytest.approx(0.0, abs=1e-20)
    assert node_q.shape == (clean_panel.N,)


def test_loss_matches_stacked_design(panel, w, truth, true_params) -> None:
    q, node_q = loss(true_params, truth, panel, w)
    blocks = build_design(panel, w, truth, 2)
    assert design_loss(true_params, blocks) == pytest.approx(q, rel=1e-10)
    assert node_q.mean() == pytest.approx(q)
    assert [x.shape[1] for x in blocks.X] == [5, 5]
    assert sum(x.shape[0] for x in blocks.X) == panel.N * panel.T


def test_loss_rejects_mismatched_dimensions(panel, w, truth) -> None:
    with pytest.raises(ValueError):
        loss(GnarParams.zeros(3, 2), truth, panel, w)


# ─── SOLVE ────────────────────────────────────────────

def test_solve_group_minimum_norm() -> None:
    x = np.array([[1.0, 1.0], [1.0, 1.0]])
    xi = solve_group(x, np.array([2.0, 2.0]))
    assert xi == pytest.approx([1.0, 1.0])


def test_solve_group_rejects_empty_block() -> None:
    with pytest.raises(EmptyGroupError):
        solve_group(np.zeros((0, 3)), np.zeros(0))


def test_refit_recovers_params_without_noise(clean_panel, w, truth, true_params) -> None:
    result = refit(clean_panel, w, truth)
    assert np.allclose(result.params.beta, true_params.beta, atol=1e-6)
    assert np.allclose(result.params.nu, true_params.nu, atol=1e-6)
    assert np.allclose(result.params.zeta, true_params.zeta, atol=1e-6)
    assert all(g is not None for g in result.grams)


def test_refit_keeps_previous_params_for_empty_group(panel, w, true_params) -> None:
    mem = Membership(np.zeros(panel.N, dtype=int), 2)
    result = refit(panel, w, mem, previous=true_params)
    assert result.grams[1] is None
    assert np.array_equal(result.params.xi(1), true_params.xi(1))
    fresh = refit(panel, w, mem)
    assert np.all(fresh.params.xi(1) == 0.0)


def test_oracle_fit_uses_true_labels(panel, w, truth) -> None:
    result = oracle_fit(panel, w, truth)
    assert np.array_equal(result.membership.labels, truth.labels)
    assert result.extra["oracle"] is True
    assert result.loss == pytest.approx(loss(result.params, truth, panel, w)[0])


# ─── MEMBERSHIP-UPDATE ────────────────────────────────

def test_update_memberships_reaches_single_node_optimum(panel, w, truth, true_params) -> None:
    start = Membership(np.random.default_rng(1).integers(2, size=panel.N), 2)
    q_before, _ = loss(true_params, start, panel, w)
    mem, moves, sweeps = update_memberships(true_params, start, panel, w)
    q_after, _ = loss(true_params, mem, panel, w)
    assert q_after <= q_before
    assert moves > 0
    assert sweeps >= 2
    for i in range(panel.N):
        assert loss(true_params, _flip(mem, i), panel, w)[0] >= q_after - 1e-12


def test_update_memberships_fixes_planted_error(clean_panel, w, truth, true_params) -> None:
    mem, moves, _ = update_memberships(true_params, _flip(truth, 5), clean_panel, w)
    assert np.array_equal(mem.labels, truth.labels)
    assert moves >= 1


def _reference_sweeps(params: GnarParams, mem: Membership, panel, w) -> np.ndarray:
    """Gauss-Seidel über den vollen Loss, ohne Inkremente."""
    labels = mem.labels.copy()
    changed = True
    while changed:
        changed = False
        for i in range(panel.N):
            values = []
            for g in range(mem.n_groups):
                trial = labels.copy()
                trial[i] = g
                values.append(loss(params, Membership(trial, mem.n_groups), panel, w)[0])
            new = int(np.argmin(values))
            if new != labels[i] and values[new] < values[labels[i]] - 1e-12:
                labels[i] = new
                changed = True
    return labels


@pytest.mark.parametrize("n_groups", [2, 3])
@pytest.mark.parametrize("seed", range(4))
def test_update_memberships_matches_plain_sequential_sweeps(panel, w, seed, n_groups) -> None:
    rng = np.random.default_rng([seed, n_groups])
    params = GnarParams(rng.uniform(-0.5, 0.5, (n_groups, n_groups)), rng.uniform(-0.5, 0.5, n_groups),
                        rng.standard_normal((n_groups, panel.p)))
    start = Membership(rng.integers(n_groups, size=panel.N), n_groups)
    mem, _, _ = update_memberships(params, start, panel, w)
    assert np.array_equal(mem.labels, _reference_sweeps(params, start, panel, w))


# ─── FIT ──────────────────────────────────────────────

def test_fit_decreases_loss_and_converges(panel, w, truth) -> None:
    pool = init_pool(panel, w, 2, restarts=3, rng_seed=0)
    result = fit(panel, w, 2, pool, FitOptions(), seed=0)
    assert result.converged
    assert np.all(np.diff(result.loss_trace) <= 1e-12)
    assert result.loss == pytest.approx(loss(result.params, result.membership, panel, w)[0])
    assert result.extra["n_restarts"] == len(pool)
    _, moves, _ = update_memberships(result.params, result.membership, panel, w)
    assert moves == 0


def test_fit_beats_every_single_restart(panel, w) -> None:
    pool = init_pool(panel, w, 2, restarts=3, rng_seed=0)
    best = fit(panel, w, 2, pool)
    for k, init in enumerate(pool):
        single = fit(panel, w, 2, [init])
        assert best.loss <= single.loss + 1e-12, k


def test_fit_with_merged_restarts_equals_best_single_restart(panel, w) -> None:
    pool = init_pool(panel, w, 3, restarts=4, rng_seed=2)
    singles = [fit(panel, w, 3, [init]) for init in pool]
    winner = min(range(len(pool)), key=lambda k: (singles[k].loss, k))

    best = fit(panel, w, 3, pool + pool)
    assert best.loss == singles[winner].loss
    assert best.init_index == winner
    assert np.array_equal(best.membership.labels, singles[winner].membership.labels)
    assert best.loss_trace == singles[winner].loss_trace
    assert best.extra["n_restarts"] == 2 * len(pool)
    assert best.extra["n_converged"] == 2 * sum(s.converged for s in singles)


def test_fit_is_independent_of_thread_count(panel, w) -> None:
    pool = init_pool(panel, w, 2, restarts=3, rng_seed=4)
    serial = fit(panel, w, 2, pool, FitOptions(threads=1))
    threaded = fit(panel, w, 2, pool, FitOptions(threads=4))
    assert np.array_equal(serial.membership.labels, threaded.membership.labels)
    assert serial.loss == threaded.loss
    assert serial.init_index == threaded.init_index


def test_fit_rejects_empty_pool(panel, w) -> None:
    with pytest.raises(ValueError, match="init_pool ist leer"):
        fit(panel, w, 2, [])


def test_fit_raises_when_every_restart_fails(panel, w, monkeypatch) -> None:
    import core.estimator as estimator

    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("kaputt")

    monkeypatch.setattr(estimator, "_start_restart", broken)
    with pytest.raises(FitError):
        fit(panel, w, 2, [Membership(np.zeros(panel.N, dtype=int), 2)])


def test_fit_result_dict_keeps_labels_and_grams(panel, w, truth) -> None:
    result = refit(panel, w, truth)
    again = FitResult.from_dict(result.to_dict())
    assert np.array_equal(again.membership.labels, truth.labels)
    assert np.allclose(again.grams[0].xtx, result.grams[0].xtx)
    assert result.to_dict()["labels"][:2] == [1, 2]


# ─── EXAKTHEIT ────────────────────────────────────────

def _slow_beyond(count: int, fast: int) -> list:
    return [s if s < fast else pytest.param(s, marks=pytest.mark.slow) for s in range(count)]


@pytest.mark.parametrize("chunk", range(10))
def test_per_node_and_per_group_loss_agree(chunk: int) -> None:
    from core.model import Panel
    from core.network import gen_sbm, row_normalize

    for seed in range(100 * chunk, 100 * (chunk + 1)):
        rng = np.random.default_rng(seed)
        n, g, p = int(rng.integers(5, 31)), int(rng.integers(1, 5)), int(rng.integers(0, 3))
        t = int(rng.integers(2, 21))
        w = row_normalize(gen_sbm(n, int(rng.integers(1, 4)), seed))
        panel = Panel(rng.standard_normal((n, t + 1)), rng.standard_normal((n, p)))
        params = GnarParams(rng.uniform(-0.5, 0.5, (g, g)), rng.uniform(-0.5, 0.5, g), rng.standard_normal((g, p)))
        mem = Membership(rng.integers(g, size=n), g)
        q, _ = loss(params, mem, panel, w)
        assert design_loss(params, build_design(panel, w, mem, g)) == pytest.approx(q, rel=1e-12), seed


def _random_fit_case(seed: int) -> tuple:
    from core.model import NoiseSpec, simulate
    from core.network import gen_sbm, row_normalize
    from core.scenarios import draw_covariates, scenario_params

    rng = np.random.default_rng([seed, 4])
    n, t = int(rng.integers(10, 101)), int(rng.integers(20, 201))
    g0, g = int(rng.integers(2, 4)), int(rng.integers(1, 5))
    w = row_normalize(gen_sbm(n, int(rng.integers(1, 5)), seed))
    truth = Membership(rng.integers(g0, size=n), g0)
    data = simulate(scenario_params(1, g0), truth, w, draw_covariates(n, 2, rng), t, NoiseSpec(), rng_seed=seed)
    start = Membership(rng.integers(g, size=n), g)
    return data, w, g, start


@pytest.mark.parametrize("seed", _slow_beyond(200, 5))
def test_random_fits_never_increase_the_loss(seed: int) -> None:
    data, w, g, start = _random_fit_case(seed)
    trace = fit(data, w, g, [start]).loss_trace
    assert np.all(np.diff(trace) <= 1e-12)


@pytest.mark.parametrize("n_groups", [2, 3, 4])
def test_loss_trace_never_increases(panel, w, n_groups: int) -> None:
    pool = init_pool(panel, w, n_groups, restarts=2, rng_seed=n_groups)
    for init in pool:
        trace = fit(panel, w, n_groups, [init]).loss_trace
        assert np.all(np.diff(trace) <= 1e-12)


def test_noiseless_fit_from_truth_is_exact(clean_panel, w, truth, true_params) -> None:
    from core.refinement import refine_and_refit

    result = fit(clean_panel, w, 2, [truth])
    assert np.array_equal(result.membership.labels, truth.labels)
    assert np.allclose(result.params.beta, true_params.beta, atol=1e-8)
    assert np.allclose(result.params.nu, true_params.nu, atol=1e-8)
    assert np.allclose(result.params.zeta, true_params.zeta, atol=1e-8)
    _, report = refine_and_refit(result, clean_panel, w)
    assert report.switched == []


@pytest.mark.parametrize("seed", _slow_beyond(50, 3))
def test_fit_agrees_with_exhaustive_search(seed: int) -> None:
    import itertools

    from core.model import NoiseSpec, simulate
    from core.network import gen_sbm, row_normalize

    n = 6 + seed % 3
    w = row_normalize(gen_sbm(n, 2, seed))
    params = GnarParams([[0.3, -0.2], [0.1, 0.3]], [0.4, 0.6], [[-0.8], [0.8]])
    z = np.random.default_rng(seed).standard_normal((n, 1))
    data = simulate(params, Membership(np.arange(n) % 2, 2), w, z, 30, NoiseSpec(), rng_seed=seed)

    every = [Membership(np.array(labels), 2) for labels in itertools.product(range(2), repeat=n)]
    losses = [refit(data, w, mem).loss for mem in every]
    best = int(np.argmin(losses))

    from_best = fit(data, w, 2, [every[best]])
    assert np.array_equal(from_best.membership.labels, every[best].labels)
    assert from_best.loss == pytest.approx(losses[best], rel=1e-10)

    full = fit(data, w, 2, every)
    assert full.loss == pytest.approx(losses[best], rel=1e-10)
