import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdopt.estimators import FIRST_ORDER, EstimatorConfig
from hdopt.metrics import (
    CSV_COLUMNS,
    MetricsRecord,
    WeightedAverageState,
    aggregate_seeds,
    compute_gamma,
    compute_mtg,
    compute_mu,
    evaluate_validation,
    read_metrics_csv,
    snapshot,
    weighted_average_update,
    write_aggregate_csv,
    write_metrics_csv,
)
from hdopt.objectives import Dataset, make_logistic, make_quadratic, partition_data
from hdopt.protocol import AgentState, Population, PopulationConfig, Schedule, init_population

from conftest import scalar_mc_stats


def make_population(models, objective=None, estimator=None, shard=None):
    objective = objective or make_quadratic(d=len(models[0]), cond=2.0, seed=0)
    estimator = estimator or EstimatorConfig(kind=FIRST_ORDER, batch_size=1)
    shard = np.arange(objective.n_samples) if shard is None else shard
    agents = [AgentState(model=np.asarray(m, dtype=float), estimator=estimator,
                         shard=shard, rng=np.random.default_rng(i),
                         momentum_buffer=np.zeros(len(models[0])))
              for i, m in enumerate(models)]
    return Population(objective=objective, agents=agents, n0=0, n1=len(agents),
                      c=1.0, momentum=0.0, scheduler_mode="uniform_pair",
                      scheduler_rng=np.random.default_rng(99),
                      metrics_rng=np.random.default_rng(100))


# ---------------------------------------------------------------------------
# mu and gamma


def test_mu_of_identical_models():
    pop = make_population([[1.0, 2.0]] * 3)
    assert np.array_equal(compute_mu(pop), [1.0, 2.0])


def test_mu_hand_value_and_permutation_invariance():
    pop = make_population([[2.0, 0.0], [0.0, 0.0]])
    assert np.array_equal(compute_mu(pop), [1.0, 0.0])
    models = np.random.default_rng(1).standard_normal((5, 3))
    a = compute_mu(make_population(models))
    b = compute_mu(make_population(models[::-1]))
    assert np.allclose(a, b, atol=1e-15)


def test_gamma_examples():
    assert compute_gamma(make_population([[1.0, 1.0]] * 4)) == 0.0
    assert compute_gamma(make_population([[0.0, 0.0], [2.0, 0.0]])) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_gamma_translation_invariant(seed):
    rng = np.random.default_rng(seed)
    models = rng.standard_normal((4, 3))
    shift = rng.standard_normal(3)
    g0 = compute_gamma(make_population(models))
    g1 = compute_gamma(make_population(models + shift))
    assert g0 == pytest.approx(g1, abs=1e-10)


def test_gamma_and_mu_are_pure():
    pop = make_population(np.random.default_rng(2).standard_normal((4, 3)))
    assert compute_gamma(pop) == compute_gamma(pop)
    assert np.array_equal(compute_mu(pop), compute_mu(pop))


# ---------------------------------------------------------------------------
# M_t^G


def test_mtg_zero_at_noiseless_optimum():
    q = make_quadratic(d=3, cond=2.0, seed=3, grad_noise=0.0, hessian_jitter=0.0)
    est = EstimatorConfig(kind=FIRST_ORDER, batch_size=q.n_samples)
    pop = make_population([q.x_star] * 4, objective=q, estimator=est)
    assert compute_mtg(pop, eta=0.1, rng=np.random.default_rng(0)) == pytest.approx(0.0, abs=1e-20)


def test_mtg_single_agent_full_batch():
    q = make_quadratic(d=3, cond=2.0, seed=4)
    est = EstimatorConfig(kind=FIRST_ORDER, batch_size=q.n_samples)
    x = q.x_star + np.array([1.0, -1.0, 0.5])
    pop = make_population([x], objective=q, estimator=est)
    g = q.grad(x)
    assert compute_mtg(pop, eta=0.1, rng=np.random.default_rng(0)) == pytest.approx(
        float(g @ g), abs=1e-12)


def test_mtg_mc_average_matches_closed_form():
    # frozen all-FO population, batch size 1: E[M^G] is exactly the mean of
    # per-sample squared gradient norms over each agent's shard
    q = make_quadratic(d=4, cond=5.0, seed=5, n_samples=16, grad_noise=1.0)
    part = partition_data(q.n_samples, 0, 3, seed=6)
    rng = np.random.default_rng(7)
    models = [q.x_star + rng.standard_normal(4) for _ in range(3)]
    est = EstimatorConfig(kind=FIRST_ORDER, batch_size=1)
    pop = make_population(models, objective=q, estimator=est)
    for agent, shard in zip(pop.agents, part.fo_shards):
        agent.shard = shard
    exact = np.mean([
        np.mean(np.sum(q.grad_per_sample(agent.model, agent.shard) ** 2, axis=1))
        for agent in pop.agents])
    mrng = np.random.default_rng(8)
    vals = np.array([compute_mtg(pop, eta=0.1, rng=mrng) for _ in range(10**4)])
    mean, se = scalar_mc_stats(vals)
    assert abs(mean - exact) <= 3 * se


# ---------------------------------------------------------------------------
# weighted average


def test_weighted_average_first_step_is_mu0():
    state = WeightedAverageState(dim=2)
    weighted_average_update(state, np.array([3.0, -1.0]), eta=0.1, ell=1.0, n=4)
    assert np.array_equal(state.value(), [3.0, -1.0])


def test_weighted_average_zero_eta_is_running_mean():
    state = WeightedAverageState(dim=1)
    mus = [np.array([float(k)]) for k in range(6)]
    for mu in mus:
        weighted_average_update(state, mu, eta=0.0, ell=1.0, n=2)
    assert state.value()[0] == pytest.approx(np.mean([m[0] for m in mus]), abs=1e-12)


def test_weighted_average_two_step_hand_value():
    # eta ell / 2n = 0.5 gives weights (2, 4): y = (2 mu0 + 4 mu1) / 6
    state = WeightedAverageState(dim=1)
    weighted_average_update(state, np.array([1.0]), eta=1.0, ell=1.0, n=1)
    weighted_average_update(state, np.array([4.0]), eta=1.0, ell=1.0, n=1)
    assert state.value()[0] == pytest.approx((2 * 1.0 + 4 * 4.0) / 6.0, abs=1e-12)


def test_weighted_average_matches_direct_weights():
    rng = np.random.default_rng(9)
    mus = rng.standard_normal((40, 3))
    eta, ell, n = 0.3, 2.0, 8
    state = WeightedAverageState(dim=3)
    for mu in mus:
        weighted_average_update(state, mu, eta, ell, n)
    T = len(mus)
    w = (1.0 - eta * ell / (2 * n)) ** (-np.arange(1, T + 1, dtype=float))
    assert w[0] >= 1.0 and np.all(np.diff(w) > 0)
    direct = (w[:, None] * mus).sum(axis=0) / w.sum()
    assert np.allclose(state.value(), direct, atol=1e-12)
    assert (w / w.sum()).sum() == pytest.approx(1.0, abs=1e-12)


def test_weighted_average_rejects_nonconvex_use():
    state = WeightedAverageState(dim=1)
    with pytest.raises(ValueError):
        weighted_average_update(state, np.zeros(1), eta=0.1, ell=0.0, n=2)


# ---------------------------------------------------------------------------
# validation metrics


def logistic_fixture():
    feats = np.array([[2.0, 0.0], [-2.0, 0.0], [3.0, 1.0], [-3.0, -1.0]])
    labels = np.array([1.0, -1.0, 1.0, -1.0])
    ds = Dataset(features=feats, labels=labels)
    return make_logistic(ds, lam=0.1), ds


def test_validation_identical_agents_equal_single():
    lg, ds = logistic_fixture()
    x = np.array([1.0, 0.0])
    pop = make_population([x] * 3, objective=lg)
    loss, acc = evaluate_validation(pop, ds)
    single_loss, single_acc = lg.evaluate(x, ds.features, ds.labels)
    assert loss == pytest.approx(single_loss)
    assert acc == pytest.approx(single_acc)


def test_validation_perfect_classifier_accuracy_one():
    lg, ds = logistic_fixture()
    pop = make_population([[5.0, 0.0]], objective=lg)
    _, acc = evaluate_validation(pop, ds)
    assert acc == 1.0


def test_validation_regression_reports_nan_accuracy():
    q = make_quadratic(d=2, cond=2.0, seed=10)
    pop = make_population([[0.0, 0.0]], objective=q)
    loss, acc = evaluate_validation(pop, np.zeros((3, 2)), np.zeros(3))
    assert np.isnan(acc)
    assert loss == pytest.approx(q.loss(np.zeros(2)))


def test_validation_empty_set_rejected():
    lg, _ = logistic_fixture()
    pop = make_population([[1.0, 0.0]], objective=lg)
    with pytest.raises(ValueError):
        evaluate_validation(pop, np.zeros((0, 2)), np.zeros(0))


def test_validation_invariant_under_relabeling():
    lg, ds = logistic_fixture()
    models = np.random.default_rng(11).standard_normal((4, 2))
    a = evaluate_validation(make_population(models, objective=lg), ds)
    b = evaluate_validation(make_population(models[::-1], objective=lg), ds)
    assert a == pytest.approx(b)


# ---------------------------------------------------------------------------
# aggregation and CSV


def rec(step, gamma, pt=0.0):
    return MetricsRecord(step=step, parallel_time=pt, eta=0.1, gamma=gamma,
                         mu_loss_gap=None, grad_norm_sq_mu=0.5, mean_val_loss=None,
                         mean_val_acc=None, mt_g=None, function_evals_total=7)


def test_aggregate_single_series_zero_stderr():
    steps, mean, stderr = aggregate_seeds([[rec(0, 1.0), rec(10, 2.0)]])
    assert np.array_equal(steps, [0, 10])
    assert np.all(stderr == 0.0)


def test_aggregate_two_series_hand_values():
    a = [rec(0, 1.0)]
    b = [rec(0, 3.0)]
    steps, mean, stderr = aggregate_seeds([a, b])
    gamma_col = CSV_COLUMNS.index("gamma") - 1
    assert mean[0, gamma_col] == pytest.approx(2.0)
    assert stderr[0, gamma_col] == pytest.approx(1.0)


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(12)
    series = [[rec(0, float(rng.standard_normal())), rec(5, float(rng.standard_normal()))]
              for _ in range(4)]
    s1 = aggregate_seeds(series)
    s2 = aggregate_seeds(series[::-1])
    assert np.allclose(s1[1], s2[1], equal_nan=True)
    assert np.allclose(s1[2], s2[2], equal_nan=True)


def test_aggregate_misaligned_steps_rejected():
    with pytest.raises(ValueError):
        aggregate_seeds([[rec(0, 1.0)], [rec(5, 1.0)]])


def test_metrics_csv_round_trip(tmp_path):
    records = [rec(0, 1.25), rec(10, 0.5, pt=2.5)]
    path = tmp_path / "m.csv"
    write_metrics_csv(path, records)
    header, mat = read_metrics_csv(path)
    assert header == list(CSV_COLUMNS)
    assert open(path).readline().strip() == ",".join(CSV_COLUMNS)
    assert mat.shape == (2, len(CSV_COLUMNS))
    assert mat[0, CSV_COLUMNS.index("gamma")] == 1.25
    assert np.isnan(mat[0, CSV_COLUMNS.index("mu_loss_gap")])  # empty field
    assert mat[1, CSV_COLUMNS.index("function_evals_total")] == 7


def test_aggregate_csv_schema(tmp_path):
    steps, mean, stderr = aggregate_seeds([[rec(0, 1.0)], [rec(0, 3.0)]])
    path = tmp_path / "agg.csv"
    write_aggregate_csv(path, steps, mean, stderr)
    header = open(path).readline().strip().split(",")
    assert header[0] == "step"
    assert "gamma_mean" in header and "gamma_stderr" in header
    assert len(header) == 1 + 2 * (len(CSV_COLUMNS) - 1)


def test_snapshot_fields():
    q = make_quadratic(d=3, cond=2.0, seed=13)
    pop = make_population([q.x_star + 1.0, q.x_star - 1.0], objective=q)
    r = snapshot(pop, step=4, eta=0.2)
    assert r.step == 4 and r.eta == 0.2
    assert r.gamma == pytest.approx(3.0)
    assert r.mu_loss_gap == pytest.approx(q.loss(q.x_star) - q.f_star, abs=1e-12)
    assert r.mean_val_loss is None and r.mt_g is None
