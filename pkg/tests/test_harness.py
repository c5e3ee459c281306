import numpy as np
import pytest
from conftest import QuadraticObjective, ZeroObjective
from scipy.optimize import minimize_scalar
from scipy.special import expit

from FedCore.diagnostics import ConvergenceTrace
from FedCore.elastic_net import PenaltyConfig
from FedCore.fed_algorithms import BaselineConfig
from FedCore.numkit import DataShard, InvalidInputError
from Simulation.harness import (TRACE_COLUMNS, ClientSelector, ExperimentConfig, ExperimentResult, RoundTrace,
                                run_experiment, should_stop, timing_metrics)


def small_config(**kwargs):
    settings = dict(m=4, k0=3, rho=0.5, epsilon=0.1, max_iterations=30, seed=9, clock='virtual', stop_rule='none')
    settings.update(kwargs)
    return ExperimentConfig(**settings)


@pytest.mark.parametrize('algorithm', ['fedepm', 'sfedavg', 'sfedprox'])
def test_same_seed_gives_identical_traces(small_shards, algorithm):
    first = run_experiment(small_config(algorithm=algorithm), small_shards).to_csv()
    again = run_experiment(small_config(algorithm=algorithm), small_shards).to_csv()
    threaded = run_experiment(small_config(algorithm=algorithm, workers=2), small_shards).to_csv()
    assert first == again == threaded
    assert first.splitlines()[0] == ','.join(TRACE_COLUMNS)
    assert '\r' not in first


def test_other_seed_changes_the_trace(small_shards):
    assert run_experiment(small_config(seed=1), small_shards).to_csv() != \
        run_experiment(small_config(seed=2), small_shards).to_csv()


def test_every_iteration_communicates_when_k0_is_one(small_shards):
    result = run_experiment(small_config(k0=1, rho=1.0, epsilon=None, max_iterations=15), small_shards)
    assert result.status == 'budget-exhausted'
    assert result.iterations == 15
    assert timing_metrics(result).cr == 15


def test_round_count_and_records(small_shards):
    result = run_experiment(small_config(k0=12, max_iterations=24), small_shards)
    assert [r.iteration for r in result.rounds] == [0, 12]
    assert len(result.records) == len(result.convergence) == 24
    frame = result.trace_frame()
    assert list(frame.columns) == TRACE_COLUMNS
    assert frame['cr'].tolist() == [1] * 12 + [2] * 12
    assert np.all(np.isfinite(frame['F'])) and np.all(np.isfinite(frame['L_surrogate']))


def test_unselected_clients_hold(small_shards):
    cfg = small_config(k0=5, max_iterations=5, epsilon=None)
    result = run_experiment(cfg, small_shards)
    selected = set(result.rounds[0].selected)
    assert len(selected) == 2
    for state in result.clients:
        if state.client_id in selected:
            assert state.grad_evals == 2
            assert np.any(state.w_local != 0)
            np.testing.assert_array_equal(state.z_uploaded, state.w_local)
        else:
            assert state.grad_evals == 1
            np.testing.assert_array_equal(state.w_local, np.zeros(5))
            np.testing.assert_array_equal(state.z_uploaded, np.zeros(5))
            assert state.mu == state.mu0


def test_noise_off_gives_infinite_snr(small_shards):
    result = run_experiment(small_config(epsilon=None, max_iterations=12), small_shards)
    assert result.snr == np.inf


def test_single_client_quadratic_reaches_its_minimiser():
    cfg = ExperimentConfig(m=1, k0=4, rho=1.0, epsilon=None, mu0=5.0, penalty=PenaltyConfig(lam=1e-9, eta=1e-9),
                           stop_rule='gradient', grad_tol=1e-12, max_iterations=2000, monitor=False)
    result = run_experiment(cfg, [QuadraticObjective([3.0])])
    assert result.status == 'converged'
    assert abs(result.w_final[0] - 3.0) < 1e-3


def test_single_client_logistic_reaches_its_minimiser():
    rng = np.random.default_rng(21)
    x = rng.standard_normal((50, 1))
    labels = (rng.random(50) < expit(1.5 * x[:, 0])).astype(float)
    shard = DataShard(rows=x, labels=labels, beta=0.001)
    oracle = minimize_scalar(lambda w: shard.value_grad(np.array([w]))[0], bounds=(-20, 20), method='bounded',
                             options={'xatol': 1e-10})

    cfg = ExperimentConfig(m=1, k0=4, rho=1.0, epsilon=None, mu0=5.0, penalty=PenaltyConfig(lam=1e-9, eta=1e-9),
                           stop_rule='gradient', grad_tol=1e-12, max_iterations=4000, monitor=False)
    result = run_experiment(cfg, [shard])
    assert result.status == 'converged'
    assert abs(result.w_final[0] - oracle.x) < 1e-3


def test_wall_clock_is_monotone(small_shards):
    result = run_experiment(small_config(clock='wall', max_iterations=12), small_shards)
    tct = [r.tct for r in result.rounds]
    assert tct == sorted(tct) and result.tct >= tct[-1] > 0


def test_shard_count_must_match(small_shards):
    with pytest.raises(InvalidInputError):
        run_experiment(small_config(m=3), small_shards)


def test_iid_selection():
    selector = ClientSelector('iid', np.random.default_rng(0), m=10, rho=0.5)
    for _ in range(20):
        chosen = selector.select_clients()
        assert len(set(chosen)) == 5
        assert list(chosen) == sorted(chosen)
    assert not selector.s0_enforced


def test_coverage_selection_covers_every_window():
    selector = ClientSelector('coverage', np.random.default_rng(0), m=4, rho=0.5, s0=2)
    picks = [set(selector.select_clients()) for _ in range(8)]
    for first, second in zip(picks, picks[1:]):
        assert first | second == {0, 1, 2, 3}
    assert selector.s0_enforced
    with pytest.raises(InvalidInputError):
        ClientSelector('coverage', np.random.default_rng(0), m=4, rho=0.5, s0=5)
    with pytest.raises(InvalidInputError):
        ClientSelector('roulette', np.random.default_rng(0), m=4, rho=0.5)


def test_should_stop():
    assert should_stop([5.0], 1e-7, n=3)
    assert not should_stop([5.0], 1e-7, n=3, rule='none')
    assert not should_stop([1.0, 1.0, 1.0], 1.0, n=3)
    assert should_stop([2.0, 1.0, 1.0, 1.0, 1.0], 1.0, n=3)
    assert not should_stop([1.0, 1.0, 1.0, 1.0], 1.0, n=3, rule='gradient')
    assert not should_stop([1.0, 2.0, 1.0, 2.0], 1.0, n=3)


def test_timing_metrics_average_over_periods():
    rounds = [RoundTrace(tau=0, iteration=0, f_over_m=1.0, grad_sq=1.0, cr=1, tct=0.5, selected=(0,),
                         lct=1.0, lct_max=2.0, period_iterations=4),
              RoundTrace(tau=1, iteration=4, f_over_m=1.0, grad_sq=1.0, cr=2, tct=1.0, selected=(1,),
                         lct=3.0, lct_max=4.0, period_iterations=4),
              RoundTrace(tau=2, iteration=8, f_over_m=1.0, grad_sq=1e-9, cr=3, tct=1.5, selected=(0,))]
    result = ExperimentResult(w_final=np.zeros(1), rounds=rounds, convergence=ConvergenceTrace(), records=[],
                              status='converged', clients=[], snr=np.inf, iterations=9, tct=1.5)
    assert timing_metrics(result) == (3, 1.5, 2.0, 3.0)


def test_config_validation():
    cfg = ExperimentConfig(m=50, rho=0.5, k0=12)
    assert cfg.penalty == PenaltyConfig.from_rho(50, 0.5, 12)
    assert cfg.n_selected == 25
    synced = ExperimentConfig(k0=4, penalty=PenaltyConfig(lam=1.0, eta=2.0, k0=1))
    assert synced.penalty.k0 == 4
    assert not ExperimentConfig(epsilon=None).dp.enabled
    for bad in (dict(rho=0.0), dict(rho=1.5), dict(epsilon=0.0), dict(algorithm='fedsgd'), dict(k0=0),
                dict(max_iterations=5), dict(s0=0), dict(clock='cpu'), dict(stop_rule='never')):
        with pytest.raises(InvalidInputError):
            ExperimentConfig(**bad)


def test_rounds_counted_up_to_three_periods(small_shards):
    result = run_experiment(small_config(k0=3, max_iterations=10, epsilon=None), small_shards)
    assert [r.iteration for r in result.rounds] == [0, 3, 6, 9]
    assert timing_metrics(result).cr == 4


def test_local_time_grows_with_inner_steps(small_shards):
    lct = [timing_metrics(run_experiment(small_config(algorithm='sfedprox', epsilon=None,
                                                      baseline=BaselineConfig(inner_steps=steps)),
                                         small_shards)).lct
           for steps in (3, 6)]
    assert lct[1] > lct[0] > 0
    assert lct[1] == pytest.approx(2 * lct[0])


def test_zero_work_clients_take_no_local_time():
    cfg = small_config(m=4, epsilon=None, clock='wall', monitor=False)
    result = run_experiment(cfg, [ZeroObjective(5) for _ in range(4)])
    assert 0.0 <= timing_metrics(result).lct < 1e-2
    np.testing.assert_array_equal(result.w_final, np.zeros(5))
