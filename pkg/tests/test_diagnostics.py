import math

import numpy as np
import pytest
from conftest import QuadraticObjective, ZeroObjective

from FedCore.diagnostics import (ConvergenceTrace, MonitorSettings, MonitorSnapshot, lambda_star, monitor_step,
                                 noise_drift, penalized_objective, stationarity_residual_original,
                                 stationarity_residual_penalized)
from FedCore.elastic_net import PenaltyConfig
from FedCore.numkit import InvalidInputError
from FedCore.privacy import DpConfig

CENTERS = np.array([[1.0, 0.0], [-1.0, 2.0], [3.0, 1.0]])


@pytest.fixture
def quadratics():
    return [QuadraticObjective(c) for c in CENTERS]


def settings_for(shards, c=1e-8, dp=None, s0=2, s0_nominal=False):
    m = len(shards)
    return MonitorSettings(shards=shards, penalty=PenaltyConfig(lam=0.5, eta=1.0, k0=4),
                           dp=DpConfig.off() if dp is None else dp, mu0=np.full(m, 0.05), c=np.full(m, c),
                           alpha=np.full(m, 1.001), s0=s0, s0_nominal=s0_nominal)


def test_penalized_objective_single_zero_shard():
    cfg = PenaltyConfig(lam=1.0, eta=2.0)
    assert penalized_objective(np.zeros(1), [np.ones(1)], [ZeroObjective(1)], cfg) == 2.0
    with pytest.raises(InvalidInputError):
        penalized_objective(np.zeros(1), [np.ones(1), np.ones(1)], [ZeroObjective(1)], cfg)


def test_lambda_star(quadratics):
    w_star = CENTERS.mean(axis=0)
    assert lambda_star(w_star, quadratics) == pytest.approx(np.abs(w_star - CENTERS).max())


def test_original_residual_vanishes_at_the_consensus_optimum(quadratics):
    w = CENTERS.mean(axis=0)
    W = [w.copy() for _ in quadratics]
    pis = [c - w for c in CENTERS]
    assert stationarity_residual_original(w, W, pis, quadratics) < 1e-12
    assert stationarity_residual_original(w + 0.1, W, pis, quadratics) == pytest.approx(0.1 * math.sqrt(2))


def test_exact_penalty_threshold(quadratics):
    # above lambda* the consensus optimum is stationary for the penalized problem, below it is not
    w = CENTERS.mean(axis=0)
    W = [w.copy() for _ in quadratics]
    threshold = lambda_star(w, quadratics)
    above = PenaltyConfig(lam=threshold * 1.01, eta=0.1)
    below = PenaltyConfig(lam=threshold * 0.5, eta=0.1)
    assert stationarity_residual_penalized(w, W, quadratics, above) < 1e-12
    assert stationarity_residual_penalized(w, W, quadratics, below) > 0.1


def test_monitor_records_each_iteration(quadratics):
    settings = settings_for(quadratics)
    trace = ConvergenceTrace()
    W_prev = np.zeros((3, 2))
    W = np.ones((3, 2))
    snapshot = MonitorSnapshot(w_global=np.ones(2), w_global_prev=np.zeros(2), W=W, W_prev=W_prev,
                               delta_inf=np.ones(3))
    monitor_step(trace, snapshot, [1.0, 1.0, 1.0], settings, 0)
    assert len(trace) == 1
    assert trace.F[0] == pytest.approx(penalized_objective(np.ones(2), W, quadratics, settings.penalty))
    assert trace.dW_sq[0] == 6.0
    assert trace.dw_global_sq[0] == 2.0
    # DP off: only the r^2 decay term is added
    decay = 3 * 1.0 / (2 * 0.05 * 1e-8 * 0.001 * 1.001)
    assert trace.L_surrogate[0] == pytest.approx(trace.F[0] + decay, rel=1e-9)
    assert not trace.flags

    with pytest.raises(InvalidInputError):
        monitor_step(trace, snapshot, [1.0, 1.0, 1.0], settings, 5)


def test_monitor_flags(quadratics):
    trace = ConvergenceTrace()
    snapshot = MonitorSnapshot(w_global=np.zeros(2), w_global_prev=np.zeros(2), W=np.zeros((3, 2)),
                               W_prev=np.zeros((3, 2)), delta_inf=np.zeros(3))
    monitor_step(trace, snapshot, [1.0, 1.0, 1.0], settings_for(quadratics, c=0.0, s0_nominal=True), 0)
    assert math.isnan(trace.L_surrogate[0])
    assert trace.flags == {'L-undefined: c_i = 0', 's0-nominal'}


def test_noise_drift(quadratics):
    assert np.all(noise_drift(np.ones(3), 5, settings_for(quadratics), 2) == 0)
    settings = settings_for(quadratics, dp=DpConfig(epsilon=0.1))
    early = noise_drift(np.ones(3), 5, settings, 2)
    late = noise_drift(np.ones(3), 500, settings, 2)
    assert np.all(early > late) and np.all(late > 0)
    # first term linear in delta, second quadratic
    doubled = noise_drift(2 * np.ones(3), 5, settings, 2)
    assert np.all(doubled < 4 * early) and np.all(doubled > 2 * early)


def test_exact_penalty_on_three_scalar_quadratics():
    shards = [QuadraticObjective([a]) for a in (0.0, 2.0, 4.0)]
    w = np.array([2.0])
    W = [w.copy() for _ in shards]
    assert lambda_star(w, shards) == 2.0
    assert stationarity_residual_penalized(w, W, shards, PenaltyConfig(lam=2.0, eta=1.0)) <= 1e-10
    assert stationarity_residual_penalized(w, W, shards, PenaltyConfig(lam=1.0, eta=1.0)) >= 0.5


def test_lambda_star_scales_with_the_objectives():
    w = np.array([0.5, -1.0])
    base = lambda_star(w, [QuadraticObjective(c) for c in CENTERS])
    scaled = lambda_star(w, [QuadraticObjective(c, a=3.0) for c in CENTERS])
    assert scaled == pytest.approx(3.0 * base)
