import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from nctmc.core import ReactionNetwork, trajectory_lines, validate_trajectory
from nctmc.errors import AbsorbedState, NegativePropensity
from nctmc.experiments.truth import (BirthDeathTruth, TemperatureCRNTruth, birth_death_network,
                                     temperature_crn_network)
from nctmc.models import FunctionModel
from nctmc.ssa import (ConstantCovariates, NoCovariates, PeriodicDiscretized, SimulationConfig, next_event,
                       schedule_from_dict, simulate, simulate_batch, write_batch)

from conftest import mass_action_model, random_network


class FixedDraws:
    """Stands in for a Generator: ``random(2)`` returns preset uniforms."""

    def __init__(self, *pairs):
        self.pairs = list(pairs)

    def random(self, n):
        return np.array(self.pairs.pop(0), dtype=np.float64)


def const(*rates):
    return FunctionModel(lambda X: np.tile(rates, (len(X), 1)), len(rates))


def test_next_event_closed_form():
    # v1 = 1 - u0 = e^-1 gives tau = log(e) / 2
    tau, k = next_event([1], [], const(2.0), FixedDraws((1 - math.exp(-1), 0.5)))
    assert tau == pytest.approx(0.5, rel=1e-15)
    assert k == 0


def test_next_event_cumulative_rule():
    assert next_event([1], [], const(1.0, 3.0), FixedDraws((0.5, 0.1)))[1] == 0
    assert next_event([1], [], const(1.0, 3.0), FixedDraws((0.5, 0.9)))[1] == 1
    assert next_event([1], [], const(1.0, 0.0, 3.0), FixedDraws((0.5, 0.999999)))[1] == 2


def test_next_event_errors():
    with pytest.raises(AbsorbedState):
        next_event([0], [], const(0.0, 0.0), np.random.default_rng(0))
    with pytest.raises(NegativePropensity):
        next_event([0], [], const(1.0, -0.5), np.random.default_rng(0))
    with pytest.raises(NegativePropensity):
        next_event([0], [], const(1.0, float("nan")), np.random.default_rng(0))


def test_pure_death_absorbs():
    net = ReactionNetwork([[1]], [[0]])
    traj = simulate(net, mass_action_model(net, [1.0]), SimulationConfig((1,), seed=3, max_transitions=10))
    assert traj.transition_count == 1
    assert traj.states[-1, 0] == 0
    assert traj.absorbed
    assert validate_trajectory(traj) == []


def test_crn_first_event_is_a_birth():
    net = temperature_crn_network()
    truth = TemperatureCRNTruth()
    for seed in range(20):
        traj = simulate(net, truth, SimulationConfig((0, 0), seed=seed, max_transitions=1,
                                                     schedule=ConstantCovariates((273.0,))))
        assert net.classes.class_of[traj.reactions[0]] in (2, 3)


def test_birth_death_sojourn_means():
    # exposure / events per covariate value estimates 1 / total rate; censored
    # pieces at breakpoints contribute exposure only
    net = birth_death_network()
    truth = BirthDeathTruth()
    traj = simulate(net, truth, SimulationConfig((50000,), seed=11, max_transitions=5000,
                                                 schedule=PeriodicDiscretized(365.24, 0.1)))
    assert traj.transition_count == 5000
    assert validate_trajectory(traj) == []
    s = traj.covariates[:-1, 0]
    T = traj.sojourns
    moved = traj.reactions[:-1] >= 0
    for v in np.unique(s):
        sel = s == v
        n = int(moved[sel].sum())
        if n < 30:
            continue
        est = T[sel].sum() / n
        expected = 1.0 / truth(np.array([[50000.0, v]])).sum()
        assert abs(est - expected) < 3 * expected / math.sqrt(n), v


def test_periodic_schedule_values_and_breakpoints():
    sched = PeriodicDiscretized(10.0, 0.1)
    values = {round(sched.value_at(t), 10) for t in np.linspace(0, 30, 3001)}
    assert values <= {round(0.1 * i, 10) for i in range(11)}
    assert sched.value_at(0.0) == 0.0 and sched.value_at(0.96) == 0.1 and sched.value_at(9.96) == 1.0
    segs = sched.segments(0.0)
    first = [next(segs) for _ in range(12)]
    assert [round(float(g.value[0]), 10) for g in first[:11]] == [round(0.1 * i, 10) for i in range(11)]
    assert first[0].end == pytest.approx(0.5) and first[1].end == pytest.approx(1.5)
    assert first[10].end == pytest.approx(10.0) and first[11].value[0] == 0.0
    assert schedule_from_dict(sched.to_dict()) == sched


def test_censored_breakpoint_records():
    net = birth_death_network()
    traj = simulate(net, BirthDeathTruth(), SimulationConfig((100,), seed=2, t_max=100.0,
                                                             schedule=PeriodicDiscretized(365.24, 0.1)))
    assert traj.times[-1] == 100.0
    censored = np.flatnonzero(traj.reactions[:-1] < 0)
    # first breakpoint is at s = 0.05
    assert traj.times[censored[0] + 1] == pytest.approx(0.05 * 365.24)
    np.testing.assert_array_equal(traj.states[censored], traj.states[censored + 1])
    assert validate_trajectory(traj) == []


def test_t_max_stop():
    net = birth_death_network()
    traj = simulate(net, BirthDeathTruth(), SimulationConfig((10,), seed=0, t_max=3.0,
                                                             schedule=ConstantCovariates((0.3,))))
    assert traj.times[-1] == 3.0 and traj.times[-2] < 3.0


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig((1,), seed=0)
    with pytest.raises(ValueError):
        SimulationConfig((-1,), seed=0, max_transitions=3)
    cfg = SimulationConfig((3, 4), seed=9, max_transitions=5, schedule=ConstantCovariates((271.0,)))
    assert SimulationConfig.from_dict(cfg.to_dict()) == cfg


def test_deterministic_given_seed():
    net = birth_death_network()
    cfg = SimulationConfig((50,), seed=77, max_transitions=300, schedule=PeriodicDiscretized(365.24, 0.1))
    a = simulate(net, BirthDeathTruth(), cfg)
    b = simulate(net, BirthDeathTruth(), cfg)
    assert list(trajectory_lines(a)) == list(trajectory_lines(b))


def test_batch_matches_standalone_and_workers(tmp_path):
    net = temperature_crn_network()
    truth = TemperatureCRNTruth()
    configs = [SimulationConfig((i % 5, 2), seed=i, max_transitions=40, schedule=ConstantCovariates((273.0,)))
               for i in range(1, 13)]
    one = simulate_batch(net, truth, configs, workers=1)
    two = simulate_batch(net, truth, configs, workers=2)
    assert not one.errors
    for cfg, a, b in zip(configs, one, two):
        ref = list(trajectory_lines(simulate(net, truth, cfg)))
        assert list(trajectory_lines(a)) == ref == list(trajectory_lines(b))
    write_batch(tmp_path / "a", net, configs, one, {"m": 1})
    write_batch(tmp_path / "b", net, configs, two, {"m": 1})
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    assert len(simulate_batch(net, truth, [])) == 0


def test_batch_collects_errors():
    net = birth_death_network()
    bad = FunctionModel(lambda X: np.array([[1.0, -1.0]]), 2)
    res = simulate_batch(net, bad, [SimulationConfig((1,), seed=0, max_transitions=2)])
    assert res.trajectories == [None]
    assert isinstance(res.errors[0], NegativePropensity)


@given(st.integers(0, 2**32 - 1))
def test_simulated_paths_are_valid(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    model = mass_action_model(net, rng.uniform(0.1, 2.0, net.reaction_count))
    init = tuple(int(v) for v in rng.integers(0, 6, net.species_count))
    traj = simulate(net, model, SimulationConfig(init, seed=seed, max_transitions=60))
    assert validate_trajectory(traj) == []
    assert (traj.states >= 0).all()


def _fixed_point_samples(model, x, n, seed):
    rng = np.random.default_rng(seed)
    taus = np.empty(n)
    ks = np.empty(n, dtype=np.int64)
    for i in range(n):
        taus[i], ks[i] = next_event(x[:1], x[1:], model, rng)
    return taus, ks


def test_sojourn_exponential_and_class_frequencies():
    truth = BirthDeathTruth()
    x = np.array([40.0, 0.3])
    alpha = truth(x[None, :])[0]
    taus, ks = _fixed_point_samples(truth, x, 5000, 4)
    assert stats.kstest(taus, "expon", args=(0, 1 / alpha.sum())).pvalue > 0.01
    counts = np.bincount(ks, minlength=2)
    assert stats.chisquare(counts, 5000 * alpha / alpha.sum()).pvalue > 0.01
