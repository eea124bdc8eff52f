import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nctmc.core import ReactionNetwork, Trajectory
from nctmc.errors import NoMatchingReaction, NonFiniteLoss, NonPositivePropensity
from nctmc.estimators import build_glm
from nctmc.experiments.truth import BirthDeathTruth, birth_death_network
from nctmc.likelihood import (CompressedData, DeltaLoss, GradNorm, History, Plateau, TrainingConfig,
                              group_transitions, likelihood_sequential, nll, stop_rule_from_dict, train)
from nctmc.models import FunctionModel
from nctmc.ssa import ConstantCovariates, PeriodicDiscretized, SimulationConfig, simulate

from conftest import mass_action_model, random_network
from gradcheck import check


def const(*rates):
    return FunctionModel(lambda X: np.tile(rates, (len(X), 1)), len(rates))


def bd_traj(times, states, rx, cov=None):
    n = len(times)
    cov = np.zeros((n, 0)) if cov is None else np.asarray(cov, dtype=float).reshape(n, -1)
    return Trajectory(birth_death_network(), times, np.reshape(states, (-1, 1)), cov, rx)


def random_dataset(seed, n_traj=3, length=25):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    truth = mass_action_model(net, rng.uniform(0.2, 2.0, net.reaction_count))
    trajs = []
    for i in range(n_traj):
        init = tuple(int(v) for v in rng.integers(1, 6, net.species_count))
        cov = ConstantCovariates((float(rng.uniform(0, 1)),))
        trajs.append(simulate(net, truth, SimulationConfig(init, seed=seed + i, max_transitions=length,
                                                           schedule=cov)))
    return net, trajs


def positive_model(net, seed):
    """Random strictly positive smooth rates of the full input."""
    rng = np.random.default_rng(seed)
    k = net.classes.class_count
    W = rng.normal(scale=0.3, size=(net.species_count + 1, k))
    b = rng.normal(size=k)
    return FunctionModel(lambda X: np.log1p(np.exp(X @ W + b)) + 0.05, k)


def test_hand_example():
    t = bd_traj([0.0, 0.5], [4, 3], [1, -1])
    ds = group_transitions([t], t.network)
    assert nll(const(1.0, 3.0), ds) == pytest.approx(0.5 * 4 - math.log(3), rel=1e-15)
    assert 0.5 * 4 - math.log(3) == pytest.approx(0.901388, abs=1e-6)


def test_grouping_counts():
    t = bd_traj([0.0, 1.0, 2.5, 3.0], [2, 3, 2, 3], [0, 1, 0, -1])
    ds = group_transitions([t], t.network)
    assert [len(x) for x in ds.inputs] == [2, 1]
    assert ds.transition_count == 3
    np.testing.assert_array_equal(ds.sojourns[0], [1.0, 0.5])
    np.testing.assert_array_equal(ds.inputs[1], [[3.0]])


def test_empty_trajectory():
    t = bd_traj([0.0], [2], [-1])
    ds = group_transitions([t], t.network)
    assert [len(x) for x in ds.inputs] == [0, 0] and ds.transition_count == 0
    assert nll(const(1.0, 1.0), ds) == 0.0
    assert likelihood_sequential(const(1.0, 1.0), t) == 0.0


def test_concatenation_is_row_union():
    a = bd_traj([0.0, 1.0, 2.0], [2, 3, 2], [0, 1, -1])
    b = bd_traj([0.0, 0.3], [7, 8], [0, -1])
    both = group_transitions([a, b], a.network)
    sep = [group_transitions([x], a.network) for x in (a, b)]
    for k in range(2):
        np.testing.assert_array_equal(both.inputs[k], np.vstack([s.inputs[k] for s in sep]))
        np.testing.assert_array_equal(both.sojourns[k], np.concatenate([s.sojourns[k] for s in sep]))
    m = const(0.7, 1.3)
    assert nll(m, both) == pytest.approx(nll(m, sep[0]) + nll(m, sep[1]), rel=1e-14)


def test_censored_records_add_exposure_only():
    t = bd_traj([0.0, 1.0, 1.5, 2.0], [5, 5, 6, 6], [-1, 0, -1, -1], cov=[0.1, 0.2, 0.2, 0.2])
    ds = group_transitions([t], t.network)
    assert ds.transition_count == 1
    np.testing.assert_array_equal(ds.censored_sojourns, [1.0, 0.5])
    m = const(2.0, 1.0)
    assert nll(m, ds) == pytest.approx(3.0 * 2.0 - math.log(2.0), rel=1e-15)
    assert likelihood_sequential(m, t) == pytest.approx(nll(m, ds), rel=1e-15)


def test_reaction_without_change_is_rejected():
    t = bd_traj([0.0, 1.0], [5, 5], [0, -1])
    with pytest.raises(NoMatchingReaction):
        group_transitions([t], t.network)


def test_non_positive_rate():
    t = bd_traj([0.0, 1.0], [5, 6], [0, -1])
    ds = group_transitions([t], t.network)
    with pytest.raises(NonPositivePropensity):
        nll(const(0.0, 1.0), ds)
    with pytest.raises(NonPositivePropensity):
        likelihood_sequential(const(0.0, 1.0), t)


@given(st.integers(0, 2**31))
def test_grouped_equals_sequential(seed):
    net, trajs = random_dataset(seed)
    model = positive_model(net, seed)
    ds = group_transitions(trajs, net)
    seq = sum(likelihood_sequential(model, t) for t in trajs)
    assert nll(model, ds) == pytest.approx(seq, rel=1e-10, abs=1e-12)


@given(st.integers(0, 2**31))
def test_order_invariance_and_split_additivity(seed):
    net, trajs = random_dataset(seed, n_traj=4)
    model = positive_model(net, seed + 1)
    ref = nll(model, group_transitions(trajs, net))
    assert nll(model, group_transitions(trajs[::-1], net)) == pytest.approx(ref, rel=1e-12, abs=1e-12)
    halves = [group_transitions(trajs[:2], net), group_transitions(trajs[2:], net)]
    assert sum(nll(model, h) for h in halves) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_doubling_sojourns_is_linear():
    t = simulate(birth_death_network(), BirthDeathTruth(), SimulationConfig((30,), seed=1, max_transitions=40,
                                                                           schedule=ConstantCovariates((0.1,))))
    doubled = Trajectory(t.network, t.times * 2, t.states, t.covariates, t.reactions)
    m = BirthDeathTruth()
    extra = float(t.sojourns @ m(t.inputs[:-1]).sum(axis=1))
    assert likelihood_sequential(m, doubled) - likelihood_sequential(m, t) == pytest.approx(extra, rel=1e-12)


@given(st.integers(0, 2**31))
def test_compressed_loss_matches_nll(seed):
    net, trajs = random_dataset(seed)
    ds = group_transitions(trajs, net)
    glm = build_glm(ds)
    rng = np.random.default_rng(seed)
    glm.params = {k: rng.normal(scale=0.3, size=v.shape) for k, v in glm.params.items()}
    loss = float(ds.compressed().loss_graph(glm, glm.params).data)
    assert loss == pytest.approx(nll(glm, ds), rel=1e-10)


def test_key_column_compression():
    net = birth_death_network()
    t = simulate(net, BirthDeathTruth(), SimulationConfig((200,), seed=3, max_transitions=500,
                                                        schedule=PeriodicDiscretized(365.24, 0.1)))
    ds = group_transitions([t], net)
    full, keyed = ds.compressed(), ds.compressed([1])
    assert len(keyed) == len(np.unique(ds.event_inputs()[:, 1]))
    assert keyed.W.sum() == pytest.approx(full.W.sum())
    np.testing.assert_array_equal(keyed.N.sum(axis=0), full.N.sum(axis=0))
    glm = build_glm(ds, input_columns=[1])
    glm.params = {"weight": np.array([[0.4], [-0.2]]), "bias": np.array([0.1, 0.3])}
    a = float(full.loss_graph(glm, glm.params).data)
    b = float(keyed.loss_graph(glm, glm.params).data)
    assert a == pytest.approx(b, rel=1e-12)


def test_full_loss_gradient():
    net, trajs = random_dataset(5, n_traj=2, length=30)
    ds = group_transitions(trajs, net)
    data = CompressedData.from_grouped(ds)
    glm = build_glm(ds)
    rng = np.random.default_rng(0)
    params = {k: rng.normal(scale=0.3, size=v.shape) for k, v in glm.params.items()}
    assert check(lambda p: data.loss_graph(glm, p), params) < 1e-5


# -- training ----------------------------------------------------------------

def _constant_data(n=10000, rate=2.0, seed=0):
    net = ReactionNetwork([[0]], [[1]])
    model = FunctionModel(lambda X: np.full((len(X), 1), rate), 1)
    t = simulate(net, model, SimulationConfig((0,), seed=seed, max_transitions=n))
    return net, t


def test_constant_rate_recovers_counting_mle():
    net, t = _constant_data()
    ds = group_transitions([t], net)
    mle = ds.transition_count / ds.total_exposure
    glm = build_glm(ds, input_columns=[])
    # start away from the optimum
    glm.params["bias"][:] = 1.5
    glm, hist = train(glm, ds, TrainingConfig(max_epochs=3000, stop=GradNorm(1e-6),
                                              optimizer={"name": "adam", "lr": 0.05}))
    est = float(glm(np.zeros((1, 1)))[0, 0])
    assert est == pytest.approx(mle, rel=0.01)
    assert mle == pytest.approx(2.0, rel=0.05)
    assert hist.nll[-1] < hist.nll[0]


def test_training_is_deterministic():
    net, trajs = random_dataset(9, n_traj=6)
    ds = group_transitions(trajs, net)
    cfg = TrainingConfig(max_epochs=30, batching="per_trajectory", optimizer={"name": "adam", "lr": 0.01},
                         seed=4, validation_fraction=0.3)
    runs = [train(build_glm(ds), trajs, cfg) for _ in range(2)]
    assert runs[0][1].nll == runs[1][1].nll
    assert runs[0][1].validation_nll == runs[1][1].validation_nll
    for k in runs[0][0].params:
        np.testing.assert_array_equal(runs[0][0].params[k], runs[1][0].params[k])


def test_per_trajectory_updates_once_per_trajectory(monkeypatch):
    import nctmc.likelihood as lik
    from nctmc.nn import SGD

    steps = []

    class Counting(SGD):
        def step(self, params, grads):
            steps.append(1)
            return super().step(params, grads)

    monkeypatch.setattr(lik, "make_optimizer", lambda **kw: Counting(1e-3))
    net, trajs = random_dataset(2, n_traj=5)
    train(build_glm(group_transitions(trajs, net)), trajs, TrainingConfig(max_epochs=3, batching="per_trajectory"))
    assert len(steps) == 3 * sum(1 for t in trajs if t.transition_count)


def test_best_params_and_stop_rules():
    net, trajs = random_dataset(3, n_traj=4)
    ds = group_transitions(trajs, net)
    _, h = train(build_glm(ds), ds, TrainingConfig(max_epochs=500, stop=DeltaLoss(1e-3),
                                                  optimizer={"name": "adam", "lr": 0.05}))
    assert h.stopped_by == "delta_loss" and abs(h.nll[-1] - h.nll[-2]) < 1e-3
    _, h = train(build_glm(ds), ds, TrainingConfig(max_epochs=5, stop=GradNorm(1e-12)))
    assert h.stopped_by == "max_epochs" and len(h.epoch) == 5
    # a huge step size makes the loss bounce; plateau then stops
    model, h = train(build_glm(ds), ds, TrainingConfig(max_epochs=400, stop=Plateau(10),
                                                      optimizer={"name": "sgd", "lr": 0.05}))
    assert h.best_epoch == int(np.argmin(h.nll))
    assert nll(model, ds) == pytest.approx(min(h.nll), rel=1e-12)


def test_validation_selects_on_holdout():
    net, trajs = random_dataset(4, n_traj=10)
    model, h = train(build_glm(group_transitions(trajs, net)), trajs,
                     TrainingConfig(max_epochs=60, optimizer={"name": "adam", "lr": 0.05}, validation_fraction=0.3))
    assert len(h.validation_nll) == len(h.nll)
    assert h.best_epoch == int(np.argmin(h.validation_nll))
    with pytest.raises(ValueError):
        train(build_glm(group_transitions(trajs, net)), group_transitions(trajs, net),
              TrainingConfig(validation_fraction=0.3))


def test_non_finite_loss():
    net, trajs = random_dataset(6)
    ds = group_transitions(trajs, net)
    glm = build_glm(ds, link="exp")
    glm.params["bias"][:] = -800.0
    with pytest.raises(NonFiniteLoss) as err:
        train(glm, ds, TrainingConfig(max_epochs=3))
    assert err.value.epoch == 0


def test_config_round_trip_and_validation():
    cfg = TrainingConfig.from_dict({"max_epochs": 7, "stop": {"kind": "plateau", "window": 3},
                                    "batching": "per_trajectory", "validation_fraction": 0.25})
    assert cfg.stop == Plateau(3)
    assert TrainingConfig.from_dict(cfg.to_dict()) == cfg
    assert stop_rule_from_dict({"kind": "delta_loss", "threshold": 1e-10}) == DeltaLoss(1e-10)
    for bad in ({"max_epochs": 0}, {"batching": "minibatch"}, {"validation_fraction": 1.0},
                {"stop": {"kind": "grad_norm", "threshold": 0}}, {"stop": {"kind": "nope"}}):
        with pytest.raises(ValueError):
            TrainingConfig.from_dict(bad)


def test_history_csv(tmp_path):
    h = History(epoch=[0, 1], nll=[3.0, 2.5], grad_norm=[1.0, 0.5], wall_time=[0.01, 0.02])
    h.write_csv(tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["epoch", "nll", "grad_norm", "wall_time"]
    assert rows[2][:3] == ["1", "2.5", "0.5"]
