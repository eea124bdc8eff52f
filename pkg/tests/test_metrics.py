import csv
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nctmc.core import Trajectory
from nctmc.experiments.truth import BirthDeathTruth, birth_death_network
from nctmc.likelihood import GroupedDataset, group_transitions
from nctmc.metrics import StateInventory, build_inventory, compare, export_scatter, write_scatter_csv
from nctmc.models import FunctionModel


def table(values):
    """Model returning a fixed rate row per inventory row index stored in column 0."""
    values = np.asarray(values, dtype=np.float64)
    return FunctionModel(lambda X: values[X[:, 0].astype(int)], values.shape[1])


def test_inventory_counts():
    net = birth_death_network()
    t = Trajectory(net, [0, 1, 2, 3], [[1], [2], [1], [2]], np.zeros((4, 0)), [0, 1, 0, -1])
    inv = build_inventory(group_transitions([t], net))
    rows = {tuple(r): int(c) for r, c in zip(inv.rows.tolist(), inv.counts)}
    assert rows == {(1.0,): 2, (2.0,): 1}
    assert inv.total == 3 == group_transitions([t], net).transition_count


def test_single_row_inventory():
    net = birth_death_network()
    t = Trajectory(net, [0, 1, 2], [[1], [2], [1]], np.zeros((3, 0)), [0, 1, -1])
    ds = group_transitions([t], net)
    inv = build_inventory(GroupedDataset(net, [ds.inputs[0], np.zeros((0, 1))], [ds.sojourns[0], np.zeros(0)],
                                         np.zeros((0, 1)), np.zeros(0)))
    assert len(inv) == 1 and inv.total == 1


def test_hand_example():
    inv = StateInventory(rows=np.array([[0.0], [1.0]]), counts=np.array([9, 1]))
    truth = table([[1.0, 1.0], [1.0, 1.0]])
    # per-row class-averaged errors 1 and 3
    est = table([[2.0, 0.0], [4.0, -2.0]])
    r = compare(est, truth, inv)
    assert r.mae == pytest.approx(2.0) and r.wmae == pytest.approx(1.2)
    assert r.mse == pytest.approx((1 + 9) / 2) and r.wmse == pytest.approx(0.9 * 1 + 0.1 * 9)
    assert r.mae / r.wmae > 1
    assert r.coverage == 1.0 and r.visits == 10 and r.rows == 2


def test_perfect_estimate():
    inv = StateInventory(rows=np.array([[0.0], [1.0]]), counts=np.array([3, 4]))
    m = table([[1.0, 2.0], [3.0, 4.0]])
    r = compare(m, m, inv)
    assert (r.mae, r.wmae, r.mse, r.wmse) == (0.0, 0.0, 0.0, 0.0)
    assert all(rec["true_rate"] == rec["pred_rate"] for rec in export_scatter(m, m, inv))


def test_missing_rows_reduce_coverage():
    inv = StateInventory(rows=np.array([[0.0], [1.0]]), counts=np.array([1, 3]))
    truth = table([[1.0], [1.0]])
    est = table([[np.nan], [3.0]])
    r = compare(est, truth, inv)
    assert r.coverage == 0.5
    assert r.mae == 2.0 and r.wmae == 2.0


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10), st.integers(1, 20)), min_size=1, max_size=15),
       st.integers(0, 2**32 - 1))
def test_metric_properties(rows, seed):
    n = len(rows)
    truth = table([[r[0]] for r in rows])
    est = table([[r[1]] for r in rows])
    counts = np.array([r[2] for r in rows])
    inv = StateInventory(rows=np.arange(n, dtype=float)[:, None], counts=counts)
    rep = compare(est, truth, inv)
    e = np.array([abs(r[1] - r[0]) for r in rows])
    assert e.min() - 1e-9 <= rep.wmae <= e.max() + 1e-9
    assert min(rep.mae, rep.wmae, rep.mse, rep.wmse) >= 0
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = compare(est, truth, StateInventory(rows=inv.rows[perm], counts=counts[perm]))
    assert shuffled.wmae == pytest.approx(rep.wmae, rel=1e-12, abs=1e-12)
    assert shuffled.mse == pytest.approx(rep.mse, rel=1e-12, abs=1e-12)
    equal = compare(est, truth, StateInventory(rows=inv.rows, counts=np.full(n, 4)))
    assert equal.wmae == pytest.approx(equal.mae, rel=1e-12, abs=1e-15)
    assert equal.wmse == pytest.approx(equal.mse, rel=1e-12, abs=1e-15)


def test_scatter_records(tmp_path):
    inv = StateInventory(rows=np.array([[0.0], [1.0], [2.0]]), counts=np.array([1, 2, 5]))
    truth = table([[1.0, 2.0]] * 3)
    est = table([[1.5, 2.0], [1.0, 2.5], [0.5, 2.0]])
    recs = export_scatter(est, truth, inv)
    assert len(recs) == 3 * 2
    for k in (1, 2):
        assert sum(r["weight"] for r in recs if r["class"] == k) == pytest.approx(1.0)
    write_scatter_csv(tmp_path / "s.csv", recs)
    lines = list(csv.reader(open(tmp_path / "s.csv")))
    assert lines[0] == ["class", "true_rate", "pred_rate", "weight"]
    assert lines[1] == ["1", "1.0", "1.5", "0.125"]


def test_report_json():
    inv = StateInventory(rows=np.array([[0.0]]), counts=np.array([1]))
    r = compare(table([[2.0]]), table([[1.0]]), inv)
    d = json.loads(r.to_json())
    assert d["mae"] == 1.0 and d["per_class"][0]["class"] == 1


def test_shape_mismatch():
    inv = StateInventory(rows=np.array([[0.0]]), counts=np.array([1]))
    with pytest.raises(ValueError):
        compare(table([[1.0, 2.0]]), table([[1.0]]), inv)
