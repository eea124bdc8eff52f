"""Propensity error metrics over the unique pre-transition inputs of a dataset."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .likelihood import GroupedDataset


@dataclass
class StateInventory:
    """Unique inputs ``rows`` with visit counts ``counts`` (total ``M``).

    When built with ``key_columns`` rows are unique on those columns only and
    ``rows`` holds the first full input seen for each key.
    """

    rows: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self):
        return len(self.rows)


def build_inventory(dataset: GroupedDataset, key_columns=None) -> StateInventory:
    X = dataset.event_inputs()
    if len(X) == 0:
        raise ValueError("inventory needs a non-empty dataset")
    keys = X if key_columns is None else X[:, list(key_columns)]
    _, first, inv, counts = np.unique(keys, axis=0, return_index=True, return_inverse=True, return_counts=True)
    return StateInventory(rows=X[first], counts=counts.astype(np.int64))


@dataclass
class ErrorReport:
    mae: float
    wmae: float
    mse: float
    wmse: float
    coverage: float
    rows: int
    visits: int
    per_class: list

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _metrics(abs_err, sq_err, w):
    if len(abs_err) == 0:
        return dict(mae=float("nan"), wmae=float("nan"), mse=float("nan"), wmse=float("nan"))
    p = w / w.sum()
    return dict(mae=float(abs_err.mean()), wmae=float(p @ abs_err), mse=float(sq_err.mean()), wmse=float(p @ sq_err))


def compare(estimate, truth, inventory: StateInventory) -> ErrorReport:
    """MAE/MSE over inventory rows and their visit-weighted versions.

    The per-row error averages over reaction classes. Rows where the
    estimate is undefined (NaN) are dropped and reduce ``coverage``; weights
    are renormalised over the remaining rows.
    """
    est = np.asarray(estimate(inventory.rows), dtype=np.float64)
    tru = np.asarray(truth(inventory.rows), dtype=np.float64)
    if est.shape != tru.shape:
        raise ValueError(f"estimate {est.shape} and truth {tru.shape} disagree")
    ok = ~np.isnan(est).any(axis=1)
    diff = est[ok] - tru[ok]
    w = inventory.counts[ok].astype(np.float64)
    overall = _metrics(np.abs(diff).mean(axis=1), (diff ** 2).mean(axis=1), w)
    per_class = [
        {"class": k + 1, **_metrics(np.abs(diff[:, k]), diff[:, k] ** 2, w)} for k in range(est.shape[1])
    ]
    return ErrorReport(coverage=float(ok.mean()), rows=len(inventory), visits=inventory.total,
                       per_class=per_class, **overall)


def export_scatter(estimate, truth, inventory: StateInventory) -> list:
    """One ``(class, true_rate, pred_rate, weight)`` record per (row, class)."""
    est = np.asarray(estimate(inventory.rows), dtype=np.float64)
    tru = np.asarray(truth(inventory.rows), dtype=np.float64)
    w = inventory.counts / inventory.total
    return [
        {"class": k + 1, "true_rate": float(tru[i, k]), "pred_rate": float(est[i, k]), "weight": float(w[i])}
        for k in range(est.shape[1]) for i in range(len(w))
    ]


def write_scatter_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["class", "true_rate", "pred_rate", "weight"])
        for r in records:
            pred = "" if np.isnan(r["pred_rate"]) else repr(r["pred_rate"])
            out.writerow([r["class"], repr(r["true_rate"]), pred, repr(r["weight"])])
