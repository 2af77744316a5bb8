"""Exact grouped Shapley attribution of forecasts, plus the hourly
attention-weight profile.

A coalition takes whole feature groups (all of a one-hot group's columns,
across every timestep of the window) from the test instance; everything
else comes from the background instance. With the default five semantic
groups the exact enumeration needs only 2^5 = 32 model evaluations, so no
sampling approximation is involved and the Shapley axioms hold to float
precision.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .errors import ConfigError, ShapeError
from .features import FeatureSchema, WindowedDataset
from .ingest import STEP
from .lstm_att import ModelParams, forward_batch
from .util import fmt_float

MAX_EXACT_GROUPS = 12


@dataclass(frozen=True)
class FeatureGroup:
    name: str
    columns: tuple[int, ...]


def default_groups(schema: FeatureSchema) -> list[FeatureGroup]:
    """One group per schema feature: request, temperature, holiday,
    weekday, month (and hour when enabled)."""
    return [FeatureGroup(name, cols) for name, cols in schema.group_columns().items()]


def _check_partition(groups: list[FeatureGroup], width: int) -> None:
    seen: set[int] = set()
    for g in groups:
        overlap = seen.intersection(g.columns)
        if overlap:
            raise ConfigError(f"group '{g.name}' reuses columns {sorted(overlap)}")
        seen.update(g.columns)
    if seen != set(range(width)):
        raise ConfigError(
            f"groups must partition all {width} columns; covered {len(seen)}"
        )


def mask(test: np.ndarray, background: np.ndarray, coalition,
         groups: list[FeatureGroup]) -> np.ndarray:
    """Columns of groups in the coalition come from ``test``; all other
    columns come from ``background``, uniformly across all timesteps."""
    test = np.asarray(test, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if test.shape != background.shape:
        raise ShapeError(
            f"test {test.shape} and background {background.shape} windows differ"
        )
    names = _coalition_names(coalition)
    by_name = {g.name: g for g in groups}
    unknown = names.difference(by_name)
    if unknown:
        raise ConfigError(f"unknown feature groups: {sorted(unknown)}")
    out = background.copy()
    for name in names:
        cols = list(by_name[name].columns)
        out[:, cols] = test[:, cols]
    return out


def _coalition_names(coalition) -> set[str]:
    names = set()
    for item in coalition:
        names.add(item.name if isinstance(item, FeatureGroup) else str(item))
    return names


@dataclass
class ShapReport:
    test_id: str
    background_id: str
    phi: dict[str, float]
    base_value: float   # value of the empty coalition
    prediction: float   # value of the full coalition
    aggregation: str    # "mean" or "step:k"


@dataclass
class BeeswarmRow:
    instance_id: str
    group: str
    representative: float
    phi: float


@dataclass
class BeeswarmTable:
    rows: list[BeeswarmRow]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["instance_id", "group", "value", "phi"])
            for r in self.rows:
                w.writerow([r.instance_id, r.group,
                            fmt_float(r.representative), fmt_float(r.phi)])


def _aggregate(forecast: np.ndarray, step: int | None) -> float:
    if step is None:
        return float(np.mean(forecast))
    return float(forecast[step])


def _coalition_values(predict_fn, test, backgrounds, groups, step):
    """Value of every coalition bitmask: the scalar-aggregated forecast on
    the masked window, averaged over the background instances."""
    k = len(groups)
    values = np.zeros(1 << k)
    for bits in range(1 << k):
        coalition = [groups[j] for j in range(k) if bits >> j & 1]
        total = 0.0
        for bg in backgrounds:
            masked = mask(test, bg, coalition, groups)
            total += _aggregate(predict_fn(masked), step)
        values[bits] = total / len(backgrounds)
    return values


def _phi_from_values(values: np.ndarray, k: int) -> list[float]:
    fact = [math.factorial(j) for j in range(k + 1)]
    weights = [fact[s] * fact[k - s - 1] / fact[k] for s in range(k)]
    phi = []
    for j in range(k):
        total = 0.0
        for bits in range(1 << k):
            if bits >> j & 1:
                continue
            s = bin(bits).count("1")
            total += weights[s] * (values[bits | (1 << j)] - values[bits])
        phi.append(total)
    return phi


def shapley(predict_fn, test: np.ndarray, background: np.ndarray,
            groups: list[FeatureGroup], step: int | None = None,
            test_id: str = "test", background_id: str = "background") -> ShapReport:
    """Exact Shapley values of the feature groups for one test window
    against one background window.

    ``predict_fn`` maps a (p, n) window to the (m,) forecast; the value of
    a coalition is the forecast mean (or the ``step``-th output).
    """
    test = np.asarray(test, dtype=np.float64)
    _check_partition(groups, test.shape[1])
    k = len(groups)
    if k > MAX_EXACT_GROUPS:
        raise ConfigError(
            f"{k} groups need 2^{k} evaluations; exact enumeration is capped at "
            f"{MAX_EXACT_GROUPS} — merge groups or fall back to a sampling estimate"
        )
    values = _coalition_values(predict_fn, test, [background], groups, step)
    phi = _phi_from_values(values, k)
    return ShapReport(
        test_id=test_id,
        background_id=background_id,
        phi={g.name: p for g, p in zip(groups, phi)},
        base_value=float(values[0]),
        prediction=float(values[-1]),
        aggregation="mean" if step is None else f"step:{step}",
    )


def group_representative(window: np.ndarray, group: FeatureGroup) -> float:
    """Scalar summary of a group's value in a window, for beeswarm color:
    single columns use the window mean; one-hot groups use the normalized
    mean category index."""
    window = np.asarray(window, dtype=np.float64)
    cols = list(group.columns)
    if len(cols) == 1:
        return float(np.mean(window[:, cols[0]]))
    block = window[:, cols]
    idx = np.arange(len(cols), dtype=np.float64)
    weights = block.sum(axis=1)
    weighted = block @ idx
    active = weights > 0
    if not np.any(active):
        return 0.0
    return float(np.mean(weighted[active] / weights[active]) / (len(cols) - 1))


def shapley_series(predict_fn, instances, backgrounds,
                   groups: list[FeatureGroup],
                   step: int | None = None) -> tuple[BeeswarmTable, list[ShapReport]]:
    """One exact Shapley run per test instance against the background
    expectation (coalition values averaged over all background windows).

    ``instances`` is a sequence of (id, window); ``backgrounds`` a sequence
    of windows. Rows come back sorted by group then instance.
    """
    instances = list(instances)
    backgrounds = [np.asarray(b, dtype=np.float64) for b in backgrounds]
    if not instances:
        raise ConfigError("no test instances given")
    if not backgrounds:
        raise ConfigError("background set is empty")
    k = len(groups)
    if k > MAX_EXACT_GROUPS:
        raise ConfigError(
            f"{k} groups exceed the exact-enumeration cap of {MAX_EXACT_GROUPS}"
        )
    reports = []
    rows = []
    for inst_id, window in instances:
        window = np.asarray(window, dtype=np.float64)
        _check_partition(groups, window.shape[1])
        values = _coalition_values(predict_fn, window, backgrounds, groups, step)
        phi = _phi_from_values(values, k)
        reports.append(ShapReport(
            test_id=str(inst_id),
            background_id=f"mean[{len(backgrounds)}]",
            phi={g.name: p for g, p in zip(groups, phi)},
            base_value=float(values[0]),
            prediction=float(values[-1]),
            aggregation="mean" if step is None else f"step:{step}",
        ))
        for g, p in zip(groups, phi):
            rows.append(BeeswarmRow(str(inst_id), g.name,
                                    group_representative(window, g), p))
    rows.sort(key=lambda r: (r.group, r.instance_id))
    return BeeswarmTable(rows), reports


# ---------------------------------------------------------------------------
# attention export
# ---------------------------------------------------------------------------

def attention_profile(params: ModelParams, windows: WindowedDataset,
                      batch_size: int = 256) -> np.ndarray:
    """Mean attention mass per hour of day, averaged across windows.

    Each window's 96 weights are binned by their timestep's hour; the 24
    bucket means sum to 1 because every weight vector does.
    """
    if not params.config.attention:
        raise ConfigError("model has no attention layer to profile")
    n = len(windows)
    if n == 0:
        raise ConfigError("no windows to profile")
    buckets = np.zeros(24)
    for start in range(0, n, batch_size):
        X = np.asarray(windows.inputs[start:start + batch_size])
        if params.config.n_features < X.shape[2]:
            X = X[..., :params.config.n_features]
        _, trace = forward_batch(X, params)
        weights = trace.weights  # (p, B)
        for j in range(weights.shape[1]):
            origin: datetime = windows.origins[start + j]
            for t in range(weights.shape[0]):
                hour = (origin + t * STEP).hour
                buckets[hour] += weights[t, j]
    return buckets / n


def write_attention_csv(path, profile: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "mean_weight"])
        for hour, value in enumerate(profile):
            w.writerow([hour, fmt_float(value)])


def write_shap_csv(path, reports: list[ShapReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["test_id", "background_id", "group", "phi",
                    "base_value", "prediction", "aggregation"])
        for r in reports:
            for group, phi in r.phi.items():
                w.writerow([r.test_id, r.background_id, group, fmt_float(phi),
                            fmt_float(r.base_value), fmt_float(r.prediction),
                            r.aggregation])
