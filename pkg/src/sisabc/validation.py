"""Posterior predictive checks against hold-out months: deviance loss and ROC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forecast import DEFAULT_REPLICATES, one_month_map
from .model import State, param_matrix
from .network import Network, ObservationSeries
from .rng import STREAM_VALIDATE, derive_rng

RANDOM_BASELINE = -math.log(2.0)


def clamp_delta(n_runs: int) -> float:
    """Half a replicate: keeps Monte-Carlo 0/1 probabilities off the boundary."""
    return 1.0 / (2.0 * n_runs)


def deviance_loss(actual, predicted_p, delta: float = 0.0):
    """Binomial deviance ``y * P - log(1 + e**P)`` with ``P`` the log-odds of ``predicted_p``.

    Equals ``log(p)`` for a positive outcome and ``log(1 - p)`` for a
    negative one (natural log).  Probabilities are first clamped into
    ``[delta, 1 - delta]``.
    """
    y = np.asarray(actual, dtype=float)
    p = np.asarray(predicted_p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("predicted probabilities must lie in [0, 1]")
    if delta > 0:
        p = np.clip(p, delta, 1.0 - delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        logit = np.log(p) - np.log1p(-p)
        out = y * logit - np.logaddexp(0.0, logit)
    # at p in {0, 1} the log-odds are infinite; take the limit
    out = np.where(np.isinf(logit), np.where((logit > 0) == (y > 0), 0.0, -np.inf), out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PredictionRecord:
    node: int
    month: str
    predicted_p: float
    actual: bool
    loss: float


@dataclass(frozen=True, eq=False)
class CheckResult:
    """Hold-out records plus per-node mean losses.

    ``node_loss`` is NaN for nodes that never appear in the records
    (unplanted or cleared).
    """

    records: tuple
    node_loss: np.ndarray
    delta: float
    n_runs: int

    @property
    def mean_loss(self) -> float:
        return float(np.mean([r.loss for r in self.records]))

    @property
    def baseline(self) -> float:
        return RANDOM_BASELINE


def predictive_check(network: Network, draws, series: ObservationSeries, holdout: int,
                     n_runs: int = DEFAULT_REPLICATES, rng=None, workers: int = 1, cleared=()) -> CheckResult:
    """Score one-month forecasts on the last ``holdout`` months of ``series``.

    Each hold-out month ``t + 1`` is forecast from the observed state at
    ``t`` (re-anchored every month) and compared with the observation.
    """
    if rng is None:
        raise ValueError("a master seed is required")
    if holdout < 1:
        raise ValueError("at least one hold-out month is required")
    if holdout >= series.snapshots:
        raise ValueError(f"series has {series.snapshots} months, too few for {holdout} hold-out months")
    series.check_against(network)
    thetas = param_matrix(draws)
    delta = clamp_delta(n_runs)
    records = []
    first = series.snapshots - 1 - holdout
    for i, t in enumerate(range(first, series.snapshots - 1)):
        state = State.on(network, series.states[:, t], cleared, clear_infected=True)
        if isinstance(rng, np.random.Generator):
            sub = rng
        else:
            sub = int(derive_rng(int(rng), STREAM_VALIDATE, i).integers(2**63))
        fmap = one_month_map(network, thetas, state.infected, series.month_labels[t], state.cleared,
                             n_runs, sub, workers)
        actual = series.states[:, t + 1]
        label = str(series.month_labels[t + 1])
        eligible = fmap.forecast.eligible
        loss = deviance_loss(actual, fmap.probability, delta)
        for v in np.flatnonzero(eligible):
            records.append(PredictionRecord(int(v), label, float(fmap.probability[v]), bool(actual[v]),
                                            float(loss[v])))
    sums = np.zeros(network.node_count)
    counts = np.zeros(network.node_count)
    for r in records:
        sums[r.node] += r.loss
        counts[r.node] += 1
    with np.errstate(invalid="ignore"):
        node_loss = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return CheckResult(tuple(records), node_loss, delta, n_runs)


@dataclass(frozen=True, eq=False)
class RocResult:
    """ROC points from ``(0, 0)`` to ``(1, 1)``; ``thresholds[0]`` is ``+inf``."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_curve(records=None, scores=None, labels=None) -> RocResult:
    """ROC curve swept over distinct scores in descending order, with trapezoidal AUC.

    Pass either prediction records or ``scores`` and ``labels`` arrays.
    Tied scores share a threshold and so form a single diagonal step.
    """
    if records is not None:
        scores = np.array([r.predicted_p for r in records], dtype=float)
        labels = np.array([r.actual for r in records], dtype=bool)
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = int(y.sum())
    neg = y.size - pos
    if pos == 0 or neg == 0:
        raise ValueError("ROC needs at least one positive and one negative outcome")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tp, fp = np.r_[0, tp], np.r_[0, fp]
    thr = np.r_[np.inf, s[last]]
    # trapezoids in integer counts, one division at the end: exact at 0 and 1
    area2 = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = area2 / (2 * pos * neg)
    tpr, fpr = tp / pos, fp / neg
    return RocResult(thr, fpr, tpr, auc)


RECORD_COLUMNS = ("node", "month", "predicted_p", "actual", "loss")


def write_records(result: CheckResult, path, header: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header)
        fh.write(f"# clamp_delta={result.delta!r} replicates={result.n_runs} log=natural\n")
        fh.write(",".join(RECORD_COLUMNS) + "\n")
        for r in result.records:
            fh.write(f"{r.node},{r.month},{r.predicted_p!r},{int(r.actual)},{r.loss!r}\n")


def write_roc(roc: RocResult, path, header: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("threshold,fpr,tpr\n")
        for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
            fh.write(f"{float(t)!r},{float(f)!r},{float(p)!r}\n")
