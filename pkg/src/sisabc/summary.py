"""Summary statistics of an infection trajectory and the discrepancy between them.

The flat vector is the proportion-infected series over every snapshot
(initial one included) followed by six seasonal transition counts:

    s1[0], ..., s1[T], s10_summer, s10_winter, s010_summer, s010_winter,
    s011_summer, s011_winter

``s10`` counts recoveries (infected at ``t``, susceptible at ``t + 1``);
``s010`` and ``s011`` count new infections of nodes without / with an
infected neighbour at ``t``.  A transition is attributed to the season of
its source month.  All elements carry equal weight in the discrepancy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .months import Month
from .network import Network

COUNT_NAMES = (
    "s10_summer",
    "s10_winter",
    "s010_summer",
    "s010_winter",
    "s011_summer",
    "s011_winter",
)


@dataclass(frozen=True, eq=False)
class SummaryVector:
    """Proportion-infected series plus the six seasonal transition counts."""

    s1: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        s1 = np.asarray(self.s1, dtype=float).copy()
        counts = np.asarray(self.counts, dtype=float).copy()
        if s1.ndim != 1 or s1.size < 2:
            raise ValueError("s1 needs at least two snapshots")
        if counts.shape != (len(COUNT_NAMES),):
            raise ValueError("exactly six transition counts are required")
        if np.any((s1 < 0) | (s1 > 1)):
            raise ValueError("s1 entries are proportions in [0, 1]")
        if np.any(counts < 0):
            raise ValueError("transition counts are non-negative")
        s1.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "counts", counts)

    def __getattr__(self, name):
        if name in COUNT_NAMES:
            return float(self.counts[COUNT_NAMES.index(name)])
        raise AttributeError(name)

    def __len__(self) -> int:
        return self.s1.size + len(COUNT_NAMES)

    def __eq__(self, other):
        if not isinstance(other, SummaryVector):
            return NotImplemented
        return np.array_equal(self.s1, other.s1) and np.array_equal(self.counts, other.counts)

    __hash__ = None

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.s1, self.counts])

    @classmethod
    def from_array(cls, values) -> "SummaryVector":
        values = np.asarray(values, dtype=float).ravel()
        k = len(COUNT_NAMES)
        if values.size < k + 2:
            raise ValueError(f"a summary vector has at least {k + 2} elements")
        return cls(values[:-k], values[-k:])

    @property
    def recoveries(self) -> float:
        return float(self.counts[0] + self.counts[1])

    @property
    def new_infections(self) -> float:
        return float(self.counts[2:].sum())


def column_names(snapshots: int) -> list[str]:
    """Column order of the flat vector for a series of ``snapshots`` months."""
    return [f"s1_{t}" for t in range(snapshots)] + list(COUNT_NAMES)


def summarize(trajectory, network: Network, seasons=None) -> SummaryVector:
    """Summary vector of a trajectory or observation series.

    Parameters
    ----------
    trajectory : Trajectory or ObservationSeries
        Anything with a node x snapshot ``states`` matrix and ``month_labels``.
    network : Network
    seasons : array of int, optional
        Season code (0 summer, 1 winter) per transition.  Defaults to the
        calendar season of each source month.
    """
    x = np.asarray(trajectory.states, dtype=bool)
    if x.ndim != 2 or x.shape[0] != network.node_count:
        raise ValueError("trajectory does not match the network")
    T = x.shape[1]
    if T < 2:
        raise ValueError("a trajectory needs at least two snapshots")
    if seasons is None:
        seasons = [Month.parse(m).season.value for m in trajectory.month_labels[:-1]]
    seasons = np.asarray(seasons, dtype=int)
    if seasons.shape != (T - 1,):
        raise ValueError("one season code per transition is required")

    s1 = x.sum(axis=0) / network.node_count
    adj = network.adjacency().astype(np.int64)
    exposed = (adj @ x[:, :-1].astype(np.int64)) > 0
    before, after = x[:, :-1], x[:, 1:]
    recovered = (before & ~after).sum(axis=0)
    new = ~before & after
    isolated = (new & ~exposed).sum(axis=0)
    contact = (new & exposed).sum(axis=0)

    counts = np.zeros(len(COUNT_NAMES))
    for s in (0, 1):
        sel = seasons == s
        counts[s] = recovered[sel].sum()
        counts[2 + s] = isolated[sel].sum()
        counts[4 + s] = contact[sel].sum()
    return SummaryVector(s1, counts)


def discrepancy(a, b) -> float:
    """Mean squared difference over the flat vectors (SummaryVector or arrays)."""
    a = a.as_array() if isinstance(a, SummaryVector) else np.asarray(a, dtype=float).ravel()
    b = b.as_array() if isinstance(b, SummaryVector) else np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"summary lengths differ: {a.size} vs {b.size}")
    d = a - b
    return float(np.dot(d, d) / d.size)


def write_summary(summary: SummaryVector, path, header: str = "") -> None:
    """Single-row CSV with named columns."""
    names = column_names(summary.s1.size)
    with open(path, "w") as fh:
        fh.write(header)
        fh.write(",".join(names) + "\n")
        fh.write(",".join(repr(float(v)) for v in summary.as_array()) + "\n")


def read_summary(path) -> SummaryVector:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if len(lines) != 2:
        raise ValueError(f"{path}: expected a header and one row")
    names = lines[0].split(",")
    values = [float(v) for v in lines[1].split(",")]
    if len(values) != len(names) or names != column_names(len(names) - len(COUNT_NAMES)):
        raise ValueError(f"{path}: unexpected summary columns")
    return SummaryVector.from_array(values)
