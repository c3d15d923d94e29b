"""Seasonal SIS forward simulator on a plantation network.

Each month, synchronously from the state at month ``t``:

* an infected node recovers (its plants are rogued) with probability
  ``recovery(season)``;
* a susceptible, uncleared node with ``m`` infected neighbours and ``f``
  infected non-neighbours becomes infected with probability
  ``1 - (1 - near)**m * (1 - far)**f``, i.e. every infected node makes an
  independent attempt on it;
* a node that recovers this month cannot be reinfected in the same month,
  and cleared or unplanted nodes never become infected.

The season of a transition is the season of its source month.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from typing import Iterable

import numpy as np

from . import _kernels as K
from .months import Month, Season, month_range
from .network import Network, ObservationSeries
from .rng import BLOCK_SIZE, STREAM_FORECAST, blocks, derive_rng, kernel_state, run_tasks

PARAM_NAMES = (
    "recovery_summer",
    "recovery_winter",
    "near_summer",
    "near_winter",
    "far_summer",
    "far_winter",
)


@dataclass(frozen=True)
class ParamSet:
    """The six monthly probabilities, by kind and season."""

    recovery_summer: float
    recovery_winter: float
    near_summer: float
    near_winter: float
    far_summer: float
    far_winter: float

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name}={v} is not a probability")
            object.__setattr__(self, f.name, v)

    @classmethod
    def from_array(cls, values) -> "ParamSet":
        values = np.asarray(values, dtype=float).ravel()
        if values.shape != (6,):
            raise ValueError("a parameter vector has exactly 6 entries")
        return cls(*values.tolist())

    @classmethod
    def uniform(cls, recovery: float, near: float, far: float) -> "ParamSet":
        return cls(recovery, recovery, near, near, far, far)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    def for_season(self, season: Season) -> tuple[float, float, float]:
        """``(recovery, near, far)`` in ``season``."""
        s = season.value
        a = self.as_array()
        return a[s], a[2 + s], a[4 + s]


class SeasonMode(enum.Enum):
    CALENDAR = "calendar"
    ALL_SUMMER = "all_summer"
    ALL_WINTER = "all_winter"

    @classmethod
    def parse(cls, value) -> "SeasonMode":
        if isinstance(value, SeasonMode):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for m in cls:
            if key in (m.value, m.value.replace("_", "")):
                return m
        raise ValueError(f"unknown season mode {value!r}")


def season_schedule(start_month, horizon: int, mode=SeasonMode.CALENDAR) -> np.ndarray:
    """Season code (0 summer, 1 winter) for each of ``horizon`` transitions."""
    mode = SeasonMode.parse(mode)
    if mode is SeasonMode.ALL_SUMMER:
        return np.zeros(horizon, dtype=np.int64)
    if mode is SeasonMode.ALL_WINTER:
        return np.ones(horizon, dtype=np.int64)
    return np.array([m.season.value for m in month_range(start_month, horizon)], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class State:
    """Per-node infection flags plus the set of nodes frozen susceptible."""

    infected: np.ndarray
    cleared: frozenset = frozenset()

    def __post_init__(self):
        inf = np.asarray(self.infected, dtype=bool).copy()
        inf.setflags(write=False)
        object.__setattr__(self, "infected", inf)
        object.__setattr__(self, "cleared", frozenset(int(c) for c in self.cleared))
        bad = [c for c in self.cleared if not 0 <= c < inf.shape[0]]
        if bad:
            raise ValueError(f"cleared nodes out of range: {bad}")
        both = [c for c in self.cleared if inf[c]]
        if both:
            raise ValueError(f"nodes both cleared and infected: {sorted(both)}")

    @classmethod
    def on(cls, network: Network, infected, cleared: Iterable[int] = (), clear_infected: bool = False) -> "State":
        """State on ``network`` with unplanted nodes added to the cleared set.

        With ``clear_infected`` an infected node that is being cleared is
        reset to susceptible (its plants are removed); otherwise that is an
        error.
        """
        inf = np.asarray(infected, dtype=bool).copy()
        if inf.shape != (network.node_count,):
            raise ValueError(f"state has {inf.shape[0]} nodes, network has {network.node_count}")
        frozen = set(int(c) for c in cleared)
        for c in frozen:
            network._check(c)
        unplanted = set(np.flatnonzero(~network.planted).tolist())
        sick = sorted(c for c in unplanted if inf[c])
        if sick:
            raise ValueError(f"unplanted nodes marked infected: {sick}")
        if clear_infected:
            inf[list(frozen)] = False
        return cls(inf, frozenset(frozen | unplanted))

    def frozen_mask(self) -> np.ndarray:
        mask = np.zeros(self.infected.shape[0], dtype=bool)
        mask[list(self.cleared)] = True
        return mask

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.cleared == other.cleared and np.array_equal(self.infected, other.infected)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Node x snapshot infection matrix from one simulation."""

    states: np.ndarray
    month_labels: tuple
    cleared: frozenset = frozenset()

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    def state_at(self, t: int) -> State:
        return State(self.states[:, t], self.cleared)

    def to_series(self) -> ObservationSeries:
        return ObservationSeries(self.states, self.month_labels)


class SisModel:
    """Compiled simulation context: network, initial state and season schedule.

    This is what the inference engine runs repeatedly; it owns the
    contiguous arrays handed to the kernels.
    """

    def __init__(self, network: Network, initial: State, start_month, horizon: int,
                 season_mode=SeasonMode.CALENDAR):
        if horizon < 1:
            raise ValueError("horizon must be at least one month")
        if initial.infected.shape != (network.node_count,):
            raise ValueError("initial state does not match the network")
        cleared = set(initial.cleared) | set(np.flatnonzero(~network.planted).tolist())
        initial = State(initial.infected, frozenset(cleared))
        self.network = network
        self.initial = initial
        self.start_month = Month.parse(start_month)
        self.horizon = int(horizon)
        self.season_mode = SeasonMode.parse(season_mode)
        self.month_labels = tuple(month_range(self.start_month, self.horizon + 1))
        self.seasons = season_schedule(self.start_month, self.horizon, self.season_mode)
        self._indptr = network.indptr.astype(np.int32)
        self._indices = network.indices.astype(np.int32)
        self._frozen = initial.frozen_mask()
        self._init = np.ascontiguousarray(initial.infected)

    @classmethod
    def from_series(cls, network: Network, series: ObservationSeries, cleared=()) -> "SisModel":
        """Model anchored on the first snapshot, spanning the whole series."""
        series.check_against(network)
        initial = State.on(network, series.states[:, 0], cleared)
        return cls(network, initial, series.month_labels[0], series.snapshots - 1)

    @property
    def summary_length(self) -> int:
        return self.horizon + 1 + K.N_COUNTS

    @property
    def kernel_args(self) -> tuple:
        return self._indptr, self._indices, self._frozen, self._init, self.seasons

    def simulate(self, params, rng) -> Trajectory:
        theta = _theta(params)
        out = K.simulate_states(*self.kernel_args, theta, kernel_state(rng))
        return Trajectory(out.T.copy(), self.month_labels, self.initial.cleared)

    def summary(self, params, rng) -> np.ndarray:
        """Flat summary vector of one simulation, computed without storing states."""
        return K.simulate_summaries(*self.kernel_args, _theta(params)[None, :], kernel_state(rng))[0]

    def summaries(self, thetas, rng) -> np.ndarray:
        thetas = np.ascontiguousarray(np.atleast_2d(np.asarray(thetas, dtype=float)))
        return K.simulate_summaries(*self.kernel_args, thetas, kernel_state(rng))


def _theta(params) -> np.ndarray:
    if isinstance(params, ParamSet):
        return params.as_array()
    arr = np.ascontiguousarray(np.asarray(params, dtype=float).ravel())
    if arr.shape != (6,):
        raise ValueError("a parameter vector has exactly 6 entries")
    return arr


def param_matrix(draws) -> np.ndarray:
    """Coerce a ParamSet, a parameter vector, a draw set or an (n, 6) array."""
    if isinstance(draws, ParamSet):
        m = draws.as_array()[None, :]
    elif hasattr(draws, "params") and isinstance(getattr(draws, "params"), np.ndarray):
        m = draws.params
    else:
        m = np.asarray(draws, dtype=float)
        if m.ndim == 1:
            m = m[None, :]
    if m.ndim != 2 or m.shape[1] != 6:
        raise ValueError("parameter draws must have shape (n, 6)")
    if m.shape[0] == 0:
        raise ValueError("empty set of parameter draws")
    return np.ascontiguousarray(m, dtype=float)


def step(state: State, network: Network, params: ParamSet, season: Season, rng) -> State:
    """Advance one month."""
    nxt = sample_steps(state, network, params, season, 1, rng)[0]
    return State(nxt, state.cleared | frozenset(np.flatnonzero(~network.planted).tolist()))


def sample_steps(state: State, network: Network, params, season: Season, n_samples: int, rng) -> np.ndarray:
    """``(n_samples, node_count)`` independent one-month successors of ``state``."""
    if state.infected.shape != (network.node_count,):
        raise ValueError("state does not match the network")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    frozen = state.frozen_mask() | ~network.planted
    if (state.infected & frozen).any():
        raise ValueError("unplanted nodes cannot be infected")
    return K.step(network.indptr.astype(np.int32), network.indices.astype(np.int32), frozen,
                  np.ascontiguousarray(state.infected),
                  _theta(params), Season(season).value, kernel_state(rng), n_samples)


def simulate(network: Network, params, initial: State, start_month, horizon: int, rng,
             season_mode=SeasonMode.CALENDAR) -> Trajectory:
    """Simulate ``horizon`` months; the trajectory has ``horizon + 1`` snapshots."""
    return SisModel(network, initial, start_month, horizon, season_mode).simulate(params, rng)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Per-node, per-snapshot statistics of the infection indicator across runs.

    ``frequency`` is the fraction of runs with the node infected; ``sd`` and
    the quantiles are of the 0/1 indicator across runs (numpy's linear
    quantile rule).  ``run_totals[r, t]`` counts infected eligible nodes in
    run ``r``, for network-level Monte-Carlo errors.
    """

    frequency: np.ndarray
    sd: np.ndarray
    q05: np.ndarray
    q95: np.ndarray
    month_labels: tuple
    n_runs: int
    run_totals: np.ndarray
    eligible: np.ndarray

    def mean_prevalence(self, t: int = -1) -> tuple[float, float]:
        """Mean fraction of eligible nodes infected at snapshot ``t`` and its standard error."""
        frac = self.run_totals[:, t] / max(int(self.eligible.sum()), 1)
        se = frac.std(ddof=1) / np.sqrt(len(frac)) if len(frac) > 1 else float("nan")
        return float(frac.mean()), float(se)


def indicator_quantile(count, n: int, q: float) -> np.ndarray:
    """Linear-interpolation quantile of a sample of ``n - count`` zeros and ``count`` ones."""
    count = np.asarray(count)
    n0 = n - count
    h = q * (n - 1)
    lo = int(np.floor(h))
    frac = h - lo
    v_lo = (lo >= n0).astype(float)
    v_hi = (min(lo + 1, n - 1) >= n0).astype(float)
    return v_lo + frac * (v_hi - v_lo)


def simulate_ensemble(network: Network, draws, initial: State, start_month, horizon: int,
                      n_runs: int, rng, season_mode=SeasonMode.CALENDAR, workers: int = 1,
                      eligible=None) -> EnsembleResult:
    """Run ``n_runs`` independent trajectories and summarise them per cell.

    ``draws`` is a single parameter set or a collection of posterior draws;
    with several draws each run samples one uniformly with replacement.
    ``rng`` may be a Generator (one stream, serial) or an integer master
    seed, in which case runs are split into fixed blocks with derived
    streams so the result is identical for any ``workers``.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    thetas = param_matrix(draws)
    model = SisModel(network, initial, start_month, horizon, season_mode)
    if eligible is None:
        eligible = ~model._frozen
    eligible = np.ascontiguousarray(eligible, dtype=bool)
    args = model.kernel_args

    if isinstance(rng, np.random.Generator):
        counts, totals = K.ensemble(*args, thetas, n_runs, eligible, kernel_state(rng))
    elif rng is None:
        raise ValueError("an explicit random stream (Generator or seed) is required")
    else:
        seed = int(rng)

        def work(task):
            idx, (lo, hi) = task
            return K.ensemble(*args, thetas, hi - lo, eligible,
                              kernel_state(derive_rng(seed, STREAM_FORECAST, idx)))

        parts = run_tasks(work, list(enumerate(blocks(n_runs, BLOCK_SIZE))), workers)
        counts = sum(p[0] for p in parts)
        totals = np.concatenate([p[1] for p in parts])

    counts = counts.T  # node x snapshot
    freq = counts / n_runs
    return EnsembleResult(
        frequency=freq,
        sd=np.sqrt(freq * (1.0 - freq)),
        q05=indicator_quantile(counts, n_runs, 0.05),
        q95=indicator_quantile(counts, n_runs, 0.95),
        month_labels=model.month_labels,
        n_runs=n_runs,
        run_totals=totals,
        eligible=eligible,
    )
