"""Posterior predictive forecasts and what-if scenarios.

Each Monte-Carlo replicate samples one posterior draw uniformly (with
replacement) and simulates one trajectory under the scenario, so the
forecast mixes parameter and process uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import EnsembleResult, SeasonMode, State, param_matrix, simulate_ensemble
from .months import Month
from .network import Network

DEFAULT_REPLICATES = 10_000

GROUP_INFECTED = "infected-at-start"
GROUP_SUSCEPTIBLE = "susceptible-at-start"
GROUP_EXCLUDED = "excluded"


@dataclass(frozen=True, eq=False)
class Scenario:
    """Forecast set-up: start state, horizon, season handling and cleared nodes.

    Clearing a node that is infected at the start removes its plants, so it
    starts (and stays) susceptible.
    """

    initial: np.ndarray
    start_month: Month
    horizon: int = 6
    season_mode: SeasonMode = SeasonMode.CALENDAR
    cleared_nodes: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        init = self.initial.infected if isinstance(self.initial, State) else self.initial
        init = np.asarray(init, dtype=bool).copy()
        init.setflags(write=False)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "start_month", Month.parse(self.start_month))
        object.__setattr__(self, "season_mode", SeasonMode.parse(self.season_mode))
        object.__setattr__(self, "cleared_nodes", frozenset(int(c) for c in self.cleared_nodes))
        if self.horizon < 1:
            raise ValueError("horizon must be at least one month")

    def state_on(self, network: Network) -> State:
        return State.on(network, self.initial, self.cleared_nodes, clear_infected=True)


@dataclass(frozen=True, eq=False)
class ForecastResult:
    """Per-node, per-month infection probability and its spread across replicates.

    ``group`` labels each node by its state at the start; cleared and
    unplanted nodes are ``excluded``.
    """

    probability: np.ndarray
    sd: np.ndarray
    q05: np.ndarray
    q95: np.ndarray
    month_labels: tuple
    group: tuple
    eligible: np.ndarray
    n_runs: int
    run_totals: np.ndarray
    scenario: Scenario

    @property
    def node_count(self) -> int:
        return self.probability.shape[0]

    def steady_state(self, t: int = -1) -> tuple[float, float]:
        """Mean probability over planted, uncleared nodes at month ``t``, with its Monte-Carlo error."""
        n_el = int(self.eligible.sum())
        if n_el == 0:
            raise ValueError("no eligible nodes")
        frac = self.run_totals[:, t] / n_el
        se = frac.std(ddof=1) / np.sqrt(frac.size) if frac.size > 1 else float("nan")
        return float(frac.mean()), float(se)


def _groups(initial: np.ndarray, eligible: np.ndarray) -> tuple:
    return tuple(
        GROUP_EXCLUDED if not e else (GROUP_INFECTED if i else GROUP_SUSCEPTIBLE)
        for i, e in zip(initial, eligible)
    )


def posterior_forecast(network: Network, draws, scenario: Scenario, n_runs: int = DEFAULT_REPLICATES,
                       rng=None, workers: int = 1) -> ForecastResult:
    """Monte-Carlo forecast of every node's infection probability under ``scenario``.

    ``rng`` is a Generator or an integer master seed; with a seed the
    result is identical for any ``workers``.
    """
    if rng is None:
        raise ValueError("an explicit random stream (Generator or seed) is required")
    thetas = param_matrix(draws)
    state = scenario.state_on(network)
    eligible = ~state.frozen_mask()
    ens: EnsembleResult = simulate_ensemble(
        network, thetas, state, scenario.start_month, scenario.horizon, n_runs, rng,
        season_mode=scenario.season_mode, workers=workers, eligible=eligible)
    return ForecastResult(
        probability=ens.frequency, sd=ens.sd, q05=ens.q05, q95=ens.q95,
        month_labels=ens.month_labels, group=_groups(state.infected, eligible),
        eligible=eligible, n_runs=n_runs, run_totals=ens.run_totals, scenario=scenario)


@dataclass(frozen=True, eq=False)
class OneMonthMap:
    """Next-month infection probability, split by the node's current state."""

    probability: np.ndarray
    group: tuple
    forecast: ForecastResult

    def nodes_in(self, group: str) -> np.ndarray:
        return np.array([i for i, g in enumerate(self.group) if g == group], dtype=int)

    def values(self, group: str) -> np.ndarray:
        return self.probability[self.nodes_in(group)]


def one_month_map(network: Network, draws, initial, month, cleared=(), n_runs: int = DEFAULT_REPLICATES,
                  rng=None, workers: int = 1, season_mode=SeasonMode.CALENDAR) -> OneMonthMap:
    """One-month forecast from ``initial`` at ``month`` with group labels for reporting."""
    sc = Scenario(initial, month, 1, season_mode, frozenset(cleared))
    res = posterior_forecast(network, draws, sc, n_runs, rng, workers)
    return OneMonthMap(res.probability[:, 1].copy(), res.group, res)


@dataclass(frozen=True, eq=False)
class ScenarioComparison:
    """``delta = variant - baseline`` per node and month.

    ``mean_delta[t]`` averages over nodes eligible in both scenarios, so
    nodes cleared in the variant do not count as reductions.
    """

    delta: np.ndarray
    mean_delta: np.ndarray
    compared: np.ndarray
    month_labels: tuple


def compare_scenarios(baseline: ForecastResult, variant: ForecastResult) -> ScenarioComparison:
    if baseline.probability.shape != variant.probability.shape:
        raise ValueError(f"forecast shapes differ: {baseline.probability.shape} vs {variant.probability.shape}")
    if baseline.month_labels != variant.month_labels:
        raise ValueError("forecasts cover different months")
    delta = variant.probability - baseline.probability
    compared = baseline.eligible & variant.eligible
    if not compared.any():
        raise ValueError("no node is eligible in both forecasts")
    return ScenarioComparison(delta, delta[compared].mean(axis=0), compared, baseline.month_labels)


FORECAST_COLUMNS = ("node", "month_label", "group", "probability", "sd", "q05", "q95")


def write_forecast(result: ForecastResult, path, header: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header)
        fh.write(",".join(FORECAST_COLUMNS) + "\n")
        for v in range(result.node_count):
            for t, label in enumerate(result.month_labels):
                fh.write(f"{v},{label},{result.group[v]},{float(result.probability[v, t])!r},"
                         f"{float(result.sd[v, t])!r},{float(result.q05[v, t])!r},{float(result.q95[v, t])!r}\n")
