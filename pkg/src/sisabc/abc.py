"""Likelihood-free inference: ABC rejection, ABC-MCMC and tolerance filtering.

All samplers use the indicator kernel: a simulation "matches" when its
summary discrepancy is at most ``epsilon``.  Parallel work is split into
fixed blocks (rejection) or chains (MCMC), each with a stream derived from
the master seed, so draws do not depend on the worker count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .model import PARAM_NAMES, ParamSet, SisModel, State
from .network import Network, ObservationSeries
from .rng import (BLOCK_SIZE, STREAM_MCMC, STREAM_PILOT, STREAM_REJECTION, blocks,
                  derive_rng, kernel_state, run_tasks)
from .months import Month
from .summary import COUNT_NAMES, SummaryVector, summarize

# Tolerance used when the summary has the reference length of 38 snapshots + 6 counts.
REFERENCE_EPSILON = 23.0
REFERENCE_SUMMARY_LENGTH = 44
DEFAULT_PROPOSAL_SD = (0.02, 0.02, 0.005, 0.005, 0.005, 0.005)
INIT_ATTEMPT_CAP = 100_000


class InitializationError(RuntimeError):
    """No simulation within tolerance while searching for a chain start."""


@dataclass(frozen=True, eq=False)
class Prior:
    """Independent uniform priors on each of the six parameters."""

    lower: np.ndarray = field(default_factory=lambda: np.zeros(6))
    upper: np.ndarray = field(default_factory=lambda: np.ones(6))

    def __post_init__(self):
        lo = np.ascontiguousarray(np.broadcast_to(np.asarray(self.lower, dtype=float), (6,)))
        hi = np.ascontiguousarray(np.broadcast_to(np.asarray(self.upper, dtype=float), (6,)))
        if np.any(lo < 0) or np.any(hi > 1):
            raise ValueError("prior bounds must lie within [0, 1]")
        if np.any(lo >= hi):
            raise ValueError("every prior needs lower < upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all((theta >= self.lower) & (theta <= self.upper)))

    def sample(self, rng, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, 6))


@dataclass(frozen=True)
class PosteriorDraw:
    params: ParamSet
    discrepancy: float
    iteration: int
    accepted_proposal: bool


@dataclass(frozen=True, eq=False)
class DrawSet:
    """Column-oriented collection of posterior draws.

    ``epsilon`` is the tolerance the draws were generated at (``inf`` when
    unknown).  ``chain`` labels the chain of each draw for multi-chain runs.
    """

    params: np.ndarray
    discrepancy: np.ndarray
    iteration: np.ndarray
    accepted: np.ndarray
    epsilon: float = math.inf
    chain: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float).reshape(-1, 6)
        n = p.shape[0]
        d = np.asarray(self.discrepancy, dtype=float).reshape(n)
        it = np.asarray(self.iteration, dtype=np.int64).reshape(n)
        acc = np.asarray(self.accepted, dtype=bool).reshape(n)
        ch = np.zeros(n, dtype=np.int64) if self.chain is None else np.asarray(self.chain, dtype=np.int64).reshape(n)
        if np.any(d < 0):
            raise ValueError("discrepancies are non-negative")
        for name, arr in (("params", p), ("discrepancy", d), ("iteration", it), ("accepted", acc), ("chain", ch)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    def __len__(self) -> int:
        return self.params.shape[0]

    def __getitem__(self, i) -> PosteriorDraw:
        return PosteriorDraw(ParamSet.from_array(self.params[i]), float(self.discrepancy[i]),
                             int(self.iteration[i]), bool(self.accepted[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, DrawSet):
            return NotImplemented
        return (np.array_equal(self.params, other.params)
                and np.array_equal(self.discrepancy, other.discrepancy)
                and np.array_equal(self.iteration, other.iteration)
                and np.array_equal(self.accepted, other.accepted))

    __hash__ = None

    def take(self, index) -> "DrawSet":
        return DrawSet(self.params[index], self.discrepancy[index], self.iteration[index],
                       self.accepted[index], self.epsilon, self.chain[index])

    def column(self, name: str) -> np.ndarray:
        return self.params[:, PARAM_NAMES.index(name)]

    @classmethod
    def empty(cls, epsilon=math.inf) -> "DrawSet":
        return cls(np.empty((0, 6)), np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=bool), epsilon)

    @classmethod
    def concat(cls, parts) -> "DrawSet":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(np.concatenate([p.params for p in parts]),
                   np.concatenate([p.discrepancy for p in parts]),
                   np.concatenate([p.iteration for p in parts]),
                   np.concatenate([p.accepted for p in parts]),
                   max(p.epsilon for p in parts),
                   np.concatenate([p.chain for p in parts]))


DRAW_COLUMNS = ("iteration",) + PARAM_NAMES + ("discrepancy", "accepted_proposal")


def write_draws(draws: DrawSet, path, header: str = "") -> None:
    """CSV of draws; the generation tolerance is kept in a comment line."""
    with open(path, "w") as fh:
        fh.write(header)
        fh.write(f"# epsilon={draws.epsilon!r}\n")
        fh.write(",".join(DRAW_COLUMNS) + "\n")
        for i in range(len(draws)):
            vals = ",".join(repr(float(v)) for v in draws.params[i])
            fh.write(f"{draws.iteration[i]},{vals},{float(draws.discrepancy[i])!r},{int(draws.accepted[i])}\n")


class SchemaError(ValueError):
    """A data file's columns do not match the expected layout."""


def read_draws(path) -> DrawSet:
    epsilon = math.inf
    rows = []
    header = None
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln:
                continue
            if ln.startswith("#"):
                if ln.startswith("# epsilon="):
                    epsilon = float(ln.split("=", 1)[1])
                continue
            if header is None:
                header = ln.split(",")
                missing = [c for c in DRAW_COLUMNS if c not in header]
                if missing or len(header) != len(DRAW_COLUMNS):
                    raise SchemaError(f"{path}: draws file column mismatch, missing {missing or header}")
                if tuple(header) != DRAW_COLUMNS:
                    raise SchemaError(f"{path}: draws columns out of order: {header}")
                continue
            rows.append(ln.split(","))
    if header is None:
        raise SchemaError(f"{path}: no header row")
    if not rows:
        return DrawSet.empty(epsilon)
    a = np.array(rows, dtype=object)
    return DrawSet(a[:, 1:7].astype(float), a[:, 7].astype(float), a[:, 0].astype(np.int64),
                   a[:, 8].astype(int).astype(bool), epsilon)


# ---------------------------------------------------------------------------
# problem setup


@dataclass(frozen=True, eq=False)
class Problem:
    """A simulation context together with the observed summary to match."""

    model: SisModel
    observed: np.ndarray

    def __post_init__(self):
        obs = self.observed.as_array() if isinstance(self.observed, SummaryVector) else self.observed
        obs = np.ascontiguousarray(obs, dtype=float)
        if obs.shape != (self.model.summary_length,):
            raise ValueError(f"observed summary has {obs.size} elements, model produces {self.model.summary_length}")
        object.__setattr__(self, "observed", obs)

    @classmethod
    def from_series(cls, network: Network, series: ObservationSeries, cleared=()) -> "Problem":
        model = SisModel.from_series(network, series, cleared)
        return cls(model, summarize(series, network))

    @property
    def args(self) -> tuple:
        return self.model.kernel_args


def default_epsilon(problem: Problem) -> float:
    """The reference tolerance, which is only meaningful for 44-element summaries."""
    if problem.observed.size != REFERENCE_SUMMARY_LENGTH:
        raise ValueError(
            f"no default tolerance for a {problem.observed.size}-element summary; "
            "pass epsilon explicitly or run a pilot to choose one")
    return REFERENCE_EPSILON


def max_discrepancy(problem: Problem) -> float:
    """An upper bound on the discrepancy any simulation can attain.

    Proportions after the first snapshot lie in [0, eligible / n] and each
    seasonal count lies in [0, eligible * months in that season], since a
    node has at most one event per month.
    """
    model = problem.model
    obs = problem.observed
    n = model.network.node_count
    eligible = int((~model._frozen).sum())
    T = model.horizon
    lo = np.zeros(obs.size)
    hi = np.empty(obs.size)
    lo[0] = hi[0] = obs[0]
    hi[1:T + 1] = eligible / n
    months = np.bincount(model.seasons, minlength=2)
    for j in range(len(COUNT_NAMES)):
        hi[T + 1 + j] = eligible * months[j % 2]
    worst = np.maximum((obs - lo) ** 2, (hi - obs) ** 2)
    return float(worst.sum() / obs.size)


# ---------------------------------------------------------------------------
# estimators and samplers


def abc_likelihood(params, problem: Problem, n: int, epsilon: float, rng) -> float:
    """Fraction of ``n`` simulations at ``params`` within ``epsilon`` of the data."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not epsilon >= 0:
        raise ValueError("epsilon must be non-negative")
    theta = ParamSet.from_array(params).as_array() if not isinstance(params, ParamSet) else params.as_array()
    d = K.discrepancies_at(*problem.args, theta, problem.observed, n, kernel_state(rng))
    return float(np.count_nonzero(d <= epsilon) / n)


@dataclass(frozen=True, eq=False)
class RejectionResult:
    """Accepted draws plus every attempted draw's discrepancy."""

    accepted: DrawSet
    n_draws: int
    all_params: np.ndarray
    all_discrepancies: np.ndarray
    wall_time: float

    @property
    def acceptance_rate(self) -> float:
        return len(self.accepted) / self.n_draws

    @property
    def diagnostic(self) -> str:
        if len(self.accepted) == 0:
            best = float(self.all_discrepancies.min())
            return f"no draw accepted; smallest discrepancy {best:.6g}, consider a larger epsilon"
        return f"accepted {len(self.accepted)} of {self.n_draws} ({self.acceptance_rate:.4%})"


def _prior_block_runs(problem: Problem, prior: Prior, n_draws: int, rng, stream: int, workers: int):
    args = problem.args
    if isinstance(rng, np.random.Generator):
        return K.rejection_block(*args, problem.observed, prior.lower, prior.upper, n_draws, kernel_state(rng))
    if rng is None:
        raise ValueError("an explicit random stream (Generator or seed) is required")
    seed = int(rng)

    def work(task):
        idx, (lo, hi) = task
        st = kernel_state(derive_rng(seed, stream, idx))
        return K.rejection_block(*args, problem.observed, prior.lower, prior.upper, hi - lo, st)

    parts = run_tasks(work, list(enumerate(blocks(n_draws, BLOCK_SIZE))), workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def rejection_sample(problem: Problem, prior: Prior, n_draws: int, epsilon: float, rng,
                     workers: int = 1) -> RejectionResult:
    """ABC rejection: draw from the prior, simulate once, keep draws within ``epsilon``.

    ``rng`` is a Generator (single serial stream) or an integer master seed
    (fixed blocks of derived streams, reproducible for any ``workers``).
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if not epsilon >= 0:
        raise ValueError("epsilon must be non-negative")
    t0 = time.perf_counter()
    thetas, disc = _prior_block_runs(problem, prior, n_draws, rng, STREAM_REJECTION, workers)
    keep = np.flatnonzero(disc <= epsilon)
    accepted = DrawSet(thetas[keep], disc[keep], keep, np.ones(keep.size, dtype=bool), epsilon)
    return RejectionResult(accepted, n_draws, thetas, disc, time.perf_counter() - t0)


@dataclass(frozen=True)
class PilotReport:
    """Prior-predictive discrepancy quantiles, used to choose a tolerance."""

    n_draws: int
    quantiles: tuple
    values: tuple
    minimum: float
    max_attainable: float

    def epsilon_at(self, q: float) -> float:
        return float(dict(zip(self.quantiles, self.values))[q])


PILOT_QUANTILES = (1e-4, 1e-3, 0.01, 0.05, 0.1, 0.5)


def pilot(problem: Problem, prior: Prior, n_draws: int, rng, quantiles=PILOT_QUANTILES,
          workers: int = 1) -> PilotReport:
    """Discrepancy distribution of simulations at prior draws."""
    _, disc = _prior_block_runs(problem, prior, n_draws, rng, STREAM_PILOT, workers)
    q = tuple(float(x) for x in quantiles)
    vals = tuple(float(v) for v in np.quantile(disc, q))
    return PilotReport(n_draws, q, vals, float(disc.min()), max_discrepancy(problem))


def pilot_epsilon(problem: Problem, prior: Prior, n_draws: int, quantile: float, rng, workers: int = 1) -> float:
    """Tolerance at the ``quantile`` of prior-predictive discrepancies."""
    return pilot(problem, prior, n_draws, rng, (quantile,), workers).values[0]


def local_epsilon(problem: Problem, params, quantile: float, n_sims: int, rng) -> float:
    """Tolerance at the ``quantile`` of discrepancies simulated at ``params``."""
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    theta = params.as_array() if isinstance(params, ParamSet) else np.ascontiguousarray(params, dtype=float)
    d = K.discrepancies_at(*problem.args, theta, problem.observed, n_sims, kernel_state(rng))
    return float(np.quantile(d, quantile))


def conditional_mle(network: Network, series: ObservationSeries, cleared=()) -> ParamSet:
    """Maximum of the one-step transition likelihood of a fully observed series.

    With every monthly state observed, each transition is a product of
    independent Bernoulli events given the previous month, so the
    likelihood factorises by season.  Recovery has the closed form
    ``recoveries / infected node-months``; the two infectivities are fitted
    numerically.  Used only as a data-driven starting point for ABC-MCMC.
    """
    series.check_against(network)
    x = series.states
    frozen = State.on(network, x[:, 0], cleared).frozen_mask()
    eligible = ~frozen
    adj = network.adjacency().astype(np.int64)
    seasons = np.array([Month.parse(m).season.value for m in series.month_labels[:-1]])
    est = np.zeros(6)
    eps = 1e-9
    for s in (0, 1):
        cols = np.flatnonzero(seasons == s)
        if cols.size == 0:
            raise ValueError(f"series has no {'summer' if s == 0 else 'winter'} transitions")
        inf_t = x[:, cols] & eligible[:, None]
        rec = (inf_t & ~x[:, cols + 1]).sum()
        est[s] = min(max(rec / max(inf_t.sum(), 1), eps), 1 - eps)
        near = adj @ x[:, cols].astype(np.int64)
        far = x[:, cols].sum(axis=0)[None, :] - near
        sus = ~x[:, cols] & eligible[:, None]
        keys = np.stack([near[sus], far[sus], x[:, cols + 1][sus].astype(np.int64)], axis=1)
        (mf, cnt) = np.unique(keys, axis=0, return_counts=True)
        m, f, y = mf[:, 0], mf[:, 1], mf[:, 2].astype(bool)

        def nll(p):
            log_escape = m * np.log1p(-p[0]) + f * np.log1p(-p[1])
            hit = np.log(np.maximum(-np.expm1(log_escape[y]), 1e-300))
            return -(cnt[y] @ hit + cnt[~y] @ log_escape[~y])

        res = minimize(nll, [0.05, 0.005], bounds=[(eps, 1 - eps)] * 2, method="L-BFGS-B")
        est[2 + s], est[4 + s] = res.x
    return ParamSet.from_array(est)


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 10_000_000
    burn_in: int = 100_000
    thin: int = 200
    epsilon: float = REFERENCE_EPSILON
    proposal_sd: tuple = DEFAULT_PROPOSAL_SD
    master_seed: int | None = None
    chains: int = 1
    init_cap: int = INIT_ATTEMPT_CAP

    def __post_init__(self):
        sd = tuple(float(v) for v in np.broadcast_to(np.asarray(self.proposal_sd, dtype=float), (6,)))
        object.__setattr__(self, "proposal_sd", sd)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if min(sd) <= 0:
            raise ValueError("proposal standard deviations must be > 0")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.init_cap < 1:
            raise ValueError("init_cap must be >= 1")

    @property
    def retained(self) -> int:
        """Number of states kept after burn-in and thinning."""
        return -(-(self.iterations - self.burn_in) // self.thin)


@dataclass(frozen=True, eq=False)
class McmcResult:
    draws: DrawSet
    iterations: int
    accepted: int
    in_bounds: int
    init_attempts: tuple
    wall_time: float

    @property
    def acceptance_rate(self) -> float:
        """Accepted proposals per iteration, over all chains."""
        return self.accepted / self.iterations


def mcmc_chain(problem: Problem, prior: Prior, config: McmcConfig, rng=None, workers: int = 1,
               keep_all: bool = False, initial=None) -> McmcResult:
    """ABC-MCMC with a Gaussian random walk.

    The chain starts from a prior draw whose simulation lands within
    tolerance (at most ``config.init_cap`` attempts).  With ``initial`` the
    search instead re-simulates at that parameter vector.  Each iteration
    proposes a jittered parameter vector; proposals outside the prior box
    are rejected, otherwise one simulation decides acceptance.

    By default burn-in and thinning are applied while the chain runs; with
    ``keep_all`` every iteration's state is returned.  Several chains
    (``config.chains``) run with streams derived from the master seed, and
    their iteration numbers are offset by ``chain * iterations``.

    Raises
    ------
    InitializationError
        If no starting simulation lands within tolerance.
    """
    seed = config.master_seed if rng is None else rng
    if seed is None:
        raise ValueError("a master seed is required")
    burn, thin = (0, 1) if keep_all else (config.burn_in, config.thin)
    n_keep = -(-(config.iterations - burn) // thin)
    sd = np.array(config.proposal_sd)
    start = np.zeros(6) if initial is None else np.ascontiguousarray(
        initial.as_array() if isinstance(initial, ParamSet) else np.asarray(initial, dtype=float))
    if initial is not None and not prior.contains(start):
        raise ValueError("initial parameters lie outside the prior")
    args = problem.args
    t0 = time.perf_counter()

    def run(chain: int):
        if isinstance(seed, np.random.Generator):
            st = kernel_state(seed)
        else:
            st = kernel_state(derive_rng(int(seed), STREAM_MCMC, chain))
        theta0 = np.empty(6)
        attempts, d0 = K.mcmc_init(*args, problem.observed, prior.lower, prior.upper, config.epsilon,
                                   start, initial is not None, config.init_cap, st, theta0)
        if d0 < 0:
            raise InitializationError(
                f"chain {chain}: no simulation within epsilon={config.epsilon:g} after "
                f"{attempts} attempts; use a larger epsilon (run a pilot) or a starting point")
        out_t = np.empty((n_keep, 6))
        out_d = np.empty(n_keep)
        out_i = np.empty(n_keep, dtype=np.int64)
        out_a = np.empty(n_keep, dtype=np.bool_)
        kept, acc, inb = K.mcmc_run(*args, problem.observed, prior.lower, prior.upper, sd, config.epsilon,
                                    theta0, d0, config.iterations, burn, thin, st, out_t, out_d, out_i, out_a)
        assert kept == n_keep
        draws = DrawSet(out_t, out_d, out_i + chain * config.iterations, out_a, config.epsilon,
                        np.full(n_keep, chain))
        return draws, acc, inb, attempts

    if isinstance(seed, np.random.Generator) and config.chains > 1:
        raise ValueError("multiple chains need an integer master seed")
    parts = run_tasks(run, list(range(config.chains)), workers)
    return McmcResult(
        draws=DrawSet.concat(p[0] for p in parts),
        iterations=config.iterations * config.chains,
        accepted=sum(p[1] for p in parts),
        in_bounds=sum(p[2] for p in parts),
        init_attempts=tuple(p[3] for p in parts),
        wall_time=time.perf_counter() - t0,
    )


def thin_and_burn(chain: DrawSet, burn_in: int, thin: int) -> DrawSet:
    """Keep positions ``burn_in, burn_in + thin, ...`` of each chain."""
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    idx = []
    for c in np.unique(chain.chain):
        pos = np.flatnonzero(chain.chain == c)
        if burn_in >= pos.size:
            raise ValueError(f"burn_in={burn_in} leaves nothing of a chain of length {pos.size}")
        idx.append(pos[burn_in::thin])
    if not idx:
        raise ValueError("cannot thin an empty chain")
    return chain.take(np.concatenate(idx))


def threshold_filter(draws: DrawSet, epsilon_prime: float) -> DrawSet:
    """Draws with discrepancy at most ``epsilon_prime``, order preserved."""
    if epsilon_prime > draws.epsilon:
        raise ValueError(f"epsilon'={epsilon_prime:g} exceeds the generation tolerance {draws.epsilon:g}")
    if epsilon_prime < 0:
        raise ValueError("epsilon' must be non-negative")
    out = draws.take(np.flatnonzero(draws.discrepancy <= epsilon_prime))
    return replace(out, epsilon=epsilon_prime) if epsilon_prime < draws.epsilon else out
