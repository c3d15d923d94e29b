"""Command-line entry point.

Every command reads one YAML config file (keys documented in the README);
flags override file values.  Relative input paths resolve against the
config file's directory and outputs go to ``--out`` (default from the
config's ``output`` key).  Every output file starts with a metadata line
recording the tool version, the master seed and a digest of the effective
configuration (worker count and output directory excluded, since they do
not affect results).

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical or initialisation failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .abc import (DrawSet, InitializationError, McmcConfig, Prior, Problem, SchemaError,
                  conditional_mle, default_epsilon, local_epsilon, mcmc_chain, pilot,
                  read_draws, rejection_sample, threshold_filter, write_draws)
from .diagnostics import (autocorrelation, effective_sample_size, pairwise_density_grid,
                          posterior_summary, tolerance_sensitivity)
from .forecast import DEFAULT_REPLICATES, Scenario, compare_scenarios, posterior_forecast, write_forecast
from .model import PARAM_NAMES, ParamSet, SeasonMode, State, simulate
from .network import (NetworkError, bin_points, network_queries, read_network, read_points,
                      read_series, write_series)
from .rng import STREAM_PILOT, STREAM_SIMULATE, derive_rng
from .summary import summarize, write_summary
from .validation import RANDOM_BASELINE, predictive_check, roc_curve, write_records, write_roc

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

COMMANDS = ("simulate", "infer", "diagnose", "filter", "forecast", "validate", "bin", "net-stats")
# keys that do not change results and are left out of the config digest
NON_RESULT_KEYS = ("workers", "output")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sisabc", description="Seasonal network SIS simulation and ABC inference.")
    p.add_argument("--version", action="version", version=f"sisabc {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", "-c", required=True, help="YAML config file")
        c.add_argument("--seed", type=int, help="master seed (overrides config)")
        c.add_argument("--workers", type=int, help="worker threads (overrides config)")
        c.add_argument("--out", help="output directory (overrides config)")
        c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a dotted config key, e.g. infer.epsilon=30")
        if name == "infer":
            c.add_argument("--mode", choices=("rejection", "mcmc", "pilot"))
            c.add_argument("--epsilon", type=float)
        if name == "filter":
            c.add_argument("--epsilon", type=float)
    return p


# ---------------------------------------------------------------------------
# configuration


class Run:
    """Effective configuration plus helpers shared by the commands."""

    def __init__(self, config: dict, base: Path, out: Path):
        self.config = config
        self.base = base
        self.out = out
        self.seed = config.get("seed")
        self.workers = int(config.get("workers", 1))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        digest_src = {k: v for k, v in config.items() if k not in NON_RESULT_KEYS}
        blob = json.dumps(digest_src, sort_keys=True, default=str).encode()
        self.digest = hashlib.sha256(blob).hexdigest()[:16]

    @property
    def header(self) -> str:
        return f"# sisabc {__version__} seed={self.seed} config={self.digest}\n"

    def section(self, name: str) -> dict:
        sec = self.config.get(name) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        return sec

    def get(self, dotted: str, default=None):
        node = self.config
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def require(self, dotted: str):
        v = self.get(dotted)
        if v is None:
            raise ConfigError(f"missing config key {dotted!r}")
        return v

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a master seed is required (config 'seed' or --seed)")
        return int(self.seed)

    def input_path(self, dotted: str, default: Path | None = None) -> Path:
        v = self.get(dotted)
        if v is None:
            if default is None:
                raise ConfigError(f"missing config key {dotted!r}")
            path = default
        else:
            path = Path(v)
            if not path.is_absolute():
                path = self.base / path
        if not path.exists():
            raise ConfigError(f"{dotted}: file not found: {path}")
        return path

    def output(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    # data loading; parse failures are data errors

    def network(self, footprints: bool = False):
        edges = self.input_path("network.edges")
        nodes = self.input_path("network.nodes")
        fp = self.input_path("network.footprints") if (footprints or self.get("network.footprints")) else None
        try:
            return read_network(edges, nodes, fp)
        except (NetworkError, ValueError) as e:
            raise DataError(str(e)) from e

    def series(self, network):
        path = self.input_path("data.snapshots")
        try:
            s = read_series(path)
            s.check_against(network)
            return s
        except ValueError as e:
            raise DataError(str(e)) from e

    def draws(self, dotted: str) -> DrawSet:
        path = self.input_path(dotted, self.out / "draws.csv")
        try:
            return read_draws(path)
        except (SchemaError, ValueError) as e:
            raise DataError(str(e)) from e

    def holdout(self) -> int:
        return int(self.get("data.holdout", 0))

    def training(self, network):
        series = self.series(network)
        k = self.holdout()
        if k:
            if k >= series.snapshots - 1:
                raise ConfigError(f"holdout={k} leaves no training months")
            series, _ = series.split(k)
        return series

    def prior(self) -> Prior:
        sec = self.section("prior")
        return Prior(sec.get("lower", 0.0), sec.get("upper", 1.0))


def _parse_value(text: str):
    return yaml.safe_load(text)


def load_config(path, overrides=()) -> tuple[dict, Path]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config file must contain a mapping")
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        node = cfg
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key}: {part} is not a section")
        node[parts[-1]] = _parse_value(value)
    return cfg, path.resolve().parent


def _params(value) -> ParamSet:
    if isinstance(value, dict):
        missing = [n for n in PARAM_NAMES if n not in value]
        if missing:
            raise ConfigError(f"parameter set is missing {missing}")
        return ParamSet(*(float(value[n]) for n in PARAM_NAMES))
    try:
        return ParamSet.from_array(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad parameter set {value!r}: {e}") from e


def _fmt(v) -> str:
    return repr(float(v))


def _write_text(path: Path, header: str, body: str) -> None:
    path.write_text(header + body)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(run: Run, args) -> int:
    net = run.network()
    sec = run.section("simulate")
    params = _params(run.require("simulate.params"))
    initial = sec.get("initial", "data")
    if initial == "data":
        series = run.series(net)
        init = series.states[:, 0]
        start = sec.get("start_month", str(series.month_labels[0]))
        horizon = int(sec.get("horizon", series.snapshots - 1))
    else:
        init = np.zeros(net.node_count, dtype=bool)
        try:
            init[[int(v) for v in initial]] = True
        except (IndexError, TypeError, ValueError) as e:
            raise ConfigError(f"simulate.initial must be 'data' or a list of node ids: {e}") from e
        start = run.require("simulate.start_month")
        horizon = int(run.require("simulate.horizon"))
    try:
        state = State.on(net, init, sec.get("cleared", ()), clear_infected=True)
    except ValueError as e:
        raise DataError(str(e)) from e
    rng = derive_rng(run.require_seed(), STREAM_SIMULATE)
    traj = simulate(net, params, state, start, horizon, rng, sec.get("season_mode", "calendar"))
    write_series(traj.to_series(), run.output("trajectory.csv"), run.header)
    write_summary(summarize(traj, net), run.output("trajectory_summary.csv"), run.header)
    print(f"months {traj.states.shape[1]} final_infected {int(traj.states[:, -1].sum())}")
    return EXIT_OK


def _problem(run: Run):
    net = run.network()
    train = run.training(net)
    cleared = run.get("data.cleared", ()) or ()
    return net, train, Problem.from_series(net, train, cleared)


def _epsilon(run: Run, problem: Problem, explicit) -> float:
    eps = explicit if explicit is not None else run.get("infer.epsilon")
    if eps is None:
        try:
            return default_epsilon(problem)
        except ValueError as e:
            raise ConfigError(str(e)) from e
    return float(eps)


def cmd_infer(run: Run, args) -> int:
    mode = args.mode or run.get("infer.mode", "mcmc")
    seed = run.require_seed()
    net, train, problem = _problem(run)
    prior = run.prior()
    sec = run.section("infer")
    lines = [f"mode: {mode}", f"seed: {seed}", f"summary_length: {problem.observed.size}",
             f"training_months: {train.snapshots}"]
    t0 = time.perf_counter()

    if mode == "pilot":
        n = int(sec.get("pilot_draws", 100_000))
        rep = pilot(problem, prior, n, seed, workers=run.workers)
        start = conditional_mle(net, train, run.get("data.cleared", ()) or ())
        q = float(sec.get("pilot_quantile", 0.05))
        local = local_epsilon(problem, start, q, int(sec.get("pilot_sims", 2000)),
                              derive_rng(seed, STREAM_PILOT, 1))
        body = ["source,quantile,discrepancy"]
        body += [f"prior,{_fmt(qq)},{_fmt(v)}" for qq, v in zip(rep.quantiles, rep.values)]
        body.append(f"start,{_fmt(q)},{_fmt(local)}")
        _write_text(run.output("pilot.csv"), run.header, "\n".join(body) + "\n")
        lines += [f"prior_draws: {n}", f"min_discrepancy: {rep.minimum!r}",
                  f"max_attainable_discrepancy: {rep.max_attainable!r}",
                  "start_params: " + ",".join(_fmt(v) for v in start.as_array()),
                  f"suggested_epsilon_at_start_q{q:g}: {local!r}"]
        print(f"pilot: start-point epsilon {local:.6g}; see {run.output('pilot.csv')}")

    elif mode == "rejection":
        eps = _epsilon(run, problem, args.epsilon)
        n = int(sec.get("n_draws", 100_000))
        res = rejection_sample(problem, prior, n, eps, seed, workers=run.workers)
        write_draws(res.accepted, run.output("draws.csv"), run.header)
        lines += [f"epsilon: {eps!r}", f"n_draws: {n}", f"accepted: {len(res.accepted)}",
                  f"acceptance_rate: {res.acceptance_rate!r}", f"diagnostic: {res.diagnostic}"]
        print(res.diagnostic)

    elif mode == "mcmc":
        eps = _epsilon(run, problem, args.epsilon)
        start_spec = sec.get("start", "prior")
        if start_spec == "prior":
            initial = None
        elif start_spec == "mle":
            initial = conditional_mle(net, train, run.get("data.cleared", ()) or ())
        else:
            initial = _params(start_spec)
        try:
            cfg = McmcConfig(
                iterations=int(sec.get("iterations", 10_000_000)),
                burn_in=int(sec.get("burn_in", 100_000)),
                thin=int(sec.get("thin", 200)),
                epsilon=eps,
                proposal_sd=tuple(sec.get("proposal_sd", McmcConfig.proposal_sd)),
                master_seed=seed,
                chains=int(sec.get("chains", 1)),
                init_cap=int(sec.get("init_cap", 100_000)),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e
        res = mcmc_chain(problem, prior, cfg, workers=run.workers, initial=initial)
        write_draws(res.draws, run.output("draws.csv"), run.header)
        lines += [f"epsilon: {eps!r}", f"iterations: {res.iterations}", f"chains: {cfg.chains}",
                  f"retained: {len(res.draws)}", f"accepted_proposals: {res.accepted}",
                  f"acceptance_rate: {res.acceptance_rate!r}",
                  "init_attempts: " + ",".join(str(a) for a in res.init_attempts),
                  f"start: {start_spec if isinstance(start_spec, str) else 'explicit'}"]
        print(f"mcmc: acceptance rate {res.acceptance_rate:.4g}, {len(res.draws)} retained draws")
    else:
        raise ConfigError(f"unknown infer mode {mode!r}")

    lines.append(f"wall_time_s: {time.perf_counter() - t0:.3f}")
    _write_text(run.output("infer_report.txt"), run.header, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_diagnose(run: Run, args) -> int:
    draws = run.draws("diagnose.draws")
    sec = run.section("diagnose")
    if len(draws) < 2:
        raise DataError("diagnostics need at least two draws")
    rep = posterior_summary(draws)
    text = rep.to_text()
    ess = []
    for i, name in enumerate(PARAM_NAMES):
        col = draws.params[:, i]
        ess.append(effective_sample_size(col) if np.ptp(col) > 0 else float("nan"))
        text += f"ess_{name},{ess[-1]!r}\n"
    _write_text(run.output("posterior_report.txt"), run.header, text)

    max_lag = min(int(sec.get("max_lag", 100)), len(draws) - 1)
    rows = ["lag," + ",".join(PARAM_NAMES)]
    acfs = []
    for i in range(len(PARAM_NAMES)):
        col = draws.params[:, i]
        acfs.append(autocorrelation(col, max_lag) if np.ptp(col) > 0 else np.full(max_lag + 1, np.nan))
    for k in range(max_lag + 1):
        rows.append(f"{k}," + ",".join(_fmt(a[k]) for a in acfs))
    _write_text(run.output("autocorrelation.csv"), run.header, "\n".join(rows) + "\n")

    grid = pairwise_density_grid(draws, int(sec.get("bins", 20)), run.prior())
    rows = ["param_x,param_y,bin_x,bin_y,mass"]
    rows += [f"{a},{b},{c},{d},{_fmt(m)}" for a, b, c, d, m in grid.rows()]
    _write_text(run.output("density_grid.csv"), run.header, "\n".join(rows) + "\n")

    eps_list = sec.get("epsilons")
    if eps_list:
        try:
            tol = tolerance_sensitivity(draws, eps_list)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        head = ["epsilon", "retained"] + [f"{n}_{s}" for n in PARAM_NAMES for s in ("mean", "q025", "q975")]
        rows = [",".join(head)]
        for r in tol:
            vals = [f"{v}" for i in range(len(PARAM_NAMES)) for v in (_fmt(r.mean[i]), _fmt(r.lower[i]), _fmt(r.upper[i]))]
            rows.append(f"{_fmt(r.epsilon)},{r.retained}," + ",".join(vals))
        _write_text(run.output("tolerance.csv"), run.header, "\n".join(rows) + "\n")
    print(rep.table())
    return EXIT_OK


def cmd_filter(run: Run, args) -> int:
    draws = run.draws("filter.draws")
    eps = args.epsilon if args.epsilon is not None else run.get("filter.epsilon")
    if eps is None:
        raise ConfigError("filter needs an epsilon (filter.epsilon or --epsilon)")
    try:
        kept = threshold_filter(draws, float(eps))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    write_draws(kept, run.output(run.get("filter.output", "filtered_draws.csv")), run.header)
    print(f"kept {len(kept)} of {len(draws)} draws at epsilon {float(eps):g}")
    return EXIT_OK


def _scenarios(run: Run, net, series):
    sec = run.section("forecast")
    anchor = sec.get("start", "last")
    if anchor == "last":
        col = series.snapshots - 1
    elif anchor == "training":
        col = series.snapshots - 1 - run.holdout()
    else:
        raise ConfigError("forecast.start must be 'last' or 'training'")
    horizon = int(sec.get("horizon", 6))
    specs = sec.get("scenarios") or [{"name": "baseline"}]
    out = []
    for i, spec in enumerate(specs):
        name = str(spec.get("name", f"scenario{i}"))
        cleared = frozenset(int(c) for c in spec.get("cleared", ()) or ())
        try:
            for c in cleared:
                net._check(c)
            sc = Scenario(series.states[:, col], series.month_labels[col], horizon,
                          SeasonMode.parse(spec.get("season_mode", "calendar")), cleared)
        except ValueError as e:
            raise ConfigError(f"scenario {name}: {e}") from e
        out.append((name, sc))
    return out


def cmd_forecast(run: Run, args) -> int:
    seed = run.require_seed()
    net = run.network()
    series = run.series(net)
    draws = run.draws("forecast.draws")
    if len(draws) == 0:
        raise DataError("the posterior draw set is empty")
    n_runs = int(run.get("forecast.replicates", DEFAULT_REPLICATES))
    results = []
    rows = ["scenario,month,mean_probability,se"]
    for name, sc in _scenarios(run, net, series):
        # scenarios share the master seed, so comparisons use common random numbers
        res = posterior_forecast(net, draws.params, sc, n_runs, seed, run.workers)
        write_forecast(res, run.output(f"forecast_{name}.csv"), run.header)
        for t, label in enumerate(res.month_labels):
            m, se = res.steady_state(t)
            rows.append(f"{name},{label},{_fmt(m)},{_fmt(se)}")
        results.append((name, res))
        m, se = res.steady_state()
        print(f"{name}: final-month mean probability {m:.4f} (se {se:.4f})")
    _write_text(run.output("forecast_summary.csv"), run.header, "\n".join(rows) + "\n")
    base_name, base = results[0]
    for name, res in results[1:]:
        cmp = compare_scenarios(base, res)
        lines = ["node,month,delta"]
        for v in range(cmp.delta.shape[0]):
            for t, label in enumerate(cmp.month_labels):
                lines.append(f"{v},{label},{_fmt(cmp.delta[v, t])}")
        lines.append("# mean_delta_by_month," + ",".join(_fmt(x) for x in cmp.mean_delta))
        _write_text(run.output(f"compare_{base_name}_{name}.csv"), run.header, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_validate(run: Run, args) -> int:
    seed = run.require_seed()
    net = run.network()
    series = run.series(net)
    draws = run.draws("validate.draws")
    if len(draws) == 0:
        raise DataError("the posterior draw set is empty")
    k = int(run.get("validate.holdout", run.holdout()))
    if k < 1:
        raise ConfigError("validation needs hold-out months (data.holdout)")
    n_runs = int(run.get("validate.replicates", DEFAULT_REPLICATES))
    res = predictive_check(net, draws.params, series, k, n_runs, seed, run.workers,
                           run.get("data.cleared", ()) or ())
    write_records(res, run.output("records.csv"), run.header)
    lines = ["node,mean_loss"] + [f"{v},{_fmt(x)}" for v, x in enumerate(res.node_loss) if np.isfinite(x)]
    _write_text(run.output("node_loss.csv"), run.header, "\n".join(lines) + "\n")
    summary = [f"records: {len(res.records)}", f"mean_loss: {res.mean_loss!r}",
               f"random_baseline: {RANDOM_BASELINE!r}", f"clamp_delta: {res.delta!r}", "log: natural"]
    try:
        roc = roc_curve(res.records)
        write_roc(roc, run.output("roc.csv"), run.header)
        summary.append(f"auc: {roc.auc!r}")
    except ValueError as e:
        summary.append(f"auc: undefined ({e})")
    _write_text(run.output("validate_summary.txt"), run.header, "\n".join(summary) + "\n")
    print(f"mean loss {res.mean_loss:.4f} (random baseline {RANDOM_BASELINE:.4f})")
    return EXIT_OK


def cmd_bin(run: Run, args) -> int:
    net = run.network(footprints=True)
    path = run.input_path("bin.points")
    try:
        points = read_points(path)
        res = bin_points(points, net, int(run.require("bin.snapshots")), run.get("bin.start_month", "2014-12"))
    except (NetworkError, ValueError) as e:
        raise DataError(str(e)) from e
    write_series(res.series, run.output("binned_snapshots.csv"), run.header)
    rows = ["x,y,snapshot_index"] + [f"{_fmt(p.x)},{_fmt(p.y)},{p.snapshot_index}" for p in res.rejects]
    _write_text(run.output("rejects.csv"), run.header, "\n".join(rows) + "\n")
    print(f"binned {len(points) - len(res.rejects)} points, {len(res.rejects)} rejected")
    return EXIT_OK


def cmd_net_stats(run: Run, args) -> int:
    net = run.network()
    hist = net.degree_histogram()
    rows = ["degree,count"] + [f"{d},{c}" for d, c in sorted(hist.items())]
    _write_text(run.output("degree_histogram.csv"), run.header, "\n".join(rows) + "\n")
    rows = ["node,degree,non_neighbors,planted"]
    for v in range(net.node_count):
        q = network_queries(net, v)
        rows.append(f"{v},{q.degree},{q.non_neighbor_count},{int(net.planted[v])}")
    _write_text(run.output("nodes.csv"), run.header, "\n".join(rows) + "\n")
    deg = net.degrees()
    print(f"nodes {net.node_count} edges {len(net.edges)} min_degree {deg.min()} max_degree {deg.max()}")
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate, "infer": cmd_infer, "diagnose": cmd_diagnose, "filter": cmd_filter,
    "forecast": cmd_forecast, "validate": cmd_validate, "bin": cmd_bin, "net-stats": cmd_net_stats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, base = load_config(args.config, args.set)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.workers is not None:
            cfg["workers"] = args.workers
        if getattr(args, "mode", None):
            cfg.setdefault("infer", {})["mode"] = args.mode
        if getattr(args, "epsilon", None) is not None:
            cfg.setdefault(args.command if args.command == "filter" else "infer", {})["epsilon"] = args.epsilon
        out = Path(args.out if args.out else cfg.get("output", "sisabc-out"))
        run = Run(cfg, base, out)
        return HANDLERS[args.command](run, args)
    except ConfigError as e:
        print(f"sisabc: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"sisabc: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except InitializationError as e:
        print(f"sisabc: initialisation failed: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as e:
        print(f"sisabc: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"sisabc: invalid setting: {e}", file=sys.stderr)
        return EXIT_USAGE
