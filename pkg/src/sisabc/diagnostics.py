"""Posterior summaries and chain diagnostics, emitted as numbers rather than plots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .abc import DrawSet, Prior, threshold_filter
from .model import PARAM_NAMES

FAMILIES = ("recovery", "near", "far")
FAMILY_LABELS = {"recovery": "Recovery", "near": "Neighbouring infectivity", "far": "Distant infectivity"}
QUANTILES = (0.025, 0.5, 0.975)


def _param_matrix(draws) -> np.ndarray:
    m = draws.params if isinstance(draws, DrawSet) else np.asarray(draws, dtype=float)
    if m.ndim != 2 or m.shape[1] != len(PARAM_NAMES):
        raise ValueError("draws must be a DrawSet or an (n, 6) array")
    return m


@dataclass(frozen=True, eq=False)
class PosteriorReport:
    """Per-parameter sample statistics in the fixed parameter order.

    ``delta[k]`` is the winter mean minus the summer mean for family ``k``
    (recovery, near, far).
    """

    n_draws: int
    mean: np.ndarray
    sd: np.ndarray
    q025: np.ndarray
    q50: np.ndarray
    q975: np.ndarray

    @property
    def delta(self) -> np.ndarray:
        return self.mean[1::2] - self.mean[0::2]

    def row(self, name: str) -> dict:
        i = PARAM_NAMES.index(name)
        return {"mean": float(self.mean[i]), "sd": float(self.sd[i]), "q025": float(self.q025[i]),
                "q50": float(self.q50[i]), "q975": float(self.q975[i])}

    def table(self) -> str:
        """Seasonal table of mean posteriors as percentages."""
        lines = ["Parameter\tSummer\tWinter\tDelta"]
        for k, fam in enumerate(FAMILIES):
            s, w = self.mean[2 * k], self.mean[2 * k + 1]
            lines.append(f"{FAMILY_LABELS[fam]}\t{percent(s)}\t{percent(w)}\t{percent(w - s, signed=True)}")
        return "\n".join(lines)

    def to_text(self) -> str:
        """Structured-text report: the seasonal table, then one line per parameter."""
        out = [f"draws: {self.n_draws}", "", self.table(), "",
               "parameter,mean,sd,q025,q50,q975"]
        for i, name in enumerate(PARAM_NAMES):
            vals = (self.mean[i], self.sd[i], self.q025[i], self.q50[i], self.q975[i])
            out.append(name + "," + ",".join(repr(float(v)) for v in vals))
        for k, fam in enumerate(FAMILIES):
            out.append(f"delta_{fam}_winter_minus_summer,{float(self.delta[k])!r}")
        return "\n".join(out) + "\n"


def percent(value: float, signed: bool = False) -> str:
    """Format a probability as a percentage with at most two decimals, trailing zeros trimmed."""
    text = f"{abs(value) * 100:.2f}".rstrip("0").rstrip(".")
    if text in ("", "0"):
        text = "0"
    sign = "-" if value < 0 and text != "0" else ("+" if signed and text != "0" else "")
    return f"{sign}{text}%"


def posterior_summary(draws) -> PosteriorReport:
    """Mean, standard deviation and 2.5/50/97.5% quantiles of each parameter."""
    m = _param_matrix(draws)
    if m.shape[0] < 2:
        raise ValueError("a posterior summary needs at least two draws")
    q = np.quantile(m, QUANTILES, axis=0)
    const = np.ptp(m, axis=0) == 0
    # constant columns are reported exactly rather than with rounding noise
    mean = np.where(const, m[0], m.mean(axis=0))
    sd = np.where(const, 0.0, m.std(axis=0, ddof=1))
    return PosteriorReport(m.shape[0], mean, sd, q[0], q[1], q[2])


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation at lags ``0..max_lag`` (via FFT).

    Raises
    ------
    ValueError
        For a constant series or ``max_lag >= len(series)``.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if max_lag < 0 or n <= max_lag:
        raise ValueError(f"series of length {n} is too short for lag {max_lag}")
    x = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    if not acov[0] > 1e-300 * n or np.ptp(x) == 0:
        raise ValueError("zero variance: autocorrelation is undefined for a constant series")
    return acov / acov[0]


def effective_sample_size(series) -> float:
    """Effective sample size ``n / tau`` of a stationary series.

    ``tau = -1 + 2 * sum(G_m)`` over the pair sums ``G_m = rho_2m + rho_2m+1``
    of autocorrelations, truncated before the first non-positive pair sum
    and made monotone non-increasing.  Pairing keeps negatively correlated
    chains from being truncated at lag 1, so an anti-correlated chain gets
    ``ESS > n``; the result is capped at ``n * log10(n)``.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 4:
        raise ValueError("need at least four values")
    rho = autocorrelation(x, n - 1)
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    stop = np.flatnonzero(pairs <= 0)
    pairs = pairs[: stop[0] if stop.size else pairs.size]
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    cap = n * np.log10(n)
    if tau <= n / cap:
        return float(cap)
    return float(n / tau)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Binned one- and two-dimensional posterior mass over the prior box.

    ``marginal[i]`` has ``bins`` cells for parameter ``i``; ``pair[(i, j)]``
    (``i < j``) is a ``bins x bins`` mass grid with ``i`` along rows.
    """

    edges: np.ndarray
    marginal: np.ndarray
    pair: dict

    def centers(self, i: int) -> np.ndarray:
        e = self.edges[i]
        return 0.5 * (e[:-1] + e[1:])

    def correlation(self, i: int, j: int) -> float:
        """Correlation implied by the binned pair mass (cells at their centres)."""
        g = self.pair[(min(i, j), max(i, j))]
        a, b = self.centers(min(i, j)), self.centers(max(i, j))
        ma, mb = g.sum(axis=1), g.sum(axis=0)
        ea, eb = ma @ a, mb @ b
        cov = a @ g @ b - ea * eb
        va = ma @ a**2 - ea**2
        vb = mb @ b**2 - eb**2
        return float(cov / np.sqrt(va * vb))

    def rows(self):
        """Flat ``(param_x, param_y, bin_x, bin_y, mass)`` records; 1-D panels have ``param_y = ''``."""
        for i in range(len(PARAM_NAMES)):
            for b, v in enumerate(self.marginal[i]):
                yield PARAM_NAMES[i], "", b, "", float(v)
        for (i, j), g in sorted(self.pair.items()):
            for bx in range(g.shape[0]):
                for by in range(g.shape[1]):
                    yield PARAM_NAMES[i], PARAM_NAMES[j], bx, by, float(g[bx, by])


def pairwise_density_grid(draws, bins: int, prior: Prior | None = None) -> DensityGrid:
    """Normalised histograms of every parameter and parameter pair."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    m = _param_matrix(draws)
    if m.shape[0] == 0:
        raise ValueError("no draws to bin")
    prior = prior or Prior()
    k = m.shape[1]
    edges = np.array([np.linspace(prior.lower[i], prior.upper[i], bins + 1) for i in range(k)])
    marg = np.empty((k, bins))
    for i in range(k):
        h, _ = np.histogram(m[:, i], bins=edges[i])
        marg[i] = h / h.sum()
    pair = {}
    for i in range(k):
        for j in range(i + 1, k):
            h, _, _ = np.histogram2d(m[:, i], m[:, j], bins=(edges[i], edges[j]))
            pair[(i, j)] = h / h.sum()
    return DensityGrid(edges, marg, pair)


@dataclass(frozen=True, eq=False)
class ToleranceRow:
    epsilon: float
    retained: int
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def tolerance_sensitivity(draws: DrawSet, epsilons) -> list[ToleranceRow]:
    """Re-filter ``draws`` at each tolerance and summarise what remains.

    ``epsilons`` must be sorted in descending order and none may exceed the
    tolerance the draws were generated at.  Bounds are the 2.5% and 97.5%
    posterior quantiles of the retained draws (NaN when fewer than two
    remain).
    """
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ValueError("no tolerances given")
    if any(b > a for a, b in zip(eps, eps[1:])):
        raise ValueError("tolerances must be sorted in descending order")
    if eps[0] > draws.epsilon:
        raise ValueError(f"tolerance {eps[0]:g} exceeds the generation tolerance {draws.epsilon:g}")
    rows = []
    for e in eps:
        kept = threshold_filter(draws, e)
        if len(kept) >= 2:
            rep = posterior_summary(kept)
            rows.append(ToleranceRow(e, len(kept), rep.mean, rep.q025, rep.q975))
        else:
            nan = np.full(len(PARAM_NAMES), np.nan)
            mean = kept.params.mean(axis=0) if len(kept) else nan
            rows.append(ToleranceRow(e, len(kept), mean, nan, nan))
    return rows
