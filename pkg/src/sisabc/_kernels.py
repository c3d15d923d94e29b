"""Compiled inner loops.

Parameter vectors use the fixed order
``[recovery_summer, recovery_winter, near_summer, near_winter, far_summer, far_winter]``
and seasons are coded 0 = summer, 1 = winter, so the parameter of kind ``k``
(0 recovery, 1 near, 2 far) in season ``s`` is ``theta[2 * k + s]``.

Count vectors use the summary order
``[s10_summer, s10_winter, s010_summer, s010_winter, s011_summer, s011_winter]``.

Random numbers come from an inline xoshiro256+ generator whose 4-word state
is seeded from a numpy ``Generator`` by the callers.  Calling back into a
numpy ``Generator`` per draw spills registers around an opaque call and
roughly halves simulator throughput.

Every node consumes exactly one uniform per step, whatever its state, and a
node changes state iff its uniform falls below its event threshold
(``recovery`` if infected, the infection probability if susceptible, 0 if
frozen).  Streams therefore stay aligned across parameter values and events
are monotone in the parameters under a shared stream.
"""

import numba as nb
import numpy as np

N_PARAMS = 6
N_COUNTS = 6

_jit = nb.njit(cache=True, nogil=True)
_U64 = nb.uint64
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, nogil=True, inline="always")
def _next(st):
    s0 = st[0]
    s1 = st[1]
    s2 = st[2]
    s3 = st[3]
    r = s0 + s3
    t = s1 << _U64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << _U64(45)) | (s3 >> _U64(19))
    st[0] = s0
    st[1] = s1
    st[2] = s2
    st[3] = s3
    return r


@_jit
def uniform(st):
    """Uniform double in [0, 1) from the top 53 bits."""
    return np.int64(_next(st) >> _U64(11)) * _INV53


@_jit
def normal_pair(st):
    """Two independent standard normals (Box-Muller)."""
    u1 = 1.0 - uniform(st)  # (0, 1]
    u2 = uniform(st)
    r = np.sqrt(-2.0 * np.log(u1))
    return r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)


@_jit
def uniforms(st, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(st)
    return out


# ---------------------------------------------------------------------------
# simulation core


@_jit
def max_degree(indptr):
    d = 0
    for v in range(indptr.shape[0] - 1):
        d = max(d, indptr[v + 1] - indptr[v])
    return d


@_jit
def frozen_offsets(frozen, maxdeg):
    """Offset into the threshold table: frozen nodes read the all-zero half."""
    off = np.zeros(frozen.shape[0], dtype=np.int32)
    for v in range(frozen.shape[0]):
        if frozen[v]:
            off[v] = maxdeg + 1
    return off


@_jit
def power_tables(theta, n, pw):
    """``pw[s, k] = (1 - near_s)**k`` and ``pw[2 + s, k] = (1 - far_s)**k``."""
    for s in range(2):
        a = 1.0 - theta[2 + s]
        b = 1.0 - theta[4 + s]
        pw[s, 0] = 1.0
        pw[2 + s, 0] = 1.0
        for k in range(1, n + 1):
            pw[s, k] = pw[s, k - 1] * a
            pw[2 + s, k] = pw[2 + s, k - 1] * b


@_jit
def reset(indptr, indices, init, x, m):
    """Load ``init`` into ``x`` and rebuild infected-neighbour counts; returns infected count."""
    n = init.shape[0]
    n_inf = 0
    for v in range(n):
        m[v] = 0
    for v in range(n):
        x[v] = 1 if init[v] else 0
        if init[v]:
            n_inf += 1
            for j in range(indptr[v], indptr[v + 1]):
                m[indices[j]] += 1
    return n_inf


@_jit
def advance(indptr, indices, off, x, m, changed, n_inf, theta, pw, thr, maxdeg, s, st, counts):
    """One synchronous month in place; returns the new infected count.

    ``m[v]`` holds the number of infected neighbours of ``v`` and is kept
    current incrementally.  A susceptible node with ``m`` infected
    neighbours is infected with probability
    ``1 - (1 - near)**m * (1 - far)**(n_inf - m)``.
    """
    rec = theta[s]
    for k in range(maxdeg + 1):
        if k <= n_inf:
            thr[k] = 1.0 - pw[s, k] * pw[2 + s, n_inf - k]
        else:
            thr[k] = 0.0

    n = x.shape[0]
    s0 = st[0]
    s1 = st[1]
    s2 = st[2]
    s3 = st[3]
    nc = 0
    for v in range(n):
        r = s0 + s3
        t = s1 << _U64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << _U64(45)) | (s3 >> _U64(19))
        u = np.int64(r >> _U64(11)) * _INV53

        xv = x[v] != 0
        mv = m[v]
        p = rec if xv else thr[mv + off[v]]
        ev = u < p
        changed[nc] = v
        nc += ev
    st[0] = s0
    st[1] = s1
    st[2] = s2
    st[3] = s3

    # classify events against the counts at t before applying any of them
    for i in range(nc):
        v = changed[i]
        if x[v] != 0:
            counts[s] += 1
        elif m[v] > 0:
            counts[4 + s] += 1
        else:
            counts[2 + s] += 1
    for i in range(nc):
        v = changed[i]
        if x[v] != 0:
            x[v] = 0
            n_inf -= 1
            d = -1
        else:
            x[v] = 1
            n_inf += 1
            d = 1
        for j in range(indptr[v], indptr[v + 1]):
            m[indices[j]] += d
    return n_inf


@_jit
def step(indptr, indices, frozen, cur, theta, s, st, n_samples=1):
    """``n_samples`` independent one-month successors of ``cur``, one per row."""
    n = cur.shape[0]
    maxdeg = max_degree(indptr)
    off = frozen_offsets(frozen, maxdeg)
    x = np.empty(n, dtype=np.uint8)
    m = np.empty(n, dtype=np.int32)
    changed = np.empty(n, dtype=np.int32)
    thr = np.zeros(2 * (maxdeg + 1))
    pw = np.empty((4, n + 1))
    counts = np.zeros(N_COUNTS, dtype=np.int64)
    out = np.empty((n_samples, n), dtype=np.bool_)
    power_tables(theta, n, pw)
    for i in range(n_samples):
        n_inf = reset(indptr, indices, cur, x, m)
        advance(indptr, indices, off, x, m, changed, n_inf, theta, pw, thr, maxdeg, s, st, counts)
        for v in range(n):
            out[i, v] = x[v] != 0
    return out


@_jit
def simulate_states(indptr, indices, frozen, init, seasons, theta, st):
    """Full trajectory, time-major: ``out[t, v]``."""
    n = init.shape[0]
    horizon = seasons.shape[0]
    maxdeg = max_degree(indptr)
    off = frozen_offsets(frozen, maxdeg)
    x = np.empty(n, dtype=np.uint8)
    m = np.empty(n, dtype=np.int32)
    changed = np.empty(n, dtype=np.int32)
    thr = np.zeros(2 * (maxdeg + 1))
    pw = np.empty((4, n + 1))
    counts = np.zeros(N_COUNTS, dtype=np.int64)
    out = np.empty((horizon + 1, n), dtype=np.bool_)
    power_tables(theta, n, pw)
    n_inf = reset(indptr, indices, init, x, m)
    out[0, :] = init
    for t in range(horizon):
        n_inf = advance(indptr, indices, off, x, m, changed, n_inf, theta, pw, thr, maxdeg, seasons[t], st, counts)
        for v in range(n):
            out[t + 1, v] = x[v] != 0
    return out


@_jit
def summary_into(indptr, indices, off, init, seasons, theta, st, x, m, changed, thr, pw, maxdeg, counts, out):
    """Simulate once and write the flat summary vector into ``out`` without storing states."""
    n = init.shape[0]
    horizon = seasons.shape[0]
    power_tables(theta, n, pw)
    for j in range(N_COUNTS):
        counts[j] = 0
    n_inf = reset(indptr, indices, init, x, m)
    out[0] = n_inf / n
    for t in range(horizon):
        n_inf = advance(indptr, indices, off, x, m, changed, n_inf, theta, pw, thr, maxdeg, seasons[t], st, counts)
        out[t + 1] = n_inf / n
    for j in range(N_COUNTS):
        out[horizon + 1 + j] = counts[j]


@_jit
def mse(x, y):
    acc = 0.0
    for j in range(x.shape[0]):
        d = x[j] - y[j]
        acc += d * d
    return acc / x.shape[0]


@_jit
def simulate_summaries(indptr, indices, frozen, init, seasons, thetas, st):
    """One summary vector per row of ``thetas``."""
    n = init.shape[0]
    maxdeg = max_degree(indptr)
    off = frozen_offsets(frozen, maxdeg)
    x = np.empty(n, dtype=np.uint8)
    m = np.empty(n, dtype=np.int32)
    changed = np.empty(n, dtype=np.int32)
    thr = np.zeros(2 * (maxdeg + 1))
    pw = np.empty((4, n + 1))
    counts = np.zeros(N_COUNTS, dtype=np.int64)
    k = seasons.shape[0] + 1 + N_COUNTS
    out = np.empty((thetas.shape[0], k))
    for i in range(thetas.shape[0]):
        summary_into(indptr, indices, off, init, seasons, thetas[i], st,
                     x, m, changed, thr, pw, maxdeg, counts, out[i])
    return out


@_jit
def discrepancies_at(indptr, indices, frozen, init, seasons, theta, observed, n_sims, st):
    n = init.shape[0]
    maxdeg = max_degree(indptr)
    off = frozen_offsets(frozen, maxdeg)
    x = np.empty(n, dtype=np.uint8)
    m = np.empty(n, dtype=np.int32)
    changed = np.empty(n, dtype=np.int32)
    thr = np.zeros(2 * (maxdeg + 1))
    pw = np.empty((4, n + 1))
    counts = np.zeros(N_COUNTS, dtype=np.int64)
    s = np.empty(observed.shape[0])
    out = np.empty(n_sims)
    for i in range(n_sims):
        summary_into(indptr, indices, off, init, seasons, theta, st,
                     x, m, changed, thr, pw, maxdeg, counts, s)
        out[i] = mse(s, observed)
    return out


@_jit
def prior_draw(lower, upper, st, out):
    for j in range(lower.shape[0]):
        out[j] = lower[j] + (upper[j] - lower[j]) * uniform(st)


@_jit
def rejection_block(indptr, indices, frozen, init, seasons, observed, lower, upper, n_draws, st):
    """Prior draws and the discrepancy of one simulation at each."""
    n = init.shape[0]
    maxdeg = max_degree(indptr)
    off = frozen_offsets(frozen, maxdeg)
    x = np.empty(n, dtype=np.uint8)
    m = np.empty(n, dtype=np.int32)
    changed = np.empty(n, dtype=np.int32)
    thr = np.zeros(2 * (maxdeg + 1))
    pw = np.empty((4, n + 1))
    counts = np.zeros(N_COUNTS, dtype=np.int64)
    s = np.empty(observed.shape[0])
    thetas = np.empty((n_draws, N_PARAMS))
    disc = np.empty(n_draws)
    for i in range(n_draws):
        prior_draw(lower, upper, st, thetas[i])
        summary_into(indptr, indices, off, init, seasons, thetas[i], st,
                     x, m, changed, thr, pw, maxdeg, counts, s)
        disc[i] = mse(s, observed)
    return thetas, disc


@_jit
def mcmc_init(indptr, indices, frozen, init, seasons, observed, lower, upper, eps,
              start, use_start, cap, st, theta_out):
    """Search for a starting state with discrepancy <= eps.

    Draws from the prior (or re-simulates at ``start``) until a simulation
    lands within tolerance.  Returns ``(attempts, discrepancy)``; the
    discrepancy is -1.0 when all ``cap`` attempts failed.
    """
    n = init.shape[0]
    maxdeg = max_degree(indptr)
    off = frozen_offsets(frozen, maxdeg)
    x = np.empty(n, dtype=np.uint8)
    m = np.empty(n, dtype=np.int32)
    changed = np.empty(n, dtype=np.int32)
    thr = np.zeros(2 * (maxdeg + 1))
    pw = np.empty((4, n + 1))
    counts = np.zeros(N_COUNTS, dtype=np.int64)
    s = np.empty(observed.shape[0])
    for attempt in range(1, cap + 1):
        if use_start:
            theta_out[:] = start
        else:
            prior_draw(lower, upper, st, theta_out)
        summary_into(indptr, indices, off, init, seasons, theta_out, st,
                     x, m, changed, thr, pw, maxdeg, counts, s)
        d = mse(s, observed)
        if d <= eps:
            return attempt, d
    return cap, -1.0


@_jit
def mcmc_run(indptr, indices, frozen, init, seasons, observed, lower, upper, sd, eps,
             theta0, disc0, iterations, burn_in, thin, st,
             out_theta, out_disc, out_iter, out_acc):
    """ABC-MCMC with a Gaussian random walk and the indicator kernel.

    Under a flat prior and a symmetric proposal the Metropolis-Hastings ratio
    is 1 inside the prior box, so a proposal is accepted iff it is in bounds
    and its single simulation lands within ``eps``.  The state after
    iterations ``burn_in, burn_in + thin, ...`` is written to the outputs.

    Returns ``(kept, accepted, in_bounds)``.
    """
    n = init.shape[0]
    maxdeg = max_degree(indptr)
    off = frozen_offsets(frozen, maxdeg)
    x = np.empty(n, dtype=np.uint8)
    m = np.empty(n, dtype=np.int32)
    changed = np.empty(n, dtype=np.int32)
    thr = np.zeros(2 * (maxdeg + 1))
    pw = np.empty((4, n + 1))
    counts = np.zeros(N_COUNTS, dtype=np.int64)
    s = np.empty(observed.shape[0])
    cur = theta0.copy()
    prop = np.empty(N_PARAMS)
    cur_d = disc0
    kept = 0
    accepted = 0
    in_bounds = 0
    for it in range(iterations):
        for j in range(0, N_PARAMS, 2):
            z0, z1 = normal_pair(st)
            prop[j] = cur[j] + sd[j] * z0
            prop[j + 1] = cur[j + 1] + sd[j + 1] * z1
        ok = True
        for j in range(N_PARAMS):
            if prop[j] < lower[j] or prop[j] > upper[j]:
                ok = False
        acc = False
        if ok:
            in_bounds += 1
            summary_into(indptr, indices, off, init, seasons, prop, st,
                         x, m, changed, thr, pw, maxdeg, counts, s)
            d = mse(s, observed)
            if d <= eps:
                cur[:] = prop
                cur_d = d
                acc = True
                accepted += 1
        if it >= burn_in and (it - burn_in) % thin == 0:
            out_theta[kept, :] = cur
            out_disc[kept] = cur_d
            out_iter[kept] = it
            out_acc[kept] = acc
            kept += 1
    return kept, accepted, in_bounds


@_jit
def ensemble(indptr, indices, frozen, init, seasons, thetas, n_runs, eligible, st):
    """Monte-Carlo ensemble, one trajectory per run.

    Each run picks a parameter row uniformly at random (with replacement)
    when more than one row is supplied.  Returns per-cell infected counts
    ``counts[t, v]`` and per-run infected totals over ``eligible`` nodes.
    """
    n = init.shape[0]
    horizon = seasons.shape[0]
    n_draws = thetas.shape[0]
    maxdeg = max_degree(indptr)
    off = frozen_offsets(frozen, maxdeg)
    x = np.empty(n, dtype=np.uint8)
    m = np.empty(n, dtype=np.int32)
    changed = np.empty(n, dtype=np.int32)
    thr = np.zeros(2 * (maxdeg + 1))
    pw = np.empty((4, n + 1))
    scratch = np.zeros(N_COUNTS, dtype=np.int64)
    counts = np.zeros((horizon + 1, n), dtype=np.int64)
    totals = np.zeros((n_runs, horizon + 1), dtype=np.int64)
    for r in range(n_runs):
        if n_draws > 1:
            d = int(uniform(st) * n_draws)
            if d >= n_draws:
                d = n_draws - 1
        else:
            d = 0
        theta = thetas[d]
        power_tables(theta, n, pw)
        n_inf = reset(indptr, indices, init, x, m)
        for t in range(horizon + 1):
            if t > 0:
                n_inf = advance(indptr, indices, off, x, m, changed, n_inf, theta, pw, thr,
                                maxdeg, seasons[t - 1], st, scratch)
            tot = 0
            for v in range(n):
                if x[v] != 0:
                    counts[t, v] += 1
                    if eligible[v]:
                        tot += 1
            totals[r, t] = tot
    return counts, totals
