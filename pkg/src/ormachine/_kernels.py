"""Compiled inner loops for the Gibbs sweeps, plus their counter-based RNG.

Everything here works on raw arrays: observations as signed int8 trits
(-1 zero, 0 missing, +1 one) and factors as int8 bits. Validation and
bookkeeping live in the wrapper modules.

The uniform variate consumed when entry (row, l) of a factor matrix is
updated during sweep s is a pure function of (seed, matrix_id, s, row, l).
Rows can therefore be scheduled across any number of threads without
changing the sample path.
"""

import math

import numpy as np
from numba import njit, prange

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _mix64(x):
    # splitmix64 finalizer; uint64 arithmetic wraps
    x = x + _GOLD
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


@njit(cache=True, inline="always")
def counter_uniform(seed, matrix_id, sweep, row, col):
    """Uniform in [0, 1) keyed by (seed, matrix_id, sweep, row, col)."""
    h = _mix64(seed ^ np.uint64(matrix_id))
    h = _mix64(h ^ np.uint64(sweep))
    h = _mix64(h ^ np.uint64(row))
    h = _mix64(h ^ np.uint64(col))
    return (h >> np.uint64(11)) * _INV_2_53


@njit(cache=True, inline="always")
def score_entry(x_row, a_row, codes, l):
    """Signed evidence for one factor entry.

    x_row: trit row of the observations seen by the matrix being updated
    (length D), a_row: its current factor row (length L), codes: the other
    factor matrix (D x L). Accumulates x_row[d] over the d where code l is
    on and no other active code already explains cell d; both skip rules
    leave the result exact. Independent of the current a_row[l].
    """
    D = x_row.shape[0]
    L = a_row.shape[0]
    acc = 0
    for d in range(D):
        if codes[d, l] == 0:
            continue
        blocked = False
        for lp in range(L):
            if lp != l and a_row[lp] == 1 and codes[d, lp] == 1:
                blocked = True
                break
        if not blocked:
            acc += x_row[d]
    return acc


@njit(cache=True, inline="always")
def update_row(x_row, a_row, codes, lam, prior_row, seed, matrix_id, sweep, row):
    """Metropolised Gibbs pass over one factor row, entries in order.

    Each entry proposes a flip and accepts with min(1, exp(-(2a-1) * s))
    where s = lam * score + prior logit; s >= 0 from state 0 (or <= 0 from
    state 1) flips deterministically.
    """
    L = a_row.shape[0]
    for l in range(L):
        acc = score_entry(x_row, a_row, codes, l)
        s = lam * acc + prior_row[l]
        if a_row[l] == 1:
            t = -s
        else:
            t = s
        if t >= 0.0:
            a_row[l] = 1 - a_row[l]
        elif counter_uniform(seed, matrix_id, sweep, row, l) < math.exp(t):
            a_row[l] = 1 - a_row[l]


@njit(cache=True, parallel=True)
def half_sweep(x_rows, target, codes, lam, prior, seed, matrix_id, sweep):
    """Update every row of `target` in parallel; `codes` stays frozen.

    x_rows must be laid out row-major from the target's perspective
    (the transposed observation matrix when updating codes).
    """
    n_rows = target.shape[0]
    for n in prange(n_rows):
        update_row(x_rows[n], target[n], codes, lam, prior[n], seed, matrix_id, sweep, n)


@njit(cache=True, parallel=True)
def count_correct(trits, z, u):
    """Number of observed cells whose trit matches the Boolean product."""
    N, D = trits.shape
    L = z.shape[1]
    total = 0
    for n in prange(N):
        c = 0
        for d in range(D):
            x = trits[n, d]
            if x == 0:
                continue
            hit = False
            for l in range(L):
                if z[n, l] == 1 and u[d, l] == 1:
                    hit = True
                    break
            if (x == 1) == hit:
                c += 1
        total += c
    return total


@njit(cache=True, parallel=True)
def boolean_product(z, u):
    """Boolean matrix product of two bit matrices sharing their width."""
    N = z.shape[0]
    D = u.shape[0]
    L = z.shape[1]
    out = np.zeros((N, D), dtype=np.int8)
    for n in prange(N):
        for d in range(D):
            for l in range(L):
                if z[n, l] == 1 and u[d, l] == 1:
                    out[n, d] = 1
                    break
    return out


@njit(cache=True)
def chain_state_histogram(trits, trits_t, z, u, lam, prior_z, prior_u, seed, n_sweeps, counts):
    """Run the chain at fixed lambda and histogram the post-sweep joint state.

    Intended for desk-scale diagnostics: the joint (z, u) state is encoded
    row-major, z bits first, as an index into `counts` (length
    2**(z.size + u.size)). Serial on purpose; results match the parallel
    sweeps bit for bit because the RNG is counter-based.
    """
    N = z.shape[0]
    D = u.shape[0]
    L = z.shape[1]
    for sweep in range(n_sweeps):
        for n in range(N):
            update_row(trits[n], z[n], u, lam, prior_z[n], seed, 0, sweep, n)
        for d in range(D):
            update_row(trits_t[d], u[d], z, lam, prior_u[d], seed, 1, sweep, d)
        code = 0
        for n in range(N):
            for l in range(L):
                code = (code << 1) | z[n, l]
        for d in range(D):
            for l in range(L):
                code = (code << 1) | u[d, l]
        counts[code] += 1
