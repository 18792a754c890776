"""Compiled inner loops. Kept free of Python objects so numba can cache them."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def swap_sweeps(cost, sigma, max_sweeps):
    """Pairwise-swap refinement of an assignment on a cost matrix.

    ``sigma`` is modified in place. Returns (sweeps run, swaps per sweep,
    total cost after each sweep).
    """
    n = sigma.shape[0]
    swaps = np.zeros(max_sweeps, dtype=np.int64)
    trace = np.zeros(max_sweeps, dtype=np.float64)
    sweeps = 0
    while sweeps < max_sweeps:
        count = 0
        for i in range(n - 1):
            for j in range(i + 1, n):
                si = sigma[i]
                sj = sigma[j]
                old = cost[i, si] + cost[j, sj]
                # improvements at round-off level are ties: swapping on them can cycle
                if old - (cost[i, sj] + cost[j, si]) > 1e-12 * old:
                    sigma[i] = sj
                    sigma[j] = si
                    count += 1
        total = 0.0
        for i in range(n):
            total += cost[i, sigma[i]]
        swaps[sweeps] = count
        trace[sweeps] = total
        sweeps += 1
        if count == 0:
            break
    return sweeps, swaps[:sweeps], trace[:sweeps]


@njit(cache=True)
def sorted_rows_cost(y_sorted, z, iy, iz, w, p):
    """Quantile-coupling cost between a sorted sample and each row of ``z``.

    The coupling pairs ``y_sorted[iy[l]]`` with ``z[r, iz[l]]`` with mass
    ``w[l]``. Returns per-row costs and a flag telling whether the row was
    already sorted (the cost is only meaningful for sorted rows).
    """
    k = z.shape[0]
    m = z.shape[1]
    out = np.empty(k)
    ok = np.ones(k, dtype=np.bool_)
    for r in range(k):
        for j in range(1, m):
            if z[r, j] < z[r, j - 1]:
                ok[r] = False
                break
        acc = 0.0
        if ok[r]:
            if p == 1.0:
                for l in range(w.shape[0]):
                    acc += w[l] * abs(y_sorted[iy[l]] - z[r, iz[l]])
            else:
                for l in range(w.shape[0]):
                    acc += w[l] * abs(y_sorted[iy[l]] - z[r, iz[l]]) ** p
        out[r] = acc
    return out, ok


@njit(cache=True)
def affine_rows_cost(y_sorted, u_sorted, iy, iz, w, p, loc, scale):
    """Quantile-coupling cost between a sorted sample and ``loc + scale * u``
    for each sorted row ``u`` of ``u_sorted``; needs ``scale >= 0``."""
    k = u_sorted.shape[0]
    out = np.empty(k)
    for r in range(k):
        acc = 0.0
        if p == 1.0:
            for l in range(w.shape[0]):
                acc += w[l] * abs(y_sorted[iy[l]] - loc - scale * u_sorted[r, iz[l]])
        else:
            for l in range(w.shape[0]):
                acc += w[l] * abs(y_sorted[iy[l]] - loc - scale * u_sorted[r, iz[l]]) ** p
        out[r] = acc
    return out


@njit(cache=True)
def _ndtri(q):
    # Wichura's AS241 (PPND16), relative accuracy about 1e-16
    r = q - 0.5
    if abs(r) <= 0.425:
        s = 0.180625 - r * r
        num = (((((((2509.0809287301226727 * s + 33430.575583588128105) * s
                    + 67265.770927008700853) * s + 45921.953931549871457) * s
                  + 13731.693765509461125) * s + 1971.5909503065514427) * s
                + 133.14166789178437745) * s + 3.387132872796366608)
        den = (((((((5226.495278852545925 * s + 28729.085735721942674) * s
                    + 39307.89580009271061) * s + 21213.794301586595867) * s
                  + 5394.1960214247511077) * s + 687.1870074920579083) * s
                + 42.313330701600911252) * s + 1.0)
        return r * num / den
    s = q if r < 0 else 1.0 - q
    s = math.sqrt(-math.log(s))
    if s <= 5.0:
        s -= 1.6
        num = (((((((7.7454501427834140764e-4 * s + 0.0227238449892691845833) * s
                    + 0.24178072517745061177) * s + 1.27045825245236838258) * s
                  + 3.64784832476320460504) * s + 5.7694972214606914055) * s
                + 4.6303378461565452959) * s + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * s + 5.475938084995344946e-4) * s
                    + 0.0151986665636164571966) * s + 0.14810397642748007459) * s
                  + 0.68976733498510000455) * s + 1.6763848301838038494) * s
                + 2.05319162663775882187) * s + 1.0)
    else:
        s -= 5.0
        num = (((((((2.01033439929228813265e-7 * s + 2.71155556874348757815e-5) * s
                    + 0.0012426609473880784386) * s + 0.026532189526576123093) * s
                  + 0.29656057182850489123) * s + 1.7848265399172913358) * s
                + 5.4637849111641143699) * s + 6.6579046435011037772)
        den = (((((((2.04426310338993978564e-15 * s + 1.4215117583164458887e-7) * s
                    + 1.8463183175100546818e-5) * s + 7.868691311456132591e-4) * s
                  + 0.0148753612908506148525) * s + 0.13692988092273580531) * s
                + 0.59983220655588793769) * s + 1.0)
    val = num / den
    return -val if r < 0 else val


@njit(cache=True)
def _normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@njit(cache=True)
def _truncated_increment(scale, drift, xi):
    """``scale * xi`` conditioned on ``drift + scale * xi >= 0``.

    ``xi`` is a standard Normal draw. When it already satisfies the
    constraint it is kept. Otherwise ``Phi(xi) / Phi(a)`` is uniform given
    the rejection, and is recycled to invert the upper tail above ``a``.
    """
    if drift + scale * xi >= 0.0:
        return scale * xi
    a = -drift / scale
    low = _normal_cdf(a)
    w = _normal_cdf(xi) / low
    # upper tail mass above a is 1 - low; invert it from the top
    v = w * (1.0 - low)
    if v <= 0.0:
        return -drift
    return -scale * _ndtri(v)


@njit(cache=True)
def toggle_paths(alpha1, alpha2, beta1, beta2, noise, normals, start):
    """Iterate the toggle-switch recursion for every cell.

    Increments are Normal with scale ``noise`` conditioned on the next state
    being nonnegative. ``normals`` has shape ``(cells, steps, 2)``.
    Returns terminal ``u`` for each cell.
    """
    n, steps, _ = normals.shape
    out = np.empty(n)
    for i in range(n):
        u = start
        v = start
        for t in range(steps):
            du = u + alpha1 / (1.0 + v ** beta1) - (1.0 + 0.03 * u)
            dv = v + alpha2 / (1.0 + u ** beta2) - (1.0 + 0.03 * v)
            if noise > 0.0:
                u = max(du + _truncated_increment(noise, du, normals[i, t, 0]), 0.0)
                v = max(dv + _truncated_increment(noise, dv, normals[i, t, 1]), 0.0)
            else:
                u = max(du, 0.0)
                v = max(dv, 0.0)
        out[i] = u
    return out


@njit(cache=True)
def hilbert_transpose(cells, bits):
    """Skilling's axes-to-transpose, row by row, on unsigned cell indices."""
    n, d = cells.shape
    x = cells.copy()
    one = np.uint64(1)
    top = one << np.uint64(bits - 1)
    for r in range(n):
        q = top
        while q > one:
            p = q - one
            for i in range(d):
                if x[r, i] & q:
                    x[r, 0] ^= p
                else:
                    t = (x[r, 0] ^ x[r, i]) & p
                    x[r, 0] ^= t
                    x[r, i] ^= t
            q >>= one
        for i in range(1, d):
            x[r, i] ^= x[r, i - 1]
        t = np.uint64(0)
        q = top
        while q > one:
            if x[r, d - 1] & q:
                t ^= q - one
            q >>= one
        for i in range(d):
            x[r, i] ^= t
    return x


@njit(cache=True)
def level_words(x, bits):
    """Interleave curve levels (most significant first) into 64-bit words;
    returns an array of shape (words, n)."""
    n, d = x.shape
    per_word = max(1, 64 // d)
    n_words = (bits + per_word - 1) // per_word
    out = np.zeros((n_words, n), dtype=np.uint64)
    one = np.uint64(1)
    for r in range(n):
        level = bits - 1
        for k in range(n_words):
            w = np.uint64(0)
            for _ in range(per_word):
                if level < 0:
                    break
                for i in range(d):
                    w = (w << one) | ((x[r, i] >> np.uint64(level)) & one)
                level -= 1
            out[k, r] = w
    return out
