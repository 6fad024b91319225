"""Compiled inner loops: rate law evaluation and fixed-step Heun integration."""

import numpy as np
from numba import njit

CLAMP_TOTAL = 0
CLAMP_DIFFERENTIATION = 1


@njit(cache=True)
def rates(x, w, w1, w2, d, source, basal, origin, kinds, clamp, inflow, extra, out):
    n = x.shape[0]
    for i in range(n):
        k = kinds[i]
        prod = 0.0
        if k == 0:
            inter = 0.0
            for j in range(n):
                inter += w[i, j] * x[j]
            inter *= x[i]
            diff = 0.0
            o = origin[i]
            if o >= 0:
                diff = basal[i]
                for j in range(n):
                    diff += w1[i, j] * x[j]
                diff *= x[o]
            if clamp == 0:
                prod = inter + diff
                if prod < 0.0:
                    prod = 0.0
            else:
                if diff < 0.0:
                    diff = 0.0
                prod = inter + diff
        elif k == 1:
            for j in range(n):
                prod += (w[i, j] + w2[i, j]) * x[j]
            if prod < 0.0:
                prod = 0.0
        out[i] = prod + source[i] + inflow[i] - (d[i] + extra[i]) * x[i]


@njit(cache=True)
def heun_run(x0, t0, dt, nsteps, last_dt, record_every, offset, w, w1, w2, d, source, basal,
             origin, kinds, clamp, inflow, extra, rec_t, rec_x):
    """Advance ``nsteps`` steps of size ``dt`` then one of ``last_dt`` (if > 0).

    Samples after every full step whose global index (``offset`` + local count) is a
    multiple of ``record_every``; returns
    (state, time, n_recorded, status) where status is -1 on success or the index
    of the first non-finite species.
    """
    n = x0.shape[0]
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    xp = np.empty(n)
    t = t0
    nrec = 0
    total = nsteps + (1 if last_dt > 0.0 else 0)
    for s in range(total):
        h = dt if s < nsteps else last_dt
        rates(x, w, w1, w2, d, source, basal, origin, kinds, clamp, inflow, extra, k1)
        for i in range(n):
            xp[i] = x[i] + h * k1[i]
        rates(xp, w, w1, w2, d, source, basal, origin, kinds, clamp, inflow, extra, k2)
        for i in range(n):
            v = x[i] + 0.5 * h * (k1[i] + k2[i])
            if v < 0.0:
                v = 0.0
            x[i] = v
        t = t0 + (s + 1) * dt if s < nsteps else t0 + nsteps * dt + last_dt
        for i in range(n):
            if not np.isfinite(x[i]):
                return x, t, nrec, i
        if record_every > 0 and s < nsteps and (offset + s + 1) % record_every == 0:
            rec_t[nrec] = t
            for i in range(n):
                rec_x[nrec, i] = x[i]
            nrec += 1
    return x, t, nrec, -1


@njit(cache=True)
def euler_run(x0, dt, nsteps, w, w1, w2, d, source, basal, origin, kinds, clamp, inflow, extra,
              sample_every, rec_x):
    n = x0.shape[0]
    x = x0.copy()
    k = np.empty(n)
    nrec = 0
    for s in range(nsteps):
        rates(x, w, w1, w2, d, source, basal, origin, kinds, clamp, inflow, extra, k)
        for i in range(n):
            v = x[i] + dt * k[i]
            x[i] = v if v > 0.0 else 0.0
        if (s + 1) % sample_every == 0:
            for i in range(n):
                rec_x[nrec, i] = x[i]
            nrec += 1
    return x
