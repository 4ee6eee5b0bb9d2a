"""Numba kernels: hashed edge values, walk ensembles, edge-list CG.

The scalar hash arithmetic here must stay bit-identical to the vectorized
numpy version in rng.py and to the pure-Python walk in rwre.py; tests pin all
three against each other. Everything is uint64 end to end (numba silently
promotes mixed uint64/int64 arithmetic to float64, hence the explicit casts).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

GOLD = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_INV53 = 2.0**-53

# stream salts + 1, pre-added for the derive chain (see rng.derive_key)
_ENV_P1 = np.uint64(0xE5 + 1)
_TRAJ_P1 = np.uint64(0x77 + 1)

LAW_DISCRETE = 0
LAW_UNIFORM = 1
STRUCT_IID = 0
STRUCT_ISLANDS = 1


@njit(inline="always")
def _mix64(x):
    x = (x ^ (x >> _U30)) * _M1
    x = (x ^ (x >> _U27)) * _M2
    return x ^ (x >> _U31)


@njit(inline="always")
def _uniform(key, counter):
    return np.float64(_mix64(key + _mix64(counter)) >> _U11) * _INV53


@njit(inline="always")
def _ecode(pos, axis, off, shifts, d):
    code = np.uint64(axis)
    for i in range(d):
        code |= np.uint64(pos[i] + off) << shifts[i]
    return code


@njit(inline="always")
def _law_value(law_id, law_vals, law_cum, u):
    if law_id == LAW_UNIFORM:
        return law_vals[0] + u * (law_vals[1] - law_vals[0])
    j = 0
    while u >= law_cum[j]:
        j += 1
    return law_vals[j]


@njit(inline="always")
def _edge_value(env_key, pos, axis, d, off, shifts,
                law_id, law_vals, law_cum,
                struct_id, win_offsets, thr, lo, hi):
    if struct_id == STRUCT_IID:
        u = _uniform(env_key, _ecode(pos, axis, off, shifts, d))
        return _law_value(law_id, law_vals, law_cum, u)
    # islands: low value iff every hidden uniform on parallel edges in the
    # window stays below the threshold
    worst = 0.0
    for t in range(win_offsets.shape[0]):
        code = np.uint64(axis)
        for i in range(d):
            code |= np.uint64(pos[i] + win_offsets[t, i] + off) << shifts[i]
        u = _uniform(env_key, code)
        if u > worst:
            worst = u
    return lo if worst <= thr else hi


@njit(inline="always")
def _set_insert(table, mask, code):
    """Insert into an open-addressing uint64 set; 0 is the empty sentinel.
    Returns 1 if the code was new."""
    h = _mix64(code) & mask
    while True:
        cur = table[h]
        if cur == code:
            return 0
        if cur == np.uint64(0):
            table[h] = code
            return 1
        h = (h + np.uint64(1)) & mask


@njit(parallel=True, cache=True)
def walk_ensemble(master, k, n, d, off, shifts,
                  law_id, law_vals, law_cum,
                  struct_id, win_offsets, thr, lo, hi, track):
    """k independent walks of n steps, each in its own hashed environment.

    Walk w derives its environment key and trajectory stream from
    (master, w); one uniform variate is consumed per step. Returns endpoints,
    the origin rate p0 (sum of the 2d incident conductances at time 0), and
    the count of distinct edges queried (-1 when not tracked).
    """
    end = np.zeros((k, d), np.int64)
    p0 = np.zeros(k)
    disc = np.full(k, -1, np.int64)
    cap = np.uint64(1)
    if track:
        need = 4 * d * (n + 1)
        while int(cap) < need:
            cap <<= np.uint64(1)
    mask = cap - np.uint64(1)
    for w in prange(k):
        env_key = _mix64(_mix64(master + GOLD * _ENV_P1) + GOLD * np.uint64(w + 1))
        # trajectory stream advances splitmix-style: state += GOLD, value = mix(state)
        state = _mix64(_mix64(master + GOLD * _TRAJ_P1) + GOLD * np.uint64(w + 1))
        pos = np.zeros(d, np.int64)
        weights = np.empty(2 * d)
        if track:
            seen = np.zeros(int(cap), np.uint64)
            count = 0
        else:
            seen = np.zeros(1, np.uint64)
            count = -1
        for step in range(n):
            tot = 0.0
            for i in range(d):
                wf = _edge_value(env_key, pos, i, d, off, shifts,
                                 law_id, law_vals, law_cum,
                                 struct_id, win_offsets, thr, lo, hi)
                weights[2 * i] = wf
                tot += wf
                if track:
                    count += _set_insert(seen, mask, _ecode(pos, i, off, shifts, d))
                pos[i] -= 1
                wb = _edge_value(env_key, pos, i, d, off, shifts,
                                 law_id, law_vals, law_cum,
                                 struct_id, win_offsets, thr, lo, hi)
                if track:
                    count += _set_insert(seen, mask, _ecode(pos, i, off, shifts, d))
                pos[i] += 1
                weights[2 * i + 1] = wb
                tot += wb
            if step == 0:
                p0[w] = tot
            state += GOLD
            u = np.float64(_mix64(state) >> _U11) * _INV53
            target = u * tot
            acc = 0.0
            j = 2 * d - 1
            for jj in range(2 * d):
                acc += weights[jj]
                if target < acc:
                    j = jj
                    break
            axis = j >> 1
            pos[axis] += 1 - 2 * (j & 1)
        for i in range(d):
            end[w, i] = pos[i]
        disc[w] = count
    return end, p0, disc


@njit(parallel=True, cache=True)
def walk_cell_ensemble(master, k, n, d, period, tables, strides):
    """k walks from the origin of a deterministic periodic cell.

    tables is (d, period^d) row-major over the cell; strides decode a linear
    cell index to coordinates. The environment is a fixed configuration (a
    point mass, so the tilt weight is trivially 1); every walk starts at 0
    and only the trajectory stream varies. Outputs are the endpoints and
    p0 = p(0).

    The position is kept wrapped into the cell with the linear table index
    maintained incrementally, so the hot loop is pure table reads.
    """
    disp = np.zeros((k, d), np.int64)
    p0 = np.zeros(k)
    for w in prange(k):
        state = _mix64(_mix64(master + GOLD * _TRAJ_P1) + GOLD * np.uint64(w + 1))
        pos = np.zeros(d, np.int64)    # wrapped into [0, period)
        moved = np.zeros(d, np.int64)  # absolute displacement
        lin = 0
        weights = np.empty(2 * d)
        for step in range(n):
            tot = 0.0
            for i in range(d):
                wf = tables[i, lin]
                weights[2 * i] = wf
                tot += wf
                if pos[i] > 0:
                    lin_b = lin - strides[i]
                else:
                    lin_b = lin + (period - 1) * strides[i]
                wb = tables[i, lin_b]
                weights[2 * i + 1] = wb
                tot += wb
            if step == 0:
                p0[w] = tot
            state += GOLD
            u = np.float64(_mix64(state) >> _U11) * _INV53
            target = u * tot
            acc = 0.0
            j = 2 * d - 1
            for jj in range(2 * d):
                acc += weights[jj]
                if target < acc:
                    j = jj
                    break
            axis = j >> 1
            if j & 1:
                moved[axis] -= 1
                if pos[axis] > 0:
                    pos[axis] -= 1
                    lin -= strides[axis]
                else:
                    pos[axis] = period - 1
                    lin += (period - 1) * strides[axis]
            else:
                moved[axis] += 1
                if pos[axis] < period - 1:
                    pos[axis] += 1
                    lin += strides[axis]
                else:
                    pos[axis] = 0
                    lin -= (period - 1) * strides[axis]
        for i in range(d):
            disp[w, i] = moved[i]
    return disp, p0


@njit(cache=True)
def cg_edge_list(ia, ib, we, diag, b, tol, maxiter, project):
    """Jacobi-preconditioned CG for y = diag*x - sum of edge couplings.

    Edge e couples unknowns ia[e], ib[e] with weight we[e] (off-diagonal
    entries -we[e]). With project=True the iteration runs in the zero-mean
    subspace (singular periodic operator): residual and iterates are
    re-projected every step. Returns (x, relative residual, iterations);
    negative iterations flag non-convergence at the cap.
    """
    nn = b.size
    ne = ia.size
    x = np.zeros(nn)
    r = b.copy()
    if project:
        r -= r.mean()
    bnorm = np.sqrt(r @ r)
    if bnorm == 0.0:
        return x, 0.0, 0
    z = r / diag
    p = z.copy()
    rz = r @ z
    Ap = np.empty(nn)
    for it in range(1, maxiter + 1):
        for q in range(nn):
            Ap[q] = diag[q] * p[q]
        for e in range(ne):
            w = we[e]
            Ap[ia[e]] -= w * p[ib[e]]
            Ap[ib[e]] -= w * p[ia[e]]
        if project:
            Ap -= Ap.mean()
        pAp = p @ Ap
        if pAp <= 0.0:
            return x, np.sqrt(r @ r) / bnorm, -it
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if project:
            r -= r.mean()
            x -= x.mean()
        rn = np.sqrt(r @ r)
        if rn <= tol * bnorm:
            return x, rn / bnorm, it
        z = r / diag
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, np.sqrt(r @ r) / bnorm, -maxiter
