"""Compiled inner loops for receiver evaluation.

Displacement trees are flat arrays in heap order: the node for outcome prefix
``p`` (a bit string of length ``l``) sits at ``2**l - 1 + int(p, 2)``.
"""
import math

import numba
import numpy as np


@numba.njit(cache=True)
def layer_fractions(splits):
    n = splits.shape[0]
    frac = np.empty(n)
    keep = 1.0
    for l in range(n):
        frac[l] = math.sqrt(keep * (1.0 - splits[l]))
        keep *= splits[l]
    return frac


@numba.njit(cache=True)
def ml_success(disp, splits, a, etas, pis, q0):
    """Maximum-likelihood success probability of one displacement tree."""
    n_layers = splits.shape[0]
    frac = layer_fractions(splits)
    total = 0.0
    for outcome in range(1 << n_layers):
        best = 0.0
        for x in range(2):
            sign = 1.0 if x == 0 else -1.0
            prior = q0 if x == 0 else 1.0 - q0
            mixed = 0.0
            for i in range(etas.shape[0]):
                amp = sign * a * math.sqrt(etas[i])
                p = 1.0
                for l in range(n_layers):
                    node = (1 << l) - 1 + (outcome >> (n_layers - l))
                    click = (outcome >> (n_layers - l - 1)) & 1
                    d = amp * frac[l] - disp[node]
                    p0 = math.exp(-d * d)
                    p *= (1.0 - p0) if click else p0
                mixed += pis[i] * p
            mixed *= prior
            if mixed > best:
                best = mixed
        total += best
    return total


@numba.njit(cache=True)
def ml_success_many(disps, splits, a, etas, pis, q0):
    out = np.empty(disps.shape[0])
    for k in range(disps.shape[0]):
        out[k] = ml_success(disps[k], splits, a, etas, pis, q0)
    return out


@numba.njit(cache=True)
def grid_tree_values(grid, n_nodes, splits, a, etas, pis, q0):
    """Success of every displacement tree over ``grid``, in lexicographic order."""
    n = grid.shape[0]
    count = n ** n_nodes
    out = np.empty(count)
    disp = np.empty(n_nodes)
    for k in range(count):
        rem = k
        for node in range(n_nodes - 1, -1, -1):
            disp[node] = grid[rem % n]
            rem //= n
        out[k] = ml_success(disp, splits, a, etas, pis, q0)
    return out


@numba.njit(cache=True)
def anneal_chain(x, n_disp, optimize_splits, fixed_splits, disp_bound,
                 a, etas, pis, q0, temps, steps, which, noise, coin,
                 log_current, log_best):
    """One Metropolis chain on a geometric temperature ladder (maximising).

    ``x`` holds the displacement tree followed, when ``optimize_splits``, by the
    free splits ``theta_1 .. theta_{L-1}``. ``which``, ``noise`` and ``coin`` are
    the pre-drawn random numbers, one per step. Returns the best point and value.
    """
    n_layers = fixed_splits.shape[0]
    splits = fixed_splits.copy()
    if optimize_splits:
        for l in range(n_layers - 1):
            splits[l] = x[n_disp + l]
    current = ml_success(x[:n_disp], splits, a, etas, pis, q0)
    best = current
    best_x = x.copy()
    cand = x.copy()
    k = 0
    for t in range(temps.shape[0]):
        temp = temps[t]
        for _ in range(steps):
            j = which[k]
            old = x[j]
            v = old + noise[k]
            if j < n_disp:
                v = min(max(v, -disp_bound), disp_bound)
            else:
                v = min(max(v, 0.0), 1.0)
            cand[j] = v
            if j >= n_disp:
                splits[j - n_disp] = v
            value = ml_success(cand[:n_disp], splits, a, etas, pis, q0)
            delta = value - current
            if delta >= 0.0 or coin[k] < math.exp(delta / temp):
                x[j] = v
                current = value
                if value > best:
                    best = value
                    best_x[:] = x
            else:
                cand[j] = old
                if j >= n_disp:
                    splits[j - n_disp] = old
            k += 1
        log_current[t] = current
        log_best[t] = best
    return best_x, best
