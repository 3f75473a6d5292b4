"""Independent reference computations used only by the tests.

Nothing here imports the package's numerics: rows are obtained by brute-force
enumeration of flip sets / mutation masks, and remaining times by solving the
absorbing Markov chain as a linear system.
"""
from __future__ import annotations

import functools
import itertools
import math
from fractions import Fraction

import numpy as np


def enumerate_flip_row(n, d, k):
    """Exact collapsed row for flipping ``k`` distinct bits, by enumerating subsets.

    Positions ``0..d-1`` are the wrong bits.
    """
    counts = [0] * (d + 1)
    total = 0
    for flips in itertools.combinations(range(n), k):
        wrong_fixed = sum(1 for i in flips if i < d)
        new = d - wrong_fixed + (k - wrong_fixed)
        counts[min(new, d)] += 1
        total += 1
    return [Fraction(c, total) for c in counts]


def enumerate_mask_row(n, d, p, shift=False):
    """Exact collapsed row for bitwise mutation by enumerating all 2**n masks.

    With ``shift`` the all-zero mask's mass is spread uniformly over the
    ``n`` single-bit masks.
    """
    p = Fraction(p)
    row = [Fraction(0)] * (d + 1)
    for mask in itertools.product((0, 1), repeat=n):
        k = sum(mask)
        w = p**k * (1 - p) ** (n - k)
        if k == 0 and shift:
            for i in range(n):
                new = d - 1 if i < d else d + 1
                row[min(new, d)] += w / n
            continue
        wrong_fixed = sum(mask[:d])
        new = d - wrong_fixed + (k - wrong_fixed)
        row[min(new, d)] += w
    return row


def brute_best_of(row, lam):
    """Minimum of ``lam`` iid draws from ``row`` by full product enumeration."""
    d = len(row) - 1
    out = [Fraction(0)] * (d + 1)
    support = [(i, v) for i, v in enumerate(row) if v]
    for combo in itertools.product(support, repeat=lam):
        w = Fraction(1)
        for _, v in combo:
            w *= v
        out[min(i for i, _ in combo)] += w
    return out


def hyper_row(n, d, k):
    """Collapsed single-offspring row from the hypergeometric law (math.comb)."""
    row = [Fraction(0)] * (d + 1)
    if k == 0:
        row[d] = Fraction(1)
        return row
    total = math.comb(n, k)
    for b in range(0, min(k, d) + 1):
        if k - b > n - d:
            continue
        new = d + k - 2 * b
        row[min(new, d)] += Fraction(math.comb(d, b) * math.comb(n - d, k - b), total)
    return row


def mixture_row(n, d, p, shift):
    p = Fraction(p)
    w = [math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)]
    if shift:
        w[1] += w[0]
        w[0] = Fraction(0)
    row = [Fraction(0)] * (d + 1)
    for k in range(n + 1):
        if w[k]:
            for i, v in enumerate(hyper_row(n, d, k)):
                row[i] += w[k] * v
    return row


def single_row(n, d, dist, rho):
    if dist == "rls":
        return hyper_row(n, d, int(rho))
    return mixture_row(n, d, rho, dist == "shift")


def best_row(row, lam):
    d = len(row) - 1
    tails = [sum(row[t:], Fraction(0)) for t in range(d + 1)] + [Fraction(0)]
    return [tails[t] ** lam - tails[t + 1] ** lam for t in range(d + 1)]


def absorption_times(n, lam, dist, rhos):
    """Expected hitting time of distance 0 under the stationary policy ``rhos``.

    ``rhos[d]`` is the parameter used at distance ``d`` (``rhos[0]`` ignored).
    Builds the full transition matrix over states ``0..n`` and solves
    ``(I - Q) t = 1`` on the transient states with a dense solver.
    """
    P = np.zeros((n + 1, n + 1))
    P[0, 0] = 1.0
    for d in range(1, n + 1):
        P[d, : d + 1] = _best_float(n, lam, dist, d, rhos[d])
    Q = P[1:, 1:]
    t = np.linalg.solve(np.eye(n) - Q, np.ones(n))
    return np.concatenate([[0.0], t])


@functools.lru_cache(maxsize=None)
def _best_float(n, lam, dist, d, rho):
    return [float(v) for v in best_row(single_row(n, d, dist, rho), lam)]
