"""Offspring distance distributions for elitist (1+lambda) algorithms on OneMax.

A parent at Hamming distance ``d`` from the optimum produces an offspring by
flipping ``k`` pairwise distinct, uniformly chosen positions.  If ``b`` of the
flipped positions were wrong, the offspring lands at ``d + k - 2b``.  Offspring
that are not better than the parent are collapsed into the "stay at d" entry,
so every row is indexed by ``d' in [0, d]``.

Two numeric backends are provided: float64 (log-space, vectorised) and exact
rationals via :class:`fractions.Fraction`.
"""
from __future__ import annotations

import contextlib
import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy.special import gammaln

__all__ = [
    "Dist",
    "Backend",
    "ProblemContext",
    "TransitionRow",
    "EXACT_MAX_N",
    "rls_row",
    "sbm_row",
    "shift_row",
    "ea_row",
    "best_of_lambda",
    "drift",
    "identity_row",
    "log_factorials",
    "flip_matrix",
    "flip_weights",
    "improvement_matrix",
    "best_of_lambda_matrix",
    "fault_injection",
]

EXACT_MAX_N = 64
# Binomial tails below this are dropped from the flip-count mixture.
TAIL_CUTOFF = 1e-15

Number = Union[int, float, Fraction]


class Dist(str, enum.Enum):
    RLS = "rls"
    SBM = "sbm"
    SHIFT = "shift"

    @property
    def is_ea(self) -> bool:
        return self is not Dist.RLS


class Backend(str, enum.Enum):
    FLOAT64 = "float"
    EXACT = "exact"


@dataclass(frozen=True)
class ProblemContext:
    n: int
    lam: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if int(self.lam) != self.lam or self.lam < 1:
            raise ValueError(f"lambda must be a positive integer, got {self.lam!r}")


@dataclass(frozen=True)
class TransitionRow:
    """Distribution over offspring distances ``0..d`` for parent distance ``d``.

    ``probs`` is a float64 array for the float backend and a tuple of
    ``Fraction`` for the exact backend.
    """

    d: int
    probs: Union[np.ndarray, tuple]

    @property
    def exact(self) -> bool:
        return isinstance(self.probs, tuple)

    def improvement(self):
        """Probability of landing strictly closer than ``d``."""
        if self.exact:
            return sum(self.probs[: self.d], Fraction(0))
        return float(np.sum(self.probs[: self.d]))

    def as_float(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs], dtype=float)

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, i):
        return self.probs[i]


# Multiplicative perturbation applied to every exact hypergeometric entry.
# Only ever non-zero inside ``fault_injection``; used to prove the golden
# verification is sensitive to the exact path.
_EXACT_FAULT = Fraction(0)


@contextlib.contextmanager
def fault_injection(eps: Fraction):
    global _EXACT_FAULT
    old = _EXACT_FAULT
    _EXACT_FAULT = Fraction(eps)
    try:
        yield
    finally:
        _EXACT_FAULT = old


def _check_distance(ctx: ProblemContext, d: int):
    if int(d) != d or not 0 <= d <= ctx.n:
        raise ValueError(f"distance d={d!r} outside [0, {ctx.n}]")


def _check_probability(p):
    if not 0 < p < 1:
        raise ValueError(f"mutation probability p={p!r} must lie in (0, 1)")


@lru_cache(maxsize=32)
def log_factorials(n: int) -> np.ndarray:
    """``log(m!)`` for ``m = 0..n`` (read-only)."""
    lf = gammaln(np.arange(n + 1, dtype=float) + 1.0)
    lf.setflags(write=False)
    return lf


def flip_matrix(n: int, d: int, ks) -> np.ndarray:
    """Probability that ``k`` distinct flips move distance ``d`` to ``d' < d``.

    Returns an array of shape ``(len(ks), d)``; entry ``[i, d']`` is
    ``C(d,b) C(n-d,k-b) / C(n,k)`` with ``b = (d - d' + k) / 2``, or 0 when
    ``b`` is not an admissible integer.
    """
    ks = np.asarray(ks, dtype=np.int64).reshape(-1, 1)
    if d == 0:
        return np.zeros((ks.shape[0], 0))
    lf = log_factorials(n)
    dp = np.arange(d, dtype=np.int64).reshape(1, -1)
    twob = d - dp + ks
    b = twob // 2
    valid = (twob % 2 == 0) & (b <= d) & (b <= ks) & (ks - b <= n - d) & (ks <= n)
    bc = np.where(valid, b, 0)
    kc = np.where(valid, ks, 0)
    logp = (
        lf[d] - lf[bc] - lf[d - bc]
        + lf[n - d] - lf[kc - bc] - lf[n - d - kc + bc]
        - lf[n] + lf[kc] + lf[n - kc]
    )
    return np.where(valid, np.exp(np.where(valid, logp, 0.0)), 0.0)


def flip_weights(n: int, p: float, shift: bool = False) -> np.ndarray:
    """Bin(n, p) pmf over ``k = 0..n``; ``shift`` moves the k=0 mass to k=1."""
    _check_probability(p)
    lf = log_factorials(n)
    k = np.arange(n + 1)
    logw = lf[n] - lf[k] - lf[n - k] + k * math.log(p) + (n - k) * math.log1p(-p)
    w = np.exp(logw)
    if shift:
        w[1] += w[0]
        w[0] = 0.0
    return w


def _truncated_support(w: np.ndarray) -> tuple[int, int]:
    lower = np.cumsum(w)
    upper = np.cumsum(w[::-1])[::-1]
    keep = np.nonzero((lower >= TAIL_CUTOFF) & (upper >= TAIL_CUTOFF))[0]
    if keep.size == 0:
        return int(np.argmax(w)), int(np.argmax(w))
    return int(keep[0]), int(keep[-1])


def _close_row(improve: np.ndarray, d: int) -> TransitionRow:
    probs = np.empty(d + 1)
    probs[:d] = improve
    probs[d] = max(0.0, 1.0 - float(np.sum(improve)))
    return TransitionRow(d, probs)


def identity_row(d: int, exact: bool = False) -> TransitionRow:
    if exact:
        return TransitionRow(d, tuple([Fraction(0)] * d + [Fraction(1)]))
    probs = np.zeros(d + 1)
    probs[d] = 1.0
    return TransitionRow(d, probs)


# --- exact backend -------------------------------------------------------

def _exact_flip_row(n: int, d: int, k: int) -> list:
    total = math.comb(n, k)
    out = [Fraction(0)] * d
    for dp in range(d):
        twob = d - dp + k
        if twob % 2:
            continue
        b = twob // 2
        if b > d or b > k or k - b > n - d:
            continue
        val = Fraction(math.comb(d, b) * math.comb(n - d, k - b), total)
        if _EXACT_FAULT:
            val *= 1 + _EXACT_FAULT
        out[dp] = val
    return out


def _exact_close(improve: list, d: int) -> TransitionRow:
    return TransitionRow(d, tuple(improve) + (1 - sum(improve, Fraction(0)),))


def _exact_guard(ctx: ProblemContext):
    if ctx.n > EXACT_MAX_N:
        raise ValueError(f"exact backend limited to n <= {EXACT_MAX_N}, got n={ctx.n}")


# --- public single-row operations ----------------------------------------

def rls_row(ctx: ProblemContext, d: int, k: int, backend: Backend = Backend.FLOAT64) -> TransitionRow:
    """Row for flipping exactly ``k`` distinct bits at distance ``d``."""
    _check_distance(ctx, d)
    if int(k) != k or not 1 <= k <= ctx.n:
        raise ValueError(f"flip count k={k!r} outside [1, {ctx.n}]")
    k = int(k)
    if Backend(backend) is Backend.EXACT:
        _exact_guard(ctx)
        return _exact_close(_exact_flip_row(ctx.n, d, k), d)
    return _close_row(flip_matrix(ctx.n, d, [k])[0], d)


def ea_row(ctx: ProblemContext, d: int, p: Number, shift: bool,
           backend: Backend = Backend.FLOAT64) -> TransitionRow:
    _check_distance(ctx, d)
    _check_probability(p)
    n = ctx.n
    if Backend(backend) is Backend.EXACT:
        _exact_guard(ctx)
        p = Fraction(p)
        q = 1 - p
        weights = [math.comb(n, k) * p**k * q ** (n - k) for k in range(n + 1)]
        if shift:
            weights[1] += weights[0]
            weights[0] = Fraction(0)
        improve = [Fraction(0)] * d
        for k in range(1, n + 1):
            if not weights[k]:
                continue
            for dp, v in enumerate(_exact_flip_row(n, d, k)):
                if v:
                    improve[dp] += weights[k] * v
        return _exact_close(improve, d)
    w = flip_weights(n, float(p), shift)
    lo, hi = _truncated_support(w)
    ks = np.arange(max(lo, 1), hi + 1)
    improve = w[ks] @ flip_matrix(n, d, ks) if ks.size else np.zeros(d)
    return _close_row(improve, d)


def sbm_row(ctx: ProblemContext, d: int, p: Number, backend: Backend = Backend.FLOAT64) -> TransitionRow:
    """Row for standard bit mutation with rate ``p`` (flip count ~ Bin(n, p))."""
    return ea_row(ctx, d, p, shift=False, backend=backend)


def shift_row(ctx: ProblemContext, d: int, p: Number, backend: Backend = Backend.FLOAT64) -> TransitionRow:
    """Row for shift mutation: as :func:`sbm_row` with the k=0 mass moved to k=1."""
    return ea_row(ctx, d, p, shift=True, backend=backend)


def best_of_lambda(row: TransitionRow, lam: int) -> TransitionRow:
    """Distribution of the best (closest) of ``lam`` independent offspring.

    ``result[d'] = S(d')**lam - S(d'+1)**lam`` where ``S(d')`` is the
    probability of a single offspring landing at distance ``>= d'``.
    """
    if int(lam) != lam or lam < 1:
        raise ValueError(f"lambda must be a positive integer, got {lam!r}")
    d = row.d
    if row.exact:
        tails = [Fraction(0)] * (d + 2)
        for t in range(d, -1, -1):
            tails[t] = tails[t + 1] + row.probs[t]
        powered = [s**lam for s in tails]
        return TransitionRow(d, tuple(powered[t] - powered[t + 1] for t in range(d + 1)))
    probs = np.asarray(row.probs, dtype=float)
    best, stay_pow, _ = best_of_lambda_matrix(probs[None, :d], lam, stay=probs[None, d])
    out = np.empty(d + 1)
    out[:d] = best[0]
    out[d] = stay_pow[0]
    return TransitionRow(d, out)


def drift(row_best: TransitionRow):
    """Expected one-iteration decrease in distance, ``sum (d - d') P(d')``."""
    d = row_best.d
    if row_best.exact:
        return sum(((d - t) * row_best.probs[t] for t in range(d)), Fraction(0))
    return float(np.dot(d - np.arange(d), np.asarray(row_best.probs[:d], dtype=float)))


# --- vectorised helpers for the dynamic program -------------------------

def improvement_matrix(n: int, d: int, dist: Dist, rhos: Sequence[Number],
                       backend: Backend = Backend.FLOAT64) -> np.ndarray:
    """Single-offspring improvement probabilities for a batch of parameters.

    Returns a float array of shape ``(len(rhos), d)`` whose row ``i`` holds
    ``P(d, d', rhos[i])`` for ``d' < d``.
    """
    dist = Dist(dist)
    if Backend(backend) is Backend.EXACT:
        ctx = ProblemContext(n, 1)
        out = np.zeros((len(rhos), d))
        for i, rho in enumerate(rhos):
            if dist is Dist.RLS:
                row = rls_row(ctx, d, int(rho), Backend.EXACT)
            else:
                row = ea_row(ctx, d, rho, dist is Dist.SHIFT, Backend.EXACT)
            out[i] = [float(v) for v in row.probs[:d]]
        return out
    if dist is Dist.RLS:
        ks = np.asarray(rhos, dtype=np.int64)
        out = np.zeros((ks.size, d))
        # k >= 2d flips can never improve
        useful = ks < 2 * d
        if useful.any():
            out[useful] = flip_matrix(n, d, ks[useful])
        return out
    shift = dist is Dist.SHIFT
    weights = np.stack([flip_weights(n, float(p), shift) for p in rhos])
    nonzero = np.nonzero(weights.max(axis=0) > 0.0)[0]
    ks = nonzero[nonzero >= 1]
    return weights[:, ks] @ flip_matrix(n, d, ks)


def best_of_lambda_matrix(improve: np.ndarray, lam: int, stay: np.ndarray | None = None):
    """Best-of-``lam`` transform applied row-wise.

    ``improve`` has shape ``(G, d)``.  Returns ``(best, stay_pow, escape)``:
    the best-of-lambda improvement probabilities ``(G, d)``, the probability
    that all offspring stay ``(G,)`` and its complement ``1 - stay_pow``.
    ``escape`` is computed via ``expm1``/``log1p`` so it stays accurate when
    the single-offspring improvement probability is tiny.
    """
    improve = np.asarray(improve, dtype=float)
    q = improve.sum(axis=1)
    if stay is None:
        stay = 1.0 - q
    stay = np.clip(np.asarray(stay, dtype=float).reshape(-1), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        escape = -np.expm1(lam * np.log1p(-np.minimum(q, 1.0)))
        if lam == 1:
            return improve.copy(), stay.copy(), escape
        # S(d') = P(single offspring at distance >= d'), built from the top
        suffix = np.cumsum(improve[:, ::-1], axis=1)[:, ::-1]
        tail = np.minimum(stay[:, None] + suffix, 1.0)
        tail[:, 0] = 1.0  # every offspring lands at distance >= 0
        s_pow = np.exp(lam * np.log(tail))
        ratio = np.where(tail > 0.0, improve / np.where(tail > 0.0, tail, 1.0), 0.0)
        best = s_pow * -np.expm1(lam * np.log1p(-np.minimum(ratio, 1.0)))
        best = np.where(tail > 0.0, best, 0.0)
        stay_pow = np.exp(lam * np.log(stay))
    return best, stay_pow, escape
