"""Monte-Carlo runs of the elitist (1+lambda) blueprint on OneMax.

Three sampling modes are available:

``rows``
    The default for controllers whose rate depends on the distance only
    (static, table-driven).  The waiting time at a distance is geometric and
    the landing distance is drawn from the conditional best-of-lambda row, so
    one run costs O(number of improvements).
``offspring``
    Every offspring's flip count and overlap with the wrong bits are drawn
    explicitly (binomial + hypergeometric).  Needed by the two-rate controller,
    which learns from the best offspring even when it is rejected.
``bits``
    Explicit bit strings; slow, used for cross-validation only.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .dp import PolicyTable, format_rho
from .kernel import Dist, ProblemContext, best_of_lambda, ea_row, rls_row

__all__ = [
    "Static",
    "TwoRate",
    "Oracle",
    "RunTrace",
    "BenchStats",
    "IterationCapExceeded",
    "RNG_NAME",
    "make_rng",
    "run_once",
    "two_rate_step",
    "bench",
    "overlay_trace",
    "write_trace_csv",
    "sample_offspring_distances",
    "RowSampler",
]

ITERATION_CAP = 10**9
RNG_NAME = "numpy.random.Philox(SeedSequence(seed))"


class IterationCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Static:
    rho: Union[int, float]

    @property
    def label(self) -> str:
        return f"static({format_rho(self.rho)})"


@dataclass(frozen=True)
class TwoRate:
    """Self-adjusting rate: half the offspring at ``rho/2``, half at ``2*rho``.

    ``rho_min`` and ``rho_max`` bound the mutation probabilities the offspring
    actually use, so the controller rate itself lives in
    ``[2*rho_min, rho_max/2]``.  ``rho_init=None`` starts at ``1/n`` (clamped).
    """

    rho_min: float
    rho_max: float = 0.5
    rho_init: float | None = None

    def __post_init__(self):
        init = self.rho_init if self.rho_init is not None else self.rho_min
        if not 0 < self.rho_min <= init <= self.rho_max <= 0.5:
            raise ValueError(
                f"two-rate bounds need 0 < rho_min <= rho_init <= rho_max <= 1/2, got "
                f"({self.rho_min}, {self.rho_init}, {self.rho_max})"
            )
        if 4 * self.rho_min > self.rho_max:
            raise ValueError("two-rate needs rho_max >= 4 * rho_min")

    @property
    def bounds(self) -> tuple[float, float]:
        return 2 * self.rho_min, self.rho_max / 2

    def initial(self, n: int) -> float:
        lo, hi = self.bounds
        start = self.rho_init if self.rho_init is not None else 1.0 / n
        return min(max(start, lo), hi)

    @property
    def label(self) -> str:
        return f"two-rate(min={self.rho_min:.6g},max={self.rho_max:.6g})"


@dataclass(frozen=True)
class Oracle:
    policy: PolicyTable

    @property
    def label(self) -> str:
        return f"oracle({self.policy.dist.value},{self.policy.crit.value})"


Controller = Union[Static, TwoRate, Oracle]


@dataclass
class RunTrace:
    """Improvement history of one run.

    ``steps`` holds ``(iteration, d, rho)`` tuples: the start (iteration 0),
    then every strict improvement with the rate in effect at the new distance.
    """

    n: int
    lam: int
    dist: Dist
    seed: int
    steps: list = field(default_factory=list)
    total_iterations: int = 0
    rng: str = RNG_NAME

    @property
    def initial_distance(self) -> int:
        return self.steps[0][1]

    @property
    def final_distance(self) -> int:
        return self.steps[-1][1]


@dataclass(frozen=True)
class BenchStats:
    runs: int
    mean_iterations: float
    stderr: float
    totals: tuple = ()
    rng: str = RNG_NAME


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _check_rate(dist: Dist, n: int, rho):
    if dist is Dist.RLS:
        if int(rho) != rho or not 1 <= rho <= n:
            raise ValueError(f"RLS flip count {rho!r} outside [1, {n}]")
    elif not 0 < rho < 1:
        raise ValueError(f"mutation probability {rho!r} outside (0, 1)")


# --- distance sampling -----------------------------------------------------

class RowSampler:
    """Cached best-of-lambda rows, keyed by ``(d, rho)``.

    For each key we keep the escape probability and the CDF of the landing
    distance conditioned on improvement.
    """

    def __init__(self, ctx: ProblemContext, dist: Dist):
        self.ctx = ctx
        self.dist = Dist(dist)
        self._cache = {}

    def _build(self, d, rho):
        ctx1 = ProblemContext(self.ctx.n, 1)
        if self.dist is Dist.RLS:
            row = rls_row(ctx1, d, int(rho))
        else:
            row = ea_row(ctx1, d, float(rho), self.dist is Dist.SHIFT)
        best = np.asarray(best_of_lambda(row, self.ctx.lam).probs[:d])
        q = row.improvement()
        escape = 1.0 if q >= 1.0 else -math.expm1(self.ctx.lam * math.log1p(-q))
        total = best.sum()
        cdf = np.cumsum(best) / total if total > 0 else np.ones(d)
        cdf[-1] = 1.0
        return escape, cdf

    def get(self, d, rho):
        key = (d, rho)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = self._build(d, rho)
        return hit


def _offspring_distances(rng, n, d, dist, p, size):
    """Raw (uncollapsed) offspring distances for ``size`` EA offspring."""
    k = rng.binomial(n, p, size=size)
    if dist is Dist.SHIFT:
        k[k == 0] = 1
    if d == 0:
        return k
    if d == n:
        b = k
    else:
        b = rng.hypergeometric(d, n - d, k)
    return d + k - 2 * b


def sample_offspring_distances(ctx: ProblemContext, d: int, dist: Dist, rho, size: int,
                               rng: np.random.Generator, mode: str = "bits") -> np.ndarray:
    """Collapsed distances of ``size`` independent single offspring.

    ``mode="bits"`` builds explicit mutation masks; ``mode="offspring"`` uses
    the flip-count/hypergeometric shortcut.
    """
    dist = Dist(dist)
    n = ctx.n
    if mode == "offspring":
        if dist is Dist.RLS:
            k = np.full(size, int(rho))
            b = rng.hypergeometric(d, n - d, k) if 0 < d < n else (k if d == n else 0 * k)
            raw = d + k - 2 * b
        else:
            raw = _offspring_distances(rng, n, d, dist, rho, size)
        return np.minimum(raw, d)
    # explicit masks; the first d positions are the wrong ones
    if dist is Dist.RLS:
        keys = rng.random((size, n))
        picked = np.argsort(keys, axis=1)[:, : int(rho)]
        mask = np.zeros((size, n), dtype=bool)
        np.put_along_axis(mask, picked, True, axis=1)
    else:
        mask = rng.random((size, n)) < rho
        if dist is Dist.SHIFT:
            empty = ~mask.any(axis=1)
            if empty.any():
                mask[empty, rng.integers(0, n, size=int(empty.sum()))] = True
    wrong_fixed = mask[:, :d].sum(axis=1)
    raw = d - wrong_fixed + (mask.sum(axis=1) - wrong_fixed)
    return np.minimum(raw, d)


# --- two-rate mechanism -----------------------------------------------------

def two_rate_step(rho: float, low_won: bool, rng, rho_min: float, rho_max: float) -> float:
    """Next controller rate after one iteration.

    With probability 1/2 the rate of the winning half (``rho/2`` if
    ``low_won`` else ``2*rho``) is adopted, otherwise ``rho/2`` or ``2*rho``
    is picked uniformly; the overall adoption probability is 3/4.
    """
    if rng.random() < 0.5:
        new = rho / 2 if low_won else rho * 2
    else:
        new = rho / 2 if rng.random() < 0.5 else rho * 2
    return min(max(new, rho_min), rho_max)


SCALAR_LAMBDA = 32


def _scalar_best(rng, n, d, dist, p, count):
    """Best raw distance among ``count`` offspring and how many attain it."""
    best, hits = None, 0
    for _ in range(count):
        k = rng.binomial(n, p)
        if k == 0 and dist is Dist.SHIFT:
            k = 1
        b = rng.hypergeometric(d, n - d, k) if (k and d < n) else k
        new = d + k - 2 * b
        if best is None or new < best:
            best, hits = new, 1
        elif new == best:
            hits += 1
    return best, hits


def _two_rate_iteration(rng, n, lam, d, dist, rho):
    n_high = lam // 2
    n_low = lam - n_high
    p_low, p_high = rho / 2, min(2 * rho, 1.0)
    if lam <= SCALAR_LAMBDA:
        b_low, c_low = _scalar_best(rng, n, d, dist, p_low, n_low)
        b_high, c_high = _scalar_best(rng, n, d, dist, p_high, n_high)
        best = min(b_low, b_high)
        c_low = c_low if b_low == best else 0
        c_high = c_high if b_high == best else 0
    else:
        low = _offspring_distances(rng, n, d, dist, p_low, n_low)
        high = _offspring_distances(rng, n, d, dist, p_high, n_high)
        best = int(min(low.min(), high.min()))
        c_low = int(np.count_nonzero(low == best))
        c_high = int(np.count_nonzero(high == best))
    low_won = rng.random() * (c_low + c_high) < c_low
    return int(best), low_won


# --- runs -------------------------------------------------------------------

def _rate_at(ctrl, d, last):
    if isinstance(ctrl, Static):
        return ctrl.rho
    if isinstance(ctrl, Oracle):
        return ctrl.policy.rho(d) if d > 0 else last
    raise TypeError(ctrl)


def _validate(ctx, dist, ctrl):
    if isinstance(ctrl, Static):
        _check_rate(dist, ctx.n, ctrl.rho)
    elif isinstance(ctrl, TwoRate):
        if dist is Dist.RLS:
            raise ValueError("two-rate control needs an EA mutation distribution")
        if ctx.lam < 2:
            raise ValueError("two-rate control needs lambda >= 2")
    elif isinstance(ctrl, Oracle):
        pol = ctrl.policy
        if pol.ctx != ctx or pol.dist is not dist:
            raise ValueError(
                f"oracle policy is for ({pol.ctx}, {pol.dist.value}), run is ({ctx}, {dist.value})"
            )
    else:
        raise TypeError(f"unknown controller {ctrl!r}")


def run_once(ctx: ProblemContext, dist: Dist, ctrl: Controller, seed: int, mode: str | None = None,
             sampler: RowSampler | None = None, max_iterations: int = ITERATION_CAP) -> RunTrace:
    """Simulate one run from a uniform random start until the optimum is hit."""
    dist = Dist(dist)
    _validate(ctx, dist, ctrl)
    if mode is None:
        mode = "offspring" if isinstance(ctrl, TwoRate) else "rows"
    if mode == "rows" and isinstance(ctrl, TwoRate):
        raise ValueError("two-rate control cannot run in rows mode")
    rng = make_rng(seed)
    n, lam = ctx.n, ctx.lam
    trace = RunTrace(n, lam, dist, seed)

    if mode == "bits":
        x = rng.random(n) < 0.5
        d = int(n - x.sum())
    else:
        x = None
        d = int(rng.binomial(n, 0.5))

    if isinstance(ctrl, TwoRate):
        rho = ctrl.initial(n)
    else:
        rho = _rate_at(ctrl, d, None) if d > 0 else getattr(ctrl, "rho", None)
    trace.steps.append((0, d, rho))
    it = 0

    if mode == "rows":
        sampler = sampler or RowSampler(ctx, dist)
        while d > 0:
            escape, cdf = sampler.get(d, rho)
            if escape <= 0.0:
                raise IterationCapExceeded(f"rate {rho!r} can never leave distance {d}")
            it += int(rng.geometric(escape)) if escape < 1.0 else 1
            if it > max_iterations:
                raise IterationCapExceeded(f"iteration cap {max_iterations} exceeded at d={d}")
            d = int(np.searchsorted(cdf, rng.random(), side="right"))
            rho = _rate_at(ctrl, d, rho)
            trace.steps.append((it, d, rho))
        trace.total_iterations = it
        return trace

    while d > 0:
        it += 1
        if it > max_iterations:
            raise IterationCapExceeded(f"iteration cap {max_iterations} exceeded at d={d}")
        if isinstance(ctrl, TwoRate):
            if mode == "bits":
                new_d, low_won, x = _bits_two_rate(rng, x, lam, dist, rho)
            else:
                new_d, low_won = _two_rate_iteration(rng, n, lam, d, dist, rho)
            rho = two_rate_step(rho, low_won, rng, *ctrl.bounds)
        else:
            if mode == "bits":
                new_d, x = _bits_iteration(rng, x, lam, dist, rho)
            else:
                raw = (sample_offspring_distances(ctx, d, dist, rho, lam, rng, mode="offspring"))
                new_d = int(raw.min())
        if new_d < d:
            d = new_d
            if not isinstance(ctrl, TwoRate):
                rho = _rate_at(ctrl, d, rho)
            trace.steps.append((it, d, rho))
    trace.total_iterations = it
    return trace


def _mutate(rng, x, dist, rho, count):
    n = x.size
    if dist is Dist.RLS:
        keys = rng.random((count, n))
        picked = np.argsort(keys, axis=1)[:, : int(rho)]
        mask = np.zeros((count, n), dtype=bool)
        np.put_along_axis(mask, picked, True, axis=1)
    else:
        mask = rng.random((count, n)) < rho
        if dist is Dist.SHIFT:
            empty = ~mask.any(axis=1)
            if empty.any():
                mask[empty, rng.integers(0, n, size=int(empty.sum()))] = True
    return x[None, :] ^ mask


def _pick_best(rng, ys):
    dists = ys.shape[1] - ys.sum(axis=1)
    best = dists.min()
    idx = np.flatnonzero(dists == best)
    return int(rng.choice(idx)), int(best), dists


def _bits_iteration(rng, x, lam, dist, rho):
    ys = _mutate(rng, x, dist, rho, lam)
    i, best, _ = _pick_best(rng, ys)
    d = int(x.size - x.sum())
    if best <= d:
        return best, ys[i]
    return d, x


def _bits_two_rate(rng, x, lam, dist, rho):
    n_high = lam // 2
    n_low = lam - n_high
    ys = np.concatenate([_mutate(rng, x, dist, rho / 2, n_low),
                         _mutate(rng, x, dist, min(2 * rho, 1.0), n_high)])
    i, best, _ = _pick_best(rng, ys)
    d = int(x.size - x.sum())
    if best <= d:
        return best, i < n_low, ys[i]
    return d, i < n_low, x


def bench(ctx: ProblemContext, dist: Dist, ctrl: Controller, runs: int, base_seed: int,
          mode: str | None = None) -> BenchStats:
    """Mean iterations (and standard error) over seeds ``base_seed .. base_seed+runs-1``."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    dist = Dist(dist)
    sampler = RowSampler(ctx, dist)
    totals = np.array([
        run_once(ctx, dist, ctrl, base_seed + i, mode=mode, sampler=sampler).total_iterations
        for i in range(runs)
    ], dtype=float)
    stderr = float(totals.std(ddof=1) / math.sqrt(runs)) if runs > 1 else float("nan")
    return BenchStats(runs, float(totals.mean()), stderr, tuple(int(t) for t in totals))


# --- export -----------------------------------------------------------------

def write_trace_csv(trace: RunTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "d", "rho"])
        for it, d, rho in trace.steps:
            w.writerow([it, d, format_rho(rho)])


def _nearest_index(values: np.ndarray, rho, dist: Dist) -> int:
    if dist is Dist.RLS:
        return int(np.argmin(np.abs(values - float(rho))))
    return int(np.argmin(np.abs(np.log(values) - math.log(float(rho)))))


def overlay_trace(trace: RunTrace, grid, path=None) -> list:
    """Attach the heatmap score ``tau`` of the nearest grid rate to each trace point.

    Points at distance 0 have no grid row and are skipped.  Returns the rows
    ``(iteration, d, rho, tau)`` and writes them as CSV when ``path`` is given.
    """
    if (trace.n, trace.lam, Dist(trace.dist)) != (grid.ctx.n, grid.ctx.lam, Dist(grid.dist)):
        raise ValueError(
            f"trace is for (n={trace.n}, lambda={trace.lam}, {Dist(trace.dist).value}) but grid is for "
            f"(n={grid.ctx.n}, lambda={grid.ctx.lam}, {Dist(grid.dist).value})"
        )
    rows = []
    for it, d, rho in trace.steps:
        if d == 0:
            continue
        g = _nearest_index(grid.rho, rho, Dist(grid.dist))
        rows.append((it, d, rho, float(grid.tau[d - 1, g])))
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "d", "rho", "tau"])
            for it, d, rho, tau in rows:
                w.writerow([it, d, format_rho(rho), format(tau, ".17g")])
    return rows
