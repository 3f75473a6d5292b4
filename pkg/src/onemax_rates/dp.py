"""Dynamic program over distances for optimal and drift-maximizing policies.

For each distance ``d = 1..n`` (in increasing order) and every parameter on
the rate grid, the expected remaining number of iterations when using that
parameter at ``d`` and the policy's choice at every ``d' < d`` is

    T(d, rho) = (1 + sum_{d'=1}^{d-1} T*(d') P^lam(d, d', rho)) / (1 - P(d, d, rho)^lam)

The policy then picks the time-minimizing (OPT) or drift-maximizing (DRIFT)
parameter and records ``T*(d)``.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .kernel import (
    Backend,
    Dist,
    ProblemContext,
    best_of_lambda,
    best_of_lambda_matrix,
    drift,
    ea_row,
    improvement_matrix,
    rls_row,
)

__all__ = [
    "Criterion",
    "RateGrid",
    "PolicyTable",
    "TimeSlice",
    "UNDERFLOW",
    "remaining_time",
    "build_policy",
    "policy_diff",
    "expected_strength",
    "max_distance_per_k",
    "write_policy_csv",
    "read_policy_csv",
    "write_slices_csv",
    "format_rho",
]

# Escape probabilities below this are treated as "never leaves d".
UNDERFLOW = 1e-300
EA_GRID_POINTS = 151


class Criterion(str, enum.Enum):
    OPT = "opt"
    DRIFT = "drift"


@dataclass(frozen=True)
class RateGrid:
    dist: Dist
    values: tuple

    def __post_init__(self):
        vals = self.values
        if len(vals) == 0:
            raise ValueError("empty rate grid")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("rate grid must be strictly increasing")
        if Dist(self.dist).is_ea and not all(0 < v < 1 for v in vals):
            raise ValueError("EA rates must lie in (0, 1)")

    @classmethod
    def default(cls, dist: Dist, n: int) -> "RateGrid":
        """All flip counts ``1..n`` for RLS; ``2**(i/5 - 10) / n`` for the EAs.

        EA points that would reach probability 1 are dropped, which only
        happens for ``n < 2**20``.
        """
        dist = Dist(dist)
        if dist is Dist.RLS:
            return cls(dist, tuple(range(1, n + 1)))
        vals = tuple(
            v for v in (2.0 ** (i / 5 - 10) / n for i in range(EA_GRID_POINTS)) if v < 1.0
        )
        return cls(dist, vals)

    def __len__(self):
        return len(self.values)

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(Dist(self.dist).value.encode())
        for v in self.values:
            h.update(format_rho(v).encode() + b",")
        return h.hexdigest()[:16]


@dataclass
class TimeSlice:
    """``T(d, rho)`` (and the one-step drift) over the whole grid for one ``d``."""

    d: int
    rho: np.ndarray
    t: np.ndarray
    drift: np.ndarray | None = None


@dataclass
class PolicyTable:
    ctx: ProblemContext
    dist: Dist
    crit: Criterion
    grid: RateGrid
    rho_star: np.ndarray  # index d; entry 0 unused (nan)
    t_star: np.ndarray  # index d; t_star[0] == 0
    choice: np.ndarray = field(default=None)  # grid index per d, -1 if off-grid

    @property
    def n(self) -> int:
        return self.ctx.n

    def rho(self, d: int):
        r = self.rho_star[d]
        return int(r) if self.dist is Dist.RLS else float(r)

    def expected_time(self, init_probs: np.ndarray | None = None) -> float:
        """Expected optimization time from a random start (Bin(n, 1/2) by default)."""
        n = self.n
        if init_probs is None:
            k = np.arange(n + 1)
            lf = np.array([math.lgamma(i + 1) for i in range(n + 1)])
            init_probs = np.exp(lf[n] - lf[k] - lf[n - k] - n * math.log(2))
        return float(np.dot(init_probs, self.t_star))


def format_rho(rho) -> str:
    if isinstance(rho, (int, np.integer)):
        return str(int(rho))
    return format(float(rho), ".17g")


def _format_real(x: float) -> str:
    return "inf" if math.isinf(x) else format(float(x), ".17g")


def _escape_and_best(n, lam, dist, d, rho, backend):
    ctx = ProblemContext(n, lam)
    if dist is Dist.RLS:
        row = rls_row(ctx, d, rho, backend)
    else:
        row = ea_row(ctx, d, rho, dist is Dist.SHIFT, backend)
    return row, best_of_lambda(row, lam)


def remaining_time(ctx: ProblemContext, dist: Dist, d: int, rho, lower_policy: PolicyTable | Sequence[float],
                   backend: Backend = Backend.FLOAT64) -> float:
    """Expected remaining iterations using ``rho`` at ``d``, then the policy below.

    ``lower_policy`` is either a :class:`PolicyTable` or a sequence with
    ``t_star[d']`` for ``d' < d``.  Returns ``inf`` when the escape
    probability from ``d`` underflows.
    """
    dist = Dist(dist)
    if d == 0:
        return 0.0
    t_low = lower_policy.t_star if isinstance(lower_policy, PolicyTable) else lower_policy
    row, best = _escape_and_best(ctx.n, ctx.lam, dist, d, rho, backend)
    q = float(row.improvement())
    escape = -math.expm1(ctx.lam * math.log1p(-q)) if q < 1 else 1.0
    best_f = best.as_float() if row.exact else np.asarray(best.probs)
    if escape < UNDERFLOW:
        return math.inf
    acc = 1.0 + float(np.dot(best_f[1:d], np.asarray(t_low[1:d], dtype=float)))
    return acc / escape


def _refine(ctx, dist, crit, d, grid, g, t_star):
    """Bounded 1-D search in log-rate between the neighbours of grid point ``g``."""
    vals = grid.values
    lo = math.log(vals[max(g - 1, 0)])
    hi = math.log(vals[min(g + 1, len(vals) - 1)])
    if hi <= lo:
        return None

    def objective(logp):
        p = math.exp(logp)
        if crit is Criterion.OPT:
            return remaining_time(ctx, dist, d, p, t_star)
        _, best = _escape_and_best(ctx.n, ctx.lam, dist, d, p, Backend.FLOAT64)
        return -drift(best)

    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return math.exp(res.x), res.fun


def build_policy(ctx: ProblemContext, dist: Dist, crit: Criterion, grid: RateGrid | None = None,
                 refine: bool = False, backend: Backend = Backend.FLOAT64):
    """Run the dynamic program for ``d = 1..n``.

    Returns ``(policy, slices)`` where ``slices[d-1]`` is the
    :class:`TimeSlice` of distance ``d``.  Ties are broken toward the
    smallest parameter.  ``refine`` (EA only) polishes each chosen rate by a
    bounded scalar search between its grid neighbours.
    """
    dist, crit = Dist(dist), Criterion(crit)
    n, lam = ctx.n, ctx.lam
    grid = grid or RateGrid.default(dist, n)
    if Dist(grid.dist) is not dist:
        raise ValueError(f"grid built for {grid.dist}, policy requested for {dist}")
    rhos = grid.values
    t_star = np.zeros(n + 1)
    rho_star = np.full(n + 1, np.nan)
    choice = np.full(n + 1, -1, dtype=np.int64)
    slices = []
    rho_arr = grid.array()

    for d in range(1, n + 1):
        improve = improvement_matrix(n, d, dist, rhos, backend)
        best, _, escape = best_of_lambda_matrix(improve, lam)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = (1.0 + best[:, 1:d] @ t_star[1:d]) / escape
        t = np.where(escape < UNDERFLOW, np.inf, t)
        dr = best @ (d - np.arange(d, dtype=float))
        if crit is Criterion.OPT:
            g = int(np.argmin(t))
        else:
            g = int(np.argmax(np.where(np.isfinite(t), dr, -np.inf)))
        t_star[d] = t[g]
        rho_star[d] = rhos[g]
        choice[d] = g
        if refine and dist.is_ea:
            found = _refine(ctx, dist, crit, d, grid, g, t_star)
            if found is not None:
                p, val = found
                better = val < t[g] if crit is Criterion.OPT else -val > dr[g]
                if better:
                    rho_star[d] = p
                    t_star[d] = remaining_time(ctx, dist, d, p, t_star)
                    choice[d] = -1
        slices.append(TimeSlice(d, rho_arr, t, dr))
    policy = PolicyTable(ctx, dist, crit, grid, rho_star, t_star, choice)
    return policy, slices


def _same_context(a: PolicyTable, b: PolicyTable):
    if a.ctx != b.ctx or a.dist is not b.dist:
        raise ValueError(
            f"policy contexts differ: ({a.ctx}, {a.dist.value}) vs ({b.ctx}, {b.dist.value})"
        )


def policy_diff(opt: PolicyTable, drift_policy: PolicyTable) -> float:
    """Largest excess remaining time of the drift policy over the optimal one."""
    _same_context(opt, drift_policy)
    return float(np.max(drift_policy.t_star[1:] - opt.t_star[1:]))


def expected_strength(dist: Dist, rho, n: int) -> float:
    """Expected number of flipped bits for parameter ``rho``."""
    dist = Dist(dist)
    if dist is Dist.RLS:
        return float(rho)
    if dist is Dist.SBM:
        return n * rho
    return n * rho + (1.0 - rho) ** n


def max_distance_per_k(policy: PolicyTable) -> dict:
    """For each flip count used by an RLS policy, the largest ``d`` choosing it."""
    if policy.dist is not Dist.RLS:
        raise ValueError("max_distance_per_k expects an RLS policy")
    out = {}
    for d in range(1, policy.n + 1):
        out[int(policy.rho_star[d])] = d
    return dict(sorted(out.items()))


# --- CSV -----------------------------------------------------------------

POLICY_HEADER = ["n", "lambda", "dist", "crit", "d", "rho", "t_star"]


def write_policy_csv(policy: PolicyTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POLICY_HEADER)
        for d in range(1, policy.n + 1):
            w.writerow([policy.n, policy.ctx.lam, policy.dist.value, policy.crit.value, d,
                        format_rho(policy.rho(d)), _format_real(policy.t_star[d])])


def read_policy_csv(path, grid: RateGrid | None = None) -> PolicyTable:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty policy file")
    n, lam = int(rows[0]["n"]), int(rows[0]["lambda"])
    dist, crit = Dist(rows[0]["dist"]), Criterion(rows[0]["crit"])
    rho_star = np.full(n + 1, np.nan)
    t_star = np.zeros(n + 1)
    for r in rows:
        d = int(r["d"])
        rho_star[d] = float(r["rho"])
        t_star[d] = float(r["t_star"])
    grid = grid or RateGrid.default(dist, n)
    lookup = {v: i for i, v in enumerate(grid.values)}
    choice = np.array([-1] + [lookup.get(int(x) if dist is Dist.RLS else float(x), -1)
                              for x in rho_star[1:]], dtype=np.int64)
    return PolicyTable(ProblemContext(n, lam), dist, crit, grid, rho_star, t_star, choice)


def write_slices_csv(slices: Iterable[TimeSlice], dist: Dist, path) -> None:
    dist = Dist(dist)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "rho", "t"])
        for s in slices:
            for rho, t in zip(s.rho, s.t):
                r = int(rho) if dist is Dist.RLS else float(rho)
                w.writerow([s.d, format_rho(r), _format_real(t)])
