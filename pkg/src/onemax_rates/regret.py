"""Regret heatmaps and modality analysis of remaining-time slices."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .dp import Criterion, PolicyTable, TimeSlice, format_rho
from .kernel import Dist, ProblemContext

__all__ = ["RegretGrid", "ModalityReport", "build_grid", "modality", "export_heatmap", "pixel"]


@dataclass
class RegretGrid:
    """``delta[d-1, g] = T(d, rho_g) - T*(d)`` and ``tau = exp(-delta)``.

    Infinite regret maps to ``tau = 0``.  Regrets are non-negative for OPT
    tables; a DRIFT table may contain faster non-chosen rates (negative delta).
    """

    ctx: ProblemContext
    dist: Dist
    crit: Criterion
    rho: np.ndarray
    delta: np.ndarray
    tau: np.ndarray

    @property
    def n(self) -> int:
        return self.ctx.n


@dataclass(frozen=True)
class ModalityReport:
    d: int
    local_minima: tuple
    is_unimodal: bool


def build_grid(slices: list[TimeSlice], policy: PolicyTable) -> RegretGrid:
    n = policy.n
    if len(slices) != n or any(s.d != i + 1 for i, s in enumerate(slices)):
        raise ValueError(f"expected one slice per distance 1..{n}, got {len(slices)} slices")
    rho = np.asarray(slices[0].rho, dtype=float)
    if rho.shape != (len(policy.grid),) or not np.array_equal(rho, policy.grid.array()):
        raise ValueError("slices were not computed on the policy's rate grid")
    times = np.stack([np.asarray(s.t, dtype=float) for s in slices])
    base = np.broadcast_to(policy.t_star[1:, None], times.shape)
    with np.errstate(invalid="ignore"):
        delta = times - base
    delta = np.where(np.isinf(times), np.inf, delta)
    # Nudge by ulps so that base + delta reproduces the slice value; a few cells
    # stay one ulp off when every candidate sum lands on a rounding tie.
    finite = np.isfinite(times)
    for _ in range(8):
        off = finite & (base + delta != times)
        if not off.any():
            break
        toward = np.where(base + delta > times, -np.inf, np.inf)
        delta[off] = np.nextafter(delta[off], toward[off])
    tau = np.where(np.isinf(delta), 0.0, np.exp(-np.where(np.isinf(delta), 0.0, delta)))
    return RegretGrid(policy.ctx, policy.dist, policy.crit, rho, delta, tau)


def modality(slice_: TimeSlice, rtol: float = 1e-12) -> ModalityReport:
    """Strict local minima of ``t`` along the ordered grid.

    Neighbouring values within relative tolerance ``rtol`` form one plateau,
    represented by its smallest rate.  Grid ends count as minima when lower
    than their single neighbour.
    """
    t = np.asarray(slice_.t, dtype=float)
    rho = np.asarray(slice_.rho)
    if t.size < 3:
        raise ValueError("modality needs a grid of at least 3 points")
    runs = []  # (first index, value)
    for i, v in enumerate(t):
        if runs:
            prev = runs[-1][1]
            if v == prev or (math.isfinite(v) and math.isfinite(prev)
                             and abs(v - prev) <= rtol * max(abs(v), abs(prev))):
                continue
        runs.append((i, v))
    minima = []
    for j, (i, v) in enumerate(runs):
        if not math.isfinite(v):
            continue
        left_ok = j == 0 or v < runs[j - 1][1]
        right_ok = j == len(runs) - 1 or v < runs[j + 1][1]
        if left_ok and right_ok:
            r = rho[i]
            minima.append((int(r) if isinstance(r, (np.integer, int)) else float(r), float(v)))
    return ModalityReport(slice_.d, tuple(minima), len(minima) == 1)


def pixel(tau: float) -> int:
    return int(math.floor(255.0 * tau + 0.5))


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else format(float(x), ".17g")


def export_heatmap(grid: RegretGrid, directory, graymap: bool = True) -> list[str]:
    """Write ``heatmap_{dist}_{n}_{lambda}.csv`` (and ``.pgm``) into ``directory``.

    The graymap is ASCII P2: one row per grid rate (ascending, top to bottom),
    one column per distance ``1..n``, pixel ``round(255 * tau)``.
    """
    stem = os.path.join(os.fspath(directory), f"heatmap_{grid.dist.value}_{grid.n}_{grid.ctx.lam}")
    written = []
    rho_text = [format_rho(int(r)) if grid.dist is Dist.RLS else format_rho(float(r)) for r in grid.rho]
    path = stem + ".csv"
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["d", "rho", "delta", "tau"])
            for di in range(grid.n):
                for g, rt in enumerate(rho_text):
                    w.writerow([di + 1, rt, _fmt(grid.delta[di, g]), _fmt(grid.tau[di, g])])
        written.append(path)
        if graymap:
            path = stem + ".pgm"
            height, width = grid.tau.shape[1], grid.tau.shape[0]
            lines = ["P2", f"{width} {height}", "255"]
            for g in range(height):
                line = ""
                for di in range(width):
                    tok = str(pixel(grid.tau[di, g]))
                    if line and len(line) + 1 + len(tok) > 70:
                        lines.append(line)
                        line = tok
                    else:
                        line = f"{line} {tok}" if line else tok
                lines.append(line)
            with open(path, "w", newline="") as fh:
                fh.write("\n".join(lines) + "\n")
            written.append(path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write heatmap file {path}: {exc.strerror}") from exc
    return written
