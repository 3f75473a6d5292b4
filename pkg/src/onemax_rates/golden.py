"""Published reference values for n=30, lambda=512, d in {7, 8}, flip counts 1..10.

Single-offspring probabilities are exact fractions; best-of-512 values are
printed with three significant figures (``"1-x"`` means ``1 - x``); drifts
with four decimals.  :func:`verify` recomputes every cell with the exact
backend.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .kernel import Backend, ProblemContext, best_of_lambda, drift, rls_row

N, LAMBDA = 30, 512
FLIPS = tuple(range(1, 11))

# SINGLE[d][d'] -> 10 cells for flip counts 1..10
SINGLE = {
    7: [
        "0 0 0 0 0 0 1/2035800 0 0 0",
        "0 0 0 0 0 1/84825 0 1/254475 0 0",
        "0 0 0 0 1/6786 0 161/2035800 0 1/56550 0",
        "0 0 0 1/783 0 23/28275 0 77/254475 0 1/16965",
        "0 0 1/116 0 115/20358 0 1771/678600 0 49/56550 0",
        "0 7/145 0 23/783 0 253/16965 0 539/84825 0 7/3393",
        "7/30 0 69/580 0 1265/20358 0 12397/407160 0 49/3770 0",
        "23/30 138/145 253/290 253/261 6325/6786 5566/5655 98417/101790 16852/16965 11153/11310 1881/1885",
    ],
    8: [
        "0 0 0 0 0 0 0 1/5852925 0 0",
        "0 0 0 0 0 0 1/254475 0 1/650325 0",
        "0 0 0 0 0 4/84825 0 176/5852925 0 1/130065",
        "0 0 0 0 4/10179 0 77/254475 0 28/216775 0",
        "0 0 0 2/783 0 176/84825 0 2156/1950975 0 32/78039",
        "0 0 2/145 0 110/10179 0 539/84825 0 392/130065 0",
        "0 28/435 0 176/3915 0 154/5655 0 17248/1170585 0 532/78039",
        "4/15 0 22/145 0 308/3393 0 539/10179 0 3724/130065 0",
        "11/15 407/435 121/145 1243/1305 3047/3393 5489/5655 47861/50895 88616/90045 125932/130065 129124/130065",
    ],
}

BEST = {
    7: [
        "0 0 0 0 0 0 2.51e-4 0 0 0",
        "0 0 0 0 0 6.02e-3 0 2.01e-3 0 0",
        "0 0 0 0 7.27e-2 0 3.97e-2 0 9.01e-3 0",
        "0 0 0 4.80e-1 0 3.39e-1 0 1.43e-1 0 2.97e-2",
        "0 0 1-1.19e-2 0 1-1.24e-1 0 1-2.92e-1 0 3.55e-1 0",
        "0 1-9.95e-12 0 1-4.80e-1 0 1-3.45e-1 0 1-1.78e-1 0 1-3.67e-1",
        "1-8.29e-60 0 1.19e-2 0 5.10e-2 0 2.52e-1 0 1-3.65e-1 0",
        "8.29e-60 9.95e-12 4.47e-31 1.20e-7 2.27e-16 2.97e-4 3.21e-8 3.27e-2 7.79e-4 3.37e-1",
    ],
    8: [
        "0 0 0 0 0 0 0 8.75e-5 0 0",
        "0 0 0 0 0 0 2.01e-3 0 7.87e-4 0",
        "0 0 0 0 0 2.39e-2 0 1.53e-2 0 3.93e-3",
        "0 0 0 0 1.82e-1 0 1.43e-1 0 6.39e-2 0",
        "0 0 0 1-2.70e-1 0 1-3.61e-1 0 4.26e-1 0 1.89e-1",
        "0 0 1-8.16e-4 0 1-1.85e-1 0 1-1.78e-1 0 1-2.64e-1 0",
        "0 1-1.61e-15 0 2.70e-1 0 3.37e-1 0 1-4.41e-1 0 1-2.17e-1",
        "1-1.08e-69 0 8.16e-4 0 3.13e-3 0 3.27e-2 0 1.99e-1 0",
        "1.08e-69 1.61e-15 5.83e-41 1.50e-11 1.21e-24 2.37e-7 2.15e-14 2.77e-4 6.60e-8 2.43e-2",
    ],
}

DRIFTS = {
    7: "0.5000 2.0000 2.9762 2.9604 3.0434 2.7009 2.5766 2.2292 1.7457 1.3854",
    8: "0.5000 2.0000 2.9984 3.4601 3.3583 3.3737 3.2292 2.9124 2.7323 2.3445",
}


@dataclass(frozen=True)
class Cell:
    table: str  # "single", "best" or "drift"
    d: int
    dprime: int | None
    rho: int
    expected: str
    got: str
    ok: bool
    note: str = ""

    def line(self) -> str:
        where = f"d={self.d}" + (f",d'={self.dprime}" if self.dprime is not None else "") + f",rho={self.rho}"
        status = "PASS" if self.ok else "FAIL"
        extra = f"  ({self.note})" if self.note else ""
        return f"{status} {self.table:<6} {where:<18} expected {self.expected:<14} got {self.got}{extra}"


def _sig3(x: Fraction) -> str:
    return "0" if x == 0 else format(float(x), ".2e")


def _printed_value(text: str) -> float:
    return 1.0 - float(text[2:]) if text.startswith("1-") else float(text)


def _check_best(text: str, value: Fraction) -> tuple[bool, str]:
    if text == "0":
        return value == 0, _sig3(value)
    if text.startswith("1-"):
        got = "1-" + _sig3(1 - value)
        return got == "1-" + format(float(text[2:]), ".2e"), got
    got = _sig3(value)
    return format(float(text), ".2e") == got, got


def verify() -> list[Cell]:
    """Recompute all reference cells in rational arithmetic, one :class:`Cell` per printed number.

    Complements as small as ``1e-69`` appear, so there is no float variant.
    """
    ctx = ProblemContext(N, LAMBDA)
    cells = []
    for d in (7, 8):
        single_tab = [r.split() for r in SINGLE[d]]
        best_tab = [r.split() for r in BEST[d]]
        drift_row = DRIFTS[d].split()
        for j, k in enumerate(FLIPS):
            row = rls_row(ctx, d, k, Backend.EXACT)
            best = best_of_lambda(row, LAMBDA)
            for dp in range(d + 1):
                want = Fraction(single_tab[dp][j])
                got = row.probs[dp]
                cells.append(Cell("single", d, dp, k, single_tab[dp][j], str(got), got == want))
                ok, shown = _check_best(best_tab[dp][j], Fraction(best.probs[dp]))
                cells.append(Cell("best", d, dp, k, best_tab[dp][j], shown, ok))
            value = drift(best)
            shown = format(float(value), ".4f")
            ok = shown == drift_row[j]
            note = ""
            if not ok:
                implied = sum((d - dp) * _printed_value(best_tab[dp][j]) for dp in range(d))
                note = f"printed best-of-{LAMBDA} table implies {implied:.4f}"
            cells.append(Cell("drift", d, None, k, drift_row[j], shown, ok, note))
    return cells
