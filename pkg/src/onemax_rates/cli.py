"""Command-line entry point: ``onemax-rates {policy,heatmap,simulate,verify-appendix}``.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import ast
import csv
import json
import operator
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import golden
from .dp import (
    Criterion,
    PolicyTable,
    RateGrid,
    TimeSlice,
    build_policy,
    expected_strength,
    max_distance_per_k,
    write_policy_csv,
    write_slices_csv,
)
from .kernel import EXACT_MAX_N, Backend, Dist, ProblemContext, best_of_lambda, ea_row, rls_row
from .regret import build_grid, export_heatmap
from .sim import RNG_NAME, Oracle, Static, TwoRate, bench, run_once, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("policy", "heatmap", "simulate", "verify-appendix")


class UsageError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- rate expressions ---------------------------------------------------------

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_rate(expr, n: int) -> float:
    """Evaluate ``"1/n"``, ``"1/n^2"``, ``"0.001"`` and similar arithmetic in ``n``."""
    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        return expr

    def ev(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id == "n":
            return n
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        raise ValueError(expr)

    try:
        return ev(ast.parse(str(expr).replace("^", "**"), mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse rate expression {expr!r}") from None


# --- configuration ------------------------------------------------------------

@dataclass
class JobConfig:
    command: str
    n: int | None = None
    lambdas: tuple = (1,)
    dist: str = "rls"
    crit: str = "opt"
    out: str = "."
    seed: int | None = None
    runs: int = 100
    backend: str = "float"
    force: bool = False
    refine: bool = False
    grid: tuple | None = None
    controllers: tuple = ()
    trace: bool = False
    dump_rows: bool = False


_CONFIG_KEYS = {
    "n": "n", "lambda": "lambdas", "lambdas": "lambdas", "dist": "dist", "crit": "crit",
    "out": "out", "seed": "seed", "runs": "runs", "backend": "backend", "force": "force",
    "refine_grid": "refine", "refine": "refine", "grid": "grid", "controller": "controllers",
    "controllers": "controllers", "trace": "trace", "dump_rows": "dump_rows",
}


def _lambda_list(value, field_name="lambda") -> tuple:
    if isinstance(value, int) and not isinstance(value, bool):
        items = [value]
    elif isinstance(value, str):
        items = [s for s in value.split(",") if s.strip()]
    elif isinstance(value, (list, tuple)):
        items = list(value)
    else:
        raise UsageError(field_name, f"expected a comma list of integers, got {value!r}")
    try:
        out = tuple(int(x) for x in items)
    except (TypeError, ValueError):
        raise UsageError(field_name, f"entries must be integers, got {value!r}") from None
    if not out or any(x < 1 for x in out):
        raise UsageError(field_name, f"entries must be positive, got {value!r}")
    return out


def _controller_spec(text: str) -> dict:
    kind, _, rest = text.partition(":")
    spec = {"kind": kind.strip()}
    aliases = {"min": "rho_min", "max": "rho_max", "init": "rho_init"}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise UsageError("controller", f"expected key=value in {text!r}")
        spec[aliases.get(key.strip(), key.strip())] = val.strip()
    return spec


def build_config(args: argparse.Namespace) -> JobConfig:
    """Merge ``--config`` JSON with explicit flags (flags win) and validate."""
    values: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except OSError:
            raise
        except json.JSONDecodeError as exc:
            raise UsageError("config", f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise UsageError("config", "top level must be an object")
        for key, val in raw.items():
            if key not in _CONFIG_KEYS:
                raise UsageError(key, "unknown configuration field")
            values[_CONFIG_KEYS[key]] = val
    flag_map = {"n": "n", "lambdas": "lambdas", "dist": "dist", "crit": "crit", "out": "out",
                "seed": "seed", "runs": "runs", "backend": "backend", "grid": "grid",
                "controllers": "controllers"}
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            values[key] = val
    for attr, key in (("force", "force"), ("refine_grid", "refine"), ("trace", "trace"),
                      ("dump_rows", "dump_rows")):
        if getattr(args, attr, False):
            values[key] = True
    cfg = JobConfig(command=args.command)
    for key, val in values.items():
        setattr(cfg, key, val)
    return validate(cfg)


def validate(cfg: JobConfig) -> JobConfig:
    if cfg.command == "verify-appendix":
        return cfg
    if cfg.n is None:
        raise UsageError("n", "required")
    if isinstance(cfg.n, bool) or not isinstance(cfg.n, int) or cfg.n < 1:
        raise UsageError("n", f"must be a positive integer, got {cfg.n!r}")
    cfg.lambdas = _lambda_list(cfg.lambdas)
    try:
        cfg.dist = Dist(cfg.dist).value
    except ValueError:
        raise UsageError("dist", f"must be one of rls, sbm, shift, got {cfg.dist!r}") from None
    try:
        cfg.crit = Criterion(cfg.crit).value
    except ValueError:
        raise UsageError("crit", f"must be opt or drift, got {cfg.crit!r}") from None
    try:
        cfg.backend = Backend(cfg.backend).value
    except ValueError:
        raise UsageError("backend", f"must be float or exact, got {cfg.backend!r}") from None
    if cfg.backend == Backend.EXACT.value and cfg.n > EXACT_MAX_N:
        raise UsageError("backend", f"exact backend needs n <= {EXACT_MAX_N}, got n={cfg.n}")
    if isinstance(cfg.runs, bool) or not isinstance(cfg.runs, int) or cfg.runs < 1:
        raise UsageError("runs", f"must be a positive integer, got {cfg.runs!r}")
    if cfg.seed is not None and (isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or cfg.seed < 0):
        raise UsageError("seed", f"must be a non-negative integer, got {cfg.seed!r}")
    if cfg.grid is not None:
        items = cfg.grid.split(",") if isinstance(cfg.grid, str) else list(cfg.grid)
        try:
            vals = [parse_rate(x, cfg.n) for x in items]
            vals = [int(v) for v in vals] if cfg.dist == "rls" else [float(v) for v in vals]
            RateGrid(Dist(cfg.dist), tuple(vals))
        except (ValueError, TypeError) as exc:
            raise UsageError("grid", str(exc)) from None
        cfg.grid = tuple(vals)
    if cfg.refine and cfg.dist == "rls":
        raise UsageError("refine_grid", "only meaningful for sbm/shift")
    if cfg.command == "simulate":
        if cfg.seed is None:
            raise UsageError("seed", "required for simulate (all randomness derives from it)")
        specs = cfg.controllers
        if isinstance(specs, (str, dict)):
            specs = [specs]
        specs = [(_controller_spec(s) if isinstance(s, str) else dict(s)) for s in specs or ["static"]]
        for s in specs:
            _make_controller(s, cfg, lam=None)
            if s["kind"] == "two-rate" and 1 in cfg.lambdas:
                raise UsageError("controller", "two-rate needs lambda >= 2")
        cfg.controllers = tuple(specs)
    parent = os.path.abspath(cfg.out)
    if os.path.exists(parent) and not os.path.isdir(parent):
        raise UsageError("out", f"{cfg.out} is not a directory")
    return cfg


def _make_controller(spec: dict, cfg: JobConfig, lam: int | None, cache: dict | None = None):
    kind = spec.get("kind")
    n = cfg.n
    allowed = {"static": {"rho"}, "two-rate": {"rho_min", "rho_max", "rho_init"}, "oracle": {"crit"}}
    if kind not in allowed:
        raise UsageError("controller", f"kind must be static, two-rate or oracle, got {kind!r}")
    extra = set(spec) - allowed[kind] - {"kind"}
    if extra:
        raise UsageError("controller", f"unknown {kind} parameter(s): {', '.join(sorted(extra))}")
    try:
        if kind == "static":
            default = "1" if cfg.dist == "rls" else "1/n"
            rho = parse_rate(spec.get("rho", default), n)
            if cfg.dist == "rls":
                if float(rho) != int(rho) or not 1 <= int(rho) <= n:
                    raise ValueError(f"RLS flip count must be an integer in [1, {n}], got {rho}")
                rho = int(rho)
            elif not 0 < rho < 1:
                raise ValueError(f"EA rate must lie in (0, 1), got {rho}")
            return Static(rho)
        if kind == "two-rate":
            if cfg.dist == "rls":
                raise ValueError("two-rate controls a mutation probability; use sbm or shift")
            lo = parse_rate(spec.get("rho_min", "1/n"), n)
            hi = parse_rate(spec.get("rho_max", "1/2"), n)
            init = spec.get("rho_init")
            return TwoRate(float(lo), float(hi), None if init is None else float(parse_rate(init, n)))
    except (ValueError, TypeError) as exc:
        raise UsageError("controller", str(exc)) from None
    crit = spec.get("crit", cfg.crit)
    try:
        Criterion(crit)
    except ValueError:
        raise UsageError("controller", f"oracle crit must be opt or drift, got {crit!r}") from None
    if lam is None:
        return None
    policy, _ = _table(cfg, lam, Criterion(crit), cache)
    return Oracle(policy)


# --- cached tables ------------------------------------------------------------

def _grid(cfg: JobConfig) -> RateGrid:
    dist = Dist(cfg.dist)
    return RateGrid(dist, cfg.grid) if cfg.grid else RateGrid.default(dist, cfg.n)


def _cache_path(cfg: JobConfig, lam: int, crit: Criterion, grid: RateGrid) -> str:
    tag = "_refined" if cfg.refine else ""
    tag += "_exact" if cfg.backend == Backend.EXACT.value else ""
    name = f"table_{cfg.n}_{lam}_{cfg.dist}_{crit.value}_{grid.digest()}{tag}.npz"
    return os.path.join(cfg.out, "cache", name)


def _table(cfg: JobConfig, lam: int, crit: Criterion | None = None, memo: dict | None = None):
    """Policy and slices for ``lam``, read from the on-disk cache unless ``--force``."""
    crit = crit or Criterion(cfg.crit)
    key = (lam, crit)
    if memo is not None and key in memo:
        return memo[key]
    grid = _grid(cfg)
    ctx, dist = ProblemContext(cfg.n, lam), Dist(cfg.dist)
    path = _cache_path(cfg, lam, crit, grid)
    result = None
    if not cfg.force and os.path.exists(path):
        with np.load(path) as z:
            policy = PolicyTable(ctx, dist, crit, grid, z["rho_star"], z["t_star"], z["choice"])
            rho = grid.array()
            slices = [TimeSlice(d, rho, z["times"][d - 1], z["drifts"][d - 1]) for d in range(1, cfg.n + 1)]
        result = policy, slices
    if result is None:
        result = build_policy(ctx, dist, crit, grid, refine=cfg.refine, backend=Backend(cfg.backend))
        policy, slices = result
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, rho_star=policy.rho_star, t_star=policy.t_star, choice=policy.choice,
                     times=np.stack([s.t for s in slices]), drifts=np.stack([s.drift for s in slices]))
    if memo is not None:
        memo[key] = result
    return result


# --- commands -----------------------------------------------------------------

def _stem(cfg: JobConfig, lam: int) -> str:
    return f"{cfg.dist}_{cfg.crit}_{cfg.n}_{lam}"


def _write_rows(policy: PolicyTable, path: str) -> None:
    ctx = policy.ctx
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "dprime", "prob"])
        for d in range(1, policy.n + 1):
            rho = policy.rho(d)
            row = rls_row(ctx, d, rho) if policy.dist is Dist.RLS else \
                ea_row(ctx, d, rho, policy.dist is Dist.SHIFT)
            best = best_of_lambda(row, ctx.lam)
            for dp, p in enumerate(best.as_float()):
                w.writerow([d, dp, format(float(p), ".17g")])


def cmd_policy(cfg: JobConfig, out=sys.stdout) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    status = EXIT_OK
    for lam in cfg.lambdas:
        policy, slices = _table(cfg, lam)
        stem = _stem(cfg, lam)
        write_policy_csv(policy, os.path.join(cfg.out, f"policy_{stem}.csv"))
        write_slices_csv(slices, policy.dist, os.path.join(cfg.out, f"slices_{stem}.csv"))
        if cfg.dump_rows:
            _write_rows(policy, os.path.join(cfg.out, f"rows_{stem}.csv"))
        print(f"n={cfg.n} lambda={lam} {cfg.dist} {cfg.crit}: "
              f"expected time from random start {policy.expected_time():.6f}", file=out)
        if policy.dist is Dist.RLS:
            per_k = max_distance_per_k(policy)
            print("  max d per k: " + " ".join(f"k={k}:{d}" for k, d in per_k.items()), file=out)
        else:
            s = [expected_strength(policy.dist, policy.rho(d), cfg.n) for d in range(1, cfg.n + 1)]
            print(f"  expected flip count ranges {min(s):.6g}..{max(s):.6g}", file=out)
        if cfg.backend == Backend.EXACT.value:
            fcfg = JobConfig(**{**asdict(cfg), "backend": Backend.FLOAT64.value})
            fpol, _ = _table(fcfg, lam)
            rel = float(np.max(np.abs(fpol.t_star[1:] - policy.t_star[1:]) / policy.t_star[1:]))
            same = bool(np.array_equal(fpol.rho_star[1:], policy.rho_star[1:]))
            ok = same and rel <= 1e-9
            print(f"  float vs rational backend: same rates={same}, max relative time gap {rel:.3e}"
                  f" -> {'PASS' if ok else 'FAIL'}", file=out)
            if not ok:
                status = EXIT_VERIFY
    return status


def cmd_heatmap(cfg: JobConfig, out=sys.stdout) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    for lam in cfg.lambdas:
        policy, slices = _table(cfg, lam)
        for path in export_heatmap(build_grid(slices, policy), cfg.out):
            print(path, file=out)
    return EXIT_OK


def cmd_simulate(cfg: JobConfig, out=sys.stdout) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    dist = Dist(cfg.dist)
    memo: dict = {}
    rows, runs_meta = [], []
    for lam in cfg.lambdas:
        ctx = ProblemContext(cfg.n, lam)
        for i, spec in enumerate(cfg.controllers):
            ctrl = _make_controller(spec, cfg, lam, memo)
            stats = bench(ctx, dist, ctrl, cfg.runs, cfg.seed)
            rows.append([lam, ctrl.label, stats.runs, repr(stats.mean_iterations),
                         repr(stats.stderr)])
            runs_meta.append({"n": cfg.n, "lambda": lam, "dist": cfg.dist, "controller": spec,
                              "runs": cfg.runs, "seed": cfg.seed})
            print(f"lambda={lam} {ctrl.label}: mean {stats.mean_iterations:.2f} "
                  f"(se {stats.stderr:.2f}, {stats.runs} runs)", file=out)
            if cfg.trace:
                trace = run_once(ctx, dist, ctrl, cfg.seed)
                write_trace_csv(trace, os.path.join(cfg.out, f"trace_{cfg.dist}_{cfg.n}_{lam}_{i}.csv"))
    stem = os.path.join(cfg.out, f"bench_{cfg.dist}_{cfg.n}")
    with open(stem + ".csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "controller", "runs", "mean", "stderr"])
        w.writerows(rows)
    with open(stem + ".json", "w") as fh:
        json.dump({"rng": RNG_NAME, "seed_rule": "run i uses seed + i", "jobs": runs_meta},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def cmd_verify_appendix(cfg: JobConfig, out=sys.stdout) -> int:
    cells = golden.verify()
    failed = [c for c in cells if not c.ok]
    for c in cells:
        print(c.line(), file=out)
    print(f"{len(cells) - len(failed)}/{len(cells)} cells match", file=out)
    if failed:
        print("failing cells:", file=out)
        for c in failed:
            print("  " + c.line(), file=out)
        return EXIT_VERIFY
    return EXIT_OK


HANDLERS = {"policy": cmd_policy, "heatmap": cmd_heatmap, "simulate": cmd_simulate,
            "verify-appendix": cmd_verify_appendix}


# --- argument parsing ---------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with any of the flags below (flags win)")
    common.add_argument("--n", type=int)
    common.add_argument("--lambda", dest="lambdas", help="comma-separated offspring counts")
    common.add_argument("--dist", choices=[d.value for d in Dist])
    common.add_argument("--crit", choices=[c.value for c in Criterion])
    common.add_argument("--out", help="output directory (also holds the table cache)")
    common.add_argument("--backend", choices=[b.value for b in Backend])
    common.add_argument("--force", action="store_true", help="recompute cached tables")
    common.add_argument("--refine-grid", action="store_true",
                        help="polish EA rates between grid neighbours")
    common.add_argument("--grid", help="comma-separated rate grid overriding the default")

    parser = _Parser(prog="onemax-rates", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("policy", parents=[common], help="optimal or drift-maximizing rate tables")
    p.add_argument("--dump-rows", action="store_true", help="also write best-of-lambda rows d,dprime,prob")
    sub.add_parser("heatmap", parents=[common], help="regret grid CSV and PGM graymap")
    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo benchmark")
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--controller", dest="controllers", action="append",
                   help="static[:rho=R] | two-rate[:min=R,max=R,init=R] | oracle[:crit=C]; repeatable")
    s.add_argument("--trace", action="store_true", help="write the trace of the first run per job")
    v = sub.add_parser("verify-appendix", help="recompute the n=30, lambda=512 reference tables")
    v.add_argument("--config", help=argparse.SUPPRESS)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return HANDLERS[cfg.command](cfg, out=out)
    except UsageError as exc:
        print(f"onemax-rates: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"onemax-rates: I/O error: {exc.strerror or exc}{where}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
