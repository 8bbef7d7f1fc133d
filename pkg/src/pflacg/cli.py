"""Command-line harness: ``run``, ``bench`` and ``compare``.

Run configuration is an INI file::

    [problem]
    kind = simplex          ; simplex | structured-lasso | constrained-birkhoff
    n = 50
    alpha = 1.0
    seed = 7
    ; family extras: tau, n_pairs, n_zero, n_cap, cap, top_eig, b_high

    [run]
    algorithms = afw, pflacg
    epsilon = 1e-6
    max_iters = 10000
    max_seconds = 60        ; optional
    mode = lockstep         ; lockstep | parallel
    criterion = grad-map    ; grad-map | fw-gap
    output = run.csv        ; relative paths resolve against the config file

Global options (``--seed``, ``--mode``, ``--budget-iters``,
``--budget-seconds``) override the file.  Exit codes: 0 success, 1 an
algorithm failed (the others still ran), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .accel import AccStream, acc_restarted
from .activeset import ActiveSet
from .cg import VARIANTS, RunResult, run_cg, strong_wolfe_gap
from .errors import ConfigurationError, PflacgError
from .pflacg import COUPLED_VARIANTS, MODES, CouplingConfig, pflacg_run
from .problem import Counters, Experiment, ProblemSpec, alpha_for_kappa, gen_experiment
from .records import Budget, RunRecord, TraceRecorder, read_records_path, write_records

ALGORITHMS = VARIANTS + ("acc",) + tuple(COUPLED_VARIANTS)
EXIT_OK, EXIT_ALGO, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    spec: ProblemSpec
    algorithms: tuple[str, ...]
    epsilon: float = 1e-6
    budget: Budget = field(default_factory=Budget)
    mode: str = "lockstep"
    criterion: str = "grad-map"
    output: Path = Path("run.csv")

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigurationError("algorithm list is empty")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise UsageError(f"unknown algorithm tag {unknown[0]!r} (known: {', '.join(ALGORITHMS)})")
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        if not self.epsilon > 0.0:
            raise ConfigurationError("epsilon must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from exc
        spec = ProblemSpec.from_config(text)
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(str(exc)) from exc
        run = cp["run"] if "run" in cp else {}
        try:
            algos = tuple(a.strip() for a in run.get("algorithms", "afw").split(",") if a.strip())
            eps = float(run.get("epsilon", "1e-6"))
            max_iters = int(run.get("max_iters", "10000"))
            secs = run.get("max_seconds", "").strip()
            budget = Budget(max_iters, float(secs) if secs else None)
        except ValueError as exc:
            raise ConfigurationError(f"bad [run] value: {exc}") from exc
        out = Path(run.get("output", "run.csv"))
        if not out.is_absolute():
            out = path.parent / out
        return cls(
            spec,
            algos,
            eps,
            budget,
            run.get("mode", "lockstep").strip(),
            run.get("criterion", "grad-map").strip(),
            out,
        )


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    spec, budget = cfg.spec, cfg.budget
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, seed=args.seed)
    if getattr(args, "budget_iters", None) is not None:
        budget = Budget(args.budget_iters, budget.max_seconds)
    if getattr(args, "budget_seconds", None) is not None:
        budget = Budget(budget.max_iters, args.budget_seconds)
    mode = getattr(args, "mode", None) or cfg.mode
    out = Path(args.out) if getattr(args, "out", None) else cfg.output
    return replace(cfg, spec=spec, budget=budget, mode=mode, output=out)


# ---------------------------------------------------------------------------
# running algorithms
# ---------------------------------------------------------------------------


def run_acc_baseline(exp: Experiment, epsilon: float, budget: Budget, criterion: str, run_id: str) -> RunResult:
    """Restarted ACC over the hull of every vertex of the region.

    Only regions with an enumerable vertex list qualify.  One trace row is
    written per completed call.
    """
    verts = exp.region.vertices()
    if verts is None:
        raise ConfigurationError("acc needs a region with an enumerable vertex set")
    weights = np.array([1.0 if v == exp.x0 else 0.0 for v in verts])
    full = ActiveSet(verts, weights, prune=False)
    clock = budget.start()
    counters, c_mon = Counters(), Counters()
    stream = AccStream(exp.objective, full, criterion, counters)
    rec = TraceRecorder("acc", run_id, clock)
    S = ActiveSet.from_vertex(exp.x0)
    g = strong_wolfe_gap(exp.objective, exp.region, S, c_mon)
    rec.add(0, g.value, g.w, len(S), counters.lmo, counters.foo)
    while g.w > epsilon and stream.active and not clock.exhausted(stream.total_iterations):
        if stream.step():
            S = stream.output.active_set()
            g = strong_wolfe_gap(exp.objective, exp.region, S, c_mon)
            rec.add(stream.total_iterations, g.value, g.w, len(S), counters.lmo, counters.foo)
    return RunResult(
        S.x.copy(), S, g.w, g.value, stream.total_iterations, g.w <= epsilon, rec, counters, {"calls": stream.calls}
    )


def run_algorithm(
    tag: str, exp: Experiment, epsilon: float, budget: Budget, mode: str, criterion: str, run_id: str
) -> RunResult:
    if tag in VARIANTS:
        return run_cg(exp.objective, exp.region, exp.x0, epsilon, tag, budget, run_id)
    if tag == "acc":
        return run_acc_baseline(exp, epsilon, budget, criterion, run_id)
    cfg = CouplingConfig(epsilon, mode, budget, COUPLED_VARIANTS[tag], criterion)
    return pflacg_run(exp.objective, exp.region, exp.x0, cfg, run_id, tag)


@dataclass
class Outcome:
    tag: str
    result: RunResult | None
    error: str | None
    elapsed: float

    @property
    def rows(self) -> list[RunRecord]:
        return list(self.result.trace) if self.result else []


def _run_all(
    tags: Sequence[str], exp: Experiment, cfg_eps: float, budget: Budget, mode: str, criterion: str, run_id: str
) -> list[Outcome]:
    outcomes = []
    for tag in tags:
        try:
            res = run_algorithm(tag, exp, cfg_eps, budget, mode, criterion, run_id)
            rows = list(res.trace)
            outcomes.append(Outcome(tag, res, None, rows[-1].elapsed_s if rows else 0.0))
        except (PflacgError, ValueError, ArithmeticError) as exc:
            outcomes.append(Outcome(tag, None, f"{type(exc).__name__}: {exc}", 0.0))
    return outcomes


def _fmt(v: float) -> str:
    return f"{v:.3e}" if math.isfinite(v) else str(v)


def print_summary(outcomes: Sequence[Outcome], f_ref: float | None = None, out=None) -> None:
    out = out or sys.stdout
    head = ["algorithm", "iters", "final_w", "final_f"] + (["primal_gap"] if f_ref is not None else [])
    head += ["lmo", "foo", "seconds", "status"]
    lines = [head]
    for o in outcomes:
        if o.result is None:
            lines.append([o.tag] + ["-"] * (len(head) - 2) + [o.error])
            continue
        r = o.result
        row = [o.tag, str(r.iterations), _fmt(r.w), repr(r.f)]
        if f_ref is not None:
            row.append(_fmt(r.f - f_ref))
        row += [str(r.counters.lmo), str(r.counters.foo), f"{o.elapsed:.2f}", "converged" if r.converged else "budget"]
        lines.append(row)
    widths = [max(len(line[i]) for line in lines) for i in range(len(head))]
    for line in lines:
        print("  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip(), file=out)


def _run_id(spec: ProblemSpec) -> str:
    return f"{spec.kind}-n{spec.n}-s{spec.seed}"


def cmd_run(cfg: RunConfig) -> int:
    exp = gen_experiment(cfg.spec)
    outcomes = _run_all(cfg.algorithms, exp, cfg.epsilon, cfg.budget, cfg.mode, cfg.criterion, _run_id(cfg.spec))
    cfg.output.parent.mkdir(parents=True, exist_ok=True)
    with open(cfg.output, "w", newline="") as fh:
        write_records((r for o in outcomes for r in o.rows), fh)
    print(f"problem: {exp.region.description}, alpha={cfg.spec.alpha!r}, seed={cfg.spec.seed}")
    print_summary(outcomes)
    print(f"trace written to {cfg.output}")
    return EXIT_ALGO if any(o.error for o in outcomes) else EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

FAMILIES = ("simplex", "lasso", "birkhoff")
_KIND = {"simplex": "simplex", "lasso": "structured-lasso", "birkhoff": "constrained-birkhoff"}


def bench_spec(family: str, scale: str, seed: int = 0) -> ProblemSpec:
    """Problem parameters for the benchmark families."""
    if family not in FAMILIES:
        raise UsageError(f"unknown family {family!r}")
    if scale not in ("desk", "full"):
        raise UsageError(f"unknown scale {scale!r}")
    full = scale == "full"
    if family == "simplex":
        n = 10000 if full else 500
        alpha = 500.0 if full else alpha_for_kappa(n, 5e3)
        return ProblemSpec("simplex", n, alpha, seed)
    if family == "lasso":
        n = 1000 if full else 200
        return ProblemSpec("structured-lasso", n, 100.0 if full else 10.0, seed, tau=1.0, n_pairs=n // 8)
    n_side = 20 if full else 8
    return ProblemSpec(
        "constrained-birkhoff",
        n_side * n_side,
        1.0,
        seed,
        n_zero=n_side * 2 if full else n_side,
        n_cap=n_side * 2 if full else n_side,
        cap=0.5,
        top_eig=1e5 if full else 1e3,
    )


def bench_algorithms(family: str) -> tuple[str, ...]:
    if family == "birkhoff":
        return ("afw", "pfw", "lazy-afw", "pflacg", "pflacg-lazy")
    return ("afw", "pfw", "lazy-afw", "pflacg")


def reference_value(exp: Experiment, outcomes: Sequence[Outcome], budget: Budget) -> float:
    """High-accuracy optimal value: a tight coupled run polished by restarted ACC."""
    ref = pflacg_run(exp.objective, exp.region, exp.x0, CouplingConfig(1e-11, budget=budget), "reference")
    best = ref.f
    if len(ref.active) > 1:
        pol = acc_restarted(ref.x, ref.active, None, None, exp.objective, 1e-11, budget=budget)
        best = min(best, exp.objective.value(pol.x_out))
    finals = [o.result.f for o in outcomes if o.result is not None]
    return min([best] + finals)


def cmd_bench(
    family: str,
    scale: str,
    out_dir: Path,
    seed: int = 0,
    mode: str = "lockstep",
    budget: Budget | None = None,
    epsilon: float = 1e-8,
    dry_run: bool = False,
) -> int:
    spec = bench_spec(family, scale, seed).resolved()
    tags = bench_algorithms(family)
    print(f"bench family={family} scale={scale}: " + ", ".join(f"{k}={v!r}" for k, v in spec.to_dict().items()))
    print(f"algorithms: {', '.join(tags)}; epsilon={epsilon!r}; mode={mode}")
    if dry_run:
        return EXIT_OK
    budget = budget or Budget(50_000, 300.0)
    exp = gen_experiment(spec)
    outcomes = _run_all(tags, exp, epsilon, budget, mode, "grad-map", _run_id(spec))
    f_ref = reference_value(exp, outcomes, budget)
    out_dir.mkdir(parents=True, exist_ok=True)
    for o in outcomes:
        with open(out_dir / f"{family}_{o.tag}.csv", "w", newline="") as fh:
            write_records(o.rows, fh)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "iterations", "final_w", "final_f", "primal_gap", "lmo_calls", "foo_calls", "elapsed_s", "status"])
        for o in outcomes:
            r = o.result
            if r is None:
                w.writerow([o.tag, "", "", "", "", "", "", "", o.error])
            else:
                status = "converged" if r.converged else "budget"
                w.writerow([o.tag, r.iterations, repr(r.w), repr(r.f), repr(r.f - f_ref), r.counters.lmo, r.counters.foo, repr(o.elapsed), status])
    print(f"reference f* = {f_ref!r}")
    print_summary(outcomes, f_ref)
    print(f"results written to {out_dir}")
    return EXIT_ALGO if any(o.error for o in outcomes) else EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

THRESHOLDS = (1e-2, 1e-4, 1e-6, 1e-8)


@dataclass
class Series:
    label: str
    algorithm: str
    rows: list[RunRecord]

    def first_below(self, t: float) -> int | None:
        for r in self.rows:
            if r.wolfe_gap <= t:
                return r.iteration
        return None

    def gap_at(self, iteration: int) -> float:
        """Gap of the last row at or before ``iteration`` (carried forward)."""
        w = self.rows[0].wolfe_gap
        for r in self.rows:
            if r.iteration > iteration:
                break
            w = r.wolfe_gap
        return w

    def epoch_at(self, iteration: int) -> int:
        e = 0
        for r in self.rows:
            if r.iteration > iteration:
                break
            e = r.epoch
        return e


def load_series(paths: Sequence[str], warn: Callable[[str], None]) -> list[Series]:
    series: list[Series] = []
    for p in paths:
        try:
            rows = read_records_path(p)
        except (OSError, ValueError, UnicodeDecodeError) as exc:
            warn(f"skipping {p}: {exc}")
            continue
        if not rows:
            warn(f"skipping {p}: no data rows")
            continue
        groups: dict[tuple[str, str], list[RunRecord]] = {}
        for r in rows:
            groups.setdefault((r.algorithm, r.run_id), []).append(r)
        for (alg, rid), rs in groups.items():
            series.append(Series(f"{Path(p).name}:{alg}:{rid}", alg, rs))
    return series


def crossover(cand: Series, base: Series) -> tuple[int, int] | None:
    """First iteration from which ``cand``'s gap stays at or below ``base``'s.

    Returns ``(iteration, epoch of cand there)`` or ``None``.
    """
    its = sorted({r.iteration for r in cand.rows} | {r.iteration for r in base.rows})
    start = None
    for it in its:
        if cand.gap_at(it) <= base.gap_at(it):
            if start is None:
                start = it
        else:
            start = None
    return None if start is None else (start, cand.epoch_at(start))


def cmd_compare(paths: Sequence[str], out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    series = load_series(paths, lambda m: print(f"warning: {m}", file=err))
    if not series:
        print("nothing to compare", file=out)
        return EXIT_OK
    print("iterations to reach each gap threshold", file=out)
    head = ["series"] + [f"w<={t:g}" for t in THRESHOLDS]
    table = [head] + [[s.label] + [str(s.first_below(t) if s.first_below(t) is not None else "-") for t in THRESHOLDS] for s in series]
    widths = [max(len(r[i]) for r in table) for i in range(len(head))]
    for r in table:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip(), file=out)
    cands = [s for s in series if s.algorithm.startswith("pflacg")] or series[:1]
    print("\ncrossovers (first iteration from which the candidate stays at or below the baseline)", file=out)
    for c in cands:
        for b in series:
            if b is c or b in cands and b.algorithm.startswith("pflacg"):
                continue
            x = crossover(c, b)
            msg = "never" if x is None else f"iteration {x[0]} (epoch {x[1]})"
            print(f"{c.label} vs {b.label}: {msg}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _globals_parser(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d, help="override the problem seed")
    p.add_argument("--mode", choices=MODES, default=d, help="coupling mode")
    p.add_argument("--budget-iters", type=int, default=d, help="iteration cap per run")
    p.add_argument("--budget-seconds", type=float, default=d, help="wall-clock cap per run")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pflacg", parents=[_globals_parser(False)], description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    g = [_globals_parser(True)]
    p = sub.add_parser("run", parents=g, help="run algorithms on one generated problem")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="CSV path (overrides the config)")
    p = sub.add_parser("bench", parents=g, help="benchmark comparison on a named family")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--scale", default="desk", choices=("desk", "full"))
    p.add_argument("--out", default="bench_out")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--dry-run", action="store_true", help="print the parameters and exit")
    p = sub.add_parser("compare", parents=g, help="compare trace CSVs")
    p.add_argument("paths", nargs="+")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "run":
            cfg = _apply_overrides(RunConfig.from_file(args.config), args)
            return cmd_run(cfg)
        if args.command == "bench":
            budget = None
            if args.budget_iters is not None or args.budget_seconds is not None:
                budget = Budget(args.budget_iters or 50_000, args.budget_seconds)
            return cmd_bench(
                args.family,
                args.scale,
                Path(args.out),
                args.seed or 0,
                args.mode or "lockstep",
                budget,
                args.epsilon,
                args.dry_run,
            )
        return cmd_compare(args.paths)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
