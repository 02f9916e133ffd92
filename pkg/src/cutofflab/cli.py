"""Command-line entry point.

Exit codes: 0 ok, 1 invalid input, 2 problem exceeds a computation budget,
3 an invariant check failed.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .bounds import (
    VARIANTS,
    Flavor,
    comb_threshold,
    correlation_condition_check,
    decay_condition_scan,
    double_sum_constant,
    gaussian_comb_argmax,
    lemma_double_sum_check,
    lemma_sum_check,
    single_sum_constant,
    table_ordering,
    theorem_times,
    theory_time,
)
from .errors import CutoffLabError, InvalidArgument, InvariantFailure
from .harness import ExperimentConfig, default_c_grid, dumps, run_sweep, run_verification_suite, write_csv, write_report, write_sidecar
from .montecarlo import SimConfig, estimate_psi_stats, psi_exact_mean, psi_exact_moments, stationary_stats, tv_lower_bound, PsiStats
from .spectral import exact_tv_curve, kernel_curve, l2_bound_curve, uniformization_oracle
from .torus import IncrementDistribution
from .walks import correlation_model, dgnxn_psi, dg1xn_psi, make_custom, make_walk

SPECTRAL_COLUMNS = ("t", "l2_bound_sq", "l2_tv_bound", "exact_tv", "lattice_size", "wall_ms")

COLUMN_HELP = """\
spectral-tv CSV columns:
  t             time (rate-1 units)
  l2_bound_sq   sum over nonzero y of exp(2t(Phi(2 pi y/q) - 1))
  l2_tv_bound   sqrt(l2_bound_sq) / 2, an upper bound on d(t)
  exact_tv      exact total variation distance d(t) (empty with --no-exact)
  lattice_size  q^m
  wall_ms       milliseconds spent on this row (the only run-dependent column)

sweep-cutoff CSV columns:
  n, q          instance
  t             time; c = t / t_upper (theory upper time)
  l2_tv_bound   l2 upper bound on d(t) (empty when the lattice is too large)
  exact_tv      exact d(t) (empty when not computed)
  mc_lower_bound  Monte Carlo cosine-statistic lower bound (empty unless --mc-samples)
  status        exact | bound-only
The companion <output>.profile.csv holds t_upper, t_lower, the times where d
crosses 0.9, 0.5 and 0.1, the width t(d=0.1) - t(d=0.9), that width divided
by t(d=0.5), and d at t_upper. Each file starts with a '# ... schema vN' line.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are validation errors (exit 1), not budget errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def _grid(text: str) -> list[float]:
    """Either 'a,b,c' or 'linear:start:stop:points' / 'log:start:stop:points'."""
    if ":" in text:
        kind, start, stop, pts = text.split(":")
        fn = {"linear": np.linspace, "log": np.geomspace}.get(kind)
        if fn is None:
            raise argparse.ArgumentTypeError(f"unknown grid kind {kind!r}")
        return [float(x) for x in fn(float(start), float(stop), int(pts))]
    return _floats(text)


def _walk_args(p: argparse.ArgumentParser, need_n: bool = True) -> None:
    p.add_argument("--walk", choices=["dg1xn", "dgnxn", "srw", "custom"], default="dg1xn")
    p.add_argument("--n", type=int, default=3, help="table size (or dimension for srw)")
    p.add_argument("--q", type=int, default=5, help="modulus")
    p.add_argument("--file", help="increment law JSON for --walk custom")
    p.add_argument("--threads", type=int, default=None, help="worker threads (CUTOFFLAB_THREADS caps this)")


def _load_walk(args):
    if args.walk == "custom":
        if not args.file:
            raise InvalidArgument("--walk custom needs --file")
        try:
            text = Path(args.file).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidArgument(f"cannot read {args.file}: {exc}") from exc
        return make_custom(IncrementDistribution.from_json(text))
    return make_walk(args.walk, args.n, args.q)


def _emit(args, text: str, command: str, started: float) -> None:
    if getattr(args, "output", None):
        Path(args.output).write_text(text, encoding="utf-8")
        write_sidecar(args.output, command, sys.argv[1:], time.perf_counter() - started)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def cmd_spectral_tv(args) -> int:
    started = time.perf_counter()
    walk = _load_walk(args)
    records = []
    for t in args.t:
        t0 = time.perf_counter()
        l2 = float(l2_bound_curve(walk, [t], threads=args.threads)[0])
        tv = None if args.no_exact else float(exact_tv_curve(walk, [t], threads=args.threads)[0])
        if tv is not None and 4 * tv * tv > l2 + 1e-9:
            raise InvariantFailure(f"l2 dominance violated at t={t}: 4 d^2 = {4 * tv * tv}, bound {l2}")
        records.append(
            {
                "t": float(t),
                "l2_bound_sq": l2,
                "l2_tv_bound": math.sqrt(max(l2, 0.0)) / 2,
                "exact_tv": tv,
                "lattice_size": walk.lattice_size,
                "wall_ms": (time.perf_counter() - t0) * 1e3,
            }
        )
    _emit(args, write_csv(None, SPECTRAL_COLUMNS, records, "spectral-tv"), "spectral-tv", started)
    return 0


def cmd_oracle_check(args) -> int:
    started = time.perf_counter()
    walk = _load_walk(args)
    rows = []
    for k in kernel_curve(walk, args.t, threads=args.threads):
        ref = uniformization_oracle(walk, k.t, args.eps).probs
        diff = np.abs(k.probs - ref)
        rows.append({"t": k.t, "max_abs": float(diff.max()), "l1": float(diff.sum())})
    tol = max(1e-9, 10 * args.eps)
    ok = all(r["l1"] <= tol for r in rows)
    doc = {"walk": walk.label, "tolerance_l1": tol, "passed": ok, "rows": rows,
           "max_abs": max(r["max_abs"] for r in rows), "l1": max(r["l1"] for r in rows)}
    _emit(args, dumps(doc), "oracle-check", started)
    return 0 if ok else 3


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    walk = _load_walk(args)
    cfg = SimConfig(args.t, args.samples, args.seed, walk, args.threads)
    st = estimate_psi_stats(cfg)
    doc = {
        "walk": walk.label,
        "t": args.t,
        "samples": args.samples,
        "seed": args.seed,
        "psi_mean": st.mean,
        "psi_var": st.variance,
        "ci95_halfwidth": st.ci95_halfwidth,
        "tv_lower_bound": tv_lower_bound(st, stationary_stats(walk.m)),
        "exact_psi_mean": psi_exact_mean(walk, args.t),
    }
    _emit(args, dumps(doc), "simulate", started)
    return 0


def cmd_lower_bound(args) -> int:
    started = time.perf_counter()
    walk = _load_walk(args)
    times = theory_time(walk, args.epsilon)
    doc = {"walk": walk.label, "epsilon": args.epsilon, "t_lower": times.t_lower, "t_upper": times.t_upper}
    t = times.t_lower
    if t is None:
        doc["note"] = "lower-bound bracket is not positive at this n and epsilon"
    else:
        st = estimate_psi_stats(SimConfig(t, args.samples, args.seed, walk, args.threads))
        doc["empirical_tv_lower_bound"] = tv_lower_bound(st, stationary_stats(walk.m))
        doc["psi_mean"], doc["psi_var"] = st.mean, st.variance
        doc["exact_psi_mean"] = psi_exact_mean(walk, t)
        try:
            mean, var = psi_exact_moments(walk, t)
            doc["exact_moment_tv_lower_bound"] = tv_lower_bound(PsiStats.from_moments(mean, var, 1), stationary_stats(walk.m))
        except CutoffLabError:
            doc["exact_moment_tv_lower_bound"] = None
    _emit(args, dumps(doc), "lower-bound", started)
    return 0


def cmd_theorem_times(args) -> int:
    started = time.perf_counter()
    walk = _load_walk(args)
    doc = {"walk": walk.label, "n": walk.n, "q": walk.q, "epsilon": args.epsilon, "variants": {}}
    variants = ["theorem"]
    if walk.kind == "dg1xn":
        variants = list(VARIANTS) if args.all_variants else (["proof"] if args.proof_variant else ["theorem"])
    for v in variants:
        tt = theory_time(walk, args.epsilon, v)
        doc["variants"][v] = {"t_upper": tt.t_upper, "t_lower": tt.t_lower, "alpha": tt.alpha, "gamma": tt.gamma}
    _emit(args, dumps(doc), "theorem-times", started)
    return 0


def cmd_check_lemmas(args) -> int:
    started = time.perf_counter()
    ns = sorted({int(round(x)) for x in np.geomspace(1, args.max_n, 41)})
    single = []
    for alpha in args.alpha:
        for n in ns:
            r = lemma_sum_check(n, alpha)
            single.append({"n": n, "alpha": alpha, "sum": r.total, "bound": r.bound, "pass": r.passed})
    dn = sorted({int(round(x)) for x in np.geomspace(1, min(args.max_n, args.max_n_double), 21)})
    double = []
    for n in dn:
        r = lemma_double_sum_check(n)
        double.append({"n": n, "sum": r.total, "bound": r.bound, "pass": r.passed})
    comb = []
    for N in (5, 50):
        for c in (50.0, 200.0, 1000.0):
            x = gaussian_comb_argmax(N, c)
            comb.append({"N": N, "c": c, "argmax": x, "pass": abs(x) <= 1e-4})
    thresholds = {str(N): comb_threshold(N, np.geomspace(0.01, 1000, 26)) for N in (2, 5, 50)}
    ok = all(r["pass"] for r in single + double + comb)
    doc = {
        "passed": ok,
        "inputs": {"max_n": args.max_n, "alpha": args.alpha},
        "single_sum": {"constant": single_sum_constant(), "worst_slack": min(r["bound"] - r["sum"] for r in single), "rows": single},
        "double_sum": {"constant": double_sum_constant(), "worst_slack": min(r["bound"] - r["sum"] for r in double), "rows": double},
        "comb": {"rows": comb, "measured_thresholds": thresholds},
    }
    _emit(args, dumps(doc), "check-lemmas", started)
    return 0 if ok else 3


def cmd_check_conditions(args) -> int:
    started = time.perf_counter()
    doc = {"walk": args.walk, "inputs": {"alpha": args.alpha, "n_range": args.n_range}}
    lo, hi = args.n_range
    ns = list(range(lo, hi + 1))
    if args.walk == "dgnxn":
        family = [dgnxn_psi(n) for n in ns]
        orders = [table_ordering(n) for n in ns]
        g = lambda a: double_sum_constant() / a**0.25
        g_name = "(1+2e^{4/e}+2e^{8/e}+e^{32/e}) / alpha^(1/4)"
    elif args.walk == "dg1xn":
        family, orders = [dg1xn_psi(n) for n in ns], None
        g = lambda a: single_sum_constant() / math.sqrt(a)
        g_name = "(1+e^{2/e}) / sqrt(alpha)"
    elif args.walk == "srw":
        family, orders = [np.eye(n) for n in ns], None
        g = lambda a: 1 / a
        g_name = "1/alpha"
    else:
        walk = _load_walk(args)
        family, orders = [correlation_model(walk).psi], None
        g = lambda a: 1 / a
        g_name = "1/alpha"
    ok = True
    doc["bounding_function"] = g_name
    doc["correlation"] = []
    for alpha in args.alpha:
        rep = correlation_condition_check(family, alpha, g, orders, threads=args.threads)
        ok = ok and rep.passed
        doc["correlation"].append(
            {
                "alpha": alpha,
                "passed": rep.passed,
                "psi_sup": rep.psi_sup,
                "worst_slack": rep.min_slack,
                "failures": rep.failures,
                "rows": [vars(r) for r in rep.rows],
            }
        )
    if args.walk != "custom" and args.decay:
        walk = make_walk(args.walk, args.n, args.q)
        tt = theory_time(walk, args.epsilon)
        scan = decay_condition_scan(walk, tt.t_upper, threads=args.threads)
        doc["decay"] = vars(scan) | {"walk": walk.label, "within_regime": scan.within_regime}
    doc["passed"] = ok
    _emit(args, dumps(doc), "check-conditions", started)
    return 0 if ok else 3


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    overrides = {
        "walk": args.walk,
        "n": args.n,
        "q": args.q,
        "q_factor": args.q_factor,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "threads": args.threads,
        "output": args.output,
        "format": args.format,
        "mc_samples": args.mc_samples,
        "variant": args.variant,
    }
    if args.c_grid is not None:
        overrides["grid"] = {"kind": "theory", "c": args.c_grid}
    if args.t_grid is not None:
        kind, start, stop, pts = args.t_grid.split(":")
        overrides["grid"] = {"kind": kind, "start": float(start), "stop": float(stop), "points": int(pts)}
    if args.no_exact:
        overrides["exact"] = False
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidArgument(f"cannot read config: {exc}") from exc
        cfg = ExperimentConfig.from_json(text, **overrides)
    else:
        cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    report = run_sweep(cfg)
    for r in report.rows:
        if r.exact_tv is not None and r.l2_tv_bound is not None and r.l2_tv_bound < r.exact_tv - 1e-9:
            raise InvariantFailure(f"l2 bound below exact TV at n={r.n}, t={r.t}")
    write_report(report, cfg, stream=sys.stdout)
    if cfg.output:
        write_sidecar(cfg.output, "sweep-cutoff", sys.argv[1:], time.perf_counter() - started)
    return 0


def cmd_verify(args) -> int:
    started = time.perf_counter()
    rep = run_verification_suite(args.level, tamper=args.tamper)
    _emit(args, dumps(rep.to_dict()), "verify", started)
    for f in rep.failures:
        print(f"FAILED {f}", file=sys.stderr)
    return 0 if rep.passed else 3


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="cutofflab",
        description="Mixing-time diagnostics for random walks on Z_q^m: exact TV, l2 bounds, theorem times, simulation.",
        epilog=COLUMN_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("spectral-tv", help="exact d(t) and the l2 bound on a time grid (CSV)",
                       epilog=COLUMN_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _walk_args(s)
    s.add_argument("--t", type=_grid, default=[0.0, 1.0, 5.0, 25.0], help="times: 'a,b,c' or 'linear:0:10:11'")
    s.add_argument("--no-exact", action="store_true", help="skip exact TV (l2 bound only)")
    s.add_argument("--output")
    s.set_defaults(func=cmd_spectral_tv)

    s = sub.add_parser("oracle-check", help="FFT kernel vs Poisson-mixture oracle (JSON)")
    _walk_args(s)
    s.add_argument("--t", type=_grid, default=[0.0, 0.5, 1.0, 5.0, 25.0])
    s.add_argument("--eps", type=float, default=1e-13, help="Poisson truncation mass")
    s.add_argument("--output")
    s.set_defaults(func=cmd_oracle_check)

    s = sub.add_parser("simulate", help="Monte Carlo cosine statistic and its TV lower bound (JSON)")
    _walk_args(s)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("lower-bound", help="theory lower time and the statistic bound evaluated there (JSON)")
    _walk_args(s)
    s.add_argument("--epsilon", type=float, default=0.25)
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_lower_bound)

    s = sub.add_parser("theorem-times", help="upper/lower theory times and alpha (JSON)")
    _walk_args(s)
    s.add_argument("--epsilon", type=float, default=0.25)
    s.add_argument("--proof-variant", action="store_true", help="use the (1 - 3/q)^-1 prefactor for 1 x n tables")
    s.add_argument("--all-variants", action="store_true", help="report every prefactor variant")
    s.add_argument("--output")
    s.set_defaults(func=cmd_theorem_times)

    s = sub.add_parser("check-lemmas", help="numeric checks of the summation and comb lemmas (JSON)")
    s.add_argument("--max-n", type=int, default=10**5)
    s.add_argument("--max-n-double", type=int, default=10**3)
    s.add_argument("--alpha", type=_floats, default=[1.0, 4.0, 100.0])
    s.add_argument("--output")
    s.set_defaults(func=cmd_check_lemmas)

    s = sub.add_parser("check-conditions", help="correlation condition over a family, decay scan at the upper time (JSON)")
    _walk_args(s)
    s.add_argument("--alpha", type=_floats, default=[1.0, 16.0])
    s.add_argument("--n-range", type=_ints, default=[3, 10], help="family range 'lo,hi'")
    s.add_argument("--epsilon", type=float, default=0.25)
    s.add_argument("--decay", action="store_true", help="also run the decay scan for --n/--q")
    s.add_argument("--output")
    s.set_defaults(func=cmd_check_conditions)

    s = sub.add_parser("sweep-cutoff", help="d(t) profiles over instances and profile widths (CSV/JSON)",
                       epilog=COLUMN_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--config", help="JSON config; flags override its values")
    s.add_argument("--walk", choices=["dg1xn", "dgnxn", "srw"])
    s.add_argument("--n", type=_ints)
    s.add_argument("--q", type=_ints)
    s.add_argument("--q-factor", type=int)
    s.add_argument("--c-grid", type=_grid, help="multiples of the theory upper time")
    s.add_argument("--t-grid", help="absolute times 'linear:start:stop:points' or 'log:...'")
    s.add_argument("--epsilon", type=float)
    s.add_argument("--variant", choices=list(VARIANTS))
    s.add_argument("--mc-samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--no-exact", action="store_true")
    s.add_argument("--format", choices=["csv", "json"])
    s.add_argument("--output")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="run the invariant suite (JSON); exit 3 on any failure")
    s.add_argument("--level", choices=["quick", "full"], default="quick")
    s.add_argument("--tamper", choices=["psi"], help=argparse.SUPPRESS)
    s.add_argument("--output")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except CutoffLabError as exc:
        print(f"cutofflab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
