"""Experiment orchestration: cutoff sweeps, profile widths and the verification suite."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .bounds import (
    correlation_condition_check,
    dg1xn_quadratic_direct,
    double_sum_constant,
    gaussian_comb_argmax,
    lemma_double_sum_check,
    lemma_sum_check,
    quadratic_decomposition,
    schur_complement_closed,
    schur_complement_numeric,
    schur_sequence,
    table_cell,
    table_ordering,
    theory_time,
)
from .errors import InvalidArgument, TooLarge
from .montecarlo import PsiStats, SimConfig, estimate_psi_stats, psi_exact_moments, psi_stationary_moments, stationary_stats, tv_lower_bound
from .spectral import exact_tv_curve, kernel_curve, l2_bound_curve, uniformization_oracle
from .walks import KINDS, WalkSpec, correlation_model, dgnxn_psi, make_dg_1xn, make_dg_nxn, make_srw, make_walk

SCHEMA_VERSION = 1
SWEEP_COLUMNS = ("n", "q", "t", "c", "l2_tv_bound", "exact_tv", "mc_lower_bound", "status")
PROFILE_COLUMNS = ("n", "q", "t_upper", "t_lower", "t_d90", "t_d50", "t_d10", "width", "normalized_width", "d_at_t_upper")


def default_c_grid() -> list[float]:
    """Log-spaced multiples of the theory time; wide enough to see d cross 0.9 and 0.1."""
    return [float(c) for c in np.geomspace(0.002, 4.0, 120)]


@dataclass
class ExperimentConfig:
    walk: str = "dg1xn"
    n: list[int] = field(default_factory=lambda: [4, 6, 8])
    q: list[int] | None = None  # one q per n; when absent q = q_factor * n
    q_factor: int = 2
    grid: dict = field(default_factory=lambda: {"kind": "theory", "c": default_c_grid()})
    epsilon: float = 0.25
    variant: str = "theorem"
    exact: bool = True
    mc_samples: int = 0
    seed: int = 0
    threads: int | None = None
    output: str | None = None
    format: str = "csv"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.walk not in KINDS or self.walk == "custom":
            raise InvalidArgument(f"sweeps support dg1xn, dgnxn, srw; got {self.walk!r}")
        if not self.n:
            raise InvalidArgument("need at least one n")
        if self.q is not None and len(self.q) != len(self.n):
            raise InvalidArgument("q list must match the n list")
        if self.format not in ("csv", "json"):
            raise InvalidArgument("format must be csv or json")
        kind = self.grid.get("kind")
        if kind == "theory":
            cs = self.grid.get("c") or []
            if not cs:
                raise InvalidArgument("empty c grid")
            if any(not (c > 0) for c in cs):
                raise InvalidArgument("c values must be > 0")
        elif kind in ("linear", "log"):
            pts = int(self.grid.get("points", 0))
            if pts < 1:
                raise InvalidArgument("grid needs at least one point")
            start, stop = float(self.grid["start"]), float(self.grid["stop"])
            if start < 0 or stop < start or (kind == "log" and start <= 0):
                raise InvalidArgument("invalid grid bounds")
        else:
            raise InvalidArgument(f"unknown grid kind {kind!r}")
        if not 0 < self.epsilon < 1:
            raise InvalidArgument("epsilon must lie in (0, 1)")
        if self.mc_samples < 0:
            raise InvalidArgument("mc_samples must be >= 0")
        if self.output is not None:
            parent = Path(self.output).resolve().parent
            if not parent.is_dir():
                raise InvalidArgument(f"output directory {parent} does not exist")

    @classmethod
    def from_json(cls, text: str, **overrides) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise InvalidArgument("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)

    def instances(self) -> list[tuple[int, int]]:
        qs = self.q if self.q is not None else [self.q_factor * n for n in self.n]
        return sorted(zip(self.n, qs))

    def times(self, t_theory: float) -> np.ndarray:
        g = self.grid
        if g["kind"] == "theory":
            return np.array(sorted(float(c) for c in g["c"])) * t_theory
        if g["kind"] == "linear":
            return np.linspace(float(g["start"]), float(g["stop"]), int(g["points"]))
        return np.geomspace(float(g["start"]), float(g["stop"]), int(g["points"]))


@dataclass
class SweepRow:
    n: int
    q: int
    t: float
    c: float
    l2_tv_bound: float | None
    exact_tv: float | None
    mc_lower_bound: float | None
    status: str  # "exact" or "bound-only"


@dataclass
class Profile:
    n: int
    q: int
    t_upper: float
    t_lower: float | None
    t_d90: float | None
    t_d50: float | None
    t_d10: float | None
    width: float | None
    normalized_width: float | None
    d_at_t_upper: float | None


@dataclass
class CutoffReport:
    rows: list[SweepRow]
    profiles: list[Profile]

    def profile(self, n: int) -> Profile:
        return next(p for p in self.profiles if p.n == n)


def crossing_time(ts: np.ndarray, d: np.ndarray, level: float) -> float | None:
    """First time the (monotonised) profile drops to ``level``, by linear interpolation."""
    ts = np.asarray(ts, dtype=float)
    d = np.minimum.accumulate(np.asarray(d, dtype=float))
    below = np.nonzero(d <= level)[0]
    if len(below) == 0 or below[0] == 0:
        return None if len(below) == 0 else (float(ts[0]) if d[0] == level else None)
    i = int(below[0])
    t0, t1, d0, d1 = ts[i - 1], ts[i], d[i - 1], d[i]
    if d0 == d1:
        return float(t1)
    return float(t0 + (d0 - level) * (t1 - t0) / (d0 - d1))


def _walk(kind: str, n: int, q: int) -> WalkSpec:
    return make_walk(kind, n, q)


def run_sweep(config: ExperimentConfig) -> CutoffReport:
    rows: list[SweepRow] = []
    profiles: list[Profile] = []
    for n, q in config.instances():
        walk = _walk(config.walk, n, q)
        times = theory_time(walk, config.epsilon, config.variant)
        ts = config.times(times.t_upper)
        try:
            l2 = l2_bound_curve(walk, ts, threads=config.threads)
            l2_tv = np.sqrt(np.maximum(l2, 0.0)) / 2
        except TooLarge:
            l2_tv = [None] * len(ts)
        exact = None
        if config.exact:
            try:
                exact = exact_tv_curve(walk, ts, threads=config.threads)
            except TooLarge:
                exact = None
        mc = [None] * len(ts)
        if config.mc_samples:
            pi_stats = stationary_stats(walk.m)
            for i, t in enumerate(ts):
                cfg = SimConfig(float(t), config.mc_samples, config.seed + i, walk, config.threads)
                mc[i] = tv_lower_bound(estimate_psi_stats(cfg), pi_stats)
        for i, t in enumerate(ts):
            rows.append(
                SweepRow(
                    n,
                    q,
                    float(t),
                    float(t / times.t_upper),
                    None if l2_tv[i] is None else float(l2_tv[i]),
                    None if exact is None else float(exact[i]),
                    mc[i],
                    "exact" if exact is not None else "bound-only",
                )
            )
        prof = Profile(n, q, times.t_upper, times.t_lower, None, None, None, None, None, None)
        if exact is not None:
            t90, t50, t10 = (crossing_time(ts, exact, lv) for lv in (0.9, 0.5, 0.1))
            width = t10 - t90 if t10 is not None and t90 is not None else None
            norm = width / t50 if width is not None and t50 else None
            d_up = float(exact_tv_curve(walk, [times.t_upper], threads=config.threads)[0])
            prof = replace(prof, t_d90=t90, t_d50=t50, t_d10=t10, width=width, normalized_width=norm, d_at_t_upper=d_up)
        profiles.append(prof)
    rows.sort(key=lambda r: (r.n, r.t))
    return CutoffReport(rows, profiles)


# ---------------------------------------------------------------- output


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path: str | Path | None, columns, records, schema: str, stream=None) -> str:
    """CSV with a schema comment line; numbers use 17 significant digits."""
    lines = [f"# cutofflab {schema} schema v{SCHEMA_VERSION}", ",".join(columns)]
    for rec in records:
        lines.append(",".join(fmt(rec[c] if isinstance(rec, dict) else getattr(rec, c)) for c in columns))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    elif stream is not None:
        stream.write(text)
    return text


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not serialisable: {type(x)}")


def write_sidecar(path: str | Path, command: str, argv: list[str] | None, wall_s: float) -> Path:
    """Run metadata (timestamps, timing) kept out of the data file so data stays byte-identical."""
    side = Path(str(path) + ".meta.json")
    doc = {
        "command": command,
        "argv": argv or [],
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_seconds": wall_s,
    }
    side.write_text(dumps(doc), encoding="utf-8")
    return side


def write_report(report: CutoffReport, config: ExperimentConfig, stream=None) -> str:
    """Sweep rows (CSV or JSON) plus, for CSV files, a companion profile CSV."""
    if config.format == "json":
        text = dumps(
            {
                "schema": f"sweep v{SCHEMA_VERSION}",
                "config": asdict(config) | {"output": None},
                "rows": [asdict(r) for r in report.rows],
                "profiles": [asdict(p) for p in report.profiles],
            }
        )
        if config.output:
            Path(config.output).write_text(text, encoding="utf-8")
        elif stream is not None:
            stream.write(text)
        return text
    text = write_csv(config.output, SWEEP_COLUMNS, report.rows, "sweep", stream)
    if config.output:
        prof_path = Path(config.output).with_suffix(".profile.csv")
        write_csv(prof_path, PROFILE_COLUMNS, report.profiles, "profile")
    elif stream is not None:
        write_csv(None, PROFILE_COLUMNS, report.profiles, "profile", stream)
    return text


# ---------------------------------------------------------------- verification suite


@dataclass
class CheckResult:
    name: str
    passed: bool
    slack: float | None = None
    detail: str = ""


@dataclass
class VerificationReport:
    level: str
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[str]:
        return [f"{c.name}: {c.detail}" for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"level": self.level, "passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def _check(name: str, fn: Callable[[], tuple[bool, float | None, str]]) -> CheckResult:
    try:
        ok, slack, detail = fn()
        return CheckResult(name, bool(ok), slack, detail)
    except Exception as exc:  # a crashing check is reported as a named failure
        return CheckResult(name, False, None, f"{type(exc).__name__}: {exc}")


def _oracle_instances(level: str) -> list[WalkSpec]:
    out = [make_dg_1xn(3, 5), make_dg_1xn(4, 7), make_dg_nxn(3, 3), make_srw(2, 5)]
    if level == "full":
        out += [make_dg_1xn(5, 9), make_dg_nxn(3, 5)]
    return out


TIMES = (0.0, 0.5, 1.0, 5.0, 25.0)


def _oracle_check() -> tuple[bool, float, str]:
    worst = 0.0
    for w in _oracle_instances("quick"):
        for k in kernel_curve(w, TIMES):
            ref = uniformization_oracle(w, k.t, 1e-13).probs
            worst = max(worst, float(np.abs(k.probs - ref).sum()))
    return worst <= 1e-9, 1e-9 - worst, f"max L1 {worst:.3g}"


def _dominance(level: str) -> tuple[bool, float, str]:
    walks = _oracle_instances(level) + [make_dg_1xn(5, 11)]
    if level == "full":
        walks.append(make_dg_nxn(4, 5))
    worst = math.inf
    where = ""
    for w in walks:
        tv = exact_tv_curve(w, TIMES)
        l2 = l2_bound_curve(w, TIMES)
        slack = l2 + 1e-9 - 4 * tv**2
        if slack.min() < worst:
            worst = float(slack.min())
            where = f"{w.label} t={TIMES[int(np.argmin(slack))]}"
    return worst >= 0, worst, f"tightest at {where}"


def _monotone(level: str) -> tuple[bool, float, str]:
    ts = np.linspace(0, 30, 61)
    worst = math.inf
    for w in _oracle_instances(level):
        d = exact_tv_curve(w, ts)
        worst = min(worst, float((d[:-1] - d[1:]).min()) + 1e-10)
    return worst >= 0, worst, ""


def _matrix_identities(level: str, tamper: str | None) -> tuple[bool, float, str]:
    worst, where = 0.0, ""
    n1 = range(2, 65) if level == "full" else range(2, 17)
    n2 = range(2, 13) if level == "full" else range(2, 7)
    for kind, ns in (("dg1xn", n1), ("dgnxn", n2)):
        for n in ns:
            w = make_dg_1xn(n, 3 * n + 3) if kind == "dg1xn" else make_dg_nxn(n, 5)
            model = correlation_model(w)
            psi = model.psi.copy()
            if tamper == "psi" and kind == "dgnxn" and n == 3:
                psi[0, 1] += 1e-3
            err = np.abs(model.gamma @ psi - np.eye(w.m))
            if err.max() > worst:
                i, j = np.unravel_index(int(np.argmax(err)), err.shape)
                worst, where = float(err.max()), f"{w.label} entry ({i}, {j})"
    return worst <= 1e-10, 1e-10 - worst, f"max |Gamma Psi - I| = {worst:.3g} at {where}"


def _quadratic() -> tuple[bool, float, str]:
    rng = np.random.default_rng(12345)
    worst = 0.0
    for n in (3, 8, 20, 40):
        for _ in range(200):
            y = rng.integers(-5, 6, n - 1)
            a = quadratic_decomposition(y, n)[0]
            b = dg1xn_quadratic_direct(y, n)
            worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    return worst <= 1e-10, 1e-10 - worst, f"max relative error {worst:.3g}"


def _schur() -> tuple[bool, float, str]:
    worst = max(abs(schur_complement_numeric(l, k) - schur_complement_closed(l, k)) for l in range(1, 9) for k in range(1, 9))
    n = 6
    seq = schur_sequence(dgnxn_psi(n), table_ordering(n))
    gaps = []
    for idx, a in enumerate(seq.a):
        l, k = table_cell(idx, n)
        gaps.append(a - l * k / ((l + 1) * (k + 1)))
    ok = worst <= 1e-10 and min(gaps) >= -1e-10
    return ok, min(1e-10 - worst, min(gaps)), f"closed-form error {worst:.3g}, min a-gap {min(gaps):.3g}"


def _lemmas(level: str) -> tuple[bool, float, str]:
    top = 5 if level == "full" else 4
    ns = sorted({int(round(x)) for x in np.logspace(0, top, 41)})
    slack = math.inf
    for alpha in (1.0, 4.0, 100.0):
        for n in ns:
            r = lemma_sum_check(n, alpha)
            slack = min(slack, r.bound - r.total)
    for n in sorted({int(round(x)) for x in np.logspace(0, 3 if level == "full" else 2, 21)}):
        r = lemma_double_sum_check(n)
        slack = min(slack, r.bound - r.total)
    comb = max(abs(gaussian_comb_argmax(N, c)) for c in (50.0, 200.0, 1000.0) for N in (5, 50))
    return slack >= 0 and comb <= 1e-4, slack, f"max comb argmax {comb:.3g}"


def _psi_moments() -> tuple[bool, float, str]:
    worst = 0.0
    for m in (2, 3):
        mean, var = psi_stationary_moments(5, m)
        worst = max(worst, abs(mean), abs(var - m / 2))
    return worst <= 1e-12, 1e-12 - worst, ""


def _lower_bound_validity(level: str) -> tuple[bool, float, str]:
    worst = math.inf
    for w in _oracle_instances(level):
        tv = exact_tv_curve(w, TIMES)
        for t, d in zip(TIMES, tv):
            mean, var = psi_exact_moments(w, t)
            lb = tv_lower_bound(PsiStats.from_moments(mean, var, 1), stationary_stats(w.m))
            worst = min(worst, d + 1e-9 - lb)
    return worst >= 0, worst, ""


def _correlation_condition() -> tuple[bool, float, str]:
    g = lambda a: double_sum_constant() / a**0.25
    slack = math.inf
    ok = True
    for alpha in (1.0, 16.0):
        fam = [dgnxn_psi(n) for n in range(3, 11)]
        r = correlation_condition_check(fam, alpha, g, [table_ordering(n) for n in range(3, 11)])
        ident = correlation_condition_check([np.eye(m) for m in range(1, 30)], alpha, lambda a: 1 / a)
        ok = ok and r.passed and ident.passed
        slack = min(slack, r.min_slack, ident.min_slack)
    return ok, slack, ""


def run_verification_suite(level: str = "quick", tamper: str | None = None) -> VerificationReport:
    """Run the cross-module invariants; ``tamper="psi"`` perturbs one precision entry as a negative control."""
    if level not in ("quick", "full"):
        raise InvalidArgument("level must be quick or full")
    checks = [
        _check("oracle-equivalence", _oracle_check),
        _check("l2-dominance", lambda: _dominance(level)),
        _check("tv-monotone", lambda: _monotone(level)),
        _check("gamma-psi-identity", lambda: _matrix_identities(level, tamper)),
        _check("quadratic-decomposition", _quadratic),
        _check("schur-complements", _schur),
        _check("summation-lemmas", lambda: _lemmas(level)),
        _check("psi-stationary-moments", _psi_moments),
        _check("lower-bound-validity", lambda: _lower_bound_validity(level)),
        _check("correlation-condition", _correlation_condition),
    ]
    return VerificationReport(level, checks)
