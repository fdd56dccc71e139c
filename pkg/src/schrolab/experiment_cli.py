"""Command-line driver: exponents, corpora, R-sweeps, growth fits and reports."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .diophantine import dirichlet_batch, dirichlet_certified, DirichletResult
from .exponential_sums import (
    fit_weyl_constant,
    gauss_sum_closed,
    gauss_sums_all_b,
    resonant_trials,
    weyl_trials,
)
from .omega_builder import (
    omega_measure,
    omega_star_lower_bound,
    sample_eval_points,
    write_measure_csv,
)
from .propagator import point_header, point_row, propagate
from .wave_packet import (
    CONSTANT_NAMES,
    ConstraintError,
    hs_equivalence,
    l2_norm_closed,
    make_bump,
    packet_params,
    solve_exponents,
)

THREADS_ENV = "SCHROLAB_THREADS"


def thread_count(explicit: int | None = None) -> int:
    if explicit:
        return max(1, int(explicit))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _g(v: float) -> str:
    return "%.17g" % v


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


@dataclass
class SweepConfig:
    n: int = 2
    R_values: list[float] = field(default_factory=lambda: [2e10, 2e11, 2e12, 2e13])
    sigma: str = "1/2"
    s: float | None = None  # default s* - 0.05
    points_per_R: int = 64
    seed: int = 0
    offset_mode: str = "uniform"
    constants: dict[str, float] = field(default_factory=dict)
    quadrature: dict[str, int] = field(default_factory=lambda: {"nodes": 256, "panels": 4})
    e3_mode: str = "measured"
    omega_mode: str = "exact_product"
    omega_samples: int = 10**6
    pass_threshold: float = 0.9
    threads: int | None = None
    deterministic_output: bool = True

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 2:
            raise ValueError("n must be an integer >= 2")
        if not isinstance(self.R_values, list) or any(not isinstance(r, (int, float)) or r < 1 for r in self.R_values):
            raise ValueError("R_values must be a list of numbers >= 1")
        bad = set(self.constants) - set(CONSTANT_NAMES)
        if bad:
            raise ValueError(f"unknown constants: {sorted(bad)}")
        if set(self.quadrature) - {"nodes", "panels"}:
            raise ValueError("quadrature accepts only 'nodes' and 'panels'")
        if self.points_per_R < 1:
            raise ValueError("points_per_R must be positive")
        if self.offset_mode not in ("center", "uniform"):
            raise ValueError("offset_mode must be 'center' or 'uniform'")
        if self.e3_mode not in ("measured", "analytic"):
            raise ValueError("e3_mode must be 'measured' or 'analytic'")
        if self.omega_mode not in ("exact_product", "monte_carlo"):
            raise ValueError("omega_mode must be 'exact_product' or 'monte_carlo'")
        if not 0 < self.pass_threshold <= 1:
            raise ValueError("pass_threshold must lie in (0, 1]")
        Fraction(self.sigma)

    @property
    def exponent_s(self) -> float:
        if self.s is not None:
            return float(self.s)
        return float(solve_exponents(self.n, Fraction(self.sigma)).s_star) - 0.05


def load_config(path: str | os.PathLike) -> SweepConfig:
    with open(path) as fh:
        return SweepConfig.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRecord:
    n: int
    R: float
    sigma: float
    lam: float
    kappa: float
    Q: float
    L: float
    S1: float
    omega_star_measure: float
    mean_amplitude: float
    l1_lower: float
    l2_norm: float
    ratio: float
    pass_rate: float
    seed: int
    wall_time: float


_INT_FIELDS = {"n", "seed"}


def _seed_for(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def run_one(cfg: SweepConfig, R: float, index: int, log: list[str] | None = None) -> ExperimentRecord | None:
    """One R of the sweep; constraint failures are logged and give None."""
    start = time.perf_counter()
    bump = make_bump(cfg.quadrature.get("nodes", 256), cfg.quadrature.get("panels", 4))
    sol = solve_exponents(cfg.n, Fraction(cfg.sigma))
    try:
        params = packet_params(cfg.n, float(R), sol, cfg.constants or None, bump)
        seed = _seed_for(cfg.seed, index)
        omega = omega_measure(params, cfg.omega_mode, cfg.omega_samples, seed)
        points = sample_eval_points(params, cfg.points_per_R, seed, cfg.offset_mode)
    except (ConstraintError, ValueError) as err:
        if log is not None:
            log.append(f"R={R:g} skipped: {err}")
        return None
    with ThreadPoolExecutor(max_workers=thread_count(cfg.threads)) as ex:
        results = list(ex.map(lambda p: propagate(p, params, bump, cfg.e3_mode), points))
    amps = [abs(r.amplitude) for r in results]
    measure = omega_star_lower_bound(params, omega.value)
    mean_amp = math.fsum(amps) / len(amps)
    l1 = measure * mean_amp
    l2 = l2_norm_closed(params, bump)
    s = cfg.exponent_s
    ratio = l1 / (params.R**s * l2)
    rate = sum(r.passed for r in results) / len(results)
    wall = 0.0 if cfg.deterministic_output else time.perf_counter() - start
    rec = ExperimentRecord(
        cfg.n, params.R, params.sigma, params.lam, params.kappa, params.Q, params.L, params.S1,
        measure, mean_amp, l1, l2, ratio, rate, seed, wall,
    )
    if log is not None:
        hs = hs_equivalence(params.R, 4 * math.sqrt(cfg.n), s)
        log.append(
            f"R={R:g}: pass_rate={rate:.4f} ratio={ratio:.6g} "
            f"H^s factors [{hs.lower_factor:.4g}, {hs.upper_factor:.4g}] wall={time.perf_counter() - start:.2f}s"
        )
    return rec


def run_sweep(cfg: SweepConfig, log: list[str] | None = None) -> list[ExperimentRecord]:
    out = []
    for i, R in enumerate(cfg.R_values):
        rec = run_one(cfg, R, i, log)
        if rec is not None:
            out.append(rec)
    return sorted(out, key=lambda r: r.R)


@dataclass(frozen=True)
class GrowthFit:
    slope: float
    stderr: float
    intercept: float


def fit_growth(records: Sequence[ExperimentRecord]) -> GrowthFit:
    """Least-squares slope of log(l1_lower/l2_norm) against log R."""
    if len({r.R for r in records}) < 3:
        raise ValueError("need at least 3 records with distinct R")
    pts = sorted((math.log(r.R), math.log(r.l1_lower / r.l2_norm)) for r in records)
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(x) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    var = s2 / float(((x - x.mean()) ** 2).sum())
    return GrowthFit(float(coef[0]), math.sqrt(var), float(coef[1]))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

RECORD_COLUMNS = [f.name for f in fields(ExperimentRecord)]


def _fmt_field(name: str, v: Any) -> str:
    return str(int(v)) if name in _INT_FIELDS else _g(float(v))


def write_records_csv(records: Sequence[ExperimentRecord], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([_fmt_field(k, getattr(r, k)) for k in RECORD_COLUMNS])


def read_records_csv(path: str | os.PathLike) -> list[ExperimentRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ExperimentRecord(**{k: int(row[k]) if k in _INT_FIELDS else float(row[k]) for k in RECORD_COLUMNS}) for row in rows]


def _svg(records: Sequence[ExperimentRecord], fit: GrowthFit | None) -> str:
    W, H, pad = 640, 420, 60
    xs = [math.log10(r.R) for r in records]
    ys = [math.log10(r.ratio) for r in records]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(x: float) -> float:
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y: float) -> float:
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(W), height=str(H), viewBox=f"0 0 {W} {H}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(W), height=str(H), fill="white")
    ET.SubElement(svg, "line", x1=str(pad), y1=str(H - pad), x2=str(W - pad), y2=str(H - pad), stroke="black")
    ET.SubElement(svg, "line", x1=str(pad), y1=str(pad), x2=str(pad), y2=str(H - pad), stroke="black")
    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    ET.SubElement(svg, "polyline", points=pts, fill="none", stroke="steelblue")
    for x, y in zip(xs, ys):
        ET.SubElement(svg, "circle", cx=f"{px(x):.2f}", cy=f"{py(y):.2f}", r="3", fill="steelblue")
    lab = ET.SubElement(svg, "text", x=str(W // 2), y=str(H - 15), attrib={"text-anchor": "middle"})
    lab.text = "log10 R"
    lab = ET.SubElement(svg, "text", x="15", y=str(H // 2), transform=f"rotate(-90 15 {H // 2})", attrib={"text-anchor": "middle"})
    lab.text = "log10 ratio"
    if fit is not None:
        note = ET.SubElement(svg, "text", x=str(pad + 10), y=str(pad - 20))
        note.text = f"fitted slope of log(l1/l2): {fit.slope:.4f} +/- {fit.stderr:.2g}"
    return ET.tostring(svg, encoding="unicode")


def emit_report(records: Sequence[ExperimentRecord], fmt: str, path: str | os.PathLike) -> Path:
    path = Path(path)
    if fmt == "csv":
        write_records_csv(records, path)
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump([asdict(r) for r in records], fh, indent=2)
            fh.write("\n")
    elif fmt == "svg":
        if not records:
            raise ValueError("svg needs at least one record")
        fit = fit_growth(records) if len({r.R for r in records}) >= 3 else None
        path.write_text(_svg(records, fit) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def write_manifest(out: Path, command: str, config: dict[str, Any], seeds: dict[str, Any], extra: dict[str, Any] | None = None) -> None:
    data = {
        "command": command,
        "version": __version__,
        "numpy": np.__version__,
        "config": config,
        "seeds": seeds,
        "threads": thread_count(),
    }
    if extra:
        data.update(extra)
    (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve_exponents(args: argparse.Namespace) -> int:
    sol = solve_exponents(args.n, Fraction(args.sigma))
    data = {
        "n": sol.n,
        "sigma": str(sol.sigma),
        "lambda": str(sol.lam),
        "kappa": str(sol.kappa),
        "s_star": str(sol.s_star),
        "checks": sol.check(),
    }
    print(json.dumps(data, indent=2))
    out = _out_dir(args)
    (out / "exponents.json").write_text(json.dumps(data, indent=2) + "\n")
    write_manifest(out, "solve-exponents", vars_clean(args), {})
    return 0


def cmd_gauss(args: argparse.Namespace) -> int:
    """Per-q summary of the FFT corpus against the closed form; --rows adds every (a, b, q)."""
    out = _out_dir(args)
    worst = 0.0
    summary = open(out / "gauss_summary.csv", "w", newline="")
    rows = open(out / "gauss.csv", "w", newline="") if args.rows else None
    with summary:
        ws = csv.writer(summary, lineterminator="\n")
        ws.writerow(["q", "pairs", "odd_q", "zero_case", "double_case", "max_deviation"])
        wr = csv.writer(rows, lineterminator="\n") if rows else None
        if wr:
            wr.writerow(["a", "b", "q", "re", "im", "magnitude", "case_tag"])
        for q in range(1, args.qmax + 1):
            counts = {tag: 0 for tag in ("odd_q", "zero_case", "double_case")}
            dev = 0.0
            for a in range(1, q + 1):
                if math.gcd(a, q) != 1:
                    continue
                vals = gauss_sums_all_b(a, q)
                for b in range(q):
                    ref = gauss_sum_closed(a, b, q)
                    v = complex(vals[b])
                    dev = max(dev, abs(abs(v) - ref.magnitude))
                    counts[ref.case_tag.value] += 1
                    if wr:
                        wr.writerow([a, b, q, _g(v.real), _g(v.imag), _g(ref.magnitude), ref.case_tag.value])
            worst = max(worst, dev)
            ws.writerow([q, sum(counts.values()), *counts.values(), _g(dev)])
    if rows:
        rows.close()
    print(f"max | |G| - closed form | = {worst:.3g}")
    write_manifest(out, "gauss", vars_clean(args), {}, {"max_deviation": worst})
    return 0


def cmd_weyl(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    trials = weyl_trials(args.trials, args.seed)
    with open(out / "weyl.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "q", "delta", "beta", "M", "N", "magnitude", "ratio"])
        for t in trials:
            w.writerow([t.a, t.q, _g(t.delta), _g(t.beta), t.M, t.N, _g(t.magnitude), _g(t.ratio)])
    worst = fit_weyl_constant(trials)
    res = fit_weyl_constant(resonant_trials()) if args.resonant else None
    print(f"max ratio over {len(trials)} trials: {worst:.6g}" + (f"; resonant max {res:.6g}" if res else ""))
    write_manifest(out, "weyl", vars_clean(args), {"seed": args.seed}, {"max_ratio": worst, "resonant_max": res})
    return 0


def cmd_dirichlet(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    rng = np.random.Generator(np.random.Philox(args.seed))
    Y = rng.random((args.points, args.m))
    q, a = dirichlet_batch(Y, args.Q)
    ok_all = True
    with open(out / "dirichlet.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"y{j}" for j in range(1, args.m + 1)] + ["q"] + [f"a{j}" for j in range(1, args.m + 1)] + ["certified"])
        for yrow, qq, arow in zip(Y, q, a):
            res = DirichletResult(int(qq), tuple(int(v) for v in arow), ())
            ok = dirichlet_certified(list(yrow), res, args.Q)
            ok_all &= ok
            w.writerow([_g(v) for v in yrow] + [int(qq)] + [int(v) for v in arow] + [str(ok).lower()])
    print(f"{args.points} points, all certified: {ok_all}")
    write_manifest(out, "dirichlet", vars_clean(args), {"seed": args.seed}, {"all_certified": ok_all})
    return 0 if ok_all else 1


def _params_for_Q(n: int, Q: float, constants: dict[str, float] | None = None):
    sol = solve_exponents(n)
    R = float(Q) ** (1 / float(sol.kappa))
    return packet_params(n, R, sol, constants, make_bump())


def cmd_omega(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    params = _params_for_Q(args.n, args.Q)
    mode = "monte_carlo" if args.mc else "exact_product"
    res = omega_measure(params, mode, args.samples, args.seed)
    write_measure_csv([(params.Q, params.n, res)], out / "omega.csv")
    print(f"|Omega| = {res.value:.10g} (+/- {res.ci_halfwidth:.3g}, {mode})")
    write_manifest(out, "omega", vars_clean(args), {"seed": args.seed}, {"note": res.note, "R": params.R})
    return 0


def cmd_propagate(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    bump = make_bump()
    params = packet_params(args.n, args.R, bump=bump)
    points = sample_eval_points(params, args.points, args.seed, args.offset_mode)
    with ThreadPoolExecutor(max_workers=thread_count(args.threads)) as ex:
        results = list(ex.map(lambda p: propagate(p, params, bump), points))
    with open(out / "points.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(point_header(params.n))
        for p, r in zip(points, results):
            w.writerow(point_row(p, params, r))
    rate = sum(r.passed for r in results) / len(results)
    print(f"pass rate {rate:.4f} over {len(results)} points")
    write_manifest(out, "propagate", vars_clean(args), {"seed": args.seed}, {"pass_rate": rate, "params": params.to_dict()})
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.threads:
        cfg.threads = args.threads
    out = _out_dir(args)
    log: list[str] = []
    t0 = time.perf_counter()
    records = run_sweep(cfg, log)
    for line in log:
        print(line)
    emit_report(records, "csv", out / "records.csv")
    emit_report(records, "json", out / "records.json")
    extra: dict[str, Any] = {"log": log, "wall_time": time.perf_counter() - t0}
    if records:
        emit_report(records, "svg", out / "ratio.svg")
    if len({r.R for r in records}) >= 3:
        fit = fit_growth(records)
        extra["fit"] = asdict(fit)
        print(f"slope {fit.slope:.6f} +/- {fit.stderr:.3g}")
    write_manifest(out, "sweep", asdict(cfg), {"seed": cfg.seed, "per_R": [r.seed for r in records]}, extra)
    return 0


def vars_clean(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k != "func"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="schrolab", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name: str, func, **kw) -> argparse.ArgumentParser:
        p = sub.add_parser(name, **kw)
        p.add_argument("--out", default=f"runs/{name}", help="run directory")
        p.set_defaults(func=func)
        return p

    p = add("solve-exponents", cmd_solve_exponents, help="exponents lambda, kappa, s*")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", default="1/2")
    p = add("gauss", cmd_gauss, help="Gauss-sum corpus")
    p.add_argument("--qmax", type=int, required=True)
    p.add_argument("--rows", action="store_true", help="write every (a, b, q) row")
    p = add("weyl", cmd_weyl, help="seeded Weyl-sum trials")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resonant", action="store_true", help="also report the resonant corpus maximum")
    p = add("dirichlet", cmd_dirichlet, help="simultaneous approximation on a seeded grid")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--Q", type=int, required=True)
    p.add_argument("--points", type=int, default=10**4)
    p.add_argument("--seed", type=int, default=0)
    p = add("omega", cmd_omega, help="measure of Omega")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--Q", type=float, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true")
    g.add_argument("--mc", action="store_true")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p = add("propagate", cmd_propagate, help="amplitudes on sampled points of Omega*")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--offset-mode", default="uniform", choices=["center", "uniform"])
    p.add_argument("--threads", type=int, default=None)
    p = add("sweep", cmd_sweep, help="R-sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=None)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except (ConstraintError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
