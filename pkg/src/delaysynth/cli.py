"""Batch front-end: analysis, synthesis, max-delay and validation pipelines with reports.

Every subcommand takes ``--config`` (TOML, see :mod:`delaysynth.config`) except
``reproduce``, which runs the bundled benchmark configs. Reports go to ``--out`` as
``report.csv``, ``report.json`` and ``table.txt``.

Exit codes: 0 success, 2 config error, 3 infeasible / no progress, 4 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bessel_legendre import analysis_problem_projected, analysis_problem_slack, certify, \
    max_delay_analysis
from .errors import (ConfigError, DelaySynthError, DimensionMismatch, InfeasibleAtH, NoProgress,
                     NotStabilizable, NotStableAtZero, SolverFailure)
from .lmi import SolverOptions
from .oracle import spectral_abscissa, spectral_max_delay
from .sdpa import export_conic
from .synthesis import path_follow, slack_for, sof_problem, sof_restarts, ssf_problem, structure_for

log = logging.getLogger("delaysynth")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4
VERDICTS = ("certified-at-h", "spectral-stable-at-h", "neither")

CSV_FIELDS = ("problem", "mode", "method", "N", "h_max", "K", "h_max_lmi", "h_max_spectral",
              "oracle_abscissa", "oracle_verdict", "solves", "mean_iterations", "error")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, DimensionMismatch)):
        return EXIT_CONFIG
    if isinstance(exc, SolverFailure):
        return EXIT_SOLVER
    if isinstance(exc, (InfeasibleAtH, NoProgress, NotStableAtZero, NotStabilizable)):
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


@dataclass(frozen=True)
class Task:
    config: cfgmod.ProblemConfig
    kind: str  # analyze | maxdelay | ssf | sof | fixed-eps
    N: int
    preset: str | None = None


def solver_options(cfg: cfgmod.ProblemConfig) -> SolverOptions:
    a = cfg.algorithm
    return SolverOptions(feas_tol=a.solver_tol, margin=a.delta)


def _gain_columns(cfg, N, A_d, opts) -> dict:
    """Independent delay bounds of a closed loop: LMI certificate and spectral oracle."""
    a = cfg.algorithm
    out = {"h_max_lmi": None, "h_max_spectral": None}
    try:
        out["h_max_lmi"] = max_delay_analysis(cfg.A, A_d, N, tol=a.analysis_tol, h_cap=a.h_cap, options=opts)
    except NotStableAtZero as exc:
        log.info("no certificate near h=0: %s", exc)
    try:
        out["h_max_spectral"] = spectral_max_delay(cfg.A, A_d, tol=a.spectral_tol, h_cap=a.h_cap)
    except NotStableAtZero:
        out["h_max_spectral"] = 0.0
    return out


def _synthesis_row(cfg, task, opts) -> dict:
    a = cfg.algorithm
    sys_ = cfg.system()
    kw = dict(h0=a.h0, dh0=a.dh0, dh_min=a.dh_min, l_max=a.l_max, h_cap=a.h_cap,
              cluster_tol=a.cluster_tol, options=opts)
    if task.kind == "sof":
        res = sof_restarts(sys_, task.N, restarts=a.restarts, seed=a.seed, K0=cfg.K0,
                           method=cfg.method, **kw)
    else:
        method = task.preset if task.kind == "fixed-eps" else cfg.method
        res = path_follow(sys_, task.N, K0=cfg.K0, mode="ssf", method=method, **kw)
    A_d = sys_.delayed_matrix(res.K)
    statuses = {}
    for r in res.trace:
        statuses[r.status] = statuses.get(r.status, 0) + 1
    row = {"h_max": res.h_achieved, "K": res.K.tolist(), "oracle_abscissa": res.abscissa,
           "oracle_verdict": "stable" if res.abscissa < 0 else "unstable",
           "solves": res.solves, "mean_iterations": res.mean_iterations, "statuses": statuses,
           "mismatch_trace": [None if not np.isfinite(m) else m for m in res.mismatch_trace],
           "conditioning": res.conditioning, "structure_gap": res.structure_gap,
           "method": res.method}
    row.update(_gain_columns(cfg, task.N, A_d, opts))
    return row


def _analysis_row(cfg, task, opts) -> dict:
    a = cfg.algorithm
    A_d = cfg.delayed_matrix(cfg.K0 if cfg.Ad is None else None)
    row = {"method": "projected", "K": None if cfg.K0 is None else np.asarray(cfg.K0).tolist()}
    if task.kind == "analyze" and cfg.h is not None:
        res = certify(cfg.A, A_d, task.N, cfg.h, opts)
        ab = spectral_abscissa(cfg.A, A_d, cfg.h).abscissa
        row.update({"h": cfg.h, "certified": res.feasible, "status": res.status,
                    "oracle_abscissa": ab, "oracle_verdict": "stable" if ab < 0 else "unstable",
                    "h_max": cfg.h if res.feasible else None, "mean_iterations": res.iterations,
                    "solves": 1})
        return row
    if task.kind == "analyze":
        h = max_delay_analysis(cfg.A, A_d, task.N, tol=a.analysis_tol, h_cap=a.h_cap, options=opts)
        row.update({"h_max": h, "h_max_lmi": h})
    else:
        row.update(_gain_columns(cfg, task.N, A_d, opts))
        row["h_max"] = row["h_max_lmi"]
    if row["h_max"] is not None:
        ab = spectral_abscissa(cfg.A, A_d, row["h_max"]).abscissa
        row.update({"oracle_abscissa": ab, "oracle_verdict": "stable" if ab < 0 else "unstable"})
    return row


def run_task(task: Task) -> dict:
    """Run one (kind, N, preset) pipeline; errors are captured in the row."""
    cfg = task.config
    opts = solver_options(cfg)
    base = {"problem": cfg.name, "mode": task.kind, "N": task.N, "preset": task.preset,
            "method": task.preset or cfg.method}
    try:
        if task.kind in ("ssf", "sof", "fixed-eps"):
            base.update(_synthesis_row(cfg, task, opts))
        else:
            base.update(_analysis_row(cfg, task, opts))
        base["error"] = None
        base["exit"] = EXIT_OK
        if task.kind == "analyze" and base.get("certified") is False:
            base["exit"] = EXIT_INFEASIBLE
    except DelaySynthError as exc:
        base["error"] = f"{type(exc).__name__}: {exc}"
        base["exit"] = exit_code_for(exc)
    return base


def tasks_for(cfg: cfgmod.ProblemConfig, kind: str | None = None) -> list:
    kind = kind or cfg.mode
    if kind == "fixed-eps":
        return [Task(cfg, "fixed-eps", N, p) for p in cfg.presets for N in cfg.N]
    return [Task(cfg, kind, N) for N in cfg.N]


@dataclass
class RunReport:
    rows: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        codes = [r["exit"] for r in self.rows if r["exit"] != EXIT_OK]
        return max(codes) if codes else EXIT_OK

    def iterations(self, problem: str | None = None) -> list:
        """Mean solver iterations per LMI solve along each synthesis path."""
        return [{"problem": r["problem"], "method": r["method"], "N": r["N"], "h_max": r.get("h_max"),
                 "mean_iterations": r.get("mean_iterations"), "solves": r.get("solves")}
                for r in self.rows if r["mode"] in ("ssf", "sof", "fixed-eps")
                and (problem is None or r["problem"] == problem)]

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "iterations": self.iterations()}, indent=2,
                          sort_keys=True, default=_json_default)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: json.dumps(r.get(k)) if k == "K" else _cell(r.get(k)) for k in CSV_FIELDS})
        return buf.getvalue()

    def table(self) -> str:
        out = []
        groups = {}
        for r in self.rows:
            groups.setdefault((r["problem"], r["mode"], r["method"]), []).append(r)
        for (problem, mode, method), rows in groups.items():
            if mode in ("analyze", "maxdelay"):
                out.append(f"{problem}  {mode}")
                out.append(f"{'':6}| {'h_max LMI':>11} | {'h_max spectral':>14} | verdict")
                for r in rows:
                    out.append(f"N = {r['N']:<2}| {_fmt(r.get('h_max_lmi', r.get('h_max'))):>11} | "
                               f"{_fmt(r.get('h_max_spectral')):>14} | {r.get('oracle_verdict') or r.get('error')}")
            else:
                label = {"ssf": "SSF", "sof": "SOF", "fixed-eps": "fixed eps"}[mode]
                out.append(f"{problem}  {label} ({method})")
                out.append(f"{'':6}| {'h_max':>7} | {'K':<34} | {'LMI':>7} | {'spectral':>8}")
                for r in rows:
                    if r.get("error"):
                        out.append(f"N = {r['N']:<2}| {r['error']}")
                        continue
                    out.append(f"N = {r['N']:<2}| {_fmt(r['h_max']):>7} | {_fmt_gain(r['K']):<34} | "
                               f"{_fmt(r.get('h_max_lmi')):>7} | {_fmt(r.get('h_max_spectral')):>8}")
            out.append("")
        its = [r for r in self.iterations() if r["mean_iterations"] is not None]
        if its:
            out.append("Solver iterations per LMI solve (mean over the delay path)")
            out.append(f"{'problem':<10} {'method':<8} {'N':>2} | {'h_max':>7} | {'#It.':>6} | {'solves':>6}")
            for r in its:
                out.append(f"{r['problem']:<10} {r['method']:<8} {r['N']:>2} | {_fmt(r['h_max']):>7} | "
                           f"{r['mean_iterations']:>6.1f} | {r['solves'] or 0:>6}")
            out.append("")
        return "\n".join(out)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json() + "\n")
        (out / "report.csv").write_text(self.to_csv())
        (out / "table.txt").write_text(self.table())
        return out


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _fmt(v, digits=3):
    return "-" if v is None else f"{v:.{digits}f}"


def _fmt_gain(K):
    if K is None:
        return "-"
    return "[" + "; ".join(" ".join(f"{x:.4g}" for x in row) for row in K) + "]"


def run(cfg_or_tasks, jobs: int = 1) -> RunReport:
    """Run a config (or an explicit task list) and assemble the report in task order."""
    tasks = tasks_for(cfg_or_tasks) if isinstance(cfg_or_tasks, cfgmod.ProblemConfig) else list(cfg_or_tasks)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_task, tasks))
    else:
        rows = [run_task(t) for t in tasks]
    return RunReport(rows)


def reproduce_tasks(names=("example1", "example2"), seed: int = 0, solver_tol: float | None = None) -> list:
    tasks = []
    for name in names:
        cfg = _apply_overrides(cfgmod.bundled(name), seed, solver_tol)
        tasks += tasks_for(cfg, "ssf")
        if name == "example1":
            tasks += tasks_for(cfg, "fixed-eps")
    return tasks


# ---------------------------------------------------------------- validation


def load_gain(path) -> tuple:
    """Gain file (JSON or TOML) holding ``K`` as a nested array and optionally ``h``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read gain file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = cfgmod.tomllib.loads(text)
        except cfgmod.tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"gain file is neither JSON nor TOML: {exc}") from exc
    if isinstance(data, list):
        data = {"K": data}
    if "K" not in data:
        raise ConfigError("gain file has no K", field="K")
    try:
        K = np.atleast_2d(np.array(data["K"], dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError("K is not a numeric matrix", field="K") from exc
    return K, data.get("h")


def validate(cfg: cfgmod.ProblemConfig, K, h: float, N: int = 1) -> dict:
    """Independent verdict on a gain: LMI certificate at ``h`` and spectral stability at ``h``."""
    sys_ = cfg.system()
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (sys_.m, sys_.p):
        raise DimensionMismatch(f"gain is {K.shape[0]}x{K.shape[1]}, plant needs {sys_.m}x{sys_.p}")
    A_d = sys_.delayed_matrix(K)
    certified = certify(sys_.A, A_d, N, h, solver_options(cfg)).feasible
    ab = spectral_abscissa(sys_.A, A_d, h).abscissa
    verdict = VERDICTS[0] if certified else VERDICTS[1] if ab < 0 else VERDICTS[2]
    return {"verdict": verdict, "certified": bool(certified), "spectral_stable": bool(ab < 0),
            "abscissa": ab, "h": h, "N": N, "K": K.tolist()}


# ---------------------------------------------------------------- export


def build_export(cfg: cfgmod.ProblemConfig, N: int, h: float, problem: str = "analysis", form: str = "projected"):
    if problem == "analysis":
        A_d = cfg.delayed_matrix(cfg.K0 if cfg.Ad is None else None)
        build = analysis_problem_projected if form == "projected" else analysis_problem_slack
        return build(cfg.A, A_d, N, h, margin=cfg.algorithm.delta)
    sys_ = cfg.system()
    if cfg.K0 is None:
        raise ConfigError("the synthesis LMI is built around a gain; set K0", field="K0")
    jordan = structure_for(sys_, cfg.method, cfg.algorithm.cluster_tol)
    slack = slack_for(sys_, N, cfg.K0, jordan, cfg.method)
    build = ssf_problem if problem == "ssf" else sof_problem
    prob = build(sys_, N, h, slack.F, jordan)
    prob.margin = cfg.algorithm.delta
    return prob


# ---------------------------------------------------------------- argparse


def _apply_overrides(cfg, seed=None, solver_tol=None):
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if solver_tol is not None:
        changes["solver_tol"] = solver_tol
    return cfg.with_algorithm(**changes) if changes else cfg


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="problem definition (TOML)")
    common.add_argument("--out", type=Path, help="directory for report files")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--solver-tol", type=float, default=None, help="feasibility tolerance on the re-check")
    common.add_argument("--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="delaysynth", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="certify A_d at h, or the certified max delay")
    sub.add_parser("synth-ssf", parents=[common], help="state feedback synthesis by delay path-following")
    sub.add_parser("synth-sof", parents=[common], help="static output feedback synthesis")
    sub.add_parser("maxdelay", parents=[common], help="LMI and spectral max delay of A_d")
    v = sub.add_parser("validate", parents=[common], help="verdict on a gain file")
    v.add_argument("--gain", type=Path, required=True)
    v.add_argument("--h", type=float, default=None)
    v.add_argument("--N", type=int, default=None)
    e = sub.add_parser("export-sdpa", parents=[common], help="write one LMI in SDPA sparse format")
    e.add_argument("--N", type=int, default=None)
    e.add_argument("--h", type=float, default=None)
    e.add_argument("--problem", choices=("analysis", "ssf", "sof"), default="analysis")
    e.add_argument("--form", choices=("projected", "slack"), default="projected")
    r = sub.add_parser("reproduce", parents=[common], help="run the bundled benchmark configs")
    r.add_argument("--only", nargs="+", default=None, help="subset of bundled configs")
    return p


def _need_config(args):
    if args.config is None:
        raise ConfigError("this subcommand needs --config", field="--config")
    return _apply_overrides(cfgmod.load(args.config), args.seed, args.solver_tol)


def _emit(report: RunReport, out):
    if out is not None:
        report.write(out)
    print(report.table())


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        logging.getLogger("cvxpy").setLevel(logging.ERROR)
    try:
        return _dispatch(args)
    except DelaySynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


def _dispatch(args) -> int:
    if args.jobs < 1:
        raise ConfigError("must be >= 1", field="--jobs")
    cmd = args.command
    if cmd == "reproduce":
        names = args.only or cfgmod.bundled_names()
        report = run(reproduce_tasks(names, args.seed, args.solver_tol), args.jobs)
        _emit(report, args.out)
        return report.exit_code

    cfg = _need_config(args)
    if cmd in ("analyze", "maxdelay"):
        report = run(tasks_for(cfg, cmd), args.jobs)
    elif cmd == "synth-ssf":
        report = run(tasks_for(cfg, "fixed-eps" if cfg.mode == "fixed-eps" else "ssf"), args.jobs)
    elif cmd == "synth-sof":
        report = run(tasks_for(cfg, "sof"), args.jobs)
    elif cmd == "validate":
        K, h_file = load_gain(args.gain)
        h = args.h if args.h is not None else h_file if h_file is not None else cfg.h
        if h is None:
            raise ConfigError("no delay given (use --h, the gain file or the config)", field="h")
        result = validate(cfg, K, float(h), args.N if args.N is not None else cfg.N[0])
        text = json.dumps(result, indent=2, sort_keys=True, default=_json_default)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "validate.json").write_text(text + "\n")
        print(text)
        return EXIT_OK
    elif cmd == "export-sdpa":
        N = args.N if args.N is not None else cfg.N[0]
        h = args.h if args.h is not None else cfg.h
        if h is None:
            raise ConfigError("no delay given (use --h or the config)", field="h")
        text = export_conic(build_export(cfg, N, h, args.problem, args.form),
                            f"{cfg.name} {args.problem} N={N} h={h:g}")
        if args.out is None:
            sys.stdout.write(text)
        else:
            args.out.mkdir(parents=True, exist_ok=True)
            path = args.out / f"{cfg.name}_{args.problem}_N{N}_h{h:g}.dat-s"
            path.write_text(text)
            print(path)
        return EXIT_OK
    else:  # pragma: no cover - argparse rejects unknown commands
        raise ConfigError(f"unknown command {cmd}")
    _emit(report, args.out)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
