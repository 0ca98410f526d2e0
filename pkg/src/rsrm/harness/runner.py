"""Multi-method, multi-seed experiment execution and summaries.

Every (method, eta0, seed) triple is one independent run. Runs for the same
seed start from the same point. Each run draws its batches from its own
generator, seeded from ``(master_seed, method index, eta0 index, seed
index)``, so the output does not depend on the number of workers or on the
order in which runs finish.

Output directory layout::

    <out>/config.cfg                       copy of the config text
    <out>/traces/<label>__eta<eta0>__seed<seed>.jsonl
    <out>/summary.csv
"""
import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List

import numpy as np

from ..exceptions import InvalidConfig
from ..optimizers import expected_sfo, iters_for_budget, run_method
from ..problems import make_problem, synth_ica, synth_pca, synth_spd
from .io import ingest_matrices, parse_trace_filename, read_trace, trace_filename, write_trace

__all__ = [
    "build_dataset",
    "build_problem",
    "initial_point",
    "run_rng",
    "plan_runs",
    "run_experiment",
    "audit_experiment",
    "select_best",
    "resolve_threads",
    "SUMMARY_COLUMNS",
    "ExperimentResult",
]

SUMMARY_COLUMNS = ("method", "algorithm", "eta0", "selected", "kind", "key", "sfo", "gap", "q25", "q75", "n_ok", "note")


def build_dataset(spec, base_dir="."):
    if spec.file is not None:
        path = spec.file if os.path.isabs(spec.file) else os.path.join(base_dir, spec.file)
        return ingest_matrices(path, spec.kind)
    if spec.kind == "pca":
        return synth_pca(spec.n, spec.d, spec.seed, r=spec.r)
    if spec.kind == "ica":
        return synth_ica(spec.n, spec.d, spec.seed)
    return synth_spd(spec.n, spec.d, spec.cond, spec.seed)


def build_problem(spec, base_dir="."):
    data = build_dataset(spec, base_dir)
    r = spec.r if spec.r is not None else data.r
    if spec.kind == "pca" and r is None:
        raise InvalidConfig("pca needs a rank r (config or file header)")
    if data.kind == "ica":
        return make_problem(data, r=r, restarts=spec.restarts, seed=spec.seed)
    return make_problem(data, r=r)


def initial_point(problem, master_seed, seed):
    """Starting point shared by every method for ``seed``."""
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0, seed)))
    return problem.manifold.rand_point(rng)


def run_rng(master_seed, method_index, eta_index, seed_index):
    ss = np.random.SeedSequence(master_seed, spawn_key=(1, method_index, eta_index, seed_index))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class _Task:
    mi: int
    ei: int
    si: int
    label: str
    algorithm: str
    eta0: float
    seed: int
    run: object
    path: str


def plan_runs(cfg, n, trace_dir):
    """One task per (method, eta0, seed), in a fixed order."""
    tasks = []
    for mi, spec in enumerate(cfg.methods):
        for ei, eta in enumerate(spec.etas):
            rc = replace(spec.run, log_every=cfg.log_every, schedule=spec.schedule(eta))
            if spec.sfo_budget is not None:
                rc = replace(rc, max_iters=iters_for_budget(spec.algorithm, rc, spec.sfo_budget, n))
            for si, seed in enumerate(cfg.seeds):
                path = os.path.join(trace_dir, trace_filename(spec.label, eta, seed))
                tasks.append(_Task(mi, ei, si, spec.label, spec.algorithm, eta, seed, replace(rc, seed=seed), path))
    return tasks


# per-process state; set once per worker instead of pickling per task
_STATE = {}


def _init_worker(problem, starts, master_seed, timing, limit_threads):
    _STATE.update(problem=problem, starts=starts, master=master_seed, timing=timing)
    if limit_threads:
        from threadpoolctl import threadpool_limits

        _STATE["limits"] = threadpool_limits(1)


def _execute(task):
    st = _STATE
    rng = run_rng(st["master"], task.mi, task.ei, task.si)
    try:
        res = run_method(task.algorithm, st["problem"], st["starts"][task.seed], task.run, rng=rng)
    except Exception as exc:  # recorded in the summary; other runs continue
        return task, None, f"failed: {type(exc).__name__}: {exc}"
    write_trace(task.path, res.trace, timing=st["timing"])
    rows = [(r.sfo, r.gap) for r in res.trace]
    return task, rows, res.status


def resolve_threads(requested=None, cfg=None):
    """Worker count: explicit request, config, ``RSRM_THREADS``, CPU count."""
    for val in (requested, getattr(cfg, "threads", None), os.environ.get("RSRM_THREADS")):
        if val is not None and str(val).strip():
            n = int(val)
            if n < 1:
                raise InvalidConfig(f"thread count must be >= 1, got {n}")
            return n
    return os.cpu_count() or 1


@dataclass
class ExperimentResult:
    out: str
    summary_path: str
    trace_paths: List[str]
    selected: Dict[str, float]
    failures: List[str] = field(default_factory=list)
    checkpoints: tuple = ()


def _checkpoints(cfg, tasks, n):
    if cfg.checkpoints:
        return tuple(sorted(cfg.checkpoints))
    # default: quarter, half and full budget of the cheapest method
    total = min(expected_sfo(t.algorithm, t.run, n) for t in tasks)
    return (total / 4, total / 2, float(total))


def run_experiment(cfg, out=None, threads=None, base_dir=".", audit=False):
    """Execute every run of ``cfg`` and write traces plus ``summary.csv``.

    Returns an :class:`ExperimentResult`. With ``audit=True`` the summary is
    re-derived from the trace files afterwards and any mismatch raises
    ``RuntimeError``.
    """
    out = out or cfg.out
    trace_dir = os.path.join(out, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    with open(os.path.join(out, "config.cfg"), "w", encoding="utf-8") as fh:
        fh.write(cfg.text)

    problem = build_problem(cfg.problem, base_dir)
    problem.reference_optimum()  # computed once, before workers fork
    starts = {seed: initial_point(problem, cfg.master_seed, seed) for seed in cfg.seeds}
    tasks = plan_runs(cfg, problem.n, trace_dir)
    checkpoints = _checkpoints(cfg, tasks, problem.n)

    workers = min(resolve_threads(threads, cfg), len(tasks))
    init = (problem, starts, cfg.master_seed, cfg.timing, workers > 1)
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=init) as pool:
            results = list(pool.map(_execute, tasks))
    else:
        _init_worker(*init)
        results = [_execute(t) for t in tasks]

    rows, selected = _summarize(cfg, results, checkpoints)
    path = os.path.join(out, "summary.csv")
    _write_summary(path, rows)
    failures = [f"{t.label} eta0={t.eta0!r} seed={t.seed}: {note}" for t, tr, note in results if tr is None]
    result = ExperimentResult(
        out=out,
        summary_path=path,
        trace_paths=[t.path for t, tr, _ in results if tr is not None],
        selected=selected,
        failures=failures,
        checkpoints=checkpoints,
    )
    if audit:
        problems = audit_experiment(out)
        if problems:
            raise RuntimeError("summary audit failed: " + "; ".join(problems))
    return result


def _gap_at(rows, sfo):
    """Gap of the last logged row whose SFO count does not exceed ``sfo``."""
    best = rows[0][1]
    for s, g in rows:
        if s > sfo:
            break
        best = g
    return best


def _stats(values):
    """25/50/75 percentiles where failed runs count as +inf."""
    with np.errstate(invalid="ignore"):
        q = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    q[np.isnan(q)] = np.inf  # inf - inf inside the interpolation
    return [float(v) for v in q]


def select_best(medians):
    """Pick the eta0 with the smallest median gap; ties go to the smaller eta0.

    ``medians`` maps eta0 -> median final gap.
    """
    return min(medians, key=lambda eta: (medians[eta], eta))


def _summarize(cfg, results, checkpoints):
    groups = {}
    for task, trace, note in results:
        groups.setdefault((task.mi, task.ei), []).append((task, trace, note))
    rows, selected = [], {}
    for mi, spec in enumerate(cfg.methods):
        medians = {}
        block = []
        for ei, eta in enumerate(spec.etas):
            runs = sorted(groups[(mi, ei)], key=lambda r: r[0].si)
            ok = [tr for _, tr, _ in runs if tr is not None]
            finals = [tr[-1][1] if tr is not None else np.inf for _, tr, _ in runs]
            for task, tr, note in runs:
                block.append([spec.label, spec.algorithm, eta, None, "seed", task.seed,
                              tr[-1][0] if tr else "", finals[task.si] if tr else np.inf, "", "", int(tr is not None), note])
            for c in checkpoints:
                vals = [_gap_at(tr, c) if tr is not None else np.inf for _, tr, _ in runs]
                q25, med, q75 = _stats(vals)
                block.append([spec.label, spec.algorithm, eta, None, "checkpoint", c, c, med, q25, q75, len(ok), ""])
            q25, med, q75 = _stats(finals)
            medians[eta] = med
            final_sfo = max((tr[-1][0] for tr in ok), default="")
            block.append([spec.label, spec.algorithm, eta, None, "final", "final", final_sfo, med, q25, q75, len(ok), ""])
        best = select_best(medians)
        selected[spec.label] = best
        for row in block:
            row[3] = int(row[2] == best)
        rows.extend(block)
    return rows, selected


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _write_summary(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_summary(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def audit_experiment(out):
    """Recompute every summary value from the trace files.

    Returns a list of human-readable discrepancies (empty when consistent).
    Also checks that ``t`` and ``sfo`` strictly increase inside each trace.
    """
    issues = []
    summary = read_summary(os.path.join(out, "summary.csv"))
    trace_dir = os.path.join(out, "traces")
    traces = {}
    for name in sorted(os.listdir(trace_dir)):
        rows = read_trace(os.path.join(trace_dir, name))
        label, eta, seed = parse_trace_filename(name)
        for a, b in zip(rows, rows[1:]):
            if not (b["t"] > a["t"] and b["sfo"] > a["sfo"]):
                issues.append(f"{name}: t/sfo not strictly increasing at t={b['t']}")
                break
        traces[(label, eta, seed)] = [(r["sfo"], r["gap"]) for r in rows]

    seeds = {}
    for rec in summary:
        if rec["kind"] == "seed":
            seeds.setdefault((rec["method"], float(rec["eta0"])), []).append(int(rec["key"]))
    medians = {}
    for rec in summary:
        key = (rec["method"], float(rec["eta0"]))
        runs = [traces.get((key[0], key[1], s)) for s in seeds.get(key, [])]
        where = f"{rec['method']} eta0={rec['eta0']} {rec['kind']} {rec['key']}"
        if rec["kind"] == "seed":
            tr = traces.get((key[0], key[1], int(rec["key"])))
            if tr is None:
                if rec["n_ok"] != "0":
                    issues.append(f"{where}: trace file missing")
                continue
            expect = {"sfo": str(tr[-1][0]), "gap": repr(float(tr[-1][1]))}
        else:
            if rec["kind"] == "checkpoint":
                vals = [_gap_at(tr, float(rec["key"])) if tr else np.inf for tr in runs]
            else:
                vals = [tr[-1][1] if tr else np.inf for tr in runs]
            q25, med, q75 = _stats(vals)
            if rec["kind"] == "final":
                medians.setdefault(key[0], {})[key[1]] = med
            expect = {"gap": repr(med), "q25": repr(q25), "q75": repr(q75), "n_ok": str(sum(tr is not None for tr in runs))}
        for col, val in expect.items():
            if rec[col] != val:
                issues.append(f"{where}: {col} is {rec[col]} but traces give {val}")
    for rec in summary:
        if rec["kind"] == "final":
            best = select_best(medians[rec["method"]])
            if (rec["selected"] == "1") != (float(rec["eta0"]) == best):
                issues.append(f"{rec['method']} eta0={rec['eta0']}: selection flag inconsistent")
    return issues
