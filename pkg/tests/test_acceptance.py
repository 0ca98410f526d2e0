"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the "acceptance criteria" section at the end of
the pytest run. Run alone with ``pytest tests/test_acceptance.py``.
"""
import os
import pathlib
import time
import textwrap

import numpy as np
import pytest

from rsrm.harness.config import load_config, parse_config
from rsrm.harness.io import read_trace, trace_filename
from rsrm.harness.runner import audit_experiment, read_summary, run_experiment
from rsrm.manifolds import SPD, Grassmann, Stiefel
from rsrm.optimizers import RunConfig, Schedule, default_schedule, expected_sfo, run_method
from rsrm.problems import Dataset, RCProblem, make_problem, synth_ica, synth_pca, synth_spd
from rsrm.verification import (
    DiagnosticConfig,
    estimate_ltilde,
    fd_gradient_check,
    full_batch_exactness_check,
    lemma1_monte_carlo,
    reduction_equivalence_check,
    retraction_order_check,
    transport_isometry_check,
    unbiasedness_check,
)

ROOT = pathlib.Path(__file__).resolve().parents[1]
SCALED = ROOT / "configs" / "syn1_scaled.cfg"


def test_gradient_correctness(acceptance):
    start = time.perf_counter()
    problems = [
        make_problem(synth_pca(500, 50, 0, r=5)),
        make_problem(synth_ica(100, 10, 0)),
        make_problem(synth_spd(50, 5, 20.0, 0)),
    ]
    worst, fails = 0.0, []
    for p in problems:
        rng = np.random.default_rng(100)
        for k in range(20):
            rep = fd_gradient_check(p, p.manifold.rand_point(rng), seed=k)
            worst = max(worst, rep.statistic)
            if not rep.passed:
                fails.append(f"{p.kind}[{k}]")
    sec = time.perf_counter() - start
    ok = acceptance(1, not fails and sec < 30, f"fd gradient: worst rel err {worst:.2e} (< 1e-5), {sec:.1f} s (< 30 s) {fails or ''}")
    assert ok


def test_manifold_axioms(acceptance):
    start = time.perf_counter()
    notes, ok = [], True
    for m in (Grassmann(10, 3), Stiefel(8, 3), SPD(4)):
        rng = np.random.default_rng(5)
        drift = max(m.ambient_distance(m.retract(x, m.zero_vector(x)), x) for x in (m.rand_point(rng) for _ in range(10)))
        order = retraction_order_check(m, samples=5)
        trans = transport_isometry_check(m, samples=50)
        ok &= drift <= 1e-12 and order.passed and trans.passed
        notes.append(f"{m.tag}: R(x,0) {drift:.0e}, slope {order.statistic:.3f}, {trans.name.split('[')[0]} {trans.statistic:.2e}")
    sec = time.perf_counter() - start
    ok &= sec < 60
    assert acceptance(2, ok, "; ".join(notes) + f"; {sec:.1f} s")


def test_estimator_reductions(acceptance):
    p = make_problem(synth_pca(300, 10, 0, r=3))
    red = reduction_equivalence_check(p, iters=100)
    exact = full_batch_exactness_check(p, iters=200)
    # trace-level form of the rho = 1 reduction: identical objective columns
    x1 = p.manifold.rand_point(np.random.default_rng(0))
    cfg = RunConfig(batch_size=5, init_batch_size=5, max_iters=100, log_every=1, schedule=Schedule(0.1, 1.0, "experiment", "constant"))
    a = run_method("rsrm", p, x1, cfg, rng=np.random.default_rng(1))
    b = run_method("rsgd", p, x1, cfg, rng=np.random.default_rng(1))
    cols = lambda res: [(r.t, r.f, r.gap, r.gnorm) for r in res.trace]
    same_trace = cols(a) == cols(b) and np.array_equal(a.x_final, b.x_final)
    ok = red.passed and exact.passed and same_trace
    assert acceptance(3, ok, f"{red.details}; rho=1 traces identical: {same_trace}; full-batch max dev {exact.statistic:.1e} (<= 1e-12)")


def test_pca_reference_optimum(acceptance):
    start = time.perf_counter()
    p = make_problem(synth_pca(2000, 50, 0, r=5))
    p.reference_optimum()
    cfg = RunConfig(batch_size=1, init_batch_size=1, max_iters=500, full_batch=True, log_every=500,
                    schedule=Schedule(0.5, 1.0, "constant", "constant"))
    gaps = []
    for s in range(5):
        x1 = p.manifold.rand_point(np.random.default_rng([4, s]))
        gaps.append(run_method("rsgd", p, x1, cfg, rng=np.random.default_rng(s)).trace[-1].gap)
    sec = time.perf_counter() - start
    ok = max(gaps) < 1e-6 and sec < 120
    assert acceptance(4, ok, f"full-batch descent, 5 starts: worst gap {max(gaps):.1e} (< 1e-6), {sec:.1f} s (< 120 s)")


def _geometric_mean_case(d):
    if d == 1:
        a, b = np.array([[2.0]]), np.array([[8.0]])
        return a, b, np.array([[4.0]])
    q = np.linalg.qr(np.random.default_rng(3).standard_normal((d, d)))[0]
    wa, wb = np.array([1.0, 4.0, 9.0]), np.array([4.0, 1.0, 0.25])
    mk = lambda w: (q * w) @ q.T
    return mk(wa), mk(wb), mk(np.sqrt(wa * wb))


def test_rc_closed_form(acceptance):
    notes, ok = [], True
    for d in (1, 3):
        a, b, mean = _geometric_mean_case(d)
        p = RCProblem(Dataset("rc", np.stack([a, b])))
        g = p.manifold.norm(mean, p.full_gradient(mean))
        cfg = RunConfig(batch_size=1, init_batch_size=1, max_iters=300, full_batch=True, log_every=300,
                        track_gap=False, schedule=default_schedule("rsrm", 0.5))
        res = run_method("rsrm", p, p.manifold.rand_point(np.random.default_rng(d)), cfg, rng=np.random.default_rng(0))
        dist = p.manifold.dist(res.x_final, mean)
        ok &= g < 1e-10 and dist < 1e-4
        notes.append(f"{d}x{d}: oracle grad {g:.0e}, AIRM dist {dist:.1e}")
    assert acceptance(5, ok, "; ".join(notes) + " (grad < 1e-10, dist < 1e-4)")


@pytest.fixture(scope="module")
def scaled_syn1(tmp_path_factory):
    cfg = load_config(SCALED)
    start = time.perf_counter()
    res = run_experiment(cfg, out=str(tmp_path_factory.mktemp("syn1_scaled")))
    return cfg, res, time.perf_counter() - start


def _final_medians(res):
    return {r["method"]: float(r["gap"]) for r in read_summary(res.summary_path) if r["kind"] == "final" and r["selected"] == "1"}


def test_convergence_ordering(acceptance, scaled_syn1):
    cfg, res, sec = scaled_syn1
    med = _final_medians(res)
    r_sgd, r_mom = med["rsrm"] / med["rsgd"], med["rsrm"] / med["momentum"]
    issues = audit_experiment(res.out)
    ok = r_sgd <= 0.5 and r_mom <= 0.5 and sec < 600 and not issues and not res.failures
    sel = ", ".join(f"{k} eta0={v:g}" for k, v in res.selected.items())
    assert acceptance(
        6, ok, f"median gap ratio RSRM/RSGD {r_sgd:.3f}, RSRM/momentum {r_mom:.3f} (<= 0.5); {sel}; {sec:.0f} s (< 600 s)"
    ), issues


def test_estimation_error_decay(acceptance, scaled_syn1):
    cfg, res, _ = scaled_syn1
    tdir = os.path.join(res.out, "traces")

    def tail_mean(label, seed):
        rows = read_trace(os.path.join(tdir, trace_filename(label, res.selected[label], seed)))
        vals = [r["est_err"] for r in rows[len(rows) // 2:] if r["est_err"] is not None]
        return float(np.mean(vals))

    wins = sum(tail_mean("rsrm", s) < tail_mean("rsgd", s) for s in cfg.seeds)
    assert acceptance(7, wins >= 8, f"RSRM est_err below RSGD deviation in {wins}/{len(cfg.seeds)} seeds (>= 8)")


def test_error_bound_monte_carlo(acceptance):
    start = time.perf_counter()
    p = make_problem(synth_pca(30, 4, 0, r=2))
    m = p.manifold
    rng = np.random.default_rng(8)
    results = []
    for k in range(10):
        x = m.rand_point(rng)
        d = p.full_gradient(x) + 0.3 * m.rand_tangent(x, rng)
        eta, rho, b = float(rng.uniform(0.01, 0.3)), float(rng.uniform(0, 1)), int(rng.integers(1, 6))
        y = m.retract(x, -eta * d)
        sigma2 = unbiasedness_check(p, y, trials=10_000, seed=k).sigma2
        dc = DiagnosticConfig(sigma2=sigma2, Ltilde=estimate_ltilde(p, x, -eta * d), trials=10_000)
        results.append(lemma1_monte_carlo(p, x, d, eta, rho, b, dc, seed=100 + k, x_next=y))
    sec = time.perf_counter() - start
    ok = all(r.passed for r in results) and sec < 120
    tight = max(r.statistic / r.tolerance for r in results)
    statuses = [r.status for r in results]
    assert acceptance(8, ok, f"{statuses.count('pass')} pass, {statuses.count('inconclusive')} within 3 SE, "
                             f"{statuses.count('fail')} fail; max LHS/bound {tight:.3f}; {sec:.1f} s (< 120 s)")


DET = textwrap.dedent(
    """\
    [experiment]
    seeds = 0 1
    log_every = 10
    timing = false

    [problem]
    kind = pca
    n = 200
    d = 10
    r = 3

    [method.rsrm]
    eta0 = 0.1 0.05
    max_iters = 100

    [method.rsgd]
    eta0 = 0.1
    max_iters = 100
    """
)


def _tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            path = os.path.join(dirpath, f)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_determinism_and_accounting(acceptance, tmp_path):
    cfg = parse_config(DET)
    a = run_experiment(cfg, out=str(tmp_path / "a"), threads=1)
    b = run_experiment(cfg, out=str(tmp_path / "b"), threads=2)
    identical = _tree(a.out) == _tree(b.out)

    p = make_problem(synth_pca(200, 10, 0, r=3))
    x1 = p.manifold.rand_point(np.random.default_rng(0))
    rc = RunConfig(batch_size=5, init_batch_size=100, max_iters=100, log_every=100, epoch_length=9, outer_batch=50)
    closed = expected_sfo("rsrm", rc) == 1100
    observed = {}
    for method in ("rsrm", "rsgd", "momentum", "rsrg"):
        observed[method] = run_method(method, p, x1, rc, rng=np.random.default_rng(1)).sfo
    # rsrg: 10 epochs of (1 outer batch + 9 inner steps at 2b)
    expect = {"rsrm": 1100, "rsgd": 500, "momentum": 500, "rsrg": 10 * 50 + 2 * 5 * 90}
    ok = identical and closed and observed == expect
    assert acceptance(9, ok, f"rerun trees byte-identical: {identical}; SFO totals {observed} (expected {expect})")


def test_rate_sanity_report(acceptance):
    p = make_problem(synth_pca(2000, 50, 0, r=5))
    T = 20_000
    cfg = RunConfig(batch_size=5, init_batch_size=100, max_iters=T, log_every=50, track_gap=False,
                    schedule=default_schedule("rsrm", 0.1))
    res = run_method("rsrm", p, p.manifold.rand_point(np.random.default_rng(1)), cfg, rng=np.random.default_rng(0))
    t = np.array([r.t for r in res.trace], dtype=float)
    g2 = np.array([r.gnorm ** 2 for r in res.trace])
    # moving average of log ||grad||^2 over 11 logged points, fit on the last decade
    w = 11
    smooth = np.convolve(np.log(g2), np.ones(w) / w, mode="valid")
    tc = t[w // 2: len(t) - w // 2]
    keep = tc >= T / 10
    slope = float(np.polyfit(np.log(tc[keep]), smooth[keep], 1)[0])
    acceptance(10, slope <= -0.5, f"log-log slope of smoothed ||grad F||^2 over t in [{T // 10}, {T}]: {slope:.3f} "
                                  f"(target <= -0.5; {'consistent' if slope <= -0.5 else 'not consistent'}; not gating)",
               gating=False)
