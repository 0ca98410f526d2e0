"""Executable checks of gradients, manifold axioms and estimator identities.

Each check returns a :class:`CheckReport` instead of raising, so a suite can
run to completion and report every failure. All checks are deterministic
given their ``seed``.
"""
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .exceptions import InvalidConfig
from .manifolds import SPD, Euclidean, Grassmann, Manifold, Stiefel
from .optimizers import (
    RunConfig,
    Schedule,
    rsrm_update,
    run_rsgd,
    run_rsrg,
    run_rsrm,
)
from .problems import Problem, ReferenceOptimum, make_problem, synth_ica, synth_pca, synth_spd

__all__ = [
    "CheckReport",
    "DiagnosticConfig",
    "FlatQuadratic",
    "fd_gradient_check",
    "retraction_order_check",
    "transport_isometry_check",
    "unbiasedness_check",
    "lemma1_monte_carlo",
    "lemma1_rhs",
    "estimate_ltilde",
    "reduction_equivalence_check",
    "full_batch_exactness_check",
    "default_problem",
    "run_suite",
    "SUITES",
]


@dataclass
class CheckReport:
    name: str
    passed: bool
    statistic: float
    tolerance: float
    details: str = ""
    #: ``pass``, ``fail`` or ``inconclusive`` (passed, but only within the
    #: Monte-Carlo confidence slack).
    status: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.passed else "fail"
        if not self.passed and not self.details:
            self.details = f"statistic {self.statistic:.3e} exceeds tolerance {self.tolerance:.3e}"

    def as_dict(self):
        return asdict(self)

    def __str__(self):
        return (
            f"[{self.status.upper():>12}] {self.name}: {self.statistic:.3e} "
            f"(tol {self.tolerance:.1e}) {self.details}"
        ).rstrip()


@dataclass(frozen=True)
class DiagnosticConfig:
    """Constants of the convergence analysis, supplied by the user.

    ``sigma2`` bounds the stochastic-gradient variance, ``L`` is the
    retraction-smoothness constant, ``Ltilde`` the mean-squared retraction
    Lipschitz constant and ``Delta`` the initial suboptimality.
    """

    sigma2: float = 1.0
    L: float = 1.0
    Ltilde: float = 1.0
    Delta: float = 1.0
    trials: int = 1000

    def __post_init__(self):
        if min(self.sigma2, self.L, self.Ltilde, self.Delta) < 0:
            raise InvalidConfig("diagnostic constants must be nonnegative")
        if self.trials < 100:
            raise InvalidConfig("need at least 100 Monte-Carlo trials")


class FlatQuadratic(Problem):
    """``f_i(x) = 0.5 * ||x - a_i||^2`` on flat space; gradient ``x - a_i``.

    Handy for checking estimator arithmetic with exact scalar oracles.
    """

    kind = "flat"

    def __init__(self, centers):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.centers = centers
        self.dataset = None
        self.manifold = Euclidean(centers.shape[1])
        self._reference = ReferenceOptimum(centers.mean(axis=0), self._value(centers.mean(axis=0)), True)

    @property
    def n(self):
        return self.centers.shape[0]

    def _value(self, x):
        return 0.5 * float(np.mean(np.sum((x - self.centers) ** 2, axis=1)))

    def full_objective(self, x):
        return self._value(x)

    def _mean_gradient(self, x, idx):
        c = self.centers if idx is None else self.centers[idx]
        return x - c.mean(axis=0)


def default_problem(manifold, seed=0):
    """Small problem whose objective lives on ``manifold`` (for axiom checks)."""
    if isinstance(manifold, Grassmann):
        return make_problem(synth_pca(200, manifold.d, seed, r=manifold.r))
    if isinstance(manifold, Stiefel):
        return make_problem(synth_ica(50, manifold.d, seed), r=manifold.r)
    if isinstance(manifold, SPD):
        return make_problem(synth_spd(20, manifold.d, 20.0, seed))
    raise InvalidConfig(f"no default problem for {manifold!r}")


def _as_problem(obj, seed):
    return obj if isinstance(obj, Problem) else default_problem(obj, seed)


def fd_gradient_check(problem, x, directions=10, h=1e-6, seed=0, tol=1e-5, abs_tol=1e-8):
    """Compare ``<grad F(x), xi>`` against central differences along retraction curves.

    The step is ``h / (1 + ||grad F(x)||)``; the error is measured relative
    to ``||grad F(x)||``, which bounds any directional derivative along a
    unit tangent. Near a critical point that ratio is meaningless, so an
    absolute error below ``abs_tol`` also passes.
    """
    if not 0 < h <= 1e-2:
        raise InvalidConfig("h must lie in (0, 1e-2]")
    m = problem.manifold
    rng = np.random.default_rng(seed)
    g = problem.full_gradient(x)
    gnorm = m.norm(x, g)
    step = h / (1.0 + gnorm)
    worst_rel = worst_abs = 0.0
    for _ in range(directions):
        xi = m.rand_tangent(x, rng)
        analytic = m.inner(x, g, xi)
        fp = problem.full_objective(m.retract(x, step * xi))
        fm = problem.full_objective(m.retract(x, -step * xi))
        fd = (fp - fm) / (2.0 * step)
        err = abs(fd - analytic)
        worst_abs = max(worst_abs, err)
        worst_rel = max(worst_rel, err / max(gnorm, 1e-12))
    return CheckReport(
        "fd_gradient",
        worst_rel < tol or worst_abs < abs_tol,
        worst_rel,
        tol,
        f"max abs error {worst_abs:.3e}, |grad| {gnorm:.3e}",
    )


def retraction_order_check(target, samples=5, seed=0, ts=(1e-2, 1e-3, 1e-4), lo=1.8, hi=2.2):
    """Fit the decay order of the first-order Taylor remainder along retraction curves.

    ``target`` is a problem or a manifold (a small default problem is then
    built on it). The remainder ``|F(R_x(t xi)) - F(x) - t <grad F, xi>|``
    must decay like ``t^2``.
    """
    problem = _as_problem(target, seed)
    if isinstance(target, Manifold):
        problem.manifold = target  # exercise the given geometry, not a fresh copy
    m = problem.manifold
    rng = np.random.default_rng(seed)
    logt = np.log(ts)
    slopes = []
    for _ in range(samples):
        x = m.rand_point(rng)
        xi = m.rand_tangent(x, rng)
        fx = problem.full_objective(x)
        slope = m.inner(x, problem.full_gradient(x), xi)
        errs = [abs(problem.full_objective(m.retract(x, t * xi)) - fx - t * slope) for t in ts]
        slopes.append(np.polyfit(logt, np.log(np.maximum(errs, 1e-300)), 1)[0])
    slopes = np.asarray(slopes)
    worst = slopes[np.argmax(np.abs(slopes - 2.0))]
    ok = bool(np.all((slopes >= lo) & (slopes <= hi)))
    return CheckReport(
        f"retraction_order[{m.tag}]",
        ok,
        float(worst),
        hi - 2.0,
        "slopes " + ", ".join(f"{s:.3f}" for s in slopes),
    )


def transport_isometry_check(target, samples=20, seed=0, step=0.5):
    """SPD: inner products preserved within 1e-8. Projection transports: non-expansive."""
    m = target if isinstance(target, Manifold) else target.manifold
    rng = np.random.default_rng(seed)
    if m.isometric_transport:
        worst = 0.0
        for _ in range(samples):
            x = m.rand_point(rng)
            y = m.retract(x, step * m.rand_tangent(x, rng))
            u, v = m.rand_tangent(x, rng), m.rand_tangent(x, rng)
            before = m.inner(x, u, v)
            after = m.inner(y, m.transport(x, y, u), m.transport(x, y, v))
            worst = max(worst, abs(before - after) / (1.0 + abs(before)))
        return CheckReport(f"transport_isometry[{m.tag}]", worst < 1e-8, worst, 1e-8)
    worst = 0.0
    for _ in range(samples):
        x = m.rand_point(rng)
        y = m.retract(x, step * m.rand_tangent(x, rng))
        u = m.rand_tangent(x, rng)
        worst = max(worst, m.norm(y, m.transport(x, y, u)) / m.norm(x, u))
    return CheckReport(
        f"transport_nonexpansive[{m.tag}]",
        worst <= 1.0 + 1e-10,
        worst,
        1.0 + 1e-10,
        f"worst norm ratio {worst:.12f}",
    )


def unbiasedness_check(problem, x, trials=100_000, seed=0, z=4.0):
    """Monte-Carlo mean of singleton stochastic gradients against the full gradient.

    Every distinct sample's gradient is evaluated once through
    ``stoch_gradient`` and weighted by how often it was drawn, which equals
    averaging ``trials`` singleton evaluations. ``statistic`` is the worst
    componentwise deviation in units of its standard error. The report's
    ``sigma2`` attribute holds the empirical variance (in the manifold metric).
    """
    m = problem.manifold
    rng = np.random.default_rng(seed)
    draws = problem.sample_batch(trials, rng)
    counts = np.bincount(draws, minlength=problem.n)
    used = np.flatnonzero(counts)
    grads = np.stack([problem.stoch_gradient(x, np.array([i])) for i in used])
    w = counts[used].astype(float) / trials
    mean = np.tensordot(w, grads, axes=1)
    dev = grads - mean
    var = np.tensordot(w, dev * dev, axes=1) * trials / max(trials - 1, 1)
    se = np.sqrt(var / trials)
    truth = problem.full_gradient(x)
    diff = np.abs(mean - truth)
    floor = 1e-12 * (1.0 + np.max(np.abs(truth)))
    ratio = diff / np.maximum(se, floor)
    sigma2 = float(sum(wi * m.inner(x, di, di) for wi, di in zip(w, dev)))
    rep = CheckReport(
        "unbiasedness",
        bool(np.all(diff <= z * se + floor)),
        float(np.max(ratio)),
        z,
        f"empirical sigma^2 {sigma2:.4e} over {trials} draws",
    )
    rep.sigma2 = sigma2
    return rep


def estimate_ltilde(problem, x, xi):
    """Empirical mean-squared Lipschitz constant of per-sample gradients for the move ``R_x(xi)``.

    Takes the larger of the two transport directions, so the value is usable
    whichever way the vector transport is applied.
    """
    m = problem.manifold
    step2 = m.inner(x, xi, xi)
    if step2 == 0.0:
        return 0.0
    y = m.retract(x, xi)
    fwd = bwd = 0.0
    for a, b in zip(problem.sample_gradients(x), problem.sample_gradients(y)):
        u = b - m.transport(x, y, a)
        v = a - m.transport(y, x, b)
        fwd += m.inner(y, u, u)
        bwd += m.inner(x, v, v)
    return float(np.sqrt(max(fwd, bwd) / problem.n / step2))


def lemma1_rhs(err2, grad2, eta, rho, b, Ltilde, sigma2):
    """One-step bound on ``E||d_{t+1} - grad F(x_{t+1})||^2``.

    ``err2 = ||d_t - grad F(x_t)||^2`` and ``grad2 = ||grad F(x_t)||^2``.
    """
    c2 = (1.0 - rho) ** 2
    k = 4.0 * eta ** 2 * Ltilde ** 2 / b
    return c2 * (1.0 + k) * err2 + c2 * k * grad2 + 2.0 * rho ** 2 * sigma2 / b


def lemma1_monte_carlo(problem, x, d, eta, rho, b, dc, trials=None, seed=0, x_next=None):
    """Monte-Carlo test of the one-step estimation-error bound of recursive momentum.

    With ``x`` and ``d`` fixed, draws ``trials`` independent batches of size
    ``b``, forms the next direction at ``x_next = R_x(-eta d)`` and compares
    the mean squared estimation error with :func:`lemma1_rhs` evaluated with
    ``dc.Ltilde`` and ``dc.sigma2``. Passes iff ``LHS <= RHS + 3 SE`` (plus
    rounding, ``1e-12 RHS``); a pass that needs the slack is reported as
    ``inconclusive``.
    """
    trials = dc.trials if trials is None else trials
    if trials < 100:
        raise InvalidConfig("need at least 100 Monte-Carlo trials")
    m = problem.manifold
    rng = np.random.default_rng(seed)
    y = m.retract(x, -eta * d) if x_next is None else x_next
    gx = problem.full_gradient(x)
    gy = problem.full_gradient(y)
    e0 = d - gx
    errs = np.empty(trials)
    for k in range(trials):
        dn = rsrm_update(problem, d, x, y, problem.sample_batch(b, rng), rho)
        diff = dn - gy
        errs[k] = m.inner(y, diff, diff)
    lhs = float(errs.mean())
    se = float(errs.std(ddof=1) / np.sqrt(trials))
    rhs = lemma1_rhs(m.inner(x, e0, e0), m.inner(x, gx, gx), eta, rho, b, dc.Ltilde, dc.sigma2)
    # the bound can be tight (eta = 0, rho = 0 gives equality), so allow rounding
    rounding = 1e-12 * abs(rhs)
    passed = lhs <= rhs + 3.0 * se + rounding
    status = "pass" if lhs <= rhs + rounding else ("inconclusive" if passed else "fail")
    return CheckReport(
        "lemma1_monte_carlo",
        passed,
        lhs,
        rhs + 3.0 * se + rounding,
        f"LHS {lhs:.4e} +- {se:.1e}, RHS {rhs:.4e}",
        status,
    )


def _iterates(run, problem, x1, cfg, seed):
    xs = []
    res = run(problem, x1, cfg, rng=np.random.default_rng(seed), callback=lambda t, x, d: xs.append(x))
    return xs, res


def _same_sequence(a, b):
    return len(a) == len(b) and all(np.array_equal(u, v) for u, v in zip(a, b))


def reduction_equivalence_check(problem, seed=0, iters=50, batch_size=5, eta0=0.05, seed_b=None):
    """Twin runs that must agree bit for bit.

    * recursive momentum with rho = 1 against plain SGD (same batches),
    * recursive momentum with rho = 0 against one restarted-recursive epoch
      whose outer batch equals the initial batch.

    ``seed_b`` (default ``seed``) seeds the second run of each pair; a
    different value is a sanity check that the comparison can fail.
    """
    seed_b = seed if seed_b is None else seed_b
    m = problem.manifold
    x1 = m.rand_point(np.random.default_rng([seed, 7]))
    base = RunConfig(batch_size=batch_size, init_batch_size=batch_size, max_iters=iters, log_every=iters)
    one = Schedule(eta0, 1.0, "experiment", "constant")
    xs_m, _ = _iterates(run_rsrm, problem, x1, replace(base, schedule=one), seed)
    xs_s, _ = _iterates(run_rsgd, problem, x1, replace(base, schedule=one), seed_b)
    sgd_ok = _same_sequence(xs_m, xs_s)

    zero = Schedule(eta0, 0.0, "experiment", "constant")
    b0 = 4 * batch_size
    cfg0 = replace(base, schedule=zero, init_batch_size=b0, outer_batch=b0, epoch_length=iters)
    xs_m0, _ = _iterates(run_rsrm, problem, x1, cfg0, seed)
    xs_r, _ = _iterates(run_rsrg, problem, x1, cfg0, seed_b)
    rec_ok = _same_sequence(xs_m0, xs_r)

    def gap(a, b):
        return max((float(np.max(np.abs(u - v))) for u, v in zip(a, b)), default=0.0)

    stat = max(gap(xs_m, xs_s), gap(xs_m0, xs_r))
    return CheckReport(
        "reduction_equivalence",
        sgd_ok and rec_ok,
        stat,
        0.0,
        f"rho=1 vs SGD identical: {sgd_ok}; rho=0 vs recursive epoch identical: {rec_ok}",
    )


def full_batch_exactness_check(problem, iters=200, seed=0, eta0=0.05, tol=1e-12):
    """With the whole index set as every batch, each direction equals the full gradient."""
    m = problem.manifold
    x1 = m.rand_point(np.random.default_rng([seed, 11]))
    cfg = RunConfig(max_iters=iters, full_batch=True, log_every=iters, schedule=Schedule(eta0, 0.1))
    worst = [0.0]

    def cb(t, x, d):
        g = problem.full_gradient(x)
        worst[0] = max(worst[0], float(np.max(np.abs(d - g))) / (1.0 + float(np.max(np.abs(g)))))

    run_rsrm(problem, x1, cfg, rng=np.random.default_rng(seed), callback=cb)
    return CheckReport("full_batch_exactness", worst[0] <= tol, worst[0], tol)


def _suite_gradients(seed):
    out = []
    for p in (
        make_problem(synth_pca(500, 50, seed, r=5)),
        make_problem(synth_ica(100, 10, seed)),
        make_problem(synth_spd(50, 5, 20.0, seed)),
    ):
        rng = np.random.default_rng([seed, 1])
        x = p.manifold.rand_point(rng)
        rep = fd_gradient_check(p, x, directions=5, seed=seed)
        rep.name += f"[{p.kind}]"
        out.append(rep)
        rep = unbiasedness_check(p, x, trials=20_000, seed=seed)
        rep.name += f"[{p.kind}]"
        out.append(rep)
    return out


def _suite_manifolds(seed):
    out = []
    for m in (Grassmann(10, 3), Stiefel(8, 3), SPD(4)):
        rng = np.random.default_rng([seed, 2])
        x = m.rand_point(rng)
        drift = m.ambient_distance(m.retract(x, m.zero_vector(x)), x)
        out.append(CheckReport(f"retract_zero[{m.tag}]", drift <= 1e-12, drift, 1e-12))
        out.append(retraction_order_check(m, samples=5, seed=seed))
        out.append(transport_isometry_check(m, samples=20, seed=seed))
    return out


def _suite_estimators(seed):
    p = make_problem(synth_pca(300, 10, seed, r=3))
    return [reduction_equivalence_check(p, seed=seed), full_batch_exactness_check(p, seed=seed)]


def _suite_error_bound(seed, configs=3, trials=2000):
    p = make_problem(synth_pca(30, 4, seed, r=2))
    m = p.manifold
    rng = np.random.default_rng([seed, 3])
    out = []
    for k in range(configs):
        x = m.rand_point(rng)
        d = p.full_gradient(x) + 0.3 * m.rand_tangent(x, rng)
        eta, rho, b = float(rng.uniform(0.01, 0.3)), float(rng.uniform(0, 1)), int(rng.integers(1, 6))
        y = m.retract(x, -eta * d)
        sigma2 = unbiasedness_check(p, y, trials=trials, seed=seed + k).sigma2
        dc = DiagnosticConfig(sigma2=sigma2, Ltilde=estimate_ltilde(p, x, -eta * d), trials=trials)
        rep = lemma1_monte_carlo(p, x, d, eta, rho, b, dc, seed=seed + k, x_next=y)
        rep.name += f"[{k}]"
        out.append(rep)
    return out


SUITES = {
    "gradients": _suite_gradients,
    "manifolds": _suite_manifolds,
    "estimators": _suite_estimators,
    "error_bound": _suite_error_bound,
}


def run_suite(name="all", seed=0):
    """Run one named suite (or ``all``) and return the list of reports."""
    if name == "all":
        return [r for key in SUITES for r in SUITES[key](seed)]
    if name not in SUITES:
        raise InvalidConfig(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    return SUITES[name](seed)
