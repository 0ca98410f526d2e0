"""Stochastic Riemannian optimizers.

Four search-direction estimators share one driver loop:

* ``rsgd``      plain mini-batch stochastic gradient,
* ``momentum``  transported heavy-ball average ``rho T(d) + (1 - rho) g``,
* ``rsrg``      recursive (SARAH/SPIDER-style) estimator restarted every epoch
                from a large batch,
* ``rsrm``      recursive momentum: ``g(x_new) + (1 - rho) T(d - g(x))`` with a
                decaying ``rho`` and no restarts.

Costs are counted in stochastic first-order oracle calls (SFO), one per
per-sample gradient. Full gradients computed for the trace are
instrumentation and are not counted.
"""
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .exceptions import InvalidConfig, RetractFailed, RunAborted

__all__ = [
    "Schedule",
    "RunConfig",
    "TraceRow",
    "RunResult",
    "schedule_eval",
    "default_schedule",
    "theory_rho_constant",
    "rsrm_update",
    "recursive_update",
    "momentum_update",
    "run_rsrm",
    "run_rsgd",
    "run_rsgd_momentum",
    "run_rsrg",
    "run_method",
    "expected_sfo",
    "iters_for_budget",
    "METHODS",
    "ETA_GRID",
]

ETA_GRID = (1.0, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001)
ETA_FORMS = ("theory", "experiment", "sqrt", "constant")
RHO_FORMS = ("twothirds", "constant")
REORTHONORMALIZE_EVERY = 100
MAX_HALVINGS = 5


@dataclass(frozen=True)
class Schedule:
    """Step size and momentum sequences.

    ``eta_form``:
        ``theory``      eta0 * (t + 1)^(-1/3)
        ``experiment``  eta0 * t^(-1/3)
        ``sqrt``        eta0 * t^(-1/2)
        ``constant``    eta0
    ``rho_form``:
        ``twothirds``   min(1, rho0 * t^(-2/3))
        ``constant``    rho0
    """

    eta0: float
    rho0: float = 0.1
    eta_form: str = "experiment"
    rho_form: str = "twothirds"

    def __post_init__(self):
        if not self.eta0 > 0:
            raise InvalidConfig(f"eta0 must be positive, got {self.eta0}")
        if self.rho0 < 0 or (self.rho_form == "constant" and self.rho0 > 1):
            raise InvalidConfig(f"rho0 out of range: {self.rho0}")
        if self.eta_form not in ETA_FORMS:
            raise InvalidConfig(f"unknown eta_form {self.eta_form!r}")
        if self.rho_form not in RHO_FORMS:
            raise InvalidConfig(f"unknown rho_form {self.rho_form!r}")

    def eta(self, t):
        form = self.eta_form
        if form == "experiment":
            return self.eta0 * t ** (-1.0 / 3.0)
        if form == "theory":
            return self.eta0 * (t + 1) ** (-1.0 / 3.0)
        if form == "sqrt":
            return self.eta0 / np.sqrt(t)
        return self.eta0

    def rho(self, t):
        if self.rho_form == "constant":
            return self.rho0
        return min(1.0, self.rho0 * t ** (-2.0 / 3.0))

    def __call__(self, t):
        return self.eta(t), self.rho(t)


def schedule_eval(schedule, t):
    """``(eta_t, rho_t)`` for iteration ``t >= 1``."""
    if t < 1:
        raise InvalidConfig("iterations are counted from 1")
    return schedule(t)


def default_schedule(method, eta0=0.1):
    """Schedules used in the experiments for each method."""
    if method == "rsrm":
        return Schedule(eta0, 0.1, "experiment", "twothirds")
    if method == "momentum":
        return Schedule(eta0, 0.9, "sqrt", "constant")
    if method == "rsrg":
        return Schedule(eta0, 0.0, "constant", "constant")
    if method == "rsgd":
        return Schedule(eta0, 0.0, "sqrt", "constant")
    raise InvalidConfig(f"unknown method {method!r}")


def theory_rho_constant(c_eta, Ltilde, b):
    """Momentum constant ``(10 Ltilde^2 / b + 1/3) c_eta^2`` paired with ``c_eta``."""
    return (10.0 * Ltilde ** 2 / b + 1.0 / 3.0) * c_eta ** 2


@dataclass(frozen=True)
class RunConfig:
    """Settings for one optimization run.

    ``full_batch`` replaces every mini-batch by the whole index set (each
    evaluation then costs ``n`` SFO). ``epoch_length`` and ``outer_batch``
    are only read by the ``rsrg`` loop.
    """

    batch_size: int = 5
    init_batch_size: int = 100
    max_iters: int = 1000
    seed: int = 0
    schedule: Optional[Schedule] = None
    stop_tol: Optional[float] = None
    log_every: int = 25
    full_batch: bool = False
    epoch_length: int = 100
    outer_batch: int = 100
    #: When False the reference optimum is never computed and gaps are NaN.
    track_gap: bool = True

    def __post_init__(self):
        for name in ("batch_size", "init_batch_size", "max_iters", "log_every", "outer_batch"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.epoch_length < 0:
            raise InvalidConfig("epoch_length must be >= 0")

    def with_schedule(self, schedule):
        return replace(self, schedule=schedule)


@dataclass
class TraceRow:
    """One logged iterate.

    ``sfo`` is the oracle cost spent to reach ``x_t``; ``sec`` the optimizer
    wall time to reach it. ``est_err`` is ``||d_t - grad F(x_t)||`` for the
    direction used at ``x_t`` (``None`` when no direction was formed there).
    """

    t: int
    sfo: int
    sec: float
    f: float
    gap: float
    gnorm: float
    est_err: Optional[float] = None

    def as_dict(self):
        return {
            "t": self.t,
            "sfo": self.sfo,
            "sec": self.sec,
            "f": self.f,
            "gap": self.gap,
            "gnorm": self.gnorm,
            "est_err": self.est_err,
        }


@dataclass
class RunResult:
    method: str
    trace: List[TraceRow]
    x_final: np.ndarray
    #: Iterate drawn uniformly from x_1..x_T with the run's own generator.
    x_output: np.ndarray
    output_index: int
    sfo: int
    iterations: int
    status: str = "max_iters"
    directions: list = field(default_factory=list, repr=False)


def _check_rho(rho):
    if not 0.0 <= rho <= 1.0:
        raise InvalidConfig(f"rho must lie in [0, 1], got {rho}")


def rsrm_update(problem, d, x, x_new, batch, rho):
    """Recursive momentum direction at ``x_new``.

    ``g_S(x_new) + (1 - rho) T_{x -> x_new}(d - g_S(x))`` with one batch ``S``
    shared by both gradient evaluations; costs ``2 |S|`` SFO.
    """
    _check_rho(rho)
    g_new = problem.stoch_gradient(x_new, batch)
    g_old = problem.stoch_gradient(x, batch)
    c = 1.0 - rho
    if c == 0.0:
        return g_new
    return g_new + c * problem.manifold.transport(x, x_new, d - g_old)


def recursive_update(problem, d, x, x_new, batch):
    """Recursive estimator ``g_S(x_new) - T(g_S(x) - d)``; costs ``2 |S|`` SFO."""
    g_new = problem.stoch_gradient(x_new, batch)
    g_old = problem.stoch_gradient(x, batch)
    return g_new - problem.manifold.transport(x, x_new, g_old - d)


def momentum_update(problem, d, x, x_new, batch, rho):
    """Transported momentum ``rho T(d) + (1 - rho) g_S(x_new)``; costs ``|S|`` SFO."""
    _check_rho(rho)
    g_new = problem.stoch_gradient(x_new, batch)
    if rho == 0.0:
        return g_new
    td = problem.manifold.transport(x, x_new, d)
    if rho == 1.0:
        return td
    return rho * td + (1.0 - rho) * g_new


class _Driver:
    """Shared iteration loop: step, re-orthonormalize, log, update direction."""

    def __init__(self, problem, x1, cfg, rng, callback, keep_directions):
        self.p = problem
        self.m = problem.manifold
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.callback = callback
        self.keep = keep_directions
        self.x1 = np.array(x1, dtype=float)
        self.f_star = problem.reference_optimum().value if cfg.track_gap else float("nan")
        self.trace = []
        self.directions = []
        self.elapsed = 0.0

    def batch(self, b):
        if self.cfg.full_batch:
            return self.p.full_batch()
        return self.p.sample_batch(b, self.rng)

    def cost(self, b):
        return self.p.n if self.cfg.full_batch else b

    def log(self, t, x, d, sfo):
        g = self.p.full_gradient(x)
        f = self.p.full_objective(x)
        est = None if d is None else self.m.norm(x, d - g)
        row = TraceRow(t, int(sfo), self.elapsed, f, f - self.f_star, self.m.norm(x, g), est)
        self.trace.append(row)
        return row

    def step(self, x, d, eta, t):
        if not np.all(np.isfinite(d)):
            raise RunAborted(f"search direction became non-finite at t={t}")
        scale = eta
        for _ in range(MAX_HALVINGS + 1):
            try:
                y = self.m.retract(x, -scale * d)
            except RetractFailed:
                scale *= 0.5
                continue
            if t % REORTHONORMALIZE_EVERY == 0:
                y = self.m.reorthonormalize(y)
            return y
        raise RunAborted(
            f"retraction failed at t={t} after {MAX_HALVINGS} step halvings "
            f"(eta={eta:g}, |d|={np.linalg.norm(d):.3e})"
        )

    def run(self, method, first, update, final_update):
        """Drive ``first(x) -> (d, cost)`` and ``update(d, x, x_new, t) -> (d, cost)``.

        ``update`` receives the index ``t`` of the step just taken and
        returns the direction at ``x_{t+1}``, or ``(None, 0)`` to signal that
        no direction is formed there.
        """
        cfg, T = self.cfg, self.cfg.max_iters
        out_index = int(self.rng.integers(1, T + 1))
        x_out = None
        status = "max_iters"
        x = self.x1
        clock = time.perf_counter()
        d, c = first(x)
        sfo = 0
        t = 1
        while True:
            self.elapsed += time.perf_counter() - clock
            if self.callback is not None:
                self.callback(t, x, d)
            if self.keep:
                self.directions.append(d)
            if t == out_index:
                x_out = x
            stop = t == T + 1
            if (t - 1) % cfg.log_every == 0 or stop:
                row = self.log(t, x, d, sfo)
                if cfg.stop_tol is not None and row.gnorm < cfg.stop_tol:
                    status = "converged"
                    stop = True
            sfo += c
            if stop:
                break
            clock = time.perf_counter()
            eta = cfg.schedule.eta(t)
            x_new = self.step(x, d, eta, t)
            if t < T or final_update:
                d, c = update(d, x, x_new, t)
            else:
                d, c = None, 0
            x = x_new
            t += 1
        if x_out is None:
            x_out = x
        return RunResult(
            method=method,
            trace=self.trace,
            x_final=x,
            x_output=x_out,
            output_index=out_index,
            sfo=int(sfo),
            iterations=t - 1,
            status=status,
            directions=self.directions,
        )


def _prepare(method, cfg):
    if cfg.schedule is None:
        cfg = cfg.with_schedule(default_schedule(method))
    return cfg


def run_rsrm(problem, x1, cfg, rng=None, callback=None, keep_directions=False):
    """Riemannian stochastic recursive momentum.

    ``d_1`` comes from an initial batch of ``init_batch_size``; every later
    direction reuses one fresh batch of ``batch_size`` at both the new and
    the previous iterate. Total cost ``b0 + 2 b T``.
    """
    cfg = _prepare("rsrm", cfg)
    drv = _Driver(problem, x1, cfg, rng, callback, keep_directions)
    b, b0 = cfg.batch_size, cfg.init_batch_size

    def first(x):
        return problem.stoch_gradient(x, drv.batch(b0)), drv.cost(b0)

    def update(d, x, x_new, t):
        rho = cfg.schedule.rho(t + 1)
        return rsrm_update(problem, d, x, x_new, drv.batch(b), rho), 2 * drv.cost(b)

    return drv.run("rsrm", first, update, final_update=True)


def run_rsgd(problem, x1, cfg, rng=None, callback=None, keep_directions=False):
    """Riemannian SGD ``x_{t+1} = R_{x_t}(-eta_t g_{S_t}(x_t))``; cost ``b T``."""
    cfg = _prepare("rsgd", cfg)
    drv = _Driver(problem, x1, cfg, rng, callback, keep_directions)
    b = cfg.batch_size

    def grad(x):
        return problem.stoch_gradient(x, drv.batch(b)), drv.cost(b)

    return drv.run("rsgd", grad, lambda d, x, x_new, t: grad(x_new), final_update=False)


def run_rsgd_momentum(problem, x1, cfg, rng=None, callback=None, keep_directions=False):
    """SGD with transported momentum; ``rho`` comes from the schedule. Cost ``b T``."""
    cfg = _prepare("momentum", cfg)
    drv = _Driver(problem, x1, cfg, rng, callback, keep_directions)
    b = cfg.batch_size

    def first(x):
        return problem.stoch_gradient(x, drv.batch(b)), drv.cost(b)

    def update(d, x, x_new, t):
        rho = cfg.schedule.rho(t + 1)
        return momentum_update(problem, d, x, x_new, drv.batch(b), rho), drv.cost(b)

    return drv.run("momentum", first, update, final_update=False)


def run_rsrg(problem, x1, cfg, rng=None, callback=None, keep_directions=False):
    """Restarted recursive gradient.

    Each epoch starts from a gradient over ``outer_batch`` samples and then
    takes ``epoch_length`` recursive updates, so an epoch spans
    ``epoch_length + 1`` steps. ``epoch_length = 0`` is large-batch gradient
    descent. Cost: ``epochs * B + 2 b * updates``.
    """
    cfg = _prepare("rsrg", cfg)
    if cfg.outer_batch < cfg.batch_size and not cfg.full_batch:
        raise InvalidConfig("outer_batch must be >= batch_size")
    drv = _Driver(problem, x1, cfg, rng, callback, keep_directions)
    b, big, m = cfg.batch_size, cfg.outer_batch, cfg.epoch_length
    inner = [0]

    def first(x):
        inner[0] = 0
        return problem.stoch_gradient(x, drv.batch(big)), drv.cost(big)

    def update(d, x, x_new, t):
        if inner[0] >= m:
            return first(x_new)
        inner[0] += 1
        return recursive_update(problem, d, x, x_new, drv.batch(b)), 2 * drv.cost(b)

    return drv.run("rsrg", first, update, final_update=False)


_RUNNERS = {
    "rsrm": run_rsrm,
    "rsgd": run_rsgd,
    "momentum": run_rsgd_momentum,
    "rsrg": run_rsrg,
}
METHODS = tuple(_RUNNERS)


def run_method(method, problem, x1, cfg, rng=None, callback=None, keep_directions=False):
    if method not in _RUNNERS:
        raise InvalidConfig(f"unknown method {method!r}; choose from {METHODS}")
    return _RUNNERS[method](problem, x1, cfg, rng=rng, callback=callback, keep_directions=keep_directions)


def expected_sfo(method, cfg, n=None):
    """Closed-form SFO total of a completed run of ``cfg.max_iters`` steps."""
    T = cfg.max_iters
    unit = (lambda k: n) if cfg.full_batch else (lambda k: k)
    if method == "rsrm":
        return unit(cfg.init_batch_size) + 2 * unit(cfg.batch_size) * T
    if method in ("rsgd", "momentum"):
        return unit(cfg.batch_size) * T
    if method == "rsrg":
        span = cfg.epoch_length + 1
        epochs = -(-T // span)
        updates = T - epochs
        return epochs * unit(cfg.outer_batch) + 2 * unit(cfg.batch_size) * updates
    raise InvalidConfig(f"unknown method {method!r}")


def iters_for_budget(method, cfg, budget, n=None):
    """Largest step count whose closed-form SFO total fits in ``budget``.

    ``n`` is needed only for full-batch configurations.
    """
    lo, hi = 0, int(budget) + 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if expected_sfo(method, replace(cfg, max_iters=mid), n) <= budget:
            lo = mid
        else:
            hi = mid
    if lo < 1:
        raise InvalidConfig(f"SFO budget {budget} too small for {method}")
    return lo
