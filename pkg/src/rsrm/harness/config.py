"""Experiment configuration files.

INI-style text read with :mod:`configparser`. Grammar::

    [experiment]
    seeds = 0 1 2 3          # list, or a range "0..9" (inclusive)
    master_seed = 0          # optional, default 0
    log_every = 25           # optional
    out = runs/syn1          # optional, default "runs"
    threads = 4              # optional
    timing = true            # optional; false writes sec = 0.0 in traces
    sfo_budget = 2e5         # optional default budget for every method
    checkpoints = 5e4 1e5    # optional SFO checkpoints for the summary

    [problem]
    kind = pca               # pca | ica | rc
    n = 2000                 # synthetic size, or...
    d = 50
    r = 5                    # pca/ica only
    cond = 20                # rc only
    seed = 0                 # dataset seed
    file = data.mat          # ...read an RSRM-MAT file instead of n/d/seed
    restarts = 20            # ica reference restarts

    [method.<label>]
    algorithm = rsrm         # defaults to <label> when it names an algorithm
    eta0 = 1 0.5 0.1         # grid; default is the full 7-point grid
    rho0 = 0.1
    eta_form = experiment    # theory | experiment | sqrt | constant
    rho_form = twothirds     # twothirds | constant
    batch_size = 5
    init_batch_size = 100
    max_iters = 1000         # or sfo_budget = ...
    epoch_length = 100       # rsrg
    outer_batch = 100        # rsrg
    stop_tol = 1e-8
    full_batch = false

Lists are whitespace or comma separated. ``#`` and ``;`` start comments.
Every violation found is reported at once with its line number.
"""
import configparser
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

from ..exceptions import ConfigError, InvalidConfig
from ..optimizers import ETA_FORMS, ETA_GRID, METHODS, RHO_FORMS, RunConfig, Schedule, default_schedule
from ..problems import KINDS

__all__ = ["ProblemSpec", "MethodSpec", "ExperimentConfig", "parse_config", "load_config"]


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    n: Optional[int] = None
    d: Optional[int] = None
    r: Optional[int] = None
    cond: float = 20.0
    seed: int = 0
    file: Optional[str] = None
    restarts: int = 20


@dataclass(frozen=True)
class MethodSpec:
    label: str
    algorithm: str
    etas: Tuple[float, ...]
    run: RunConfig
    rho0: float
    eta_form: str
    rho_form: str
    sfo_budget: Optional[float] = None

    def schedule(self, eta0):
        return Schedule(eta0, self.rho0, self.eta_form, self.rho_form)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    methods: Tuple[MethodSpec, ...]
    seeds: Tuple[int, ...]
    master_seed: int = 0
    log_every: int = 25
    out: str = "runs"
    threads: Optional[int] = None
    timing: bool = True
    checkpoints: Tuple[float, ...] = ()
    sfo_budget: Optional[float] = None
    text: str = field(default="", repr=False, compare=False)


_EXPERIMENT_KEYS = {"seeds", "master_seed", "log_every", "out", "threads", "timing", "sfo_budget", "checkpoints"}
_PROBLEM_KEYS = {"kind", "n", "d", "r", "cond", "seed", "file", "restarts"}
_METHOD_KEYS = {
    "algorithm", "eta0", "rho0", "eta_form", "rho_form", "batch_size", "init_batch_size",
    "max_iters", "sfo_budget", "epoch_length", "outer_batch", "stop_tol", "full_batch",
}
_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:\s#;][^=:]*?)\s*[=:]")


def _line_index(text):
    """Map ``section`` and ``(section, key)`` to 1-based line numbers."""
    idx, sec = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        m = _SECTION.match(line)
        if m:
            sec = m.group(1).strip()
            idx.setdefault(sec, no)
            continue
        m = _KEY.match(line)
        if m and sec is not None and not line[0].isspace():
            idx.setdefault((sec, m.group(1).strip().lower()), no)
    return idx


class _Reader:
    """Typed access to one section that collects errors instead of raising."""

    def __init__(self, parser, section, lines, errors):
        self.s = parser[section]
        self.name = section
        self.lines = lines
        self.errors = errors

    def line(self, key=None):
        return self.lines.get((self.name, key), self.lines.get(self.name))

    def err(self, key, msg):
        self.errors.append((self.line(key), msg))

    def _get(self, key, conv, default, required, what):
        if key not in self.s:
            if required:
                self.err(None, f"[{self.name}] missing required key {key!r}")
            return default
        raw = self.s[key].strip()
        try:
            return conv(raw)
        except (ValueError, TypeError):
            self.err(key, f"{key} = {raw!r} is not {what}")
            return default

    def int(self, key, default=None, required=False, lo=None):
        val = self._get(key, _to_int, default, required, "an integer")
        if val is not None and lo is not None and val < lo and key in self.s:
            self.err(key, f"{key} must be >= {lo}, got {val}")
            return default
        return val

    def float(self, key, default=None, required=False):
        return self._get(key, float, default, required, "a number")

    def str(self, key, default=None, required=False, choices=None):
        val = self._get(key, str, default, required, "text")
        if choices is not None and val is not None and val not in choices and key in self.s:
            self.err(key, f"{key} = {val!r} not one of {', '.join(choices)}")
            return default
        return val

    def bool(self, key, default):
        if key not in self.s:
            return default
        try:
            return self.s.getboolean(key)
        except ValueError:
            self.err(key, f"{key} = {self.s[key]!r} is not a boolean")
            return default

    def floats(self, key, default=()):
        return self._get(key, lambda v: tuple(float(x) for x in _split(v)), default, False, "a list of numbers")

    def unknown(self, allowed):
        for key in self.s:
            if key not in allowed:
                self.err(key, f"[{self.name}] unknown key {key!r}")


def _to_int(raw):
    # accept "2e5"-style integers but nothing fractional
    val = float(raw)
    if val != int(val):
        raise ValueError(raw)
    return int(val)


def _split(raw):
    return [t for t in re.split(r"[,\s]+", raw) if t]


def _seeds(raw):
    m = re.fullmatch(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*", raw)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise ValueError(raw)
        return tuple(range(lo, hi + 1))
    return tuple(int(t) for t in _split(raw))


def parse_config(text):
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        Listing every problem found, each with the line it refers to.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), default_section="\0")
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError([(exc.lineno, "key outside of any [section]")]) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError([(exc.lineno, f"duplicate key {exc.option!r} in [{exc.section}]")]) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError([(exc.lineno, f"duplicate section [{exc.section}]")]) from None
    except configparser.ParsingError as exc:
        raise ConfigError([(no, f"cannot parse {line!r}") for no, line in exc.errors]) from None

    lines = _line_index(text)
    errors = []
    for sec in parser.sections():
        if sec not in ("experiment", "problem") and not sec.startswith("method."):
            errors.append((lines.get(sec), f"unknown section [{sec}]"))
    for sec in ("experiment", "problem"):
        if not parser.has_section(sec):
            errors.append((None, f"missing section [{sec}]"))
    if errors and not (parser.has_section("experiment") and parser.has_section("problem")):
        raise ConfigError(errors)

    ex = _Reader(parser, "experiment", lines, errors)
    ex.unknown(_EXPERIMENT_KEYS)
    seeds = ex._get("seeds", _seeds, (), True, "a seed list or range a..b")
    if "seeds" in ex.s and not seeds:
        ex.err("seeds", "at least one seed is required")
    if len(set(seeds)) != len(seeds):
        ex.err("seeds", "seeds must be distinct")
    budget = ex.float("sfo_budget")
    experiment = dict(
        seeds=seeds,
        master_seed=ex.int("master_seed", 0, lo=0),
        log_every=ex.int("log_every", 25, lo=1),
        out=ex.str("out", "runs"),
        threads=ex.int("threads", None, lo=1),
        timing=ex.bool("timing", True),
        checkpoints=ex.floats("checkpoints"),
        sfo_budget=budget,
    )
    if any(c <= 0 for c in experiment["checkpoints"]):
        ex.err("checkpoints", "checkpoints must be positive")
    if budget is not None and budget <= 0:
        ex.err("sfo_budget", "sfo_budget must be positive")

    problem = _parse_problem(_Reader(parser, "problem", lines, errors))

    methods = []
    for sec in parser.sections():
        if sec.startswith("method."):
            spec = _parse_method(_Reader(parser, sec, lines, errors), experiment["log_every"], budget)
            if spec is not None:
                methods.append(spec)
    if not any(s.startswith("method.") for s in parser.sections()):
        errors.append((None, "no [method.<label>] sections; at least one method is required"))

    if errors:
        raise ConfigError(sorted(errors, key=lambda e: (e[0] is None, e[0] or 0)))
    return ExperimentConfig(problem=problem, methods=tuple(methods), text=text, **experiment)


def _parse_problem(rd):
    rd.unknown(_PROBLEM_KEYS)
    kind = rd.str("kind", "pca", required=True, choices=KINDS)
    file = rd.str("file")
    synthetic = file is None
    n = rd.int("n", required=synthetic, lo=1)
    d = rd.int("d", required=synthetic, lo=1)
    r = rd.int("r", lo=1)
    cond = rd.float("cond", 20.0)
    if cond is not None and cond < 1:
        rd.err("cond", f"cond must be >= 1, got {cond}")
    if file is not None:
        for key in ("n", "d", "seed", "cond"):
            if key in rd.s:
                rd.err(key, f"{key} has no effect when reading from file")
    if kind == "rc" and r is not None:
        rd.err("r", "rc problems have no rank r")
    if kind == "pca" and synthetic and r is None:
        rd.err(None, "[problem] missing required key 'r' for pca")
    if r is not None and d is not None and r > d:
        rd.err("r", f"r = {r} exceeds d = {d}")
    return ProblemSpec(
        kind=kind, n=n, d=d, r=r, cond=cond,
        seed=rd.int("seed", 0, lo=0), file=file, restarts=rd.int("restarts", 20, lo=1),
    )


def _parse_method(rd, log_every, default_budget):
    rd.unknown(_METHOD_KEYS)
    label = rd.name[len("method."):].strip()
    if not label or "__" in label or "/" in label:
        rd.err(None, f"bad method label {label!r} (non-empty, no '__' or '/')")
        return None
    algo = rd.str("algorithm", label if label in METHODS else None, required=label not in METHODS, choices=METHODS)
    if algo is None:
        return None
    base = default_schedule(algo)
    etas = rd.floats("eta0", ETA_GRID)
    if not etas or any(e <= 0 for e in etas):
        rd.err("eta0", "eta0 grid must be non-empty and positive")
    if len(set(etas)) != len(etas):
        rd.err("eta0", "eta0 values must be distinct")
    rho0 = rd.float("rho0", base.rho0)
    eta_form = rd.str("eta_form", base.eta_form, choices=ETA_FORMS)
    rho_form = rd.str("rho_form", base.rho_form, choices=RHO_FORMS)
    max_iters = rd.int("max_iters", lo=1)
    budget = rd.float("sfo_budget")
    if max_iters is not None and budget is not None:
        rd.err("sfo_budget", "give max_iters or sfo_budget, not both")
    if max_iters is None and budget is None:
        budget = default_budget
        if budget is None:
            rd.err(None, f"[{rd.name}] needs max_iters or sfo_budget (here or in [experiment])")
    try:
        Schedule(etas[0] if etas else 0.1, rho0, eta_form, rho_form)
    except InvalidConfig as exc:
        rd.err("rho0", str(exc))
    try:
        run = RunConfig(
            batch_size=rd.int("batch_size", 5 if algo == "rsrm" else 10, lo=1),
            init_batch_size=rd.int("init_batch_size", 100, lo=1),
            max_iters=max_iters or 1,
            log_every=log_every,
            stop_tol=rd.float("stop_tol"),
            full_batch=rd.bool("full_batch", False),
            epoch_length=rd.int("epoch_length", 100, lo=0),
            outer_batch=rd.int("outer_batch", 100, lo=1),
        )
    except (InvalidConfig, TypeError) as exc:
        rd.err(None, str(exc))
        return None
    return MethodSpec(label, algo, etas, run, rho0, eta_form, rho_form, budget)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text)


def with_overrides(cfg, **kw):
    """Copy of ``cfg`` with experiment-level fields replaced (None values ignored)."""
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
