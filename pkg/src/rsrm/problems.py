"""Finite-sum objectives on manifolds: PCA, joint diagonalization, SPD centroid.

Every problem exposes the same oracles. ``stoch_gradient(x, batch)`` is the
Riemannian gradient of the mini-batch average and costs ``len(batch)``
stochastic first-order oracle calls (SFO); ``full_gradient`` averages over
the whole index set.
"""
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import InvalidInput, NotPositiveDefinite
from .linalg import qr_unique, sym, sym_mat_fn
from .manifolds import SPD, Grassmann, Stiefel

__all__ = [
    "Dataset",
    "ReferenceOptimum",
    "Problem",
    "PCAProblem",
    "ICAProblem",
    "RCProblem",
    "make_problem",
    "synth_pca",
    "synth_ica",
    "synth_spd",
    "riemannian_descent",
]

KINDS = ("pca", "ica", "rc")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Samples for one of the three problem kinds.

    ``samples`` is ``(n, d)`` for ``pca`` and ``(n, d, d)`` for ``ica``/``rc``.
    ``r`` is the subspace rank carried along for PCA files.
    """

    kind: str
    samples: np.ndarray = field(repr=False)
    r: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown dataset kind {self.kind!r}")
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        want = 2 if self.kind == "pca" else 3
        if s.ndim != want or s.shape[0] < 1 or (want == 3 and s.shape[1] != s.shape[2]):
            raise InvalidInput(f"{self.kind} samples have bad shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise InvalidInput("samples contain non-finite values")
        if self.r is not None and not 1 <= self.r <= s.shape[1]:
            raise InvalidInput(f"rank r={self.r} outside [1, {s.shape[1]}]")
        bad = self.first_invalid()
        if bad is not None:
            raise InvalidInput(f"sample {bad} violates the {self.kind} invariants")

    def first_invalid(self):
        """Index of the first sample breaking the kind's invariants, or None."""
        s = self.samples
        if self.kind == "pca":
            return None
        scale = np.maximum(1.0, np.max(np.abs(s), axis=(1, 2)))
        asym = np.max(np.abs(s - np.swapaxes(s, 1, 2)), axis=(1, 2)) > 1e-10 * scale
        if asym.any():
            return int(np.argmax(asym))
        if self.kind == "rc":
            notpd = np.linalg.eigvalsh(sym(s))[:, 0] <= 0
            if notpd.any():
                return int(np.argmax(notpd))
        return None

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def d(self):
        return self.samples.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.kind == other.kind
            and self.r == other.r
            and np.array_equal(self.samples, other.samples)
        )


class ReferenceOptimum(NamedTuple):
    point: np.ndarray
    value: float
    #: False when the value is only the best found over restarts.
    certified: bool


class Problem:
    """Base class; subclasses provide ``_mean_gradient`` and ``full_objective``."""

    kind = None

    def __init__(self, dataset, manifold):
        if dataset.kind != self.kind:
            raise InvalidInput(f"{type(self).__name__} needs a {self.kind} dataset")
        self.dataset = dataset
        self.manifold = manifold
        self._reference = None

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, manifold={self.manifold.tag})"

    @property
    def n(self):
        return self.dataset.n

    @property
    def samples(self):
        return self.dataset.samples

    def sample_batch(self, b, rng):
        """``b`` indices drawn i.i.d. uniformly with replacement."""
        if b < 1:
            raise InvalidInput("batch size must be >= 1")
        return rng.integers(0, self.n, size=int(b))

    def full_batch(self):
        return np.arange(self.n)

    def full_objective(self, x):
        raise NotImplementedError

    def _mean_gradient(self, x, idx):
        raise NotImplementedError

    def stoch_gradient(self, x, batch):
        return self._mean_gradient(x, batch)

    def full_gradient(self, x):
        return self._mean_gradient(x, None)

    def sample_gradients(self, x, idx=None):
        """Per-sample Riemannian gradients stacked along axis 0."""
        idx = self.full_batch() if idx is None else np.asarray(idx)
        return np.stack([self.stoch_gradient(x, idx[k : k + 1]) for k in range(len(idx))])

    def gradient_variance(self, x):
        """Exact ``E_i ||grad f_i(x) - grad F(x)||_x^2`` by enumerating all samples."""
        g = self.full_gradient(x)
        m = self.manifold
        return float(
            np.mean([m.inner(x, gi - g, gi - g) for gi in self.sample_gradients(x)])
        )

    def reference_optimum(self):
        if self._reference is None:
            self._reference = self._compute_reference()
        return self._reference

    def set_reference(self, point, value, certified=False):
        self._reference = ReferenceOptimum(point, float(value), certified)

    def _compute_reference(self):
        raise NotImplementedError


class PCAProblem(Problem):
    """``F(U) = -(1/n) sum_i ||U^T x_i||^2`` on the Grassmann manifold."""

    kind = "pca"

    def __init__(self, dataset, r=None):
        r = r or dataset.r
        if r is None:
            raise InvalidInput("PCA needs a rank r")
        super().__init__(dataset, Grassmann(dataset.d, r))
        self.r = r

    def full_objective(self, x):
        xu = self.samples @ x
        return -float(np.sum(xu * xu)) / self.n

    def _mean_gradient(self, x, idx):
        s = self.samples if idx is None else self.samples[idx]
        egrad = (-2.0 / s.shape[0]) * (s.T @ (s @ x))
        return egrad - x @ (x.T @ egrad)

    def _compute_reference(self):
        cov = self.samples.T @ self.samples / self.n
        w, v = np.linalg.eigh(sym(cov))
        top = v[:, ::-1][:, : self.r]
        return ReferenceOptimum(top, -float(np.sum(w[::-1][: self.r])), True)


class ICAProblem(Problem):
    """``F(U) = -(1/n) sum_i ||diag(U^T X_i U)||^2`` on the Stiefel manifold."""

    kind = "ica"

    def __init__(self, dataset, r=None, restarts=20, seed=0):
        r = r or dataset.r or dataset.d
        super().__init__(dataset, Stiefel(dataset.d, r))
        self.r = r
        self.restarts = restarts
        self.seed = seed

    def full_objective(self, x):
        diag = np.einsum("dk,nde,ek->nk", x, self.samples, x, optimize=True)
        return -float(np.sum(diag * diag)) / self.n

    def _mean_gradient(self, x, idx):
        s = self.samples if idx is None else self.samples[idx]
        xu = s @ x
        diag = np.einsum("dk,ndk->nk", x, xu)
        egrad = (-4.0 / s.shape[0]) * np.einsum("ndk,nk->dk", xu, diag)
        return egrad - x @ sym(x.T @ egrad)

    def _compute_reference(self):
        rng = np.random.default_rng(self.seed)
        best = None
        for _ in range(self.restarts):
            x, fx = riemannian_descent(self, self.manifold.rand_point(rng), tol=1e-8, max_iter=1000)
            if best is None or fx < best[1]:
                best = (x, fx)
        return ReferenceOptimum(best[0], best[1], False)


class RCProblem(Problem):
    """Riemannian centroid ``F(C) = (1/n) sum_i d^2(C, X_i)`` under the affine-invariant metric."""

    kind = "rc"

    def __init__(self, dataset):
        super().__init__(dataset, SPD(dataset.d))

    def _whitened_eigs(self, c, idx):
        # C = L L^T; L^{-1} X L^{-T} shares eigenvalues with C^{-1/2} X C^{-1/2}
        # and is less sensitive to ill-conditioned C.
        s = self.samples if idx is None else self.samples[idx]
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("centroid is not positive definite") from exc
        inv = solve_triangular(chol, np.eye(c.shape[0]), lower=True, check_finite=False)
        w, v = np.linalg.eigh(sym(inv @ s @ inv.T))
        return chol, w, v

    def full_objective(self, x):
        _, w, _ = self._whitened_eigs(x, None)
        return float(np.sum(np.log(w) ** 2)) / self.n

    def _mean_gradient(self, x, idx):
        # per-sample gradient is -2 Log_C(X_i) = -2 L V log(W) V^T L^T
        chol, w, v = self._whitened_eigs(x, idx)
        logs = np.mean((v * np.log(w)[:, None, :]) @ np.swapaxes(v, -1, -2), axis=0)
        return -2.0 * sym(chol @ logs @ chol.T)

    def _compute_reference(self):
        if self.n == 1:
            return ReferenceOptimum(self.samples[0].copy(), 0.0, True)
        logs = sym_mat_fn(self.samples, "log")
        w, v = np.linalg.eigh(sym(np.mean(logs, axis=0)))
        x0 = sym((v * np.exp(w)) @ v.T)
        x, fx = riemannian_descent(self, x0, step=0.5, tol=1e-10, max_iter=5000)
        return ReferenceOptimum(x, fx, True)


def make_problem(dataset, r=None, **kwargs):
    """Wrap a :class:`Dataset` in the matching problem class."""
    if dataset.kind == "pca":
        return PCAProblem(dataset, r=r)
    if dataset.kind == "ica":
        return ICAProblem(dataset, r=r, **kwargs)
    return RCProblem(dataset)


def riemannian_descent(problem, x0, step=1.0, tol=1e-10, max_iter=5000):
    """Full-gradient descent with Armijo backtracking.

    Stops when the Riemannian gradient norm drops below ``tol``. Used to
    pre-compute reference optima; the optimizers in :mod:`rsrm.optimizers`
    are the ones under study.
    """
    m = problem.manifold
    x = x0
    fx = problem.full_objective(x)
    alpha = step
    for _ in range(max_iter):
        g = problem.full_gradient(x)
        gn2 = m.inner(x, g, g)
        if np.sqrt(gn2) < tol:
            break
        alpha = min(step, 2.0 * alpha)
        flat = False
        while True:
            y = m.retract(x, -alpha * g)
            fy = problem.full_objective(y)
            if fy <= fx - 1e-4 * alpha * gn2 or alpha < 1e-20:
                break
            if abs(fy - fx) <= 1e-14 * max(1.0, abs(fx)):
                # F is flat to rounding here; judge the step by the gradient instead
                gy = problem.full_gradient(y)
                flat = m.inner(y, gy, gy) < gn2
                if flat:
                    break
            alpha *= 0.5
        if fy >= fx and alpha < 1e-20 and not flat:
            break
        x, fx = m.reorthonormalize(y), fy
    return x, problem.full_objective(x)


def _orthogonal(d, rng):
    return qr_unique(rng.standard_normal((d, d)))[0]


def synth_pca(n, d, seed, r=None):
    """Gaussian samples ``x_i = A z_i`` with singular values ``j^{-1/2}`` of ``A``."""
    rng = np.random.default_rng(seed)
    u0, v0 = _orthogonal(d, rng), _orthogonal(d, rng)
    s = np.arange(1, d + 1, dtype=float) ** -0.5
    a = (u0 * s) @ v0.T
    z = rng.standard_normal((n, d))
    return Dataset("pca", z @ a.T, r=r)


def synth_spd(n, d, cond, seed):
    """SPD matrices ``Q_i D_i Q_i^T`` whose condition number is exactly ``cond``."""
    if cond < 1:
        raise InvalidInput("condition number must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((n, d, d))
    span = np.log(cond)
    for i in range(n):
        q = _orthogonal(d, rng)
        u = rng.uniform(0.0, span, size=d)
        if d > 1:
            lo, hi = u.min(), u.max()
            u = (u - lo) / (hi - lo) * span if hi > lo else np.linspace(0.0, span, d)
        out[i] = sym((q * np.exp(u)) @ q.T)
    return Dataset("rc", out)


def synth_ica(n, d, seed, noise=0.05):
    """Nearly jointly diagonalizable symmetric matrices ``W D_i W^T + noise``."""
    rng = np.random.default_rng(seed)
    w = _orthogonal(d, rng)
    out = np.empty((n, d, d))
    for i in range(n):
        diag = rng.standard_normal(d) ** 2
        g = rng.standard_normal((d, d))
        out[i] = sym((w * diag) @ w.T + noise * sym(g))
    return Dataset("ica", out, r=d)
