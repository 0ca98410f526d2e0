"""scikit-learn style wrappers around the stochastic Riemannian solvers.

These are a thin layer: each estimator builds a problem from ``X``, runs
one optimizer from a random start and stores the result. Gap tracking is
off, so no reference optimum is computed. ``batch_size=None`` uses every
sample at every step (deterministic descent).
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix_stack, check_rank, check_vectors
from .exceptions import InvalidInput
from .optimizers import METHODS, RunConfig, default_schedule, run_method
from .problems import Dataset, ICAProblem, PCAProblem, RCProblem

__all__ = ["RiemannianPCA", "JointDiagonalizer", "RiemannianCentroid"]


class _StochasticRiemannianMixin:
    def _solve(self, problem):
        if self.solver not in METHODS:
            raise InvalidInput(f"solver must be one of {METHODS}, got {self.solver!r}")
        rng = np.random.default_rng(self.random_state)
        x1 = problem.manifold.rand_point(rng)
        sched = default_schedule(self.solver, self.eta0)
        if self.solver == "rsrm":
            sched = type(sched)(self.eta0, self.rho0, sched.eta_form, sched.rho_form)
        full = self.batch_size is None
        cfg = RunConfig(
            batch_size=1 if full else self.batch_size,
            full_batch=full,
            init_batch_size=self.init_batch_size,
            max_iters=self.max_iter,
            schedule=sched,
            log_every=self.max_iter,
            track_gap=False,
        )
        res = run_method(self.solver, problem, x1, cfg, rng=rng)
        self.n_iter_ = res.iterations
        self.n_sfo_ = res.sfo
        self.objective_ = float(problem.full_objective(res.x_final))
        self.grad_norm_ = res.trace[-1].gnorm
        return res.x_final


class RiemannianPCA(_StochasticRiemannianMixin, TransformerMixin, BaseEstimator):
    """Leading subspace of the sample covariance, found on the Grassmann manifold.

    Attributes
    ----------
    components_ : ndarray (n_components, n_features)
        Orthonormal rows spanning the subspace. The basis inside the
        subspace is arbitrary.
    mean_ : ndarray (n_features,)
    """

    def __init__(self, n_components=2, solver="rsrm", eta0=0.1, rho0=0.1, batch_size=5,
                 init_batch_size=100, max_iter=2000, center=True, random_state=None):
        self.n_components = n_components
        self.solver = solver
        self.eta0 = eta0
        self.rho0 = rho0
        self.batch_size = batch_size
        self.init_batch_size = init_batch_size
        self.max_iter = max_iter
        self.center = center
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_vectors(X)
        r = check_rank(self.n_components, X.shape[1])
        self.mean_ = X.mean(axis=0) if self.center else np.zeros(X.shape[1])
        self.n_features_in_ = X.shape[1]
        u = self._solve(PCAProblem(Dataset("pca", X - self.mean_), r=r))
        self.components_ = u.T
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_vectors(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInput(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z, dtype=float) @ self.components_ + self.mean_


class JointDiagonalizer(_StochasticRiemannianMixin, TransformerMixin, BaseEstimator):
    """Orthogonal ``U`` making every ``U^T C_i U`` as diagonal as possible.

    ``transform`` returns the diagonals ``diag(U^T C_i U)``, one row per matrix.
    """

    def __init__(self, n_components=None, solver="rsrm", eta0=0.01, rho0=0.1, batch_size=5,
                 init_batch_size=100, max_iter=2000, random_state=None):
        self.n_components = n_components
        self.solver = solver
        self.eta0 = eta0
        self.rho0 = rho0
        self.batch_size = batch_size
        self.init_batch_size = init_batch_size
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix_stack(X)
        r = check_rank(self.n_components, X.shape[1])
        self.n_features_in_ = X.shape[1]
        self.components_ = self._solve(ICAProblem(Dataset("ica", X), r=r))
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_matrix_stack(X)
        u = self.components_
        return np.einsum("ji,njk,ki->ni", u, X, u)


class RiemannianCentroid(_StochasticRiemannianMixin, TransformerMixin, BaseEstimator):
    """Affine-invariant (Karcher) mean of SPD matrices.

    ``transform`` gives each matrix's geodesic distance to ``centroid_``.
    """

    def __init__(self, solver="rsrm", eta0=0.1, rho0=0.1, batch_size=5, init_batch_size=100,
                 max_iter=1000, random_state=None):
        self.solver = solver
        self.eta0 = eta0
        self.rho0 = rho0
        self.batch_size = batch_size
        self.init_batch_size = init_batch_size
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix_stack(X, spd=True)
        self.n_features_in_ = X.shape[1]
        self._problem = RCProblem(Dataset("rc", X))
        self.centroid_ = self._solve(self._problem)
        return self

    def transform(self, X):
        check_is_fitted(self, "centroid_")
        X = check_matrix_stack(X, spd=True)
        m = self._problem.manifold
        return np.array([[m.dist(self.centroid_, a)] for a in X])
