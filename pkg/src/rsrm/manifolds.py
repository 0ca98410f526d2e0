"""Matrix manifolds with retraction and vector transport.

Points and tangent vectors are plain ``numpy`` arrays; the manifold object
carries the geometry. A tangent vector is compatible with a point when the
two arrays share a shape, and mixing incompatible arrays raises
:class:`~rsrm.exceptions.BaseMismatch`.
"""
import numpy as np

from .exceptions import BaseMismatch, InvalidInput, RankDeficient, RetractFailed
from .linalg import qr_unique, sym, sym_mat_fns

__all__ = ["Manifold", "Grassmann", "Stiefel", "SPD", "Euclidean", "manifold_from_tag"]


class Manifold:
    """Common interface. Subclasses implement the geometry for one shape."""

    name = "manifold"
    #: Whether :meth:`transport` preserves inner products exactly.
    isometric_transport = False

    @property
    def shape(self):
        raise NotImplementedError

    @property
    def tag(self):
        raise NotImplementedError

    def __repr__(self):
        return self.tag

    def __eq__(self, other):
        return type(self) is type(other) and self.tag == other.tag

    def __hash__(self):
        return hash(self.tag)

    def _check_ambient(self, a, what="matrix"):
        a = np.asarray(a, dtype=float)
        if a.shape != self.shape:
            raise InvalidInput(f"{what} has shape {a.shape}, expected {self.shape}")
        return a

    def _check_base(self, x, *vecs):
        for u in vecs:
            if np.shape(u) != np.shape(x):
                raise BaseMismatch(
                    f"tangent vector of shape {np.shape(u)} used at point of shape {np.shape(x)}"
                )

    def inner(self, x, u, v):
        self._check_base(x, u, v)
        return float(np.vdot(u, v))

    def norm(self, x, u):
        return float(np.sqrt(max(self.inner(x, u, u), 0.0)))

    def project(self, x, a):
        raise NotImplementedError

    def egrad_to_rgrad(self, x, g):
        return self.project(x, g)

    def retract(self, x, xi):
        raise NotImplementedError

    def transport(self, x, y, u):
        self._check_base(x, u)
        self._check_base(y, u)
        return self.project(y, u)

    def reorthonormalize(self, x):
        """Pull a drifting point back onto the manifold. No-op by default."""
        return x

    def rand_point(self, rng):
        raise NotImplementedError

    def rand_tangent(self, x, rng):
        """Random tangent vector at ``x`` with unit norm."""
        u = self.project(x, rng.standard_normal(self.shape))
        n = self.norm(x, u)
        if n < 1e-10:  # projection of an O(1) Gaussian is O(1) unless the space is trivial
            raise InvalidInput(f"{self.tag} has a zero-dimensional tangent space")
        return u / n

    def zero_vector(self, x):
        return np.zeros(self.shape)

    def point_error(self, x):
        """Violation of the point invariants (0 for an exact point)."""
        raise NotImplementedError

    def tangent_error(self, x, u):
        """Violation of the tangency invariants (0 for an exact tangent)."""
        raise NotImplementedError

    def ambient_distance(self, x, y):
        return float(np.linalg.norm(np.asarray(x) - np.asarray(y)))


class _Orthonormal(Manifold):
    """Shared machinery for d x r matrices with orthonormal columns."""

    def __init__(self, d, r):
        d, r = int(d), int(r)
        if not 1 <= r <= d:
            raise InvalidInput(f"need 1 <= r <= d, got d={d}, r={r}")
        self.d, self.r = d, r

    @property
    def shape(self):
        return (self.d, self.r)

    @property
    def tag(self):
        return f"{self.name}({self.d},{self.r})"

    def retract(self, x, xi):
        self._check_base(x, xi)
        try:
            q, _ = qr_unique(x + xi)
        except RankDeficient as exc:
            raise RetractFailed(str(exc)) from exc
        return q

    def reorthonormalize(self, x):
        return qr_unique(x)[0]

    def rand_point(self, rng):
        return qr_unique(rng.standard_normal(self.shape))[0]

    def point_error(self, x):
        return float(np.linalg.norm(x.T @ x - np.eye(self.r)))


class Grassmann(_Orthonormal):
    """Grassmann manifold of r-dimensional subspaces of R^d.

    A subspace is stored as any orthonormal basis ``X``; ``X @ R`` with ``R``
    orthogonal denotes the same point. Tangent vectors are horizontal,
    ``X^T u = 0``.
    """

    name = "grassmann"

    def project(self, x, a):
        a = self._check_ambient(a)
        return a - x @ (x.T @ a)

    def tangent_error(self, x, u):
        return float(np.linalg.norm(x.T @ u))


class Stiefel(_Orthonormal):
    """Stiefel manifold of d x r matrices with orthonormal columns, embedded metric."""

    name = "stiefel"

    def project(self, x, a):
        a = self._check_ambient(a)
        return a - x @ sym(x.T @ a)

    def tangent_error(self, x, u):
        xu = x.T @ u
        return float(np.linalg.norm(xu + xu.T))


class SPD(Manifold):
    """Symmetric positive definite d x d matrices with the affine-invariant metric.

    The retraction is the exponential map and the transport is parallel
    transport, so the transport is an isometry.
    """

    name = "spd"
    isometric_transport = True

    def __init__(self, d):
        d = int(d)
        if d < 1:
            raise InvalidInput(f"need d >= 1, got {d}")
        self.d = d

    @property
    def shape(self):
        return (self.d, self.d)

    @property
    def tag(self):
        return f"spd({self.d})"

    def inner(self, x, u, v):
        self._check_base(x, u, v)
        xu = np.linalg.solve(x, u)
        xv = xu if v is u else np.linalg.solve(x, v)
        return float(np.sum(xu * xv.T))

    def project(self, x, a):
        a = self._check_ambient(a)
        return sym(a)

    def egrad_to_rgrad(self, x, g):
        g = self._check_ambient(g)
        return sym(x @ sym(g) @ x)

    def exp(self, x, xi):
        """Exponential map ``X^{1/2} expm(X^{-1/2} xi X^{-1/2}) X^{1/2}``."""
        self._check_base(x, xi)
        s, si = sym_mat_fns(x, "sqrt", "inv_sqrt")
        w, v = np.linalg.eigh(sym(si @ xi @ si))
        with np.errstate(over="ignore", under="ignore"):
            ew = np.exp(w)
        if not np.all(np.isfinite(ew)) or ew[0] <= 0:
            raise RetractFailed("matrix exponential under/overflowed")
        sv = s @ v
        y = sym((sv * ew) @ sv.T)
        wy = np.linalg.eigvalsh(y)
        if not wy[0] > 1e-12 * wy[-1]:
            raise RetractFailed("retraction left the numerically positive definite cone")
        return y

    retract = exp

    def log(self, x, y):
        """Inverse of :meth:`exp`: ``X^{1/2} logm(X^{-1/2} Y X^{-1/2}) X^{1/2}``."""
        s, si = sym_mat_fns(x, "sqrt", "inv_sqrt")
        w, v = np.linalg.eigh(sym(si @ y @ si))
        sv = s @ v
        return sym((sv * np.log(w)) @ sv.T)

    def dist(self, x, y):
        """Geodesic distance ``||logm(X^{-1/2} Y X^{-1/2})||_F``."""
        si = sym_mat_fns(x, "inv_sqrt")[0]
        w = np.linalg.eigvalsh(sym(si @ y @ si))
        return float(np.sqrt(np.sum(np.log(w) ** 2)))

    def transport_map(self, x, y):
        """Matrix ``E = (Y X^{-1})^{1/2}`` so that transport is ``E u E^T``.

        Evaluated as ``X^{1/2} (X^{-1/2} Y X^{-1/2})^{1/2} X^{-1/2}``.
        """
        s, si = sym_mat_fns(x, "sqrt", "inv_sqrt")
        m = sym_mat_fns(sym(si @ y @ si), "sqrt")[0]
        return s @ m @ si

    def transport(self, x, y, u):
        self._check_base(x, u)
        self._check_base(y, u)
        e = self.transport_map(x, y)
        return sym(e @ u @ e.T)

    def rand_point(self, rng):
        a = rng.standard_normal(self.shape)
        return sym(a @ a.T) + 1e-3 * self.d * np.eye(self.d)

    def point_error(self, x):
        asym = float(np.max(np.abs(x - x.T)))
        if np.linalg.eigvalsh(sym(x))[0] <= 0:
            return np.inf
        return asym

    def tangent_error(self, x, u):
        return float(np.max(np.abs(u - u.T)))

    def ambient_distance(self, x, y):
        return float(np.linalg.norm(x - y))


class Euclidean(Manifold):
    """Flat space of arrays of a fixed shape with identity retraction and transport."""

    name = "euclidean"
    isometric_transport = True

    def __init__(self, *shape):
        self._shape = tuple(int(s) for s in shape) or (1,)

    @property
    def shape(self):
        return self._shape

    @property
    def tag(self):
        return "euclidean(" + ",".join(map(str, self._shape)) + ")"

    def project(self, x, a):
        return self._check_ambient(a).copy()

    def retract(self, x, xi):
        self._check_base(x, xi)
        return x + xi

    def transport(self, x, y, u):
        self._check_base(x, u)
        self._check_base(y, u)
        return u

    def rand_point(self, rng):
        return rng.standard_normal(self.shape)

    def point_error(self, x):
        return 0.0

    def tangent_error(self, x, u):
        return 0.0


def manifold_from_tag(tag):
    """Inverse of ``Manifold.tag``, e.g. ``'grassmann(50,5)'``."""
    name, _, rest = tag.partition("(")
    args = [int(a) for a in rest.rstrip(")").split(",") if a]
    table = {"grassmann": Grassmann, "stiefel": Stiefel, "spd": SPD, "euclidean": Euclidean}
    if name not in table:
        raise InvalidInput(f"unknown manifold tag {tag!r}")
    return table[name](*args)
