"""Dense complex matrices: Hermitian functional calculus and Hilbert-Schmidt geometry.

Conventions used throughout the package:

* inner product ``<X, Y> = Tr(Y* X)``, linear in the first slot;
* matrices are flattened row-major (C order), so the map ``x -> a x b``
  has matrix ``kron(a, b.T)`` on flattened coordinates;
* "positive definite" means smallest eigenvalue above ``pd_tol(X)``,
  which is 1e-10 times the spectral norm.  Operations that need strict
  positivity fail loudly below that; nothing is ever regularized.
"""

import numpy as np

from .config import tol
from .errors import (
    DimensionMismatch,
    EmptyInput,
    InvariantViolation,
    NotHermitian,
    NotPositiveDefinite,
)


def as_matrix(x):
    """Coerce to a square complex ndarray and check the entries are finite."""
    m = np.asarray(x, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise InvariantViolation("matrix entries must be finite")
    return m


def dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


def hs_inner(x, y):
    """<X, Y> = Tr(Y* X)."""
    return complex(np.vdot(y, x))


def hs_norm(x):
    x = np.asarray(x)
    return float(np.sqrt(np.vdot(x, x).real))


def commutator(x, y):
    return x @ y - y @ x


def is_hermitian(x, atol=None):
    if atol is None:
        atol = tol(1e-10) * max(1.0, hs_norm(x))
    return hs_norm(x - dagger(x)) <= atol


class HermitianSpectrum:
    """Eigendecomposition of a Hermitian matrix: ascending eigenvalues, unitary columns."""

    def __init__(self, eigenvalues, eigenvectors):
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvectors = np.asarray(eigenvectors, dtype=complex)

    @property
    def dim(self):
        return self.eigenvectors.shape[0]

    def reconstruct(self):
        u = self.eigenvectors
        return (u * self.eigenvalues) @ dagger(u)

    def apply(self, f):
        """U f(lambda) U* for a scalar function f applied to the eigenvalues."""
        u = self.eigenvectors
        return (u * f(self.eigenvalues)) @ dagger(u)

    def support(self, threshold):
        """Spectral projection onto eigenvalues strictly above threshold."""
        u = self.eigenvectors
        mask = (self.eigenvalues > threshold).astype(float)
        return (u * mask) @ dagger(u)


def eigh_hermitian(x, atol=None):
    x = as_matrix(x)
    if not is_hermitian(x, atol):
        raise NotHermitian(f"matrix is not Hermitian within tolerance (defect {hs_norm(x - dagger(x)):.3e})")
    w, u = np.linalg.eigh((x + dagger(x)) / 2)
    return HermitianSpectrum(w, u)


def pd_tol(spectral_norm):
    """Positive-definiteness cutoff: 1e-10 times the spectral norm."""
    return tol(1e-10) * spectral_norm


def _require_pd(spec, what):
    eigs = spec.eigenvalues
    cutoff = pd_tol(float(np.max(np.abs(eigs))) if eigs.size else 0.0)
    if eigs.size == 0 or eigs[0] <= cutoff:
        raise NotPositiveDefinite(
            f"{what} needs a positive definite argument (min eigenvalue {eigs[0] if eigs.size else 0:.3e})"
        )


def matfn(x, f):
    """U f(lambda) U* for Hermitian x. f receives the real eigenvalue vector."""
    return eigh_hermitian(x).apply(f)


def matsqrt(x):
    """Square root of a Hermitian matrix; complex on negative eigenvalues so matsqrt(x)**2 == x."""
    return matfn(x, lambda v: np.sqrt(v.astype(complex)))


def psd_sqrt(x):
    """Square root of a positive semidefinite matrix, tiny negative eigenvalues clipped to zero."""
    spec = eigh_hermitian(x)
    eigs = spec.eigenvalues
    scale = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    if eigs.size and eigs[0] < -pd_tol(scale) - tol(1e-14):
        raise NotPositiveDefinite(f"matrix is not positive semidefinite (min eigenvalue {eigs[0]:.3e})")
    return spec.apply(lambda v: np.sqrt(np.clip(v, 0.0, None)))


def matexp(x):
    return matfn(x, np.exp)


def matlog(x):
    spec = eigh_hermitian(x)
    _require_pd(spec, "log")
    return spec.apply(np.log)


def matpow(x, p):
    """x**p for Hermitian x; negative p requires positive definiteness."""
    spec = eigh_hermitian(x)
    if p < 0:
        _require_pd(spec, f"power {p}")
        return spec.apply(lambda v: v**p)
    # nonnegative powers tolerate a numerically semidefinite argument
    scale = float(np.max(np.abs(spec.eigenvalues))) if spec.eigenvalues.size else 0.0
    if spec.eigenvalues.size and spec.eigenvalues[0] < -pd_tol(scale) - tol(1e-14):
        raise NotPositiveDefinite(f"power {p} of an indefinite matrix (min eigenvalue {spec.eigenvalues[0]:.3e})")
    return spec.apply(lambda v: np.clip(v, 0.0, None) ** p)


def imag_power(x, t):
    """x**(it) = exp(it log x) for positive definite Hermitian x; the result is unitary."""
    spec = eigh_hermitian(x)
    _require_pd(spec, "imaginary power")
    return spec.apply(lambda v: np.exp(1j * t * np.log(v)))


class OperatorSubspace:
    """Subspace of M_n under <X,Y> = Tr(Y*X), held as stacked orthonormal flat rows."""

    def __init__(self, ambient_dim, flat):
        self.ambient_dim = int(ambient_dim)
        self.flat = np.asarray(flat, dtype=complex).reshape(-1, self.ambient_dim**2)

    @property
    def size(self):
        return self.flat.shape[0]

    @property
    def basis(self):
        n = self.ambient_dim
        return [self.flat[i].reshape(n, n) for i in range(self.size)]

    def coords(self, x):
        x = as_matrix(x)
        if x.shape[0] != self.ambient_dim:
            raise DimensionMismatch(f"ambient dim {self.ambient_dim}, matrix dim {x.shape[0]}")
        return self.flat.conj() @ x.ravel()

    def from_coords(self, c):
        n = self.ambient_dim
        return (np.asarray(c, dtype=complex) @ self.flat).reshape(n, n)

    def project(self, x):
        return self.from_coords(self.coords(x))

    def contains(self, x, membership_tol=None):
        x = as_matrix(x)
        if membership_tol is None:
            membership_tol = tol(1e-8) * max(1.0, hs_norm(x))
        return hs_norm(x - self.project(x)) <= membership_tol

    def projector_matrix(self):
        """The n^2 x n^2 matrix of the orthogonal projection onto this subspace."""
        return self.flat.T @ self.flat.conj()

    def perp_projector_matrix(self):
        return np.eye(self.ambient_dim**2, dtype=complex) - self.projector_matrix()


def orthonormalize(spanning_set, dep_tol=None):
    """Modified Gram-Schmidt under Tr(Y*X); vectors below dep_tol are dependent and dropped."""
    mats = [as_matrix(m) for m in spanning_set]
    if not mats:
        raise EmptyInput("cannot orthonormalize an empty spanning set")
    n = mats[0].shape[0]
    for m in mats:
        if m.shape[0] != n:
            raise DimensionMismatch("spanning set mixes ambient dimensions")
    rows = np.array([m.ravel() for m in mats])
    if dep_tol is None:
        dep_tol = tol(1e-9) * float(np.max(np.linalg.norm(rows, axis=1)))
    kept = []
    for v in rows:
        v = v.copy()
        # a second orthogonalization pass keeps the basis orthonormal to machine precision
        for _ in range(2):
            for b in kept:
                v -= (b.conj() @ v) * b
        nv = np.linalg.norm(v)
        if nv > dep_tol:
            kept.append(v / nv)
    flat = np.array(kept) if kept else np.zeros((0, n * n), dtype=complex)
    return OperatorSubspace(n, flat)


def hs_project(space, x):
    """Orthogonal projection of x onto an OperatorSubspace (or anything exposing .project)."""
    return space.project(x)


def null_space_rows(a, rank_tol=None):
    """Orthonormal basis (rows) of the kernel of a, by SVD.

    The rank cutoff is 1e-9 times the largest singular value with an
    absolute floor of 1e-9, so a numerically zero matrix has full kernel.
    Callers pass O(1)-scaled data (orthonormal bases, projectors).
    """
    a = np.asarray(a, dtype=complex)
    if a.shape[0] == 0:
        return np.eye(a.shape[1], dtype=complex)
    # thin svd already carries every right-singular vector unless a is wide
    _, s, vh = np.linalg.svd(a, full_matrices=a.shape[0] < a.shape[1])
    if rank_tol is None:
        rank_tol = tol(1e-9) * max(1.0, float(s[0]) if s.size else 1.0)
    rank = int(np.sum(s > rank_tol))
    # a @ v = 0 for v a conjugated trailing right-singular vector
    return vh[rank:].conj()


def subspace_sum(*spaces):
    mats = []
    for s in spaces:
        mats.extend(s.basis)
    if not mats:
        raise EmptyInput("no subspaces to sum")
    return orthonormalize(mats)


def subspace_intersection(s, t):
    """Intersection of two subspaces: joint kernel of both orthogonal complements."""
    if s.ambient_dim != t.ambient_dim:
        raise DimensionMismatch("subspaces live in different ambient dimensions")
    stacked = np.vstack([s.perp_projector_matrix(), t.perp_projector_matrix()])
    rows = null_space_rows(stacked)
    return OperatorSubspace(s.ambient_dim, rows)


def same_subspace(s, t, atol=None):
    if s.size != t.size:
        return False
    if atol is None:
        atol = tol(1e-8)
    return all(hs_norm(b - t.project(b)) <= atol for b in s.basis) and all(
        hs_norm(b - s.project(b)) <= atol for b in t.basis
    )


def projection_isometry(p):
    """Isometry V with VV* = p, V*V = I_r; columns span the range of the projection p."""
    spec = eigh_hermitian(p)
    keep = spec.eigenvalues > 0.5
    return spec.eigenvectors[:, keep]


def _kron2(a, b):
    # np.kron for two square matrices without its shape-juggling overhead
    na, nb = a.shape[0], b.shape[0]
    out = a[:, None, :, None] * b[None, :, None, :]
    return out.reshape(na * nb, na * nb)


def sandwich_matrix(a, b):
    """Matrix of x -> a x b on row-major flattened coordinates."""
    return _kron2(np.asarray(a, dtype=complex), np.asarray(b).T)


def left_mult_matrix(a):
    n = a.shape[0]
    return _kron2(np.asarray(a, dtype=complex), np.eye(n, dtype=complex))


def right_mult_matrix(b):
    n = b.shape[0]
    return _kron2(np.eye(n, dtype=complex), np.asarray(b).T)


def apply_map(map_matrix, x):
    n = x.shape[0]
    return (map_matrix @ x.ravel()).reshape(n, n)


def map_matrix_from_action(action, n):
    """Build the n^2 x n^2 matrix of a linear map by applying it to the matrix units."""
    cols = np.zeros((n * n, n * n), dtype=complex)
    for k in range(n * n):
        e = np.zeros((n, n), dtype=complex)
        e.flat[k] = 1.0
        cols[:, k] = action(e).ravel()
    return cols


def minimal_norm_solution(rows, rhs):
    """Minimal-Frobenius-norm r with Tr(r a_j) = rhs_j for the given matrices a_j."""
    mats = [as_matrix(a) for a in rows]
    if not mats:
        raise EmptyInput("no matching constraints")
    n = mats[0].shape[0]
    system = np.array([a.T.ravel() for a in mats])  # Tr(r a) = vec(a^T) . vec(r)
    sol, *_ = np.linalg.lstsq(system, np.asarray(rhs, dtype=complex), rcond=None)
    return sol.reshape(n, n)
