"""Positive functionals on M_n as densities: supports, centralizers, modular flow,
and the finite-dimensional Radon-Nikodym correspondence for commuting functionals.

A functional is omega(x) = Tr(rho x) with rho positive semidefinite.  Nothing
here regularizes a singular density; non-faithful functionals are handled by
compressing to the support projection.
"""

from dataclasses import dataclass

import numpy as np

from .algebras import commutant, from_spanning
from .config import tol
from .errors import (
    DoesNotCommute,
    InconsistencyDetected,
    InvariantViolation,
    NotFaithful,
    NotHermitian,
    NotPositiveDefinite,
)
from .linalg import (
    as_matrix,
    commutator,
    dagger,
    eigh_hermitian,
    hs_norm,
    imag_power,
    is_hermitian,
    matlog,
    orthonormalize,
    pd_tol,
    projection_isometry,
    psd_sqrt,
    same_subspace,
)


class PositiveFunctional:
    """omega(x) = Tr(rho x) for positive semidefinite rho."""

    def __init__(self, density, check=True):
        self.density = as_matrix(density)
        self.n = self.density.shape[0]
        self._spectrum = None
        self._support = None
        if check:
            self.validate()

    @classmethod
    def tracial(cls, n):
        return cls(np.eye(n, dtype=complex) / n, check=False)

    def __call__(self, x):
        return complex(np.einsum("ij,ji->", self.density, np.asarray(x, dtype=complex)))

    @property
    def spectrum(self):
        if self._spectrum is None:
            self._spectrum = eigh_hermitian((self.density + dagger(self.density)) / 2)
        return self._spectrum

    def validate(self):
        scale = float(np.linalg.norm(self.density, 2))
        if not is_hermitian(self.density, tol(1e-10) * max(1.0, scale)):
            raise NotHermitian("density must be Hermitian")
        low = self.spectrum.eigenvalues[0] if self.n else 0.0
        if low < -tol(1e-10) * max(1.0, scale):
            raise NotPositiveDefinite(f"density has negative eigenvalue {low:.3e}")

    @property
    def trace(self):
        return float(np.trace(self.density).real)

    @property
    def is_state(self):
        return abs(self.trace - 1.0) <= tol(1e-10)

    @property
    def is_faithful(self):
        eigs = self.spectrum.eigenvalues
        return bool(eigs.size and eigs[0] > pd_tol(float(eigs[-1])))

    @property
    def support(self):
        if self._support is None:
            cutoff = pd_tol(float(self.spectrum.eigenvalues[-1])) if self.n else 0.0
            self._support = self.spectrum.support(cutoff)
        return self._support

    def restricted_density(self, algebra):
        """Orthogonal projection of the density onto the algebra's span.

        For a *-subalgebra this is the density of the restriction: the
        projected matrix represents omega on the subalgebra and is again
        positive semidefinite.
        """
        space = algebra.space if hasattr(algebra, "space") else algebra
        return space.project(self.density)

    def support_in(self, algebra):
        """Support projection of the restriction to a *-subalgebra; lies in the algebra."""
        rd = self.restricted_density(algebra)
        spec = eigh_hermitian((rd + dagger(rd)) / 2)
        return spec.support(pd_tol(float(np.max(np.abs(spec.eigenvalues)))))


def support_projection(omega):
    """Spectral projection onto the nonzero part of the density."""
    return omega.support


def _faithful_on(omega, algebra):
    """omega(x*x) > 0 for nonzero x in the algebra, decided by its Gram matrix."""
    b = np.stack([np.asarray(m) for m in algebra.basis])
    gram = np.einsum("ij,ajk,bki->ab", omega.density, np.conj(np.transpose(b, (0, 2, 1))), b)
    gram = (gram + dagger(gram)) / 2
    eigs = np.linalg.eigvalsh(gram)
    return bool(eigs[0] > tol(1e-10) * max(1.0, float(eigs[-1])))


@dataclass
class TracialCertificate:
    algebra: object
    result: bool
    max_violation: float


def tracial_certificate(omega, algebra):
    """Largest |omega(xy) - omega(yx)| over basis pairs; result true iff below 1e-9 x ||rho||."""
    b = np.stack([np.asarray(m) for m in algebra.basis])
    t1 = np.einsum("ij,ajk,bki->ab", omega.density, b, b)
    violation = float(np.abs(t1 - t1.T).max()) if b.size else 0.0
    return TracialCertificate(algebra, violation <= tol(1e-9) * hs_norm(omega.density), violation)


def centralizer(omega, m):
    """{a in M : omega(ax) = omega(xa) for all x in M}, for omega faithful on M.

    Equals the commutant of the projected density inside M.
    """
    if not _faithful_on(omega, m):
        raise NotFaithful("centralizer needs omega faithful on the algebra; use omega_central_algebra")
    return commutant([omega.restricted_density(m)], m)


def omega_central_algebra(omega, m):
    """{x in M : [x, e] = 0 and omega(xy) = omega(yx) for all y in M}, e the support.

    Works for non-faithful omega; with faithful omega it coincides with centralizer.
    """
    e = omega.support
    return commutant([e, omega.restricted_density(m)], m)


def check_support_compression(omega, m):
    """Compress M to the support e: e M^omega e must equal the centralizer of the
    compressed functional on eMe."""
    e = omega.support
    if not m.contains(e):
        raise InvariantViolation("support projection must lie in the algebra for compression")
    v = projection_isometry(e)
    compressed = from_spanning([dagger(v) @ w @ v for w in m.basis])
    omega_c = PositiveFunctional(dagger(v) @ omega.density @ v)
    rhs = centralizer(omega_c, compressed)
    lhs = orthonormalize([dagger(v) @ x @ v for x in omega_central_algebra(omega, m).basis])
    return same_subspace(lhs, rhs.space)


def _central_violation(omega, d, m):
    """max |omega(dx) - omega(xd)| over basis(D) x basis(M)."""
    db = np.stack([np.asarray(x) for x in d.basis])
    mb = np.stack([np.asarray(x) for x in m.basis])
    comm = np.einsum("ij,ajk->aik", omega.density, db) - np.einsum("aij,jk->aik", db, omega.density)
    vals = np.einsum("aij,bji->ab", comm, mb)
    return float(np.abs(vals).max())


def is_D_central(omega, d, m):
    """Does omega(dx) = omega(xd) hold for d in D, x in M?  Returns (verdict, violation).

    Two routes: the bilinear one above decides; the commutator route
    [P_M(rho), d] = 0 must agree when both are far from their thresholds.
    """
    violation = _central_violation(omega, d, m)
    threshold = tol(1e-9) * max(1e-30, hs_norm(omega.density))
    verdict = violation <= threshold
    r = omega.restricted_density(m)
    comm_violation = max((hs_norm(commutator(r, x)) for x in d.basis), default=0.0)
    comm_threshold = tol(1e-9) * max(1e-30, hs_norm(r))
    comm_verdict = comm_violation <= comm_threshold
    decisive = (
        max(violation, threshold) > 30 * min(violation, threshold)
        and max(comm_violation, comm_threshold) > 30 * min(comm_violation, comm_threshold)
    )
    if verdict != comm_verdict and decisive:
        raise InconsistencyDetected(
            f"centrality routes disagree: bilinear {violation:.3e}, commutator {comm_violation:.3e}"
        )
    return verdict, violation


def _spectral_projections_in(h):
    """Lower spectral projections of a Hermitian element (each one is a polynomial in it)."""
    spec = eigh_hermitian(h)
    eigs = spec.eigenvalues
    out = []
    cut = tol(1e-8) * max(1.0, float(np.abs(eigs).max()) if eigs.size else 1.0)
    for k in range(len(eigs) - 1):
        if eigs[k + 1] - eigs[k] > cut:
            mask = np.concatenate([np.ones(k + 1), np.zeros(len(eigs) - k - 1)])
            u = spec.eigenvectors
            out.append((u * mask) @ dagger(u))
    return out


def sample_projections(d, cap=64, rng_seed=0):
    """Projections in a *-algebra: I plus spectral projections of Hermitian combinations.

    Small algebras have few distinct projections, so the number of random
    draws is bounded instead of insisting on cap distinct results.
    """
    n = d.n
    projections = [np.eye(n, dtype=complex)]
    rng = np.random.default_rng(rng_seed)
    hermitian_basis = []
    for b in d.basis:
        for h in ((b + dagger(b)) / 2, (b - dagger(b)) / 2j):
            if hs_norm(h) > tol(1e-12):
                hermitian_basis.append(h)
    for _ in range(4 * cap):
        if len(projections) >= cap or not hermitian_basis:
            break
        coeffs = rng.standard_normal(len(hermitian_basis))
        h = np.tensordot(coeffs, np.stack(hermitian_basis), axes=1)
        for p in _spectral_projections_in(h):
            if len(projections) >= cap:
                break
            if all(hs_norm(p - q) > tol(1e-8) for q in projections):
                projections.append(p)
    return projections


def locally_central_check(omega, d, m, cap_proj=64):
    """Test omega(pxpdp) = omega(pdpxp) over sampled projections p in D.

    With the identity always in the sample this contains the global
    centrality identity; together with [e, D] = 0 the verdict must match
    is_D_central, and a decisive mismatch is an internal fault.
    """
    db = np.stack([np.asarray(x) for x in d.basis])
    mb = np.stack([np.asarray(x) for x in m.basis])
    rho = omega.density
    worst = 0.0
    for p in sample_projections(d, cap_proj):
        k = p @ rho @ p
        # omega(pxpdp) - omega(pdpxp) = Tr((p d k - k d p) x)
        left = np.einsum("ij,ajk,kl->ail", p, db, k) - np.einsum("ij,ajk,kl->ail", k, db, p)
        vals = np.einsum("aij,bji->ab", left, mb)
        worst = max(worst, float(np.abs(vals).max()))
    threshold = tol(1e-9) * max(1e-30, hs_norm(rho))
    verdict = worst <= threshold
    e = omega.support
    e_commutes = max((hs_norm(commutator(e, x)) for x in d.basis), default=0.0) <= tol(1e-9)
    global_verdict, global_violation = is_D_central(omega, d, m)
    combined = verdict and e_commutes
    decisive = max(worst, threshold) > 30 * min(worst, threshold) and (
        max(global_violation, threshold) > 30 * min(global_violation, threshold)
    )
    if combined != global_verdict and decisive:
        raise InconsistencyDetected(
            f"local centrality ({worst:.3e}, support commutes: {e_commutes}) "
            f"contradicts the global test ({global_violation:.3e})"
        )
    return verdict


def modular_group(omega, t):
    """The map x -> rho^{it} x rho^{-it}; needs a faithful functional."""
    if not omega.is_faithful:
        raise NotFaithful("modular group needs a faithful density")
    u = imag_power(omega.density, t)
    uh = dagger(u)

    def sigma(x):
        return u @ x @ uh

    return sigma


def modular_invariance_check(omega, d, sample_ts=(0.1, 1.0, np.pi)):
    """Is span(D) invariant under the modular flow of omega?

    Decided infinitesimally: [log rho, d] must stay in span(D) for every
    basis element (a one-parameter group preserves a subspace iff its
    generator does).  Cross-validated by sampling the flow itself.
    """
    if not omega.is_faithful:
        raise NotFaithful("modular invariance needs a faithful density")
    log_rho = matlog(omega.density)
    gaps = [hs_norm(x - d.project(x)) for x in (commutator(log_rho, b) for b in d.basis)]
    worst = max(gaps, default=0.0)
    threshold = tol(1e-8) * max(1.0, hs_norm(log_rho))
    verdict = worst <= threshold
    sampled_worst = 0.0
    for t in sample_ts:
        sigma = modular_group(omega, t)
        for b in d.basis:
            y = sigma(b)
            sampled_worst = max(sampled_worst, hs_norm(y - d.project(y)))
    sampled_threshold = tol(1e-8)
    sampled_verdict = sampled_worst <= sampled_threshold
    decisive = max(worst, threshold) > 30 * min(worst, threshold) and (
        max(sampled_worst, sampled_threshold) > 30 * min(sampled_worst, sampled_threshold)
    )
    if verdict != sampled_verdict and decisive:
        raise InconsistencyDetected(
            f"infinitesimal modular criterion ({worst:.3e}) contradicts sampled flow ({sampled_worst:.3e})"
        )
    return verdict


def pt_radon_nikodym(psi, phi):
    """Density h with psi(x) = phi(h^{1/2} x h^{1/2}), for psi commuting with phi.

    Exists exactly when the two densities commute; h is then the ratio
    of the densities and commutes with both.
    """
    if not phi.is_faithful:
        raise NotFaithful("the reference functional must be faithful")
    rp, rf = psi.density, phi.density
    gap = hs_norm(commutator(rp, rf))
    if gap > tol(1e-9) * max(1e-30, hs_norm(rp) * hs_norm(rf)):
        raise DoesNotCommute(f"densities do not commute (defect {gap:.3e}); no derivative exists")
    root_inv = np.linalg.inv(psd_sqrt(rf))
    h = root_inv @ rp @ root_inv
    h = (h + dagger(h)) / 2
    hr = psd_sqrt(h)
    defect = hs_norm(hr @ rf @ hr - rp)
    if defect > tol(1e-8) * max(1e-30, hs_norm(rp)):
        raise InvariantViolation(f"derivative verification failed (defect {defect:.3e})")
    if hs_norm(commutator(h, rf)) > tol(1e-8) * max(1e-30, hs_norm(h) * hs_norm(rf)):
        raise InvariantViolation("derivative does not commute with the reference density")
    return h


def connes_cocycle(psi, phi, t):
    """u_t = rho_psi^{it} rho_phi^{-it} for faithful psi, phi."""
    if not psi.is_faithful or not phi.is_faithful:
        raise NotFaithful("cocycle needs faithful functionals")
    return imag_power(psi.density, t) @ imag_power(phi.density, -t)
