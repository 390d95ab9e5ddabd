"""Characters on triangular-type subalgebras and their representing expectations.

Given an inclusion D <= A <= M with D a *-subalgebra, A merely a subalgebra,
and a character Phi : A -> D (unital, multiplicative, fixes D, D-bimodule),
the pipelines here produce a conditional expectation Psi : M -> D with
Psi|_A = Phi together with a state rho that Psi preserves.  rho acts as a
noncommutative representing measure: it agrees with the reference functional
composed with Phi on all of A, which forces it to annihilate ker(Phi).

The core construction matches a density r for the functional x -> ref(Phi(x))
on A, factors r = a b* by polar decomposition, and projects b onto the left
multiples of a by A.  The projected factor c satisfies Tr(j c c*) = 0 for
every j in ker(Phi) because ker(Phi)c lands inside the multiples of a by the
kernel, which b (hence c) is orthogonal to.  Conjugating cc* into a properly
normalized density and averaging over the relative commutant of D yields rho.
"""

import numpy as np

from .algebras import (
    block_diagonal_algebra,
    block_upper_triangular,
    check_ss_density,
    diagonal_part_check,
    from_spanning,
    full_matrix_algebra,
)
from .config import tol
from .errors import (
    BadPartition,
    DimensionMismatch,
    EmptyInput,
    GSingular,
    InconsistencyDetected,
    InvariantViolation,
    NotAbelian,
    NotAnExtension,
    NotCentral,
    NotCentralInD,
    NotDense,
    NotFaithful,
    NotTracial,
    ProjectionsNotPartition,
)
from .expectations import (
    ConditionalExpectation,
    _pullback_density,
    average_to_central,
    preserving_expectation,
)
from .linalg import (
    OperatorSubspace,
    apply_map,
    as_matrix,
    commutator,
    dagger,
    eigh_hermitian,
    hs_norm,
    hs_project,
    minimal_norm_solution,
    null_space_rows,
    orthonormalize,
    pd_tol,
    projection_isometry,
    psd_sqrt,
    sandwich_matrix,
    left_mult_matrix,
    right_mult_matrix,
    subspace_sum,
)
from .states import PositiveFunctional, _faithful_on, is_D_central, tracial_certificate

# condition-number cap for inverting the D-average of cc*; it is invertible in
# exact arithmetic, so anything beyond this is a numerical failure to report
G_CONDITION_CAP = 1e12


class DCharacter:
    """Unital multiplicative D-bimodule map Phi from a subalgebra A onto D <= A.

    The map matrix acts on flattened matrices and is composed with the
    orthogonal projection onto span(A), so it is defined everywhere but only
    meaningful on A.  The kernel J = ker(Phi) complements D inside A
    (A = J + D as a direct sum) and satisfies D J D <= J; it is exactly the
    part of A a representing functional has to annihilate.
    """

    def __init__(self, map_matrix, domain, range_alg, check=True):
        self.map_matrix = np.asarray(map_matrix, dtype=complex)
        self.domain = domain
        self.range_alg = range_alg
        self.n = domain.n
        self.blocks = None
        self.kernel = self._kernel_space()
        if check:
            self.validate()

    def __call__(self, x):
        return apply_map(self.map_matrix, as_matrix(x))

    def _kernel_space(self):
        flat = self.domain.space.flat
        coeffs = null_space_rows(self.map_matrix @ flat.T)
        return OperatorSubspace(self.n, coeffs @ flat)

    def validate(self):
        k = self.map_matrix
        n = self.n
        eye = np.eye(n, dtype=complex)
        gap = hs_norm(self(eye) - eye)
        if gap > tol(1e-9) * np.sqrt(n):
            raise InvariantViolation(f"unital: Phi(I) misses I by {gap:.3e}")
        for x in self.range_alg.basis:
            if not self.domain.contains(x):
                raise InvariantViolation("range: D is not inside A")
            fix = hs_norm(self(x) - x)
            if fix > tol(1e-8) * max(1.0, hs_norm(x)):
                raise InvariantViolation(f"fixes D: Phi moves a D element by {fix:.3e}")
        into = float(np.linalg.norm(self.range_alg.space.perp_projector_matrix() @ k))
        if into > tol(1e-8) * max(1.0, float(np.linalg.norm(k))):
            raise InvariantViolation(f"range: Phi output leaves span(D) by {into:.3e}")
        b = np.stack(self.domain.basis)
        prods = np.einsum("aij,bjk->abik", b, b).reshape(-1, n * n)
        images = (b.reshape(-1, n * n) @ k.T).reshape(-1, n, n)
        want = np.einsum("aij,bjk->abik", images, images).reshape(-1, n * n)
        defects = np.linalg.norm(prods @ k.T - want, axis=1)
        allowed = tol(1e-8) * np.maximum(1.0, np.linalg.norm(prods, axis=1))
        if np.any(defects > allowed):
            raise InvariantViolation(
                f"multiplicative: Phi(xy) != Phi(x)Phi(y), defect {defects.max():.3e}"
            )
        p_a = self.domain.space.projector_matrix()
        for d in self.range_alg.basis:
            for side in (left_mult_matrix(d), right_mult_matrix(d)):
                gap = float(np.linalg.norm((k @ side - side @ k) @ p_a))
                if gap > tol(1e-8) * max(1.0, float(np.linalg.norm(k))) * np.sqrt(n):
                    raise InvariantViolation(f"bimodule: Phi(d x d') != d Phi(x) d' by {gap:.3e}")
        if self.kernel.size + self.range_alg.dim != self.domain.dim:
            raise InvariantViolation(
                f"splitting: dim J + dim D = {self.kernel.size} + {self.range_alg.dim}"
                f" != dim A = {self.domain.dim}"
            )
        if subspace_sum(self.kernel, self.range_alg.space).size != self.domain.dim:
            raise InvariantViolation("splitting: J and D overlap")
        rng = np.random.default_rng(1)
        for _ in range(8):
            coeff = rng.standard_normal(self.domain.dim) + 1j * rng.standard_normal(self.domain.dim)
            x = self.domain.space.from_coords(coeff)
            grow = np.linalg.norm(self(x), 2) - np.linalg.norm(x, 2)
            if grow > tol(1e-8) * max(1.0, np.linalg.norm(x, 2)):
                raise InvariantViolation(f"contractive: operator norm grows by {grow:.3e}")


def make_block_character(n, blocks):
    """Canonical instance family: A = block upper triangular, D = block diagonal,
    Phi = compression onto the diagonal blocks, all for an ordered partition."""
    blocks = [list(blk) for blk in blocks]
    if sorted(i for blk in blocks for i in blk) != list(range(n)) or any(not blk for blk in blocks):
        raise BadPartition(f"blocks must partition range({n}), got {blocks}")
    a = block_upper_triangular(n, blocks)
    d = block_diagonal_algebra(n, blocks)
    k = np.zeros((n * n, n * n), dtype=complex)
    for blk in blocks:
        p = np.zeros((n, n), dtype=complex)
        p[blk, blk] = 1.0
        k += sandwich_matrix(p, p)
    phi = DCharacter(k @ a.space.projector_matrix(), a, d)
    phi.blocks = [list(blk) for blk in blocks]
    m = full_matrix_algebra(n)
    if not check_ss_density(a, m):
        raise InvariantViolation("A + A* should span M for a triangular partition")
    if not diagonal_part_check(a, d, phi):
        raise InvariantViolation("A intersect A* should be exactly D")
    return a, d, phi


def _matched_density(constraint_mats, values, m, perturb, rng_seed):
    """Minimal-norm r with Tr(r x) = value for each constraint matrix x.

    The minimal-norm solution lies in the span of the adjoints of the
    constraints, hence inside span(M).  A nonzero perturb shifts r inside the
    constraint kernel intersected with span(M): the matching is untouched but
    downstream results can be probed for dependence on the choice of r.
    """
    values = np.asarray(values, dtype=complex)
    r = minimal_norm_solution(constraint_mats, values)
    system = np.array([as_matrix(x).T.ravel() for x in constraint_mats])
    resid = float(np.linalg.norm(system @ r.ravel() - values))
    if resid > tol(1e-9) * max(1.0, float(np.linalg.norm(values))):
        raise InvariantViolation(f"matching: constraints unsatisfied (residual {resid:.3e})")
    if perturb:
        rng = np.random.default_rng(rng_seed)
        coeff = rng.standard_normal(m.dim) + 1j * rng.standard_normal(m.dim)
        z = m.space.from_coords(coeff)
        matched_part = minimal_norm_solution(constraint_mats, system @ z.ravel())
        z -= matched_part
        if hs_norm(z) > tol(1e-12):
            r = r + (perturb * hs_norm(r) / hs_norm(z)) * z
    return r


def _polar_factors(r):
    """r = a b* with a = u |r|^(1/2), b = |r|^(1/2) and u the polar partial isometry.

    Both factors are functions of r and r*r, so they stay inside any
    *-algebra containing r."""
    spec = eigh_hermitian(psd_sqrt(dagger(r) @ r))
    cut = pd_tol(float(np.max(np.abs(spec.eigenvalues))))
    a = r @ spec.apply(lambda v: np.where(v > cut, 1.0 / np.sqrt(np.clip(v, cut, None)), 0.0))
    b = spec.apply(lambda v: np.sqrt(np.clip(v, 0.0, None)))
    gap = hs_norm(a @ dagger(b) - r)
    if gap > tol(1e-8) * max(1.0, hs_norm(r)):
        raise InvariantViolation(f"factorization: a b* misses r by {gap:.3e}")
    return a, b


def _projected_factor(a_alg, kernel, a_mat, b_mat, weight=None):
    """c = projection of b onto span{x a : x in A}, orthogonal to span{j a : j in J}.

    A positive-definite weight w switches the inner product to Tr(w y* x),
    realized by right-multiplying every vector with w^(1/2)."""
    n = a_mat.shape[0]
    sqw = psd_sqrt(weight) if weight is not None else np.eye(n, dtype=complex)
    reach = orthonormalize([x @ a_mat @ sqw for x in a_alg.basis])
    bt = b_mat @ sqw
    ct = hs_project(reach, bt)
    scale = max(1.0, hs_norm(bt))
    for j in kernel.basis:
        f = j @ a_mat @ sqw
        for vec, who in ((bt, "b"), (ct, "c")):
            overlap = abs(np.vdot(f, vec))
            if overlap > tol(1e-8) * scale * max(1.0, hs_norm(f)):
                raise InvariantViolation(
                    f"kernel orthogonality: {who} overlaps ker(Phi)·a by {overlap:.3e}"
                )
    if weight is None:
        return ct
    inv_sqw = eigh_hermitian(weight).apply(lambda v: 1.0 / np.sqrt(v))
    return ct @ inv_sqw


def _invertible_average(g, what):
    """Spectral data of g, gated on positivity and a hard condition-number cap."""
    g = (g + dagger(g)) / 2
    spec = eigh_hermitian(g)
    eigs = spec.eigenvalues
    top = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    if eigs.size == 0 or eigs[0] <= 0.0 or top > G_CONDITION_CAP * eigs[0]:
        raise GSingular(
            f"{what} is numerically singular (eigenvalues {eigs[0]:.3e}..{eigs[-1]:.3e},"
            f" condition cap {G_CONDITION_CAP:.0e})"
        )
    return spec


def _check_extends_character(e, phi, rtol=1e-7):
    p_a = phi.domain.space.projector_matrix()
    gap = float(np.linalg.norm((e.map_matrix - phi.map_matrix) @ p_a))
    if gap > tol(rtol) * max(1.0, float(np.linalg.norm(phi.map_matrix))):
        raise InvariantViolation(f"extension: Psi differs from Phi on A by {gap:.3e}")


def _check_represents(rho, phi, values, what):
    # rho must keep the matched values on all of A, not merely on D: averaging
    # moves the functional only inside the relative commutant of D
    for x, v in zip(phi.domain.basis, values):
        if abs(rho(x) - v) > tol(1e-8) * max(1.0, abs(v)):
            raise InvariantViolation(f"{what} no longer represents the character on A")


def _check_annihilates(functional, kernel, what):
    for j in kernel.basis:
        val = abs(functional(j))
        if val > tol(1e-8):
            raise InvariantViolation(f"{what} does not annihilate ker(Phi) ({val:.3e})")


def representing_expectation_tracial(m, tau, d, a, phi, perturb_r=0.0, rng_seed=0):
    """Expectation M -> D extending the character, preserving a tau-built state.

    Works in the inner product Tr(k y* x) with k the density of tau on M;
    for the normalized trace k is scalar and this is the plain Hilbert-Schmidt
    geometry.  Returns (Psi, rho) with Psi|_A = Phi, rho∘Psi = rho and
    rho|_A = tau∘Phi.
    """
    cert = tracial_certificate(tau, m)
    if not cert.result:
        raise NotTracial(f"reference is not tracial on M (violation {cert.max_violation:.3e})")
    if not _faithful_on(tau, m):
        raise NotFaithful("reference is not faithful on M")
    k = tau.restricted_density(m)
    k = (k + dagger(k)) / 2
    # tracial <=> k commutes with M, so k-weighted projections stay M-compatible
    values = [tau(phi(x)) for x in a.basis]
    r = _matched_density([x @ k for x in a.basis], values, m, perturb_r, rng_seed)
    a_mat, b_mat = _polar_factors(r)
    c = _projected_factor(a, phi.kernel, a_mat, b_mat, weight=k)
    e_d = preserving_expectation(tau, d, m)
    g = e_d(c @ dagger(c))
    spec_g = _invertible_average(g, "the D-average of cc*")
    inv_sq = spec_g.apply(lambda v: 1.0 / np.sqrt(v))
    h = inv_sq @ (c @ dagger(c)) @ inv_sq
    norm_gap = hs_norm(e_d(h) - np.eye(m.n))
    if norm_gap > tol(1e-7) * np.sqrt(m.n):
        raise InvariantViolation(f"normalization: E_D(h) misses I by {norm_gap:.3e}")
    kh = k @ h
    omega = PositiveFunctional((kh + dagger(kh)) / 2)
    _check_annihilates(omega, phi.kernel, "the normalized state")
    rho = average_to_central(omega, tau, d, m)
    _check_represents(rho, phi, values, "the averaged state")
    psi = preserving_expectation(rho, d, m)
    _check_extends_character(psi, phi)
    return psi, rho


def representing_expectation_state(m, omega, d, a, phi, perturb_r=0.0, rng_seed=0):
    """Same construction for a faithful state whose density commutes with D.

    The matching and the projection of b run in the plain trace pairing; the
    weight enters only through the D-average, taken on the conjugated matrix
    k^(-1/2) cc* k^(-1/2) so that the resulting density extends omega on D.
    Returns (Psi, rho) with Psi|_A = Phi, rho∘Psi = rho and rho|_A = omega∘Phi.
    """
    ok, violation = is_D_central(omega, d, m)
    if not ok:
        raise NotCentral(f"D is not inside the centralizer of omega (violation {violation:.3e})")
    if not _faithful_on(omega, m):
        raise NotFaithful("omega is not faithful on M")
    k = omega.restricted_density(m)
    k = (k + dagger(k)) / 2
    spec_k = eigh_hermitian(k)
    inv_sqk = spec_k.apply(lambda v: 1.0 / np.sqrt(v))
    sqk = spec_k.apply(lambda v: np.sqrt(np.clip(v, 0.0, None)))
    values = [omega(phi(x)) for x in a.basis]
    r = _matched_density(list(a.basis), values, m, perturb_r, rng_seed)
    a_mat, b_mat = _polar_factors(r)
    c = _projected_factor(a, phi.kernel, a_mat, b_mat)
    cc = c @ dagger(c)
    e_d = preserving_expectation(omega, d, m)
    g0 = e_d(inv_sqk @ cc @ inv_sqk)
    spec_g = _invertible_average(g0, "the weighted D-average of cc*")
    # the trace pre-adjoint of E_D applied to cc* must factor as k^(1/2) g0 k^(1/2);
    # both sides are computed independently, so this ties the two routes together
    split_gap = hs_norm(_pullback_density(e_d.map_matrix, cc) - sqk @ (spec_g.reconstruct() @ sqk))
    if split_gap > tol(1e-8) * max(1.0, hs_norm(cc)):
        raise InconsistencyDetected(
            f"the D-average of cc* disagrees with its weighted factorization ({split_gap:.3e})"
        )
    h1 = spec_g.apply(lambda v: 1.0 / np.sqrt(v)) @ c
    h = h1 @ dagger(h1)
    h = (h + dagger(h)) / 2
    if abs(np.trace(h).real - 1.0) > tol(1e-7):
        raise InvariantViolation(f"normalization: Tr(h) = {np.trace(h).real:.12f}")
    theta = PositiveFunctional(h)
    for x in d.basis:
        if abs(theta(x) - omega(x)) > tol(1e-8) * max(1.0, abs(omega(x))):
            raise InvariantViolation("the normalized state does not extend omega on D")
    _check_annihilates(theta, phi.kernel, "the normalized state")
    norm_gap = hs_norm(e_d(inv_sqk @ h @ inv_sqk) - np.eye(m.n))
    if norm_gap > tol(1e-7) * np.sqrt(m.n):
        raise InvariantViolation(f"normalization: E_D(k^-1/2 h k^-1/2) misses I by {norm_gap:.3e}")
    rho = average_to_central(theta, omega, d, m)
    _check_represents(rho, phi, values, "the averaged state")
    psi = preserving_expectation(rho, d, m)
    _check_extends_character(psi, phi)
    return psi, rho


def compose_direct_sum(pieces, m=None, d=None):
    """Assemble an expectation on M from expectations on the corners of a
    partition of unity into projections: Psi(x) = sum_t V_t Psi_t(V_t* x V_t) V_t*.

    Each piece is a pair (projection e_t, expectation on the compressed
    corner e_t M e_t), the compression realized by an isometry V_t with
    V_t V_t* = e_t.  The projections must be mutually orthogonal, sum to I,
    and commute with the bimodule algebra.
    """
    if not pieces:
        raise EmptyInput("no pieces to compose")
    projs = [as_matrix(p) for p, _ in pieces]
    n = projs[0].shape[0]
    total = np.zeros((n, n), dtype=complex)
    for p in projs:
        if hs_norm(p - dagger(p)) > tol(1e-9) or hs_norm(p @ p - p) > tol(1e-9) * max(1.0, hs_norm(p)):
            raise ProjectionsNotPartition("a piece is not an orthogonal projection")
        total += p
    for s in range(len(projs)):
        for t in range(s + 1, len(projs)):
            if hs_norm(projs[s] @ projs[t]) > tol(1e-9):
                raise ProjectionsNotPartition("pieces overlap")
    if hs_norm(total - np.eye(n)) > tol(1e-9) * np.sqrt(n):
        raise ProjectionsNotPartition("pieces do not sum to the identity")
    if m is None:
        m = full_matrix_algebra(n)
    k = np.zeros((n * n, n * n), dtype=complex)
    unit = np.zeros((n, n), dtype=complex)
    lifted_range, lifted_bimodule = [], []
    isometries = []
    for p, piece in pieces:
        v = projection_isometry(p)
        isometries.append(v)
        if piece.n != v.shape[1]:
            raise DimensionMismatch(
                f"piece expects dimension {piece.n}, corner has rank {v.shape[1]}"
            )
        k += np.kron(v, np.conj(v)) @ piece.map_matrix @ np.kron(dagger(v), v.T)
        unit += v @ piece.unit @ dagger(v)
        lifted_range += [v @ x @ dagger(v) for x in piece.range_space.basis]
        lifted_bimodule += [v @ x @ dagger(v) for x in piece.bimodule.basis]
    bimodule = d if d is not None else from_spanning(lifted_bimodule)
    for p in projs:
        for x in bimodule.basis:
            if hs_norm(commutator(p, x)) > tol(1e-9) * max(1.0, hs_norm(x)):
                raise NotCentralInD("a piece projection does not commute with D")
    e = ConditionalExpectation(k @ m.space.projector_matrix(), m, orthonormalize(lifted_range), unit, bimodule)
    for (p, piece), v in zip(pieces, isometries):
        for y in piece.domain.basis:
            gap = hs_norm(dagger(v) @ e(v @ y @ dagger(v)) @ v - piece(y))
            if gap > tol(1e-8) * max(1.0, hs_norm(y)):
                raise InvariantViolation(f"composition does not extend a piece (gap {gap:.3e})")
    return e


def representing_expectation_commutative(m, sigma, d, a, phi):
    """Abelian specialization: the projected factor alone already represents.

    For abelian M the normalized functional Tr(. cc*) is automatically
    D-central and faithful on D, so no positivity correction or averaging is
    needed; its preserving expectation extends the character.  Returns
    (Psi, rho) with rho = sigma∘Psi, so rho|_A = sigma∘Phi.  The uniqueness
    of Psi is witnessed by rebuilding it from rho, which Psi also preserves.
    """
    if not m.is_abelian():
        raise NotAbelian("M must be abelian")
    if not _faithful_on(sigma, d):
        raise NotFaithful("sigma is not faithful on D")
    values = [sigma(phi(x)) for x in a.basis]
    r = _matched_density(list(a.basis), values, m, 0.0, 0)
    a_mat, b_mat = _polar_factors(r)
    c = _projected_factor(a, phi.kernel, a_mat, b_mat)
    cc = c @ dagger(c)
    mass = float(np.trace(cc).real)
    if mass <= tol(1e-12):
        raise InvariantViolation("projected factor vanished; sigma(Phi(I)) should force c != 0")
    seed = PositiveFunctional((cc + dagger(cc)) / (2 * mass))
    _check_annihilates(seed, phi.kernel, "the normalized state")
    if not _faithful_on(seed, d):
        raise InvariantViolation("the representing state should be faithful on D")
    psi = preserving_expectation(seed, d, m)
    _check_extends_character(psi, phi)
    rho = psi.pullback(sigma)
    _check_represents(rho, phi, values, "sigma∘Psi")
    rebuilt = preserving_expectation(rho, d, m)
    gap = float(np.linalg.norm(psi.map_matrix - rebuilt.map_matrix))
    if gap > tol(1e-7) * max(1.0, float(np.linalg.norm(psi.map_matrix))):
        raise InconsistencyDetected(
            f"uniqueness: rebuilding from sigma∘Psi gave a different expectation ({gap:.3e})"
        )
    return psi, rho


def extension_via_ss_density(m, omega_d, d, a, phi, psi):
    """When A + A* spans M, a state extension of omega_D∘Phi determines the expectation.

    The extension is automatically D-central: its centrality identities hold
    on A by traciality of omega_D on D, and A + A* exhausts M.  The
    psi-preserving expectation then extends the character.
    """
    if not check_ss_density(a, m):
        raise NotDense("A + A* does not span M")
    cert = tracial_certificate(omega_d, d)
    if not cert.result:
        raise NotTracial(f"omega_D is not tracial on D (violation {cert.max_violation:.3e})")
    if not _faithful_on(omega_d, d):
        raise NotFaithful("omega_D is not faithful on D")
    for x in a.basis:
        want = omega_d(phi(x))
        if abs(psi(x) - want) > tol(1e-8) * max(1.0, abs(want)):
            raise NotAnExtension("psi does not extend omega_D∘Phi on A")
    ok, violation = is_D_central(psi, d, m)
    if not ok:
        raise InconsistencyDetected(
            f"an extension of a tracial character functional must be D-central"
            f" when A + A* spans M; violation {violation:.3e}"
        )
    e = preserving_expectation(psi, d, m)
    _check_extends_character(e, phi)
    return e


def mth_check(mu, g, samples=64, rng_seed=0):
    """Whether (sum f mu)^2 <= sum f^2 g mu for every f >= 0.

    Decided by the closed criterion: g > 0 wherever mu > 0 and
    sum(mu/g) <= 1 over that support.  Cross-checked against the ratio
    maximizer f = 1/g and random nonnegative probes; the two verdicts must
    agree away from the boundary sum(mu/g) = 1.
    """
    mu = np.asarray(mu, dtype=float)
    g = np.asarray(g, dtype=float)
    if mu.shape != g.shape or mu.ndim != 1:
        raise DimensionMismatch(f"weight and density shapes differ: {mu.shape} vs {g.shape}")
    if mu.size == 0:
        raise EmptyInput("empty weight vector")
    if np.any(mu < 0):
        raise InvariantViolation("mu must be nonnegative")
    supp = mu > 0
    positive = bool(np.all(g[supp] > 0))
    with np.errstate(over="ignore", divide="ignore"):
        integral = float(np.sum(mu[supp] / g[supp])) if positive else np.inf
        criterion = positive and integral <= 1.0 + tol(1e-12)
        rng = np.random.default_rng(rng_seed)
        recip = np.zeros_like(g)
        ok = supp & (g > 0)
        recip[ok] = 1.0 / g[ok]
        probes = [np.where(supp & (g <= 0), 1.0, 0.0), recip]
        probes += [rng.random(mu.size) for _ in range(samples)]
        best = 0.0
        for f in probes:
            # the ratio is scale invariant in f, so normalize to dodge overflow
            if np.any(np.isinf(f)):
                f = np.isinf(f).astype(float)
            top = float(np.max(f))
            if top > 0:
                f = f / top
            weight = float(np.sum(f * mu))
            if weight <= 0:
                continue
            quad = float(np.sum(f * f * g * mu))
            best = max(best, weight * weight / quad if quad > 0 else np.inf)
            if best > 1.0 + tol(1e-9):
                break
    sampled = best <= 1.0 + tol(1e-9)
    if sampled != criterion and abs(integral - 1.0) > 30 * tol(1e-9):
        raise InconsistencyDetected(
            f"ratio probes ({best:.6e}) contradict the integral criterion ({integral:.6e})"
        )
    return criterion
