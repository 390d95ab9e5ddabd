"""Conditional expectations onto *-subalgebras of M_n.

An expectation is stored as its matrix on flattened (row-major) coordinates,
always composed with the orthogonal projection onto the domain algebra, so
the stored map is defined on all of M_n and every invariant (unital on the
range unit, idempotent, positive, bimodule over D, range membership) can be
checked at the matrix level.  Construction is by solving the Gram system of
the range algebra in the omega-inner product; non-faithful functionals are
handled by compressing to a support projection, never by regularizing.
"""

from dataclasses import dataclass

import numpy as np

from .algebras import StarAlgebra, commutant, from_spanning, full_matrix_algebra
from .config import tol
from .errors import (
    DensityDoesNotCommute,
    DoesNotCommute,
    GramSingular,
    InconsistencyDetected,
    InvariantViolation,
    NotAnExtension,
    NotCentral,
    NotDCentral,
    NotFaithful,
    NotNormalized,
    NotPositiveDefinite,
    SupportNotCentral,
)
from .linalg import (
    apply_map,
    as_matrix,
    commutator,
    dagger,
    eigh_hermitian,
    hs_norm,
    imag_power,
    left_mult_matrix,
    matlog,
    orthonormalize,
    pd_tol,
    projection_isometry,
    psd_sqrt,
    right_mult_matrix,
    sandwich_matrix,
)
from .states import (
    PositiveFunctional,
    _faithful_on,
    is_D_central,
    locally_central_check,
    modular_invariance_check,
    pt_radon_nikodym,
    tracial_certificate,
)


_PROBE_CACHE = {}


def _positivity_probes(n):
    """Fixed random draws x and their x*x, reused across validations."""
    if n not in _PROBE_CACHE:
        rng = np.random.default_rng(0)
        x = rng.standard_normal((8, n, n)) + 1j * rng.standard_normal((8, n, n))
        xx = np.einsum("aji,ajk->aik", np.conj(x), x)
        _PROBE_CACHE[n] = (x, xx)
    return _PROBE_CACHE[n]


def _pullback_density(map_matrix, rho):
    """Density of x -> Tr(rho E(x)): the adjoint of E under the trace pairing."""
    n = rho.shape[0]
    sigma_t = (map_matrix.T @ rho.T.ravel()).reshape(n, n)
    sigma = sigma_t.T
    return (sigma + dagger(sigma)) / 2


class ConditionalExpectation:
    """Idempotent positive bimodule map from a *-algebra onto a range inside it.

    The range is an operator subspace with its own unit: the ambient identity
    for genuine expectations, a projection z for the support-ideal maps onto
    Dz.  The bimodule algebra is the D whose elements pass through the map.
    """

    def __init__(self, map_matrix, domain, range_space, unit, bimodule, check=True):
        self.map_matrix = np.asarray(map_matrix, dtype=complex)
        self.domain = domain
        self.range_space = range_space
        self.unit = as_matrix(unit)
        self.bimodule = bimodule
        self.n = domain.n
        self._support = None
        if check:
            self.validate()

    def __call__(self, x):
        return apply_map(self.map_matrix, as_matrix(x))

    def pullback(self, functional):
        """The functional x -> functional(E(x)) as a PositiveFunctional."""
        return PositiveFunctional(_pullback_density(self.map_matrix, functional.density))

    @property
    def support(self):
        if self._support is None:
            self._support = support_of_map(self)
        return self._support

    def validate(self):
        k = self.map_matrix
        n = self.n
        scale = max(1.0, hs_norm(k))
        unit_gap = hs_norm(self(np.eye(n)) - self.unit)
        if unit_gap > tol(1e-9) * max(1.0, hs_norm(self.unit)):
            raise InvariantViolation(f"unital: E(I) misses the range unit by {unit_gap:.3e}")
        idem_gap = hs_norm(k @ k - k)
        if idem_gap > tol(1e-9) * scale:
            raise InvariantViolation(f"idempotent: E(E(x)) != E(x), defect {idem_gap:.3e}")
        x, xx = _positivity_probes(n)
        y = (k @ xx.reshape(8, -1).T).T.reshape(8, n, n)
        y = (y + np.conj(np.transpose(y, (0, 2, 1)))) / 2
        lows = np.linalg.eigvalsh(y)[:, 0]
        floors = -tol(1e-8) * np.einsum("aij,aij->a", np.conj(x), x).real
        if np.any(lows < floors):
            raise InvariantViolation(f"positive: E(x*x) has eigenvalue {lows.min():.3e}")
        p_dom = self.domain.space.projector_matrix()
        allowed = tol(1e-8) * scale * np.sqrt(n)
        b = np.stack([np.asarray(d, dtype=complex) for d in self.bimodule.basis])
        eye = np.eye(n, dtype=complex)
        # stacked matrices of x -> dx and x -> xd, all basis elements at once
        sides = np.concatenate([
            np.einsum("aij,pq->aipjq", b, eye).reshape(-1, n * n, n * n),
            np.einsum("ij,apq->aipjq", eye, np.transpose(b, (0, 2, 1))).reshape(-1, n * n, n * n),
        ])
        gaps = np.linalg.norm((k @ sides - sides @ k) @ p_dom, axis=(1, 2))
        if np.any(gaps > allowed):
            raise InvariantViolation(f"bimodule: module property fails by {gaps.max():.3e}")
        perp = np.eye(n * n, dtype=complex) - self.range_space.projector_matrix()
        range_gap = hs_norm(perp @ k)
        if range_gap > tol(1e-8) * scale:
            raise InvariantViolation(f"range: output leaves the range span by {range_gap:.3e}")


def choi_matrix(e):
    """Choi matrix of the map; positive semidefinite iff completely positive."""
    k = e.map_matrix if isinstance(e, ConditionalExpectation) else np.asarray(e, dtype=complex)
    n = int(round(np.sqrt(k.shape[0])))
    return k.reshape(n, n, n, n).transpose(2, 0, 3, 1).reshape(n * n, n * n)


def _gram_pieces(omega, basis_mats):
    """Inverse Gram matrix of a basis in the omega-inner product plus the
    pairing rows x -> omega(b_a* x).  GramSingular when omega is not faithful
    on the span."""
    b = np.stack([np.asarray(m) for m in basis_mats])
    bd = np.conj(np.transpose(b, (0, 2, 1)))
    gram = np.einsum("ij,ajk,bki->ab", omega.density, bd, b)
    gram = (gram + dagger(gram)) / 2
    eigs, u = np.linalg.eigh(gram)
    if eigs[0] <= tol(1e-10) * max(1e-30, float(eigs[-1])):
        raise GramSingular(
            f"functional is not faithful on the span (Gram eigenvalues {eigs[0]:.3e}..{eigs[-1]:.3e})"
        )
    ginv = (u / eigs) @ dagger(u)
    rows = np.einsum("ij,ajk->aki", omega.density, bd).reshape(len(b), -1)
    return ginv, rows


def _preserving_projection(omega, target, m):
    """omega-orthogonal projection of M onto the target subalgebra.

    Solves omega(b* E(x)) = omega(b* x) over the target basis.  There is no
    centrality gate here; validation establishes after the fact that the
    solution is a genuine expectation (it is exactly when the modular flow
    of omega leaves the target invariant).
    """
    ginv, rows = _gram_pieces(omega, target.basis)
    k_inner = target.space.flat.T @ (ginv @ rows)
    k = k_inner @ m.space.projector_matrix()
    e = ConditionalExpectation(k, m, target.space, np.eye(m.n), target)
    drift = hs_norm(_pullback_density(k, omega.density) - omega.restricted_density(m))
    if drift > tol(1e-8) * max(1.0, hs_norm(omega.density)):
        raise InvariantViolation(f"preservation: omega∘E deviates from omega by {drift:.3e}")
    return e


def preserving_expectation(omega, d, m):
    """The omega-preserving conditional expectation of M onto D.

    Needs omega central for D and faithful on D.  For omega faithful on M
    this is the Gram solution directly; otherwise M is compressed to the
    support of the restricted density, the expectation is built there onto
    the compressed D, and the result is pulled back through the isomorphism
    of D with its compression.
    """
    ok, violation = is_D_central(omega, d, m)
    if not ok:
        raise NotDCentral(f"omega is not D-central (violation {violation:.3e})")
    if not _faithful_on(omega, d):
        raise GramSingular("omega is not faithful on D")
    r = omega.restricted_density(m)
    r_spec = eigh_hermitian((r + dagger(r)) / 2)
    cutoff = pd_tol(float(np.max(np.abs(r_spec.eigenvalues))))
    if r_spec.eigenvalues[0] > cutoff:
        return _preserving_projection(omega, d, m)
    # support compression: e is the support of the restricted density and lies in M
    e_proj = r_spec.support(cutoff)
    v = projection_isometry(e_proj)
    m_c = from_spanning([dagger(v) @ w @ v for w in m.basis])
    dc_space = orthonormalize([dagger(v) @ x @ v for x in d.basis])
    if dc_space.size != d.dim:
        raise InvariantViolation("support compression collapsed D despite a faithful restriction")
    d_c = StarAlgebra(dc_space)
    omega_c = PositiveFunctional(dagger(v) @ omega.density @ v)
    e0 = _preserving_projection(omega_c, d_c, m_c)
    images = np.stack([(dagger(v) @ x @ v).ravel() for x in d.basis])
    t = dc_space.flat.conj() @ images.T
    lift = d.space.flat.T @ np.linalg.inv(t) @ dc_space.flat.conj()
    compress = np.kron(dagger(v), v.T)
    k = lift @ e0.map_matrix @ compress @ m.space.projector_matrix()
    e = ConditionalExpectation(k, m, d.space, np.eye(m.n), d)
    drift = hs_norm(_pullback_density(k, omega.density) - r)
    if drift > tol(1e-8) * max(1.0, hs_norm(omega.density)):
        raise InvariantViolation(f"preservation: omega∘E deviates from omega by {drift:.3e}")
    return e


def expectation_from_density(h, d, m, nu):
    """E(x) = E_D(h^{1/2} x h^{1/2}) for a positive h commuting with D and rho_nu,
    normalized by E_D(h) = I, where E_D is the nu-preserving expectation onto D."""
    h = as_matrix(h)
    h_spec = eigh_hermitian(h)
    h_scale = float(np.max(np.abs(h_spec.eigenvalues)))
    if h_spec.eigenvalues[0] < -pd_tol(max(h_scale, 1e-30)):
        raise NotPositiveDefinite(f"density must be positive semidefinite (min eig {h_spec.eigenvalues[0]:.3e})")
    if not m.contains(h):
        raise InvariantViolation("density must lie in the algebra")
    for x in d.basis:
        gap = hs_norm(commutator(h, x))
        if gap > tol(1e-9) * max(1.0, h_scale):
            raise DensityDoesNotCommute(f"[h, D] = {gap:.3e}")
    gap = hs_norm(commutator(h, nu.density))
    if gap > tol(1e-9) * max(1.0, h_scale * hs_norm(nu.density)):
        raise DensityDoesNotCommute(f"[h, rho_nu] = {gap:.3e}")
    e_d = preserving_expectation(nu, d, m)
    norm_gap = hs_norm(e_d(h) - np.eye(m.n))
    if norm_gap > tol(1e-8) * np.sqrt(m.n):
        raise NotNormalized(f"E_D(h) differs from the identity by {norm_gap:.3e}")
    hr = psd_sqrt(h)
    k = e_d.map_matrix @ sandwich_matrix(hr, hr) @ m.space.projector_matrix()
    e = ConditionalExpectation(k, m, d.space, np.eye(m.n), d)
    sigma = _pullback_density(k, nu.density)
    want = m.project(hr @ nu.density @ hr)
    if hs_norm(sigma - want) > tol(1e-8) * max(1.0, hs_norm(want)):
        raise InvariantViolation("nu∘E does not match the h-deformed functional")
    return e


def commutes_with_modular(e, nu):
    """Does E commute with the modular flow of nu?

    Three routes: commutation of the maps at sampled times, the infinitesimal
    commutator with ad(log rho), and invariance of nu∘E under the flow.  The
    infinitesimal route decides and must agree with the sampled one; the
    invariance route is only implied by commutation (nu∘E can carry extra
    symmetry of its own, e.g. when it collapses to the trace), so it is
    checked in that direction alone.
    """
    if not nu.is_faithful:
        raise NotFaithful("modular commutation needs a faithful reference")
    k = e.map_matrix
    n = e.n
    p_dom = e.domain.space.projector_matrix()
    scale = max(1.0, hs_norm(k))
    log_rho = matlog(nu.density)
    ad = left_mult_matrix(log_rho) - right_mult_matrix(log_rho)
    inf_stat = hs_norm((k @ ad - ad @ k) @ p_dom)
    inf_thr = tol(1e-8) * scale * max(1.0, hs_norm(ad))
    verdict = inf_stat <= inf_thr
    pull_base = _pullback_density(k, nu.density)
    sampled_map = sampled_pull = 0.0
    for t in (0.1, 1.0, np.sqrt(2.0)):
        u = imag_power(nu.density, t)
        s = np.kron(u, np.conj(u))
        sampled_map = max(sampled_map, hs_norm((k @ s - s @ k) @ p_dom))
        sampled_pull = max(sampled_pull, hs_norm(_pullback_density(k @ s @ p_dom, nu.density) - pull_base))
    map_thr = tol(1e-8) * scale
    pull_thr = tol(1e-8) * max(1.0, hs_norm(pull_base))
    verdict_map = sampled_map <= map_thr
    verdict_pull = sampled_pull <= pull_thr

    def decisive(stat, thr):
        return max(stat, thr) > 30 * min(stat, thr)

    if verdict != verdict_map and decisive(inf_stat, inf_thr) and decisive(sampled_map, map_thr):
        raise InconsistencyDetected(
            f"modular commutation routes disagree: infinitesimal {inf_stat:.3e}, map {sampled_map:.3e}"
        )
    if verdict and not verdict_pull and decisive(sampled_pull, pull_thr):
        raise InconsistencyDetected(
            f"the flow commutes with the map yet moves nu∘E (drift {sampled_pull:.3e})"
        )
    return verdict


def expectation_to_density(e, nu):
    """Radon-Nikodym density of nu∘E against nu; exists when E commutes with the flow."""
    if not commutes_with_modular(e, nu):
        raise DoesNotCommute("expectation does not commute with the modular flow of nu")
    h = pt_radon_nikodym(e.pullback(nu), nu)
    for x in e.bimodule.basis:
        gap = hs_norm(commutator(h, x))
        if gap > tol(1e-8) * max(1.0, hs_norm(h)):
            raise InvariantViolation(f"derivative does not commute with D ({gap:.3e})")
    return h


def average_to_central(psi, omega, d, m):
    """Replace a state extension psi of omega|D by a D-central one.

    Pushes psi through the omega-preserving projection onto the relative
    commutant of D; the result still extends omega|D and is D-central, and
    commutation with omega (of the densities restricted to M) is inherited.
    """
    if not omega.is_faithful:
        raise NotFaithful("averaging needs a faithful reference functional")
    ok, violation = is_D_central(omega, d, m)
    if not ok:
        raise NotCentral(f"D is not inside the centralizer of omega (violation {violation:.3e})")
    for x in d.basis:
        if abs(psi(x) - omega(x)) > tol(1e-8) * max(1.0, abs(omega(x))):
            raise NotAnExtension("psi does not restrict to omega on D")
    relative = commutant(d, m)
    e = _preserving_projection(omega, relative, m)
    result = e.pullback(psi)
    for x in d.basis:
        if abs(result(x) - omega(x)) > tol(1e-7) * max(1.0, abs(omega(x))):
            raise InvariantViolation("averaged functional no longer extends omega on D")
    ok, violation = is_D_central(result, d, m)
    if not ok:
        raise InvariantViolation(f"averaged functional is not D-central (violation {violation:.3e})")
    r_psi = psi.restricted_density(m)
    r_omega = omega.restricted_density(m)
    pair_scale = max(1e-30, hs_norm(r_psi) * hs_norm(r_omega))
    if hs_norm(commutator(r_psi, r_omega)) <= tol(1e-9) * pair_scale:
        inherited = hs_norm(commutator(result.restricted_density(m), r_omega))
        if inherited > tol(1e-7) * pair_scale:
            raise InvariantViolation(f"commutation with omega was not inherited ({inherited:.3e})")
    return result


def support_of_map(e, domain=None):
    """Smallest projection z with E(x) = E(zxz); support of the trace pullback.

    Accepts a ConditionalExpectation or a raw map matrix.  For idempotent
    maps the support also commutes with every output.
    """
    if isinstance(e, ConditionalExpectation):
        k, dom = e.map_matrix, e.domain
    else:
        k = np.asarray(e, dtype=complex)
        n = int(round(np.sqrt(k.shape[0])))
        dom = domain if domain is not None else full_matrix_algebra(n)
    n = dom.n
    w = _pullback_density(k, np.eye(n, dtype=complex))
    w_spec = eigh_hermitian(w)
    z = w_spec.support(pd_tol(float(np.max(np.abs(w_spec.eigenvalues)))))
    p_dom = dom.space.projector_matrix()
    scale = max(1.0, hs_norm(k))
    gap = hs_norm((k - k @ sandwich_matrix(z, z)) @ p_dom)
    if gap > tol(1e-8) * scale:
        raise InvariantViolation(f"support identity E(x) = E(zxz) fails by {gap:.3e}")
    if hs_norm(k @ k - k) <= tol(1e-6) * scale:
        side = hs_norm(((left_mult_matrix(z) - right_mult_matrix(z)) @ k) @ p_dom)
        if side > tol(1e-8) * scale:
            raise InvariantViolation(f"support does not commute with the outputs ({side:.3e})")
    return z


def support_ideal_expectation(omega, d, m):
    """Expectation onto the ideal Dz, z the support of omega|D, for omega not
    faithful on D.  Compress to z, build the preserving expectation there,
    and lift; the result is the unique omega-preserving D-module map with
    support below z, which a second, direct Gram construction confirms."""
    ok, violation = is_D_central(omega, d, m)
    if not ok:
        raise NotDCentral(f"omega is not D-central (violation {violation:.3e})")
    z = omega.support_in(d)
    for x in d.basis:
        gap = hs_norm(commutator(z, x))
        if gap > tol(1e-9) * max(1.0, hs_norm(z)):
            raise SupportNotCentral(f"support of omega|D is not central in D ([z,d] = {gap:.3e})")
    v = projection_isometry(z)
    m_z = from_spanning([dagger(v) @ w @ v for w in m.basis])
    d_z = from_spanning([dagger(v) @ x @ v for x in d.basis])
    omega_z = PositiveFunctional(dagger(v) @ omega.density @ v)
    f = preserving_expectation(omega_z, d_z, m_z)
    lift = np.kron(v, np.conj(v))
    compress = np.kron(dagger(v), v.T)
    k = lift @ f.map_matrix @ compress @ m.space.projector_matrix()
    range_space = orthonormalize([x @ z for x in d.basis])
    e = ConditionalExpectation(k, m, range_space, z, d)
    drift = hs_norm(_pullback_density(k, omega.density) - omega.restricted_density(m))
    if drift > tol(1e-8) * max(1.0, hs_norm(omega.density)):
        raise InvariantViolation(f"preservation: omega∘E deviates by {drift:.3e}")
    # uniqueness: the direct Gram projection onto the ideal must give the same map
    ginv, rows = _gram_pieces(omega, range_space.basis)
    k2 = range_space.flat.T @ (ginv @ rows) @ m.space.projector_matrix()
    mismatch = hs_norm((k - k2) @ m.space.projector_matrix())
    if mismatch > tol(1e-7) * max(1.0, hs_norm(k)):
        raise InvariantViolation(f"the two support-ideal constructions disagree by {mismatch:.3e}")
    support = support_of_map(e)
    if hs_norm(support @ z - support) > tol(1e-8):
        raise InvariantViolation("map support is not dominated by the ideal support")
    e._support = support
    return e


@dataclass
class ExistenceReport:
    faithful_on_D: bool
    tracial_on_D: bool
    central: bool
    locally_central: bool
    support_commutes: bool
    modular_invariant: bool
    constructed: bool
    equivalences_hold: bool
    central_violation: float
    failure: str | None
    expectation: object | None


def existence_diagnosis(omega, d, m, cap_proj=16):
    """Probe every existence criterion for an omega-preserving expectation onto D.

    Never raises; reports the individual verdicts plus whether the expected
    equivalences between them actually held on this instance.
    """

    def guarded(fn, default=False):
        try:
            return fn(), None
        except Exception as err:  # diagnosis reports, it does not fail
            return default, err

    faithful_d, _ = guarded(lambda: _faithful_on(omega, d))
    tracial_d, _ = guarded(lambda: tracial_certificate(omega, d).result)
    central_violation = [float("nan")]

    def central_probe():
        ok, violation = is_D_central(omega, d, m)
        central_violation[0] = violation
        return ok

    central, _ = guarded(central_probe)
    local, _ = guarded(lambda: locally_central_check(omega, d, m, cap_proj=cap_proj))
    support_commutes, _ = guarded(
        lambda: max((hs_norm(commutator(omega.support, x)) for x in d.basis), default=0.0) <= tol(1e-9)
    )

    def modular_probe():
        if omega.is_faithful:
            return modular_invariance_check(omega, d)
        e_proj = omega.support
        if max((hs_norm(commutator(e_proj, x)) for x in d.basis), default=0.0) > tol(1e-9):
            return False
        v = projection_isometry(e_proj)
        d_c = from_spanning([dagger(v) @ x @ v for x in d.basis])
        return modular_invariance_check(PositiveFunctional(dagger(v) @ omega.density @ v), d_c)

    modular_invariant, _ = guarded(modular_probe)
    expectation, err = guarded(lambda: _preserving_projection(omega, d, m), default=None)
    constructed = expectation is not None
    eq_construct = constructed and tracial_d and faithful_d
    eq_central = central and faithful_d
    eq_local = local and tracial_d and faithful_d and support_commutes
    return ExistenceReport(
        faithful_on_D=bool(faithful_d),
        tracial_on_D=bool(tracial_d),
        central=bool(central),
        locally_central=bool(local),
        support_commutes=bool(support_commutes),
        modular_invariant=bool(modular_invariant),
        constructed=constructed,
        equivalences_hold=bool(eq_construct == eq_central == eq_local),
        central_violation=central_violation[0],
        failure=None if err is None else f"{type(err).__name__}: {err}",
        expectation=expectation,
    )
