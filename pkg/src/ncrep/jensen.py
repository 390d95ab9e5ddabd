"""Geometric means and Jensen-type checks for characters on triangular algebras.

The omega-geometric mean Delta(a) = exp(omega(log|a|)) is the decreasing
limit of omega(|a|^{2^-n})^{2^n}.  For a character Phi whose domain is block
upper triangular and which extends to an omega-preserving expectation, the
geometric means of a and Phi(a) coincide for invertible a; in general only
Delta(Phi(a)) <= Delta(a) is asserted.  Singular Phi(a) is reported with the
Delta = 0 limit convention and the check degrades to the inequality.
"""

from dataclasses import dataclass

import numpy as np

from .algebras import full_matrix_algebra
from .config import tol
from .errors import (
    DimensionMismatch,
    InconsistencyDetected,
    InvariantViolation,
    NotBoundedBelow,
    NotInvertible,
    NotPositiveDefinite,
    NotTracial,
    NotTriangularType,
)
from .linalg import (
    as_matrix,
    dagger,
    eigh_hermitian,
    hs_norm,
    is_hermitian,
    matpow,
    pd_tol,
    psd_sqrt,
    _require_pd,
)
from .states import tracial_certificate


@dataclass
class GeometricMeanReport:
    element: object
    value: float
    power_sequence: list

    def validate(self):
        seq = self.power_sequence
        slack = tol(1e-9) * max(1.0, seq[0])
        for left, right in zip(seq, seq[1:]):
            if right > left + slack:
                raise InvariantViolation(
                    f"power sequence is not non-increasing ({right:.9e} after {left:.9e})"
                )
        if abs(seq[-1] - self.value) > tol(1e-6) * self.value:
            raise InconsistencyDetected(
                f"power sequence tail {seq[-1]:.9e} disagrees with exp of the log mean {self.value:.9e}"
            )


def geometric_mean(omega, a, n_powers=24):
    """Delta(a) = exp(omega(log|a|)) together with the decreasing power sequence.

    The sequence s_n = omega(|a|^{2^-n})^{2^n} for n = 0..n_powers is checked
    to be non-increasing and to land on the closed form, which needs a
    invertible.  Every term comes from one spectral decomposition of a*a,
    evaluated in extended precision: the outer 2^n power amplifies rounding
    by 2^n, which double precision alone cannot absorb at the tail.
    """
    a = as_matrix(a)
    spec = eigh_hermitian(dagger(a) @ a)
    svals = np.sqrt(np.clip(spec.eigenvalues, 0.0, None))
    if svals[0] <= pd_tol(float(svals[-1])):
        raise NotInvertible(f"smallest singular value {svals[0]:.3e} is below the cutoff")
    u = spec.eigenvectors
    weights = np.clip(np.real(np.einsum("ji,jk,ki->i", np.conj(u), omega.density, u)), 0.0, None)
    lam = svals.astype(np.longdouble)
    w = weights.astype(np.longdouble)
    mass = np.sum(w)
    if abs(float(mass) - 1.0) > tol(1e-9):
        raise InvariantViolation(f"omega must be a state (total mass {float(mass):.9f})")
    # unit mass exactly: the 2^n-th powers amplify any mass defect, and the
    # p-norms are only monotone in p for a probability weight
    w = w / mass
    value = float(np.exp(np.sum(w * np.log(lam))))
    seq = []
    for n in range(n_powers + 1):
        term = np.sum(lam ** (np.longdouble(2.0) ** -n) * w)
        seq.append(float(np.exp(np.longdouble(2.0) ** n * np.log(term))))
    report = GeometricMeanReport(a, value, seq)
    report.validate()
    return report


def sqrt_iteration(a, rtol=1e-12):
    """Iterates x_1 = a, x_{k+1} = (x_k + a x_k^{-1})/2, decreasing to sqrt(a).

    Returns the whole sequence.  Each iterate is a rational function of a,
    hence Hermitian and commuting with a; from the second step on the
    sequence decreases in the Loewner order down to the spectral square root.
    """
    a = as_matrix(a)
    if not is_hermitian(a):
        raise NotPositiveDefinite("square root iteration needs a Hermitian positive definite start")
    _require_pd(eigh_hermitian(a), "square root iteration")
    scale = hs_norm(a)
    xs = [(a + dagger(a)) / 2]
    for _ in range(200):
        x = xs[-1]
        nxt = (x + a @ np.linalg.inv(x)) / 2
        xs.append((nxt + dagger(nxt)) / 2)
        if hs_norm(xs[-1] - x) <= tol(rtol) * scale:
            break
    else:
        raise InconsistencyDetected("square root iteration failed to settle in 200 steps")
    top = float(np.linalg.norm(a, 2))
    for k in range(2, len(xs)):
        drop = eigh_hermitian(xs[k - 1] - xs[k]).eigenvalues
        if drop[0] < -tol(1e-10) * max(1.0, top):
            raise InvariantViolation(
                f"iterate {k + 1} is not below its predecessor (defect {drop[0]:.3e})"
            )
    root = psd_sqrt(a)
    if hs_norm(xs[-1] - root) > tol(1e-9) * max(1.0, hs_norm(root)):
        raise InconsistencyDetected("iteration limit disagrees with the spectral square root")
    return xs


def _holder_factor(omega, x, s):
    """omega(|x|^s)^{1/s}; s = inf is read as the operator norm."""
    if np.isinf(s):
        return float(np.linalg.norm(x, 2))
    return float(np.real(omega(matpow(dagger(x) @ x, s / 2)))) ** (1.0 / s)


def holder_tracial(omega, a, b, p, q, r, m=None):
    """Whether omega(|ab|^p)^{1/p} <= omega(|a|^q)^{1/q} omega(|b|^r)^{1/r}.

    Needs omega tracial on the ambient algebra m (all of M_n by default) and
    exponents 0 < p, q, r <= inf with 1/p = 1/q + 1/r.  Traciality is what
    makes the p-quantities norms, and it forces omega(|a|^p) = omega(|a*|^p),
    which is verified along the way.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if m is None:
        m = full_matrix_algebra(omega.density.shape[0])
    cert = tracial_certificate(omega, m)
    if not cert.result:
        raise NotTracial(f"omega is not tracial on the given algebra (violation {cert.max_violation:.3e})")
    if not (m.contains(a) and m.contains(b)):
        raise InvariantViolation("a and b must lie in the algebra omega is tracial on")
    for name, s in (("p", p), ("q", q), ("r", r)):
        if not s > 0:
            raise InvariantViolation(f"exponent {name} must be positive, got {s}")
    recip = lambda s: 0.0 if np.isinf(s) else 1.0 / s
    if abs(recip(p) - recip(q) - recip(r)) > tol(1e-12):
        raise InvariantViolation(f"exponents miss 1/p = 1/q + 1/r: p={p}, q={q}, r={r}")
    if not np.isinf(p):
        left = float(np.real(omega(matpow(dagger(a) @ a, p / 2))))
        right = float(np.real(omega(matpow(a @ dagger(a), p / 2))))
        if abs(left - right) > tol(1e-9) * max(1.0, abs(left)):
            raise InconsistencyDetected(
                f"tracial symmetry broke: omega(|a|^p)={left:.9e} vs omega(|a*|^p)={right:.9e}"
            )
    lhs = _holder_factor(omega, a @ b, p)
    rhs = _holder_factor(omega, a, q) * _holder_factor(omega, b, r)
    return lhs <= rhs + tol(1e-9) * max(1.0, rhs)


def logmodular_witness(a_alg, b):
    """Invertible a in the block triangular algebra with a*a = b exactly.

    Cholesky in the block ordering produces the witness, certifying the
    algebra logmodular on this input; b must be Hermitian and bounded below.
    """
    blocks = getattr(a_alg, "blocks", None)
    if blocks is None:
        raise NotTriangularType("witness construction needs a block upper triangular domain")
    b = as_matrix(b)
    if b.shape != (a_alg.n, a_alg.n):
        raise DimensionMismatch(f"b has shape {b.shape}, the algebra lives in M_{a_alg.n}")
    if not is_hermitian(b):
        raise NotBoundedBelow("b must be Hermitian to be bounded below")
    eigs = eigh_hermitian(b).eigenvalues
    if eigs[0] <= pd_tol(float(np.abs(eigs).max())):
        raise NotBoundedBelow(f"b is not bounded away from zero (min eigenvalue {eigs[0]:.3e})")
    order = [i for blk in blocks for i in blk]
    perm = np.eye(a_alg.n, dtype=complex)[order]
    lower = np.linalg.cholesky(perm @ b @ dagger(perm))
    a = dagger(perm) @ dagger(lower) @ perm
    if not a_alg.contains(a):
        raise InconsistencyDetected("Cholesky witness left the algebra")
    gap = hs_norm(dagger(a) @ a - b)
    if gap > tol(1e-9) * max(1.0, hs_norm(b)):
        raise InconsistencyDetected(f"witness misses b by {gap:.3e}")
    return a


@dataclass
class JensenReport:
    delta_a: float
    delta_image: float
    inequality_ok: bool
    equality_ok: object  # None when not asserted (unwitnessed domain or singular image)
    relative_gap: float
    degenerate: bool


def jensen_check(omega, phi, psi, a, n_powers=24, witnessed=None):
    """Compare Delta(a) with Delta(Phi(a)) for a state omega preserved by psi.

    omega must be tracial on the character's range and psi an
    omega-preserving expectation extending phi.  The inequality
    Delta(Phi(a)) <= Delta(a) is always asserted; equality is asserted only
    on witnessed (block triangular) domains with Phi(a) invertible.
    """
    cert = tracial_certificate(omega, phi.range_alg)
    if not cert.result:
        raise NotTracial(f"omega is not tracial on the range (violation {cert.max_violation:.3e})")
    pulled = psi.pullback(omega)
    drift = hs_norm(pulled.density - omega.density)
    if drift > tol(1e-8) * max(1.0, hs_norm(omega.density)):
        raise InvariantViolation(f"the expectation moves omega by {drift:.3e}")
    proj = phi.domain.space.projector_matrix()
    ext = np.linalg.norm((psi.map_matrix - phi.map_matrix) @ proj)
    if ext > tol(1e-7) * max(1.0, np.linalg.norm(phi.map_matrix)):
        raise InvariantViolation(f"the expectation does not extend the character (gap {ext:.3e})")
    if not phi.domain.contains(a):
        raise InvariantViolation("a must lie in the character's domain")
    rep_a = geometric_mean(omega, a, n_powers)
    image = phi(a)
    svals = np.linalg.svd(image, compute_uv=False)
    degenerate = svals[-1] <= pd_tol(float(svals[0]))
    delta_image = 0.0 if degenerate else geometric_mean(omega, image, n_powers).value
    inequality_ok = delta_image <= rep_a.value * (1.0 + tol(1e-7))
    gap = abs(rep_a.value - delta_image) / rep_a.value
    if witnessed is None:
        witnessed = getattr(phi.domain, "blocks", None) is not None
    equality_ok = None
    if witnessed and not degenerate:
        equality_ok = gap <= tol(1e-6)
    return JensenReport(rep_a.value, delta_image, inequality_ok, equality_ok, gap, degenerate)


def _delta_or_zero(omega, a, n_powers):
    svals = np.linalg.svd(a, compute_uv=False)
    if svals[-1] <= pd_tol(float(svals[0])):
        return 0.0
    return geometric_mean(omega, a, n_powers).value


@dataclass
class JensenSuiteSummary:
    trials: int
    inequality_passes: int
    equality_checked: int
    equality_passes: int
    degenerate_trials: int
    degenerate_passes: int
    max_relative_gap: float
    ok: bool


def jensen_measure_suite(omega, phi, psi, trials=100, rng_seed=0, n_powers=24):
    """Random invertible draws from the domain plus singular-image boundary cases.

    Invertible elements come out as x + (1 + ||x||)I, which is invertible for
    any x because the spectrum sits inside the disc of radius ||x||.  Each
    trial gets its own stream spawned from the master seed.  Boundary draws
    shift by an eigenvalue of Phi(x) to force a singular image, where only
    the inequality (with the Delta = 0 convention) is checked.
    """
    a_alg = phi.domain
    eye = np.eye(a_alg.n, dtype=complex)
    boundary = max(1, trials // 10) if trials else 0
    streams = np.random.SeedSequence(rng_seed).spawn(trials + boundary)
    ineq = eq_checked = eq_passed = degen_passed = 0
    worst = 0.0
    for t in range(trials + boundary):
        rng = np.random.default_rng(streams[t])
        coeff = rng.standard_normal(a_alg.dim) + 1j * rng.standard_normal(a_alg.dim)
        x = sum(c * mat for c, mat in zip(coeff, a_alg.basis))
        a = x + (1.0 + float(np.linalg.norm(x, 2))) * eye
        if t < trials:
            report = jensen_check(omega, phi, psi, a, n_powers)
            ineq += bool(report.inequality_ok)
            worst = max(worst, report.relative_gap)
            if report.equality_ok is not None:
                eq_checked += 1
                eq_passed += bool(report.equality_ok)
        else:
            lam = rng.choice(np.linalg.eigvals(phi(a)))
            shifted = a - lam * eye
            d_img = _delta_or_zero(omega, phi(shifted), n_powers)
            d_a = _delta_or_zero(omega, shifted, n_powers)
            degen_passed += bool(d_img <= d_a * (1.0 + tol(1e-7)) + tol(1e-12))
    return JensenSuiteSummary(
        trials=trials,
        inequality_passes=ineq,
        equality_checked=eq_checked,
        equality_passes=eq_passed,
        degenerate_trials=boundary,
        degenerate_passes=degen_passed,
        max_relative_gap=worst,
        ok=ineq == trials and eq_passed == eq_checked and degen_passed == boundary,
    )
