"""Finite-dimensional linear algebra of symmetric pairings and Hermitian metrics.

Matrix convention: a Hermitian metric ``h`` on C^m is stored as the matrix ``H``
with ``h(u, v) = v^* H u`` (linear in the first slot).  A symmetric pairing
``C`` is stored as ``C(u, w) = u^T C w``.

Everything in here is a pure function of its arguments.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

BLOCK = "block"
WEIGHT = "weight"


class PairingError(ValueError):
    pass


class NotPositiveDefinite(ValueError):
    pass


class IncompatibleMetric(ValueError):
    pass


@dataclass(frozen=True)
class PairingMatrix:
    entries: np.ndarray
    ordering: str = WEIGHT

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise PairingError(f"pairing must be square, got shape {m.shape}")
        if not np.allclose(m, m.T, atol=1e-14):
            raise PairingError("pairing must be symmetric")
        if abs(np.linalg.det(m)) < 1e-300:
            raise PairingError("pairing is singular")
        if self.ordering not in (BLOCK, WEIGHT):
            raise PairingError(f"unknown ordering tag {self.ordering!r}")
        object.__setattr__(self, "entries", m)

    @property
    def dim(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class CompatibleMetric:
    H: np.ndarray
    pairing: PairingMatrix


@dataclass(frozen=True)
class TriangularTransition:
    """Upper-triangular P whose columns ``v_k = sum_j P[j, k] e_j`` are h-orthonormal."""

    P: np.ndarray
    inverseP: np.ndarray = field(repr=False)

    def reconstruct(self):
        """The metric matrix ``P^{-*} P^{-1}`` in the ``v^* H u`` convention."""
        Pi = self.inverseP
        return Pi.conj().T @ Pi

    def reconstruct_index_form(self):
        """``transpose(P^{-1}) conj(P^{-1})``, the matrix ``[h(e_i, e_j)]``, i.e. H^T."""
        Pi = self.inverseP
        return Pi.T @ Pi.conj()

    def slot_metrics(self):
        """Norms squared of the successive orthogonal complements, det(F_k)/det(F_{k-1})."""
        return 1.0 / np.abs(np.diag(self.P)) ** 2


@dataclass(frozen=True)
class RealStructure:
    """Anti-linear map ``kappa(v) = K conj(v)``."""

    kappaMatrix: np.ndarray

    def __call__(self, v):
        return self.kappaMatrix @ np.conj(v)

    def involution_residual(self):
        K = self.kappaMatrix
        return np.linalg.norm(K @ K.conj() - np.eye(K.shape[0]))


def standard_pairing(n):
    """The weight-ordered pairing of dimension 2n: anti-diagonal with an identity middle block."""
    d = 2 * n
    C = np.zeros((d, d))
    for i in range(d):
        C[i, d - 1 - i] = 1.0
    if n >= 1:
        C[n - 1, n - 1] = C[n, n] = 1.0
        C[n - 1, n] = C[n, n - 1] = 0.0
    return PairingMatrix(C, WEIGHT)


def _pairing_entries(C):
    return C.entries if isinstance(C, PairingMatrix) else np.asarray(C, dtype=complex)


def compatibility_residual(H, C):
    """Relative Frobenius defect of ``H conj(C)^{-1} H^T = C``."""
    Cm = _pairing_entries(C)
    H = np.asarray(H)
    if H.shape[-2:] != Cm.shape:
        raise PairingError(f"dimension mismatch: metric {H.shape[-2:]} vs pairing {Cm.shape}")
    if abs(np.linalg.det(Cm)) < 1e-300:
        raise PairingError("pairing is singular")
    Cbar_inv = np.linalg.inv(Cm.conj())
    lhs = H @ Cbar_inv @ np.swapaxes(H, -1, -2)
    return np.linalg.norm(lhs - Cm, axis=(-2, -1)) / np.linalg.norm(Cm)


def project_compatible_direction(M, C):
    """Project a Hermitian M onto ``{M : C conj(M) C = -M}`` (C real involutive)."""
    Cm = _pairing_entries(C)
    return 0.5 * (M - Cm @ M.conj() @ Cm)


def random_hermitian(dim, rng):
    X = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (X + X.conj().T)


def sample_compatible_metric(dim, C, seed, amplitude=0.5, labels=None):
    """Random metric ``exp(M)`` with M in the compatible tangent space at the identity.

    ``labels`` optionally assigns a block label to every index; entries of M
    between different labels are dropped, which yields metrics split along that
    direct sum (for the standard pairing the V/W splitting is such a labelling).
    """
    Cm = _pairing_entries(C)
    if Cm.shape != (dim, dim):
        raise PairingError(f"dimension mismatch: {dim} vs pairing {Cm.shape}")
    rng = np.random.default_rng(seed)
    M = project_compatible_direction(random_hermitian(dim, rng), Cm)
    if labels is not None:
        labels = np.asarray(labels)
        M = M * (labels[:, None] == labels[None, :])
    H = expm(amplitude * M)
    H = 0.5 * (H + H.conj().T)
    pairing = C if isinstance(C, PairingMatrix) else PairingMatrix(Cm)
    return CompatibleMetric(H, pairing)


def gram_schmidt_transition(H):
    """Gram-Schmidt on the standard frame: upper-triangular P with P^* H P = I, diag(P) > 0."""
    H = np.asarray(H.H if isinstance(H, CompatibleMetric) else H, dtype=complex)
    d = H.shape[0]
    for k in range(1, d + 1):
        minor = np.linalg.det(H[:k, :k]).real
        if not minor > 0:
            raise NotPositiveDefinite(f"leading minor {k} is {minor:.3e}")
    L = np.linalg.cholesky(H)
    U = L.conj().T  # H = U^* U, U upper triangular with positive diagonal
    P = np.linalg.inv(U)
    return TriangularTransition(P, U)


def triangular_identity_report(T, C):
    """Violations of the three modulus identities satisfied by compatible transitions."""
    if not isinstance(C, PairingMatrix) or C.ordering != WEIGHT:
        raise PairingError("identities are stated for the weight-ordered pairing")
    P, Pi = T.P, T.inverseP
    d = P.shape[0]
    n = d // 2
    diag = max(abs(abs(P[i, i]) - abs(Pi[d - 1 - i, d - 1 - i])) for i in range(d))
    row = 0.0
    for j in range(d):
        if j in (n - 1, n):
            continue
        row = max(row, abs(abs(P[n - 1, j]) - abs(Pi[d - 1 - j, n - 1])))
    middle = abs(abs(Pi[n - 1, n - 1]) ** 2 - abs(P[n - 1, n - 1]) ** 2 - abs(P[n - 1, n]) ** 2)
    # the transition conjugates the pairing by a unitary matrix
    Pp = T.P.conj()
    Tm = Pp.T @ C.entries @ Pp
    unitary = np.linalg.norm(Tm.conj().T @ Tm - np.eye(d))
    return {
        "diagonal": float(diag),
        "middle_row": float(row),
        "middle_block": float(middle),
        "max": float(max(diag, row, middle)),
        "unitarity": float(unitary),
    }


# name used by the rest of the package
check_triangular_identities = triangular_identity_report


def filtration_dets(H):
    """Leading principal minors det(H|F_k), k = 1..dim (works on stacked metrics)."""
    H = np.asarray(H)
    d = H.shape[-1]
    return np.stack([np.linalg.det(H[..., :k, :k]).real for k in range(1, d + 1)], axis=-1)


def real_structure(H, C=None, tol=1e-8):
    """kappa with ``h(u, v) = C(u, kappa v)``; here K = C^{-1} H^T."""
    if isinstance(H, CompatibleMetric):
        C = H.pairing if C is None else C
        H = H.H
    Cm = _pairing_entries(C)
    res = float(compatibility_residual(H, Cm))
    if res > tol:
        raise IncompatibleMetric(f"metric is not compatible (residual {res:.3e})")
    return RealStructure(np.linalg.solve(Cm, np.asarray(H).T))


def relative_endomorphism(H1, H2):
    """s with h2(u, v) = h1(s u, v), i.e. s = H1^{-1} H2."""
    return np.linalg.solve(H1, H2)


def subspace_angle(A, B):
    """Largest principal angle between the column spans of A and B (standard inner product)."""
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    # sine form: arccos of singular values near 1 loses half the digits
    resid = qa - qb @ (qb.conj().T @ qa)
    return float(np.arcsin(min(1.0, np.linalg.norm(resid, 2))))


def eigenspaces(s, H, tol=1e-7):
    """Eigenvalues and eigenspaces of an h-self-adjoint positive s, clustered by value.

    Returns a list of (value, basis) with basis columns in the original frame.
    """
    T = gram_schmidt_transition(H)
    S = T.inverseP @ s @ T.P
    S = 0.5 * (S + S.conj().T)
    vals, vecs = np.linalg.eigh(S)
    groups = []
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[i - 1] > tol * max(1.0, abs(vals[i])):
            groups.append((float(vals[start:i].mean()), T.P @ vecs[:, start:i]))
            start = i
    return groups


def kappa_exchange_angle(H1, H2, C, tol=1e-7):
    """max over eigenvalues a of s = H1^{-1} H2 of angle(kappa(V_a), V_{1/a})."""
    kappa = real_structure(H1, C)
    s = relative_endomorphism(H1, H2)
    groups = eigenspaces(s, H1, tol)
    worst = 0.0
    for a, basis in groups:
        image = kappa.kappaMatrix @ basis.conj()
        partner = [b for (c, b) in groups if abs(c * a - 1.0) < 10 * tol * max(1.0, a, 1 / a)]
        if len(partner) != 1 or partner[0].shape[1] != basis.shape[1]:
            return float("inf")
        worst = max(worst, subspace_angle(image, partner[0]))
    return worst


def metric_norm(f, H, ord=2):
    """Norm of an endomorphism with respect to h (operator norm by default)."""
    T = gram_schmidt_transition(H)
    return float(np.linalg.norm(T.inverseP @ f @ T.P, ord))


def vector_norm(e, H):
    return float(np.sqrt(np.real(np.conj(e) @ H @ e)))


def quasi_cyclic_volume(f, e, H=None):
    """|e ^ f e ^ ... ^ f^{m-2} e|_h as the square root of the h-Gram determinant."""
    f = np.asarray(f)
    m = f.shape[0]
    H = np.eye(m) if H is None else np.asarray(H)
    cols = [np.asarray(e, dtype=complex)]
    for _ in range(m - 2):
        cols.append(f @ cols[-1])
    V = np.stack(cols, axis=1)
    gram = V.conj().T @ H @ V
    det = np.linalg.det(gram).real
    return float(np.sqrt(max(det, 0.0)))


def quasi_cyclic_epsilon(m, f_norm, rho):
    """Largest admissible perturbation size from (m-1)(1+|f|)^{(m-1)(m-2)/2} eps <= rho/2, eps < 1."""
    eps = rho / (2.0 * (m - 1) * (1.0 + f_norm) ** ((m - 1) * (m - 2) / 2))
    return min(eps, 1.0)


def quasi_cyclic_stability_margin(f, f1, e, H, rho):
    """Check that a quasi-cyclic vector survives a small perturbation of f.

    Returns (ok, slack, info) with slack = |w(f1, e)| - (rho/2)|e|^{m-1}.  When the
    hypotheses fail the check is skipped and ``info['precondition']`` says why.
    """
    f = np.asarray(f)
    m = f.shape[0]
    enorm = vector_norm(e, H)
    fnorm = metric_norm(f, H)
    vol = quasi_cyclic_volume(f, e, H)
    info = {"volume": vol, "f_norm": fnorm, "e_norm": enorm}
    if rho * enorm ** (m - 1) > vol * (1 + 1e-12):
        info["precondition"] = "rho |e|^(m-1) exceeds |w(f, e)|"
        return False, None, info
    eps0 = quasi_cyclic_epsilon(m, fnorm, rho)
    dist = metric_norm(np.asarray(f1) - f, H)
    info.update(epsilon0=eps0, distance=dist)
    if dist > eps0:
        info["precondition"] = "perturbation larger than epsilon0"
        return False, None, info
    vol1 = quasi_cyclic_volume(f1, e, H)
    slack = vol1 - 0.5 * rho * enorm ** (m - 1)
    info["perturbed_volume"] = vol1
    return slack > 0, slack, info


def nu_split_bound(f, s, H, nu, tol=1e-9):
    """Compare |f - f_nu| with nu^{-1} (10 n)^3 |[f, s]|, where f_nu drops the mixing blocks.

    The splitting E_nu + U + kappa(U) is built from the eigenvalues a > 1 of s:
    with c_0 = 1 < c_1 < ... the first gap exceeding nu/(2n) separates the
    eigenvalues kept in E_nu from those gathered in U.  All three pieces are
    h-orthogonal, so blocks are cut with orthogonal projections in an
    h-orthonormal frame.
    """
    f = np.asarray(f)
    d = f.shape[0]
    n = d // 2
    T = gram_schmidt_transition(H)
    S = T.inverseP @ s @ T.P
    S = 0.5 * (S + S.conj().T)
    F = T.inverseP @ f @ T.P
    vals, vecs = np.linalg.eigh(S)
    above = vals[vals > 1 + tol]
    report = {"n": n, "nu": float(nu)}
    if above.size == 0:
        report.update(case="s = identity case", lhs=0.0, rhs=0.0, slack=0.0, holds=True)
        return report
    distinct = [1.0]
    for a in np.sort(above):
        if a - distinct[-1] > tol * a:
            distinct.append(float(a))
    if not 0 < nu <= min(1.0, distinct[-1] - 1.0) + 1e-12:
        raise ValueError(f"nu must lie in (0, {min(1.0, distinct[-1] - 1.0)}]")
    cut = None
    for i in range(1, len(distinct)):
        if distinct[i] - distinct[i - 1] > 0.5 * nu / n:
            cut = distinct[i]
            break
    threshold = cut - tol * cut
    upper = vals >= threshold
    lower = vals <= 1.0 / threshold
    middle = ~(upper | lower)
    blocks = [vecs[:, mask] for mask in (middle, upper, lower) if mask.any()]
    Ft = np.zeros_like(F)
    for B in blocks:
        Pr = B @ B.conj().T
        Ft += Pr @ F @ Pr
    lhs = float(np.linalg.norm(F - Ft, 2))
    comm = float(np.linalg.norm(F @ S - S @ F, 2))
    rhs = (10.0 * n) ** 3 / nu * comm
    report.update(
        case="split",
        kept=[float(v) for v in vals[middle]],
        upper=[float(v) for v in vals[upper]],
        lhs=lhs,
        commutator=comm,
        rhs=rhs,
        slack=rhs - lhs,
        holds=lhs <= rhs,
    )
    return report


def compatible_projection(H, C):
    """Geometric mean of H and C conj(H)^{-1} C; a compatible metric, equal to H when H already is."""
    Cm = _pairing_entries(C)
    H = np.asarray(H)
    Hd = Cm @ np.linalg.inv(H.conj()) @ Cm
    w, V = np.linalg.eigh(H)
    root = (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V.conj(), -1, -2)
    iroot = (V / np.sqrt(w)[..., None, :]) @ np.swapaxes(V.conj(), -1, -2)
    mid = iroot @ Hd @ iroot
    w2, V2 = np.linalg.eigh(0.5 * (mid + np.swapaxes(mid.conj(), -1, -2)))
    msq = (V2 * np.sqrt(w2)[..., None, :]) @ np.swapaxes(V2.conj(), -1, -2)
    out = root @ msq @ root
    return 0.5 * (out + np.swapaxes(out.conj(), -1, -2))


def transition_stress(n, samples, amplitude, seed):
    """Record the largest |P| and |P^{-1}| entries over random compatible metrics."""
    C = standard_pairing(n)
    rng = np.random.default_rng(seed)
    worst_p = worst_pi = 0.0
    for _ in range(samples):
        H = sample_compatible_metric(2 * n, C, int(rng.integers(2**31)), amplitude).H
        T = gram_schmidt_transition(H)
        worst_p = max(worst_p, float(np.abs(T.P).max()))
        worst_pi = max(worst_pi, float(np.abs(T.inverseP).max()))
    return {"max_abs_P": worst_p, "max_abs_Pinv": worst_pi}
