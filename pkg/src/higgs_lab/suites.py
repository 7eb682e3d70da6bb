"""Seeded property suites over random compatible metrics and Higgs fields.

Each suite returns a plain dict of worst-case deviations plus pass flags, so
that the CLI can serialize it and the tests can assert on it.
"""

import numpy as np

from . import algebra as alg
from . import bundle as bdl
from . import diagnostics as dg

ALGEBRA_TOL = 1e-10
ANGLE_TOL = 1e-8


def _seeds(seed, count):
    return np.random.SeedSequence(seed).generate_state(count)


def algebra_suite(n, samples, seed, amplitude=0.5):
    """Identities of compatible metrics, their Gram-Schmidt transitions and real structures."""
    C = alg.standard_pairing(n)
    d = 2 * n
    worst = dict.fromkeys(
        [
            "compatibility",
            "determinant",
            "triangularIdentities",
            "triangularUnitarity",
            "reconstruction",
            "filtrationSymmetry",
            "involution",
            "eigenspaceExchangeAngle",
        ],
        0.0,
    )
    prev = None
    for s in _seeds(seed, samples):
        H = alg.sample_compatible_metric(d, C, int(s), amplitude).H
        worst["compatibility"] = max(worst["compatibility"], float(alg.compatibility_residual(H, C)))
        worst["determinant"] = max(worst["determinant"], abs(np.linalg.det(H).real - 1.0))
        T = alg.gram_schmidt_transition(H)
        rep = alg.triangular_identity_report(T, C)
        worst["triangularIdentities"] = max(worst["triangularIdentities"], rep["max"])
        worst["triangularUnitarity"] = max(worst["triangularUnitarity"], rep["unitarity"])
        rec = max(
            np.abs(T.reconstruct() - H).max(),
            np.abs(T.reconstruct_index_form() - H.T).max(),
        )
        worst["reconstruction"] = max(worst["reconstruction"], float(rec))
        dets = alg.filtration_dets(H)
        for k in range(1, d):
            rel = abs(dets[k - 1] - dets[d - k - 1]) / abs(dets[k - 1])
            worst["filtrationSymmetry"] = max(worst["filtrationSymmetry"], float(rel))
        kappa = alg.real_structure(H, C)
        worst["involution"] = max(worst["involution"], float(kappa.involution_residual()))
        if prev is not None:
            ang = alg.kappa_exchange_angle(prev, H, C)
            worst["eigenspaceExchangeAngle"] = max(worst["eigenspaceExchangeAngle"], ang)
        prev = H
    checks = {k: bool(v <= (ANGLE_TOL if k == "eigenspaceExchangeAngle" else ALGEBRA_TOL)) for k, v in worst.items()}
    return {"n": n, "samples": samples, "seed": seed, "worst": worst, "checks": checks, "holds": all(checks.values())}


def random_higgs_tuple(n, rng, max_degree=3, size=1.0):
    coeffs = []
    for _ in range(n):
        deg = int(rng.integers(0, max_degree + 1))
        c = size * (rng.standard_normal(deg + 1) + 1j * rng.standard_normal(deg + 1))
        coeffs.append(tuple(c))
    return bdl.HiggsTuple(n, tuple(coeffs))


def random_point(rng, radius=0.9):
    r = radius * np.sqrt(rng.uniform())
    return r * np.exp(2j * np.pi * rng.uniform())


def structure_suite(n, samples, seed, amplitude=0.5):
    """gamma / gamma', middle slot metrics and slot products on block-diagonal compatible metrics."""
    spec = bdl.build_bundle(n)
    C = spec.C_weight
    worst = {}
    for s in _seeds(seed, samples):
        rng = np.random.default_rng(int(s))
        H = alg.sample_compatible_metric(spec.dim, C, int(rng.integers(2**31)), amplitude, spec.labels).H
        q = random_higgs_tuple(n, rng)
        _, A = bdl.theta_matrices(spec, q, random_point(rng))
        rep = dg.structural_identities(H, spec, A)
        rep.pop("max")
        for k, v in rep.items():
            worst[k] = max(worst.get(k, 0.0), v)
    checks = {k: bool(v <= ALGEBRA_TOL) for k, v in worst.items()}
    return {"n": n, "samples": samples, "seed": seed, "worst": worst, "checks": checks, "holds": all(checks.values())}


def skew_suite(samples, seed, max_n=5):
    """theta(q) is skew for the pairing diag(Q_V, -Q_W), for random n, q and z."""
    worst = 0.0
    for s in _seeds(seed, samples):
        rng = np.random.default_rng(int(s))
        n = int(rng.integers(1, max_n + 1))
        spec = bdl.build_bundle(n)
        A_block, _ = bdl.theta_matrices(spec, random_higgs_tuple(n, rng), random_point(rng))
        worst = max(worst, float(bdl.skew_residual(spec, A_block)))
    return {"samples": samples, "seed": seed, "worst": worst, "holds": bool(worst <= 1e-14)}


def _random_pd(m, rng, amplitude=0.5):
    from scipy.linalg import expm

    return expm(amplitude * alg.random_hermitian(m, rng))


def quasi_cyclic_suite(samples, seed, max_dim=5):
    """Perturbations of size epsilon0 / 2 keep |e ^ f e ^ ...| above rho |e|^{m-1} / 2."""
    worst = np.inf
    failures = 0
    for s in _seeds(seed, samples):
        rng = np.random.default_rng(int(s))
        m = int(rng.integers(2, max_dim + 1))
        H = _random_pd(m, rng)
        f = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        e = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        vol = alg.quasi_cyclic_volume(f, e, H)
        rho = 0.999 * vol / alg.vector_norm(e, H) ** (m - 1)
        eps0 = alg.quasi_cyclic_epsilon(m, alg.metric_norm(f, H), rho)
        X = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        X *= 0.5 * eps0 / alg.metric_norm(X, H)
        ok, slack, info = alg.quasi_cyclic_stability_margin(f, f + X, e, H, rho)
        if slack is None:
            failures += 1
            continue
        worst = min(worst, slack)
        failures += int(not ok)
    return {"samples": samples, "seed": seed, "minSlack": float(worst), "failures": failures, "holds": failures == 0}


def nu_split_suite(samples, seed, max_n=4):
    """|f - f_nu| <= nu^{-1} (10 n)^3 |[f, s]| for s relating two compatible metrics."""
    worst = np.inf
    failures = 0
    for s_ in _seeds(seed, samples):
        rng = np.random.default_rng(int(s_))
        n = int(rng.integers(1, max_n + 1))
        C = alg.standard_pairing(n)
        H1 = alg.sample_compatible_metric(2 * n, C, int(rng.integers(2**31)), 0.5).H
        H2 = alg.sample_compatible_metric(2 * n, C, int(rng.integers(2**31)), 1.0).H
        S = alg.relative_endomorphism(H1, H2)
        # f close to commuting with s, so that the bound is not vacuous
        f = S @ S + 0.3 * S + 1e-3 * (rng.standard_normal(S.shape) + 1j * rng.standard_normal(S.shape))
        vals = np.linalg.eigvals(S).real
        top = vals.max()
        nu = float(rng.uniform(0.1, 1.0)) * min(1.0, top - 1.0)
        rep = alg.nu_split_bound(f, S, H1, nu)
        worst = min(worst, rep["slack"])
        failures += int(not rep["holds"])
    return {"samples": samples, "seed": seed, "minSlack": float(worst), "failures": failures, "holds": failures == 0}


def model_metric_suite(n, grid):
    """|theta(0)|^2 for h_X at every node, against n(n-1)(2n-1)/3."""
    spec = bdl.build_bundle(n)
    _, A = bdl.theta_matrices(spec, bdl.HiggsTuple.zero(n), grid.z)
    H = bdl.hX_matrix(spec, grid.gx)
    val = bdl.higgs_norm_sq(A, H, grid.gx)
    target = bdl.model_higgs_norm(n)
    err = float(np.abs(val - target).max())
    return {"n": n, "target": target, "maxDeviation": err, "holds": bool(err <= 1e-12 * max(1.0, target))}
