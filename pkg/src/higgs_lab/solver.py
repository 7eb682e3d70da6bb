"""Dirichlet problem for the Hitchin equation on a geodesic disk.

For a metric matrix H (``h(u, v) = v^* H u``) in the global holomorphic frame
and Higgs field ``theta = A dz`` the equation F(H) + [theta, theta^*H] = 0,
contracted with sqrt(-1) Lambda, reads ``R(H) = H^{-1} Psi(H) = 0`` with the
Hermitian field

    Psi(H) = (2/g) [ -1/4 Lap H + H_zbar H^{-1} H_z + H A H^{-1} A^* H - A^* H A ].

The unknowns are the V and W blocks of H at interior nodes, rescaled by the
reference metric: H = D K D with D = h_X^{1/2}.  Cross V/W entries are zero
and stay zero.  Newton steps solve with GMRES on matrix-free Jacobian
products; the preconditioner is exact for the principal part at h_X, mode by
mode in phi.  The heat flow dK/dt = -D^{-1} Psi D^{-1} is integrated semi-implicitly
with the same operator.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import bundle as bdl
from .algebra import (
    compatibility_residual,
    compatible_projection,
    project_compatible_direction,
    random_hermitian,
)
from .domain import DiskGrid, MetricField, build_grid

NEWTON = "newton"
HEAT_FLOW = "heat_flow"


class SolverError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class SolverConfig:
    method: str = NEWTON
    residualTol: float = 1e-8
    maxIterations: int = 40
    maxHalvings: int = 30
    krylovRestart: int = 80
    flowStepInitial: float = 1.0
    flowStepMax: float = 1e8
    flowMaxSteps: int = 4000
    compatProjection: int = 0  # project every k steps, 0 = off
    # subtract the truncation defect of the q = 0 model metric, so that h_X is
    # an exact discrete solution when q = 0
    referenceDefect: bool = True

    def __post_init__(self):
        if self.method not in (NEWTON, HEAT_FLOW):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.residualTol > 0:
            raise ValueError("residualTol must be positive")
        if self.maxIterations < 1 or self.maxHalvings < 0:
            raise ValueError("iteration limits must be positive")


@dataclass
class ResidualReport:
    method: str
    converged: bool
    iterations: int
    supResidual: float
    iterationTrace: list = field(default_factory=list)
    compatibilityDrift: float = 0.0
    offBlock: float = 0.0
    positivityMinEig: float = 0.0

    def to_dict(self):
        return asdict(self)


def _herm(X):
    return 0.5 * (X + np.swapaxes(X.conj(), -1, -2))


def _ct(X):
    return np.swapaxes(X.conj(), -1, -2)


def psi_field(grid, H, A):
    """The Hermitian form H R(H) at every node."""
    g = grid.g[..., None, None]
    Hi = np.linalg.inv(H)
    Hz, Hzb = grid.complex_derivatives(H)
    lap = grid.laplacian(H)
    As = _ct(A)
    HA = H @ A
    out = -0.25 * lap + Hzb @ Hi @ Hz + HA @ Hi @ As @ H - As @ H @ A
    return _herm((2.0 / g) * out)


def psi_jvp(grid, H, A, K):
    """Directional derivative of psi_field at H along the Hermitian field K."""
    g = grid.g[..., None, None]
    Hi = np.linalg.inv(H)
    Hz, Hzb = grid.complex_derivatives(H)
    Kz, Kzb = grid.complex_derivatives(K)
    lap = grid.laplacian(K)
    As = _ct(A)
    AHi = A @ Hi
    B = AHi @ As  # A H^{-1} A^*
    out = (
        -0.25 * lap
        + Kzb @ Hi @ Hz
        + Hzb @ Hi @ Kz
        - Hzb @ Hi @ K @ Hi @ Hz
        + K @ B @ H
        + H @ B @ K
        - H @ AHi @ K @ Hi @ As @ H
        - As @ K @ A
    )
    return _herm((2.0 / g) * out)


def residual_norms(H, Psi):
    """Frobenius norm of the contracted residual in an h-orthonormal frame, per node."""
    R = np.linalg.solve(H, Psi)
    val = np.real(np.trace(R @ R, axis1=-2, axis2=-1))
    return np.sqrt(np.maximum(val, 0.0))


def hitchin_residual(H, A, grid):
    """sqrt(-1) Lambda (F + [theta, theta^*]) expressed in the Gram-Schmidt frame of H.

    The result is Hermitian at every node; it vanishes exactly for harmonic metrics.
    """
    H = H.H if isinstance(H, MetricField) else np.asarray(H)
    if np.linalg.eigvalsh(H).min() <= 0:
        bad = np.argwhere(np.linalg.eigvalsh(H).min(axis=-1) <= 0)[0]
        raise ValueError(f"metric not positive at node (ring {bad[0]}, angle {bad[1]})")
    Psi = psi_field(grid, H, A)
    L = np.linalg.cholesky(H)
    Li = np.linalg.inv(L)
    return _herm(Li @ Psi @ _ct(Li))


def sup_residual(grid, H, A):
    return float(residual_norms(H, psi_field(grid, H, A))[grid.interior_mask].max())


def hX_field(spec, grid):
    H = bdl.hX_matrix(spec, grid.gx)
    return MetricField(grid, H.astype(complex), spec.labels, True)


class _Unknowns:
    """Real packing of the V and W blocks at interior nodes."""

    def __init__(self, spec, grid):
        lab = spec.labels
        d = spec.dim
        self.pairs = [(i, j) for i in range(d) for j in range(i, d) if lab[i] == lab[j]]
        self.shape = (grid.Nr - 1, grid.Nphi)
        self.d = d
        self.size = sum(1 if i == j else 2 for i, j in self.pairs) * self.shape[0] * self.shape[1]

    def pack(self, X):
        parts = []
        for i, j in self.pairs:
            parts.append(X[:-1, :, i, j].real)
            if i != j:
                parts.append(X[:-1, :, i, j].imag)
        return np.stack(parts).ravel()

    def unpack(self, v, full_shape):
        X = np.zeros(full_shape, dtype=complex)
        parts = v.reshape((-1,) + self.shape)
        k = 0
        for i, j in self.pairs:
            if i == j:
                X[:-1, :, i, i] = parts[k]
                k += 1
            else:
                val = parts[k] + 1j * parts[k + 1]
                X[:-1, :, i, j] = val
                X[:-1, :, j, i] = np.conj(val)
                k += 2
        return X

    def entries(self, v):
        """Complex entry fields, one per pair."""
        parts = v.reshape((-1,) + self.shape)
        out = []
        k = 0
        for i, j in self.pairs:
            if i == j:
                out.append(parts[k].astype(complex))
                k += 1
            else:
                out.append(parts[k] + 1j * parts[k + 1])
                k += 2
        return out

    def from_entries(self, fields):
        parts = []
        for (i, j), f in zip(self.pairs, fields):
            parts.append(f.real)
            if i != j:
                parts.append(f.imag)
        return np.stack(parts).ravel()


class HitchinProblem:
    """Scaled discrete Hitchin system on one grid with fixed boundary values."""

    def __init__(self, spec, q, grid, boundary=None, reference_defect=False):
        self.spec, self.q, self.grid = spec, q, grid
        _, self.A = bdl.theta_matrices(spec, q, grid.z)
        diag = bdl.hX_diagonal(spec, grid.gx)
        self.Dv = np.sqrt(diag)  # (Nr, Nphi, d)
        self.W = self.Dv[..., :, None] * self.Dv[..., None, :]
        self.defect = 0.0
        if reference_defect:
            _, A0 = bdl.theta_matrices(spec, bdl.HiggsTuple.zero(spec.n), grid.z)
            self.defect = psi_field(grid, bdl.hX_matrix(spec, grid.gx).astype(complex), A0)
        self.unknowns = _Unknowns(spec, grid)
        d = spec.dim
        self.full_shape = grid.shape + (d, d)
        K = np.broadcast_to(np.eye(d, dtype=complex), self.full_shape).copy()
        if boundary is not None:
            Hb = boundary.H[-1] if isinstance(boundary, MetricField) else np.asarray(boundary)
            if Hb.shape != (grid.Nphi, d, d):
                raise ValueError(f"boundary data must have shape {(grid.Nphi, d, d)}")
            K[-1] = Hb / self.W[-1]
        self.K0 = K
        self._factor_cache = {}
        self._mass = None

    # scaled maps ------------------------------------------------------------
    def metric(self, K):
        return K * self.W

    def psi(self, H):
        return psi_field(self.grid, H, self.A) - self.defect

    def scaled_residual(self, K):
        return self.psi(self.metric(K)) / self.W

    def scaled_jvp(self, K, dK):
        return psi_jvp(self.grid, self.metric(K), self.A, dK * self.W) / self.W

    def sup_residual(self, K):
        H = self.metric(K)
        return float(residual_norms(H, self.psi(H))[:-1].max())

    def with_vector(self, K, v):
        return K + self.unknowns.unpack(v, self.full_shape)

    # preconditioner -----------------------------------------------------------
    def _mass_terms(self):
        """Zero-order diagonal coefficients of the linearization at the initial state."""
        if self._mass is None:
            K = np.broadcast_to(np.eye(self.spec.dim, dtype=complex), self.full_shape)
            mass = []
            for i, j in self.unknowns.pairs:
                E = np.zeros(self.full_shape, dtype=complex)
                E[..., i, j] = 1.0
                E[..., j, i] = 1.0
                J = self.scaled_jvp(K, E)
                mass.append(J[:-1, :, i, j].real.mean(axis=1))
            self._mass = mass
        return self._mass

    def _factors(self, shift):
        key = float(shift)
        if key in self._factor_cache:
            return self._factor_cache[key]
        grid = self.grid
        nr = grid.Nr - 1
        r = grid.r[:nr]
        g = grid.g[:nr, 0]
        powers = self.spec.weight_powers
        mass = self._mass_terms()
        mode_ops = {}
        for m in grid.modes:
            if m not in mode_ops:
                mode_ops[m] = grid.mode_operators(int(m))[1][:nr, :nr]
        factors = []
        for (i, j), mu in zip(self.unknowns.pairs, mass):
            blocks = np.empty((grid.Nphi, nr, nr))
            for k, m in enumerate(grid.modes):
                angular = -(2.0 / g) * (powers[j] - powers[i]) * m / (1 - r**2)
                blocks[k] = -(0.5 / g)[:, None] * mode_ops[m] + np.diag(mu + angular + shift)
            # one small dense block per Fourier mode; store the inverses
            factors.append(np.linalg.inv(blocks))
        self._factor_cache[key] = factors
        return factors

    def apply_inverse(self, v, shift=0.0):
        factors = self._factors(shift)
        out = []
        for f, inv in zip(self.unknowns.entries(v), factors):
            F = np.fft.fft(f, axis=1)  # (nr, nphi)
            X = np.einsum("kab,bk->ak", inv, F)
            out.append(np.fft.ifft(X, axis=1))
        return self.unknowns.from_entries(out)


def _min_eig(K):
    return float(np.linalg.eigvalsh(K).min())


def _newton(problem, config):
    K = problem.K0.copy()
    U = problem.unknowns
    trace = []
    n_halvings_total = 0
    for it in range(config.maxIterations + 1):
        F = U.pack(problem.scaled_residual(K))
        fnorm = float(np.linalg.norm(F))
        sup = problem.sup_residual(K)
        trace.append({"iteration": it, "supResidual": sup, "l2Residual": fnorm})
        if sup <= config.residualTol:
            return K, trace, True
        if it == config.maxIterations:
            break
        Kc = K

        def matvec(v, Kc=Kc):
            return U.pack(problem.scaled_jvp(Kc, U.unpack(v, problem.full_shape)))

        J = LinearOperator((U.size, U.size), matvec=matvec, dtype=float)
        M = LinearOperator((U.size, U.size), matvec=problem.apply_inverse, dtype=float)
        rtol = max(1e-12, min(1e-2, 1e-2 * sup))
        step, info = gmres(J, -F, M=M, rtol=rtol, restart=config.krylovRestart, maxiter=20)
        trace[-1]["krylovInfo"] = int(info)
        lam = 1.0
        for halving in range(config.maxHalvings + 1):
            Kn = problem.with_vector(K, lam * step)
            if _min_eig(Kn) > 0:
                Fn = float(np.linalg.norm(U.pack(problem.scaled_residual(Kn))))
                if Fn < (1 - 1e-4 * lam) * fnorm or Fn < 1e-13:
                    break
            lam *= 0.5
        else:
            raise SolverError("line search failed after maximal step halving", trace)
        n_halvings_total += halving
        trace[-1]["step"] = lam
        K = Kn
        if config.compatProjection and (it + 1) % config.compatProjection == 0:
            K = _project(problem, K)
    raise SolverError(f"no convergence after {config.maxIterations} Newton iterations", trace)


def _heat_flow(problem, config):
    K = problem.K0.copy()
    U = problem.unknowns
    dt = config.flowStepInitial
    trace = []
    F = U.pack(problem.scaled_residual(K))
    fnorm = float(np.linalg.norm(F))
    failures = 0
    for it in range(config.flowMaxSteps):
        sup = problem.sup_residual(K)
        trace.append({"iteration": it, "supResidual": sup, "l2Residual": fnorm, "dt": dt})
        if sup <= config.residualTol:
            return K, trace, True
        step = -problem.apply_inverse(F, shift=1.0 / dt)
        Kn = problem.with_vector(K, step)
        ok = _min_eig(Kn) > 0
        if ok:
            Fn_vec = U.pack(problem.scaled_residual(Kn))
            Fn = float(np.linalg.norm(Fn_vec))
            ok = Fn < fnorm
        if ok:
            K, F, fnorm = Kn, Fn_vec, Fn
            dt = min(dt * 2.0, config.flowStepMax)
            failures = 0
            if config.compatProjection and (it + 1) % config.compatProjection == 0:
                K = _project(problem, K)
                F = U.pack(problem.scaled_residual(K))
                fnorm = float(np.linalg.norm(F))
        else:
            dt *= 0.25
            failures += 1
            if failures > config.maxHalvings:
                raise SolverError("heat flow step could not be stabilised", trace)
    raise SolverError(f"heat flow not converged after {config.flowMaxSteps} steps", trace)


def _project(problem, K):
    H = problem.metric(K)
    Hp = compatible_projection(H[:-1], problem.spec.C_weight)
    K = K.copy()
    K[:-1] = Hp / problem.W[:-1]
    return K


def solve_dirichlet(spec, q, grid, boundary=None, config=None):
    """Harmonic metric with prescribed boundary values (h_X when boundary is None)."""
    config = config or SolverConfig()
    problem = HitchinProblem(spec, q, grid, boundary, config.referenceDefect)
    if config.method == NEWTON:
        K, trace, ok = _newton(problem, config)
    else:
        K, trace, ok = _heat_flow(problem, config)
    H = _herm(problem.metric(K))
    field_ = MetricField(grid, H, spec.labels, True)
    drift = float(compatibility_residual(H, spec.C_weight).max())
    report = ResidualReport(
        method=config.method,
        converged=ok,
        iterations=len(trace) - 1,
        supResidual=trace[-1]["supResidual"],
        iterationTrace=trace,
        compatibilityDrift=drift,
        offBlock=field_.off_block(),
        positivityMinEig=_min_eig(K),
    )
    return field_, report


def perturbed_boundary(spec, grid, epsilon, seed=0):
    """h_X^{1/2} exp(X(phi)) h_X^{1/2} on the boundary ring, X compatible, block diagonal.

    X(phi) = epsilon (M0 + M1 cos phi + M2 sin phi) with each M Hermitian and
    anti-invariant under M -> C conj(M) C, so the exponential stays compatible.
    """
    rng = np.random.default_rng(seed)
    C = spec.C_weight.entries.real
    lab = spec.labels
    same = lab[:, None] == lab[None, :]
    Ms = []
    for _ in range(3):
        M = random_hermitian(spec.dim, rng) * same
        Ms.append(project_compatible_direction(M, C))
    phi = grid.phi[:, None, None]
    X = epsilon * (Ms[0] + Ms[1] * np.cos(phi) + Ms[2] * np.sin(phi))
    w, U = np.linalg.eigh(X)
    E = (U * np.exp(w)[..., None, :]) @ _ct(U)
    D = np.sqrt(bdl.hX_diagonal(spec, grid.gx[-1]))
    # eigh mixes the blocks at round-off level; the exact exponential does not
    return _herm(D[..., :, None] * (E * same) * D[..., None, :])


def metric_pair_diagnostics(h1, h2, delta_factor=10.0):
    """s = h1^{-1} h2 and the discrete subharmonicity of tr(s) and log tr(s).

    For two harmonic metrics sqrt(-1) Lambda dbar d tr(s) <= 0; the discrete
    check allows delta = delta_factor * spacing^2 * scale, where scale is the
    sup of the checked field.  Nodes with value in (delta, 10 delta] are counted
    as flagged near misses; they still fail the check.
    """
    grid = h1.grid
    if h2.grid is not grid and (h2.grid.shape != grid.shape or h2.grid.R != grid.R):
        raise ValueError("metrics live on different grids")
    S = np.linalg.solve(h1.H, h2.H)
    tr = np.real(np.trace(S, axis1=-2, axis2=-1))
    interior = grid.interior_mask
    out = {"trace": tr, "s": S}
    checks = {}
    for name, u in (("trace", tr), ("logTrace", np.log(tr))):
        val = grid.i_lambda_dbar_d(u)[interior]
        scale = float(np.abs(val).max())
        delta = max(delta_factor * grid.spacing**2 * scale, 1e-12)
        checks[name] = {
            "maxValue": float(val.max()),
            "delta": delta,
            "flagged": int(np.count_nonzero((val > delta) & (val <= 10 * delta))),
            "holds": bool(val.max() <= delta),
        }
        out[name + "Operator"] = grid.i_lambda_dbar_d(u)
    interior_max = float(tr[interior].max())
    boundary_max = float(tr[grid.boundary_mask].max())
    checks["boundaryMaximum"] = {
        "interiorMax": interior_max,
        "boundaryMax": boundary_max,
        "holds": bool(interior_max <= boundary_max),
    }
    checks["holds"] = all(c["holds"] for c in checks.values())
    out["report"] = checks
    return out


def log_spectrum_distance(H1, H2):
    """Per-node max |log eigenvalue| of H1^{-1} H2."""
    L = np.linalg.cholesky(H1)
    Li = np.linalg.inv(L)
    M = _herm(Li @ H2 @ _ct(Li))
    w = np.linalg.eigvalsh(M)
    return np.abs(np.log(w)).max(axis=-1)


def relative_to_reference(spec, field_):
    """K = h_X^{-1/2} H h_X^{-1/2}, a well-scaled copy of the metric."""
    D = np.sqrt(bdl.hX_diagonal(spec, field_.grid.gx))
    return field_.H / (D[..., :, None] * D[..., None, :])


def exhaustion_sequence(spec, q, radii, probe_radius, grid_shape=(32, 64), config=None, probe_rings=8):
    """Solve on growing disks and measure how much the solutions still move on a probe disk."""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    if not probe_radius < min(radii):
        raise ValueError("probe radius must be smaller than every disk radius")
    nr, nphi = grid_shape
    probe = np.linspace(0.0, probe_radius, probe_rings + 1)[1:]
    samples, reports = [], []
    for R in radii:
        grid = build_grid(R, nr, nphi)
        sol, rep = solve_dirichlet(spec, q, grid, None, config)
        K = relative_to_reference(spec, sol)
        samples.append(grid.radial_interpolator(K)(probe))
        reports.append({"radius": R, "iterations": rep.iterations, "supResidual": rep.supResidual})
    d = []
    for a, b in zip(samples, samples[1:]):
        d.append(float(log_spectrum_distance(_herm(b), _herm(a)).max()))
    tail = d[-3:]
    decreasing = all(x > y for x, y in zip(tail, tail[1:]))
    rates = [float(x / y) if y > 0 else float("inf") for x, y in zip(d, d[1:])]
    return {
        "radii": radii,
        "probeRadius": float(probe_radius),
        "differences": d,
        "ratios": rates,
        "decreasingTail": bool(decreasing),
        "solves": reports,
    }


__all__ = [
    "DiskGrid",
    "HitchinProblem",
    "ResidualReport",
    "SolverConfig",
    "SolverError",
    "exhaustion_sequence",
    "hX_field",
    "hitchin_residual",
    "log_spectrum_distance",
    "metric_pair_diagnostics",
    "perturbed_boundary",
    "psi_field",
    "psi_jvp",
    "solve_dirichlet",
]
