import numpy as np
import pytest

from higgs_lab import algebra as alg
from higgs_lab import bundle as bdl
from higgs_lab import solver as slv
from higgs_lab.domain import MetricField, build_grid


@pytest.fixture(scope="module")
def small_grid():
    return build_grid(0.5, 16, 32)


def _random_metric(spec, grid, seed, amp=0.2):
    rng = np.random.default_rng(seed)
    H0 = bdl.hX_matrix(spec, grid.gx).astype(complex)
    x, y = grid.z.real[..., None, None], grid.z.imag[..., None, None]
    M = sum(alg.random_hermitian(spec.dim, rng) * f for f in (1.0, x, y * x))
    w, U = np.linalg.eigh(amp * M)
    E = (U * np.exp(w)[..., None, :]) @ np.swapaxes(U.conj(), -1, -2)
    D = np.sqrt(bdl.hX_diagonal(spec, grid.gx))
    return D[..., :, None] * E * D[..., None, :], H0


def test_config_validation():
    with pytest.raises(ValueError):
        slv.SolverConfig(method="multigrid")
    with pytest.raises(ValueError):
        slv.SolverConfig(residualTol=0)
    with pytest.raises(ValueError):
        slv.SolverConfig(maxIterations=0)


@pytest.mark.parametrize("n", [2, 3])
def test_jvp_matches_finite_difference(n, small_grid):
    spec = bdl.build_bundle(n)
    q = bdl.HiggsTuple(n, tuple((0.3, 0.1j) for _ in range(n)))
    _, A = bdl.theta_matrices(spec, q, small_grid.z)
    H, _ = _random_metric(spec, small_grid, 1)
    K, _ = _random_metric(spec, small_grid, 2)
    K = K - bdl.hX_matrix(spec, small_grid.gx)
    # central differences bottom out near t = 1e-4; smaller t is round-off dominated
    t = 1e-4
    fd = (slv.psi_field(small_grid, H + t * K, A) - slv.psi_field(small_grid, H - t * K, A)) / (2 * t)
    jv = slv.psi_jvp(small_grid, H, A, K)
    assert np.abs(fd - jv).max() <= 1e-6 * np.abs(jv).max()


def test_hitchin_residual_is_hermitian_and_rejects_indefinite(small_grid):
    spec = bdl.build_bundle(2)
    _, A = bdl.theta_matrices(spec, bdl.HiggsTuple.zero(2), small_grid.z)
    H, _ = _random_metric(spec, small_grid, 3)
    R = slv.hitchin_residual(H, A, small_grid)
    assert np.allclose(R, np.swapaxes(R.conj(), -1, -2))
    bad = H.copy()
    bad[2, 5] = -np.eye(4)
    with pytest.raises(ValueError, match="ring 2"):
        slv.hitchin_residual(bad, A, small_grid)


def test_model_metric_residual_is_truncation_sized():
    spec = bdl.build_bundle(2)
    sups = []
    for nr in (16, 32):
        grid = build_grid(0.5, nr, 2 * nr)
        _, A = bdl.theta_matrices(spec, bdl.HiggsTuple.zero(2), grid.z)
        sups.append(slv.sup_residual(grid, bdl.hX_matrix(spec, grid.gx).astype(complex), A))
    assert sups[1] < sups[0] / 3


def test_reference_defect_makes_model_exact(small_grid):
    spec = bdl.build_bundle(3)
    problem = slv.HitchinProblem(spec, bdl.HiggsTuple.zero(3), small_grid, reference_defect=True)
    assert problem.sup_residual(problem.K0) < 1e-12
    field_, rep = slv.solve_dirichlet(spec, bdl.HiggsTuple.zero(3), small_grid)
    assert rep.iterations == 0 and rep.converged


@pytest.mark.parametrize("method", [slv.NEWTON, slv.HEAT_FLOW])
def test_plain_dirichlet_recovers_model(method, small_grid):
    spec = bdl.build_bundle(2)
    cfg = slv.SolverConfig(method=method, referenceDefect=False)
    field_, rep = slv.solve_dirichlet(spec, bdl.HiggsTuple.zero(2), small_grid, None, cfg)
    assert rep.converged and rep.supResidual <= 1e-8
    d = slv.log_spectrum_distance(field_.H, slv.hX_field(spec, small_grid).H)
    assert d.max() < 5e-3
    assert rep.offBlock == 0.0


def test_solution_is_harmonic_and_compatible(small_grid):
    spec = bdl.build_bundle(2)
    q = bdl.HiggsTuple.top(2, 0.05)
    field_, rep = slv.solve_dirichlet(spec, q, small_grid)
    assert rep.supResidual <= 1e-8
    # compatibility holds for the exact solution; the discrete one drifts by O(spacing^2)
    dev = slv.log_spectrum_distance(field_.H, slv.hX_field(spec, small_grid).H).max()
    assert rep.compatibilityDrift < 10 * small_grid.spacing**2 * dev
    assert rep.positivityMinEig > 0
    assert isinstance(field_, MetricField) and field_.compatible
    # boundary values untouched
    assert np.allclose(field_.H[-1], bdl.hX_matrix(spec, small_grid.gx[-1]))


def test_solver_failure_carries_trace(small_grid):
    spec = bdl.build_bundle(2)
    cfg = slv.SolverConfig(maxIterations=1, residualTol=1e-14)
    with pytest.raises(slv.SolverError) as exc:
        slv.solve_dirichlet(spec, bdl.HiggsTuple.top(2, 0.5), small_grid, None, cfg)
    assert len(exc.value.trace) == 2


def test_perturbed_boundary_is_compatible_and_split(small_grid):
    spec = bdl.build_bundle(3)
    Hb = slv.perturbed_boundary(spec, small_grid, 0.3, seed=4)
    assert Hb.shape == (small_grid.Nphi, 6, 6)
    assert alg.compatibility_residual(Hb, spec.C_weight).max() < 1e-12
    mixed = spec.labels[:, None] != spec.labels[None, :]
    assert np.abs(Hb[:, mixed]).max() == 0
    with pytest.raises(ValueError):
        slv.HitchinProblem(spec, bdl.HiggsTuple.zero(3), small_grid, Hb[:-1])


def test_pair_diagnostics_of_identical_metrics(small_grid):
    spec = bdl.build_bundle(2)
    h = slv.hX_field(spec, small_grid)
    out = slv.metric_pair_diagnostics(h, h)
    assert np.allclose(out["trace"], 4.0)
    assert out["report"]["holds"]


def test_log_spectrum_distance_of_scaling():
    H = np.eye(3)[None]
    assert slv.log_spectrum_distance(H, 2 * H)[0] == pytest.approx(np.log(2))


def test_exhaustion_argument_checks():
    spec = bdl.build_bundle(2)
    q = bdl.HiggsTuple.zero(2)
    with pytest.raises(ValueError, match="increasing"):
        slv.exhaustion_sequence(spec, q, [0.7, 0.5], 0.3)
    with pytest.raises(ValueError, match="probe"):
        slv.exhaustion_sequence(spec, q, [0.5, 0.7], 0.6)


def test_exhaustion_at_zero_differential_is_stationary():
    spec = bdl.build_bundle(2)
    out = slv.exhaustion_sequence(spec, bdl.HiggsTuple.zero(2), [0.5, 0.6], 0.3, (16, 32))
    assert max(out["differences"]) < 1e-12


def test_rank_one_unit_metric_is_harmonic(small_grid):
    spec = bdl.build_bundle(1)
    q = bdl.HiggsTuple(1, ((0.4, 0.2 - 0.1j, 0.3j),))
    _, A = bdl.theta_matrices(spec, q, small_grid.z)
    H = np.broadcast_to(np.eye(2, dtype=complex), small_grid.shape + (2, 2)).copy()
    assert slv.sup_residual(small_grid, H, A) < 1e-14


def test_jvp_along_mirrored_slot_scaling(small_grid):
    # h_X with e^u on slot 0 and e^-u on its mirror: a compatible direction
    spec = bdl.build_bundle(2)
    _, A = bdl.theta_matrices(spec, bdl.HiggsTuple.zero(2), small_grid.z)
    H0 = bdl.hX_matrix(spec, small_grid.gx).astype(complex)
    u = 1e-3 * np.exp(-4 * np.abs(small_grid.z) ** 2)
    scale = np.ones(small_grid.shape + (4,))
    scale[..., 0] = np.exp(u)
    scale[..., 3] = np.exp(-u)
    H = H0 * scale[..., :, None]
    diff = slv.psi_field(small_grid, H, A) - slv.psi_field(small_grid, H0, A)
    lin = slv.psi_jvp(small_grid, H0, A, H - H0)
    # the remainder is quadratic in u, so relative to the linear part it is O(|u|) = O(1e-3)
    assert np.abs(diff - lin).max() <= 1e-2 * np.abs(lin).max()
