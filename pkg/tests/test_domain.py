import numpy as np
import pytest

from higgs_lab.domain import GridError, MetricField, build_grid, read_field_csv, write_field_csv


def _rates(errors):
    return [np.log2(a / b) for a, b in zip(errors, errors[1:])]


def test_grid_validation():
    for args in [(1.0, 16, 32), (0.5, 4, 32), (0.5, 16, 33), (0.5, 16, 32, 0.6)]:
        with pytest.raises(GridError):
            build_grid(*args)


def test_boundary_ring_and_no_center_node():
    grid = build_grid(0.6, 16, 32)
    assert grid.r[-1] == pytest.approx(0.6)
    assert grid.r[0] > 0
    assert np.all(np.diff(grid.r) > 0)
    assert grid.boundary_mask.sum() == 32
    assert (grid.interior_mask | grid.boundary_mask).all()


def test_hyperbolic_curvature():
    grid = build_grid(0.7, 48, 64)
    K = grid.curvature()
    assert np.abs(K + 1.0)[grid.interior_mask].max() < 1e-3


def test_laplacian_exact_on_quadratics():
    grid = build_grid(0.7, 24, 32)
    x, y = grid.z.real, grid.z.imag
    assert np.allclose(grid.laplacian(x**2 + 3 * y**2), 8.0, atol=1e-10)
    assert np.allclose(grid.laplacian(x * y), 0.0, atol=1e-10)


@pytest.mark.parametrize("grading", [0.0, 0.3])
def test_laplacian_second_order(grading):
    errs = []
    for nr in (16, 32, 64):
        grid = build_grid(0.8, nr, 2 * nr, grading)
        x, y = grid.z.real, grid.z.imag
        u = np.exp(x) * np.cos(2 * y) + x**3 * y
        exact = -3 * np.exp(x) * np.cos(2 * y) + 6 * x * y
        # the boundary ring only carries Dirichlet data; its one-sided stencil is first order
        errs.append(np.abs(grid.laplacian(u) - exact)[grid.interior_mask].max())
    assert min(_rates(errs)) > 1.8


def test_complex_derivatives_of_polynomial():
    grid = build_grid(0.7, 48, 64)
    z = grid.z
    dz, dzb = grid.complex_derivatives(z**2 * np.conj(z))
    assert np.abs(dz - 2 * z * np.conj(z)).max() < 1e-3
    assert np.abs(dzb - z**2).max() < 1e-3
    dz, dzb = grid.complex_derivatives(z**3)
    assert np.abs(dzb).max() < 1e-3


def test_i_lambda_dbar_d_of_log_conformal_factor():
    # Delta log g = -2 K g with K = -1, so -(1/2) Delta log g_X / g = -1
    grid = build_grid(0.7, 48, 64)
    lhs = grid.i_lambda_dbar_d(np.log(grid.gx))
    assert np.abs(lhs + 1.0)[grid.interior_mask].max() < 2e-3


def test_mode_operators_match_laplacian():
    grid = build_grid(0.6, 16, 16)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(grid.shape)
    full = np.fft.fft(grid.laplacian(u), axis=1)
    U = np.fft.fft(u, axis=1)
    for j, m in enumerate(grid.modes):
        if abs(m) == grid.Nphi // 2:
            continue
        _, lap = grid.mode_operators(m)
        assert np.allclose(lap @ U[:, j], full[:, j], atol=1e-8)


def test_radial_interpolator_reproduces_nodes():
    grid = build_grid(0.6, 16, 32)
    u = np.cos(grid.z.real) * np.exp(grid.z.imag)
    spline = grid.radial_interpolator(u)
    assert np.allclose(spline(grid.r), u, atol=1e-12)
    mid = 0.5 * (grid.r[3] + grid.r[4])
    exact = np.cos(mid * np.cos(grid.phi)) * np.exp(mid * np.sin(grid.phi))
    assert np.abs(spline([mid])[0] - exact).max() < 1e-4


def test_metric_field_helpers():
    grid = build_grid(0.5, 8, 8)
    H = np.broadcast_to(np.diag([1.0, 2.0]), grid.shape + (2, 2)).copy()
    H[..., 0, 1] = H[..., 1, 0] = 0.1
    mf = MetricField(grid, H, labels=np.array([0, 1]))
    assert mf.off_block() == pytest.approx(0.1)
    assert mf.min_eigenvalue() > 0.9


def test_field_csv_roundtrip(tmp_path):
    grid = build_grid(0.5, 8, 8)
    vals = np.random.default_rng(1).standard_normal(grid.shape)
    path = tmp_path / "f.csv"
    write_field_csv(path, grid, {"u": vals})
    cols = read_field_csv(path)
    assert list(cols) == ["node_index", "r", "phi", "u"]
    assert np.array_equal(cols["u"], vals.ravel())
    rr, pp = grid.node_table()
    assert np.array_equal(cols["r"], rr) and np.array_equal(cols["phi"], pp)
