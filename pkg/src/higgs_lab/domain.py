"""Polar grids on geodesic disks of the Poincare disk and discrete complex calculus.

Nodes sit at ``r_i = R psi(s_i)`` with ``s_i = (i + 1/2) / (Nr - 1/2)``, so the last
ring is the boundary circle and the center is never a node.  ``psi`` is an odd
cubic map that packs rings toward the boundary.  A radial line through the
center is read as one smooth function on ``(-R, R)``: the value at ``-r`` is
the value at ``r`` on the opposite ray, which closes the stencil of the first
ring.  Angular derivatives are spectral (FFT along phi); radial ones use
three-point Lagrange stencils.

The conformal factor is g = 4 / (1 - |z|^2)^2 (curvature -1), and the induced
Hermitian metric on K^{-1} is g_X = g / 2, so |dz|^2 = 1 / g_X.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline


class GridError(ValueError):
    pass


def _lagrange_weights(x0, xs):
    """Weights for first and second derivative at x0 from the three nodes xs."""
    xs = np.asarray(xs, dtype=float)
    V = np.vander(xs - x0, 3, increasing=True).T
    w1 = np.linalg.solve(V, [0.0, 1.0, 0.0])
    w2 = np.linalg.solve(V, [0.0, 0.0, 2.0])
    return w1, w2


def conformal_factor(z):
    return 4.0 / (1.0 - np.abs(z) ** 2) ** 2


@dataclass
class DiskGrid:
    R: float
    Nr: int
    Nphi: int
    grading: float = 0.3
    r: np.ndarray = field(init=False, repr=False)
    phi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.R < 1:
            raise GridError(f"radius must lie in (0, 1), got {self.R}")
        if self.Nr < 8 or self.Nphi < 8:
            raise GridError("need Nr >= 8 and Nphi >= 8")
        if self.Nphi % 2:
            raise GridError("Nphi must be even so that opposite rays are nodes")
        if not 0 <= self.grading < 0.5:
            raise GridError("grading must lie in [0, 0.5)")
        b = self.grading
        s = (np.arange(self.Nr) + 0.5) / (self.Nr - 0.5)
        self.s = s
        self.r = self.R * ((1 + b) * s - b * s**3)
        self.phi = 2 * np.pi * np.arange(self.Nphi) / self.Nphi
        self.modes = np.fft.fftfreq(self.Nphi, 1.0 / self.Nphi).round().astype(int)
        self._build_stencils()

    def _build_stencils(self):
        r, nr = self.r, self.Nr
        src = np.zeros((nr, 3), dtype=int)
        pos = np.zeros((nr, 3))
        for i in range(nr):
            if i == 0:
                src[i] = (0, 0, 1)
                pos[i] = (-r[0], r[0], r[1])
            elif i == nr - 1:
                src[i] = (nr - 3, nr - 2, nr - 1)
                pos[i] = r[nr - 3 : nr]
            else:
                src[i] = (i - 1, i, i + 1)
                pos[i] = r[i - 1 : i + 2]
        W1 = np.zeros((nr, 3))
        W2 = np.zeros((nr, 3))
        for i in range(nr):
            W1[i], W2[i] = _lagrange_weights(r[i], pos[i])
        self._src, self._W1, self._W2 = src, W1, W2

    # geometry -------------------------------------------------------------
    @property
    def shape(self):
        return (self.Nr, self.Nphi)

    @property
    def z(self):
        return self.r[:, None] * np.exp(1j * self.phi[None, :])

    @property
    def g(self):
        return conformal_factor(self.r)[:, None] * np.ones(self.Nphi)

    @property
    def gx(self):
        return 0.5 * self.g

    @property
    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        mask[-1] = True
        return mask

    @property
    def interior_mask(self):
        return ~self.boundary_mask

    @property
    def spacing(self):
        return float(max(np.diff(self.r).max(), 2 * self.r[0], self.R * 2 * np.pi / self.Nphi))

    def node_table(self):
        rr, pp = np.meshgrid(self.r, self.phi, indexing="ij")
        return rr.ravel(), pp.ravel()

    # radial differences -----------------------------------------------------
    def _radial(self, U, W, ghost_sign):
        """Apply a radial stencil; ghost_sign multiplies the mirrored center value.

        ghost_sign is a scalar or an array over the phi axis (Fourier modes).
        """
        vals = U[self._src]  # (nr, 3, nphi, ...)
        out = np.einsum("ik,ik...->i...", W, vals)
        sign = np.asarray(ghost_sign)
        if sign.ndim:
            sign = sign.reshape((-1,) + (1,) * (U.ndim - 2))
        out[0] += W[0, 0] * (sign - 1.0) * U[0]
        return out

    def d_r(self, u):
        """Radial derivative; the center ghost is read on the opposite ray."""
        u = np.asarray(u)
        vals = u[self._src].copy()
        vals[0, 0] = np.roll(u[0], -self.Nphi // 2, axis=0)
        return np.einsum("ik,ik...->i...", self._W1, vals)

    def d_phi(self, u):
        U = np.fft.fft(u, axis=1)
        m = self.modes.astype(float)
        m[np.abs(self.modes) == self.Nphi // 2] = 0.0
        U = U * (1j * m).reshape((1, -1) + (1,) * (np.ndim(u) - 2))
        out = np.fft.ifft(U, axis=1)
        return out.real if np.isrealobj(u) else out

    def complex_derivatives(self, u):
        """(d/dz u, d/dzbar u)."""
        u = np.asarray(u)
        ur = self.d_r(u)
        up = self.d_phi(u)
        ephi = np.exp(1j * self.phi)[None, :].reshape((1, self.Nphi) + (1,) * (u.ndim - 2))
        rr = self.r.reshape((self.Nr,) + (1,) * (u.ndim - 1))
        dz = 0.5 * np.conj(ephi) * (ur - 1j * up / rr)
        dzb = 0.5 * ephi * (ur + 1j * up / rr)
        return dz, dzb

    def laplacian(self, u):
        """Euclidean Laplacian, mode by mode.

        Odd modes vanish at the center like r, so they are differentiated as
        r * (u/r) with u/r even; this keeps the u_r / r term second order.
        """
        u = np.asarray(u)
        U = np.fft.fft(u, axis=1)
        trail = (1,) * (u.ndim - 2)
        m = self.modes.reshape((1, -1) + trail).astype(float)
        odd = (np.abs(self.modes) % 2 == 1).reshape((1, -1) + trail)
        rr = self.r.reshape((-1, 1) + trail)
        even_part = self._radial(U, self._W2, 1.0) + self._radial(U, self._W1, 1.0) / rr - m**2 * U / rr**2
        Wf = U / rr
        odd_part = rr * self._radial(Wf, self._W2, 1.0) + 3 * self._radial(Wf, self._W1, 1.0) + (1 - m**2) * Wf / rr
        out = np.fft.ifft(np.where(odd, odd_part, even_part), axis=1)
        return out.real if np.isrealobj(u) else out

    def laplacian_gX(self, u):
        """Delta_{g_X} u = (4/g) d_z d_zbar u."""
        u = np.asarray(u)
        g = self.g.reshape(self.shape + (1,) * (u.ndim - 2))
        return self.laplacian(u) / g

    def i_lambda_dbar_d(self, u):
        """sqrt(-1) Lambda dbar d u = -(1/2) Delta_{g_X} u."""
        return -0.5 * self.laplacian_gX(u)

    def curvature(self):
        return -(2.0 / self.g) * 0.25 * self.laplacian(np.log(self.g))

    # fourier-mode radial operators, used by preconditioners ----------------
    def mode_operators(self, m):
        """Dense (Nr x Nr) first-derivative and Laplacian matrices for Fourier mode m."""
        nr = self.Nr
        D1 = np.zeros((nr, nr))
        D2 = np.zeros((nr, nr))
        for i in range(nr):
            for k in range(3):
                D1[i, self._src[i, k]] += self._W1[i, k]
                D2[i, self._src[i, k]] += self._W2[i, k]
        sign = -1.0 if abs(m) % 2 else 1.0
        D1m = D1.copy()
        D1m[0, 0] += (sign - 1.0) * self._W1[0, 0]
        r = self.r
        if abs(m) % 2:
            inv = np.diag(1 / r)
            lap = np.diag(r) @ D2 @ inv + 3 * D1 @ inv + np.diag((1 - m * m) / r**2)
        else:
            lap = D2 + np.diag(1 / r) @ D1 - np.diag(m * m / r**2)
        return D1m, lap

    # interpolation ----------------------------------------------------------
    def radial_interpolator(self, u):
        """Cubic spline along every diameter; call with radii (< R) to sample at the grid angles."""
        u = np.asarray(u)
        opposite = np.roll(u, -self.Nphi // 2, axis=1)[::-1]
        x = np.concatenate([-self.r[::-1], self.r])
        y = np.concatenate([opposite, u], axis=0)
        return CubicSpline(x, y, axis=0)


@dataclass
class MetricField:
    """Per-node Hermitian matrices in the weight frame."""

    grid: DiskGrid
    H: np.ndarray
    labels: np.ndarray = None
    compatible: bool = False

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.H).min())

    def off_block(self):
        if self.labels is None:
            return 0.0
        mask = self.labels[:, None] != self.labels[None, :]
        return float(np.abs(self.H[..., mask]).max()) if mask.any() else 0.0


def build_grid(R, Nr, Nphi, grading=0.3):
    return DiskGrid(float(R), int(Nr), int(Nphi), float(grading))


def complex_derivatives(grid, field):
    return grid.complex_derivatives(field)


def laplacian_gX(grid, field):
    return grid.laplacian_gX(field)


def write_field_csv(path, grid, columns):
    """Write node_index, r, phi and the named per-node real columns."""
    rr, pp = grid.node_table()
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float).ravel() for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_index", "r", "phi"] + names)
        for i in range(rr.size):
            w.writerow([i, repr(float(rr[i])), repr(float(pp[i]))] + [repr(float(c[i])) for c in data])


def read_field_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}
    return cols
