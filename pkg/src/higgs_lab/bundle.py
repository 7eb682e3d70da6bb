"""SO0(n,n) Higgs bundles in the Hitchin section over a disk.

The bundle is ``V + W`` with

    V = K^{n-1} + K^{n-3} + ... + K^{1-n}
    W = K^{n-2} + ... + K^{2-n} + O'

("block" frame).  The "weight" frame reorders the same line bundles by
descending power of K, with the extra trivial summand O' placed right after O:

    K^{n-1}, ..., K^1, O, O', K^{-1}, ..., K^{1-n}.

Indices are 0-based in code; the weight slot of O' is ``n``.
"""

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .algebra import BLOCK, WEIGHT, PairingMatrix


@dataclass(frozen=True)
class FiltrationIndex:
    """F_k is spanned by the first k weight-frame slots, k = 1..2n."""

    n: int

    def indices(self, k):
        if not 0 <= k <= 2 * self.n:
            raise IndexError(f"filtration step {k} outside 0..{2 * self.n}")
        return list(range(k))

    def __len__(self):
        return 2 * self.n


@dataclass(frozen=True)
class HiggsTuple:
    """Polynomial differentials q_1..q_n (coefficients in increasing powers of z)."""

    n: int
    coefficients: tuple

    def __post_init__(self):
        coeffs = tuple(tuple(complex(c) for c in cs) for cs in self.coefficients)
        if len(coeffs) != self.n:
            raise ValueError(f"expected {self.n} differentials, got {len(coeffs)}")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def zero(cls, n):
        return cls(n, tuple(() for _ in range(n)))

    @classmethod
    def top(cls, n, c):
        """Only the top differential, equal to the constant c."""
        return cls(n, tuple(() for _ in range(n - 1)) + ((c,),))

    @property
    def degrees(self):
        return [2 * j for j in range(1, self.n)] + [self.n]

    def is_zero(self):
        return all(c == 0 for cs in self.coefficients for c in cs)

    def evaluate(self, z):
        """Values q_j(z) stacked along a new last axis."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape + (self.n,), dtype=complex)
        for j, cs in enumerate(self.coefficients):
            acc = np.zeros_like(z)
            for c in reversed(cs):
                acc = acc * z + c
            out[..., j] = acc
        return out

    def to_dict(self):
        return {
            "n": self.n,
            "degrees": self.degrees,
            "coefficients": [[[c.real, c.imag] for c in cs] for cs in self.coefficients],
        }

    @classmethod
    def from_dict(cls, data):
        coeffs = tuple(tuple(complex(re, im) for re, im in cs) for cs in data["coefficients"])
        return cls(int(data["n"]), coeffs)


@dataclass(frozen=True)
class BundleSpec:
    n: int
    Q_V: PairingMatrix
    Q_W: PairingMatrix
    C_weight: PairingMatrix
    sigma: tuple  # block index -> weight index
    filtration: FiltrationIndex

    @property
    def dim(self):
        return 2 * self.n

    @property
    def degenerate(self):
        # for n = 1 the target symmetric space is a point
        return self.n == 1

    @property
    def permutation(self):
        """Matrix S with S[b, w] = 1 when block slot b is weight slot w."""
        d = self.dim
        S = np.zeros((d, d))
        for b, w in enumerate(self.sigma):
            S[b, w] = 1.0
        return S

    @property
    def labels(self):
        """0 for V, 1 for W, indexed by weight slot."""
        lab = np.zeros(self.dim, dtype=int)
        for b, w in enumerate(self.sigma):
            lab[w] = 0 if b < self.n else 1
        return lab

    @property
    def weight_powers(self):
        """Exponent p with slot metric ~ g_X^p (K^{-1} has p = 1)."""
        n = self.n
        return np.array([k - n for k in range(1, n + 1)] + [0] + [m for m in range(1, n)], dtype=float)

    def to_dict(self):
        def mat(m):
            return [[[v.real, v.imag] for v in row] for row in np.asarray(m, dtype=complex)]

        return {
            "n": self.n,
            "Q_V": mat(self.Q_V.entries),
            "Q_W": mat(self.Q_W.entries),
            "C_weight": mat(self.C_weight.entries),
            "sigma": list(self.sigma),
            "oprime_slot": self.n,
            "degenerate": self.degenerate,
        }


def _antidiagonal(m):
    return np.fliplr(np.eye(m))


def _block_to_weight(n):
    sigma = []
    for i in range(1, n + 1):  # V slot i carries K^{n+1-2i}
        sigma.append(2 * i - 2 if 2 * i - 1 <= n else 2 * i - 1)
    for j in range(1, n):  # W slot j carries K^{n-2j}
        sigma.append(2 * j - 1 if 2 * j <= n else 2 * j)
    sigma.append(n)  # O'
    return tuple(sigma)


def build_bundle(n):
    if n < 1:
        raise ValueError("n must be a positive integer")
    QV = _antidiagonal(n)
    QW = np.zeros((n, n))
    QW[: n - 1, : n - 1] = _antidiagonal(n - 1)
    QW[n - 1, n - 1] = 1.0
    sigma = _block_to_weight(n)
    S = np.zeros((2 * n, 2 * n))
    for b, w in enumerate(sigma):
        S[b, w] = 1.0
    Z = np.zeros((2 * n, 2 * n))
    Z[:n, :n] = QV
    Z[n:, n:] = QW
    C = S.T @ Z @ S
    return BundleSpec(
        n,
        PairingMatrix(QV, BLOCK),
        PairingMatrix(QW, BLOCK),
        PairingMatrix(C, WEIGHT),
        sigma,
        FiltrationIndex(n),
    )


def eta_matrix(spec, q, z):
    """The map W -> V (x) K; stacked over the shape of z."""
    n = spec.n
    vals = q.evaluate(z)
    eta = np.zeros(np.shape(z) + (n, n), dtype=complex)
    for i in range(n):
        for j in range(n - 1):
            if j >= i:
                eta[..., i, j] = vals[..., j - i]
            elif j == i - 1:
                eta[..., i, j] = 1.0
    eta[..., 0, n - 1] = vals[..., n - 1]
    return eta


def theta_matrices(spec, q, z):
    """Higgs field coefficient of dz in the block and in the weight frame."""
    n = spec.n
    eta = eta_matrix(spec, q, z)
    QV = spec.Q_V.entries.real
    QWinv = np.linalg.inv(spec.Q_W.entries.real)
    eta_adj = QWinv @ np.swapaxes(eta, -1, -2) @ QV
    A_block = np.zeros(np.shape(z) + (2 * n, 2 * n), dtype=complex)
    A_block[..., :n, n:] = eta
    A_block[..., n:, :n] = eta_adj
    S = spec.permutation
    A_weight = S.T @ A_block @ S
    return A_block, A_weight


def skew_residual(spec, A_block):
    n = spec.n
    Qt = np.zeros((2 * n, 2 * n))
    Qt[:n, :n] = spec.Q_V.entries.real
    Qt[n:, n:] = -spec.Q_W.entries.real
    R = np.swapaxes(A_block, -1, -2) @ Qt + Qt @ A_block
    return np.abs(R).max()


def hX_constants_exact(n):
    pre = Fraction(1)
    for l in range(1, n):
        pre *= Fraction(l * (2 * n - 1 - l), 2)
    out = []
    run = Fraction(1)
    for k in range(1, 2 * n):
        out.append(run / pre)
        run *= Fraction(k * (2 * n - 1 - k), 2)
    return out


def hX_constants(n):
    return [float(a) for a in hX_constants_exact(n)]


def hX_diagonal(spec, gx):
    """Diagonal of h_X in the weight frame; gx is the induced metric on K^{-1} (g/2)."""
    n = spec.n
    a = hX_constants(n)
    coef = np.array(a[:n] + [1.0] + a[n:])
    gx = np.asarray(gx, dtype=float)
    return coef * gx[..., None] ** spec.weight_powers


def hX_matrix(spec, gx):
    diag = hX_diagonal(spec, gx)
    d = spec.dim
    return diag[..., :, None] * np.eye(d)


def higgs_norm_sq(A, H, gx):
    """|theta|^2_{h, g_X} = tr(A H^{-1} A^* H) / g_X."""
    Ad = np.linalg.solve(H, np.swapaxes(A.conj(), -1, -2) @ H)
    return np.real(np.trace(A @ Ad, axis1=-2, axis2=-1)) / gx


def model_higgs_norm(n):
    """n(n-1)(2n-1)/3, the Higgs field norm of the q = 0 pair."""
    return n * (n - 1) * (2 * n - 1) / 3


def dumps(obj):
    return json.dumps(obj.to_dict(), indent=2, sort_keys=True)
