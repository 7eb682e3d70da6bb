"""Checks of weak domination, the structural identities, the energy bound and
the cooperative system for v_k, on constructed or solved metrics.

Fields are handled through K = h_X^{-1/2} H h_X^{-1/2}.  Leading minors,
Gram-Schmidt slot metrics and determinant ratios against h_X all follow from
K, which keeps the numbers of order one however large g gets.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import bundle as bdl
from .domain import MetricField

# absolute floor for tolerances that scale with a field which may vanish
ROUNDOFF = 1e-12


@dataclass
class DominationReport:
    n: int
    minMargins: list  # k = 1..2n, min over interior nodes
    maxMargins: list
    tolerance: float
    verdict: bool
    rigiditySignature: float  # largest margin anywhere in the interior

    def to_dict(self):
        return asdict(self)


@dataclass
class EnergyReport:
    n: int
    bound: float
    minMargin: float
    strengtheningMinMargin: float
    tolerance: float
    holds: bool
    higgsNorm: np.ndarray = field(repr=False, default=None)
    energy: np.ndarray = field(repr=False, default=None)
    w_n: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        d = asdict(self)
        for key in ("higgsNorm", "energy", "w_n"):
            d.pop(key)
        return d


def _scaling(spec, grid):
    return np.sqrt(bdl.hX_diagonal(spec, grid.gx))


def scaled_metric(h, spec):
    """K = h_X^{-1/2} H h_X^{-1/2} for a MetricField."""
    D = _scaling(spec, h.grid)
    K = h.H / (D[..., :, None] * D[..., None, :])
    return 0.5 * (K + np.swapaxes(K.conj(), -1, -2))


def _log_minors(K):
    """log det(K|F_k), k = 1..dim, from one Cholesky factorization."""
    L = np.linalg.cholesky(K)
    d = np.log(np.real(np.diagonal(L, axis1=-2, axis2=-1)))
    return 2.0 * np.cumsum(d, axis=-1)


def domination_margins(h, spec):
    """log det(h_X|F_k) - log det(h|F_k) per node, k = 1..2n (last axis)."""
    return -_log_minors(scaled_metric(h, spec))


def domination_report(h, spec, tolerance=1e-8):
    m = domination_margins(h, spec)[h.grid.interior_mask]
    mins = m.min(axis=0)
    tol = tolerance * (1.0 + np.abs(_log_minors(scaled_metric(h, spec))).max())
    return DominationReport(
        n=spec.n,
        minMargins=[float(x) for x in mins],
        maxMargins=[float(x) for x in m.max(axis=0)],
        tolerance=float(tol),
        verdict=bool(mins.min() >= -tol),
        rigiditySignature=float(m.max()),
    )


def _conjugated_higgs(P, A):
    return np.linalg.solve(P, A @ P)


def structural_identities(h, spec, A=None):
    """Identities forced by compatibility, evaluated node by node.

    ``h`` is a MetricField or a stack of weight-frame matrices.  ``A`` is the
    Higgs coefficient in the weight frame (same stacking), needed for the
    gamma / gamma' entries.  All values returned are worst-case deviations.
    """
    n = spec.n
    if isinstance(h, MetricField):
        D = _scaling(spec, h.grid)
        K = scaled_metric(h, spec)
        if A is not None:
            A = D[..., :, None] * A / D[..., None, :]
            A = A / np.sqrt(h.grid.gx)[..., None, None]
    else:
        K = np.asarray(h)
    logdet = _log_minors(K)
    out = {}
    # det(h|F_k) = det(h|F_{2n-k}), relative
    if n > 1:
        ks = np.arange(1, 2 * n)
        sym = np.abs(np.expm1(logdet[..., ks - 1] - logdet[..., 2 * n - ks - 1]))
        out["detSymmetry"] = float(sym.max())
    else:
        out["detSymmetry"] = 0.0
    out["unitDeterminant"] = float(np.abs(np.expm1(logdet[..., -1])).max())
    slots = np.exp(np.diff(np.concatenate([np.zeros(logdet.shape[:-1] + (1,)), logdet], axis=-1), axis=-1))
    prod = slots * slots[..., ::-1]
    out["slotProduct"] = float(np.abs(prod - 1.0).max())
    if n % 2 == 1:
        out["middleSlots"] = float(np.abs(slots[..., n - 1 : n + 1] - 1.0).max())
        out["middleMinors"] = float(np.abs(np.expm1(logdet[..., n - 1] - logdet[..., n])).max())
    if A is not None:
        L = np.linalg.cholesky(K)
        P = np.linalg.inv(np.swapaxes(L.conj(), -1, -2))
        B = _conjugated_higgs(P, A)
        if n % 2 == 0:
            out["gamma"] = float(np.abs(B[..., n, n - 1]).max())
        else:
            out["gammaPrime"] = float(np.abs(B[..., n + 1, n]).max()) if n > 1 else 0.0
    out["max"] = max(out.values())
    return out


def energy_bound(n):
    return 2 * n * (n - 1) ** 2 * (2 * n - 1) / 3


def energy_report(h, q, spec, tolerance=1e-6):
    grid = h.grid
    n = spec.n
    _, A = bdl.theta_matrices(spec, q, grid.z)
    D = _scaling(spec, grid)
    K = scaled_metric(h, spec)
    AK = D[..., :, None] * A / D[..., None, :]
    norm = bdl.higgs_norm_sq(AK, K, grid.gx)
    energy = (2 * n - 2) * norm
    interior = grid.interior_mask
    bound = energy_bound(n)
    N = bdl.model_higgs_norm(n)
    v = -domination_margins(h, spec)[..., :n]
    w = -2.0 * v[..., : n - 1].sum(axis=-1)
    if n > 1:
        strong = norm - N * np.exp(w / N)
        strong_min = float(strong[interior].min())
    else:
        strong_min = 0.0
    margin = float((energy - bound)[interior].min())
    return EnergyReport(
        n=n,
        bound=float(bound),
        minMargin=margin,
        strengtheningMinMargin=strong_min,
        tolerance=tolerance,
        holds=bool(margin >= -tolerance and strong_min >= -tolerance),
        higgsNorm=norm,
        energy=energy,
        w_n=w,
    )


def _exprel(x):
    """(e^x - 1) / x with the value 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0.5 * x, np.expm1(safe) / safe)


def model_ratios(spec, gx):
    """b_k = det(h_X|F_{k-1}) det(h_X|F_{k+1}) / det(h_X|F_k)^2 / g_X (k < n) and
    b_n = det(h_X|F_{n-2}) / det(h_X|F_n) / g_X."""
    n = spec.n
    diag = bdl.hX_diagonal(spec, gx)
    logd = np.concatenate([np.zeros(diag.shape[:-1] + (1,)), np.cumsum(np.log(diag), axis=-1)], axis=-1)
    gx = np.asarray(gx)
    b = []
    for k in range(1, n):
        b.append(np.exp(logd[..., k - 1] + logd[..., k + 1] - 2 * logd[..., k]) / gx)
    b.append(np.exp(logd[..., max(n - 2, 0)] - logd[..., n]) / gx)
    return np.stack(b, axis=-1)


def coupling_structure(n):
    """Which unknowns each row of the v_k system involves (off-diagonal only)."""
    M = np.zeros((n, n), dtype=int)
    for k in range(1, n + 1):
        nbrs = [k - 1, k + 1] if k < n else [k - 2]
        for j in nbrs:
            if 1 <= j <= n and j != k:
                M[k - 1, j - 1] = 1
    return M


def vk_cooperative_check(h, spec, delta_factor=10.0, tolerance=1e-8):
    """v_k = log det(h|F_k)/det(h_X|F_k), k <= n, and the discrete inequalities

        1/2 Lap_{g_X} v_k + c_k (v_{k-1} - 2 v_k + v_{k+1}) >= -delta   (k < n)
        1/2 Lap_{g_X} v_n + c_n (v_{n-2} - v_n)                >= -delta

    with delta = delta_factor * spacing^2 * scale and scale the sup of
    |1/2 Lap_{g_X} v_k|.  Nodes in [-10 delta, -delta) are flagged near misses.
    """
    grid = h.grid
    n = spec.n
    report = {"n": n}
    if n == 1:
        report.update(holds=True, note="rank one target: nothing to check")
        return report
    v = -domination_margins(h, spec)[..., :n]
    V = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)  # V[..., k] = v_k
    b = model_ratios(spec, grid.gx)
    interior = grid.interior_mask
    rows = []
    coeffs = np.zeros(grid.shape + (n, n))
    for k in range(1, n + 1):
        if k < n:
            x = V[..., k - 1] - 2 * V[..., k] + V[..., k + 1]
        else:
            x = V[..., max(n - 2, 0)] - V[..., n]
        c = b[..., k - 1] * _exprel(x)
        lap = 0.5 * grid.laplacian_gX(V[..., k])
        lhs = lap + c * x
        scale = float(np.abs(lap[interior]).max())
        delta = max(delta_factor * grid.spacing**2 * scale, ROUNDOFF)
        val = lhs[interior]
        if k < n:
            if k > 1:
                coeffs[..., k - 1, k - 2] = c
            coeffs[..., k - 1, k - 1] = -2 * c
            coeffs[..., k - 1, k] = c
        else:
            if n > 2:
                coeffs[..., k - 1, n - 3] = c
            coeffs[..., k - 1, k - 1] = -c
        vin = V[..., k][interior]
        vbd = V[..., k][grid.boundary_mask]
        rows.append(
            {
                "k": k,
                "minLhs": float(val.min()),
                "delta": delta,
                "flagged": int(np.count_nonzero((val < -delta) & (val >= -10 * delta))),
                "inequalityHolds": bool(val.min() >= -delta),
                "supInterior": float(vin.max()),
                "supBoundary": float(vbd.max()),
                "maximumPrinciple": bool(vin.max() <= vbd.max() + delta),
                "nonPositive": bool(vin.max() <= tolerance),
                "coefficientAtZero": float(b[..., k - 1][interior].mean()),
            }
        )
    off = coeffs.copy()
    idx = np.arange(n)
    off[..., idx, idx] = 0.0
    cooperative = bool(off.min() >= 0.0)
    pattern = (np.abs(off[interior]).max(axis=0) > 0).astype(int)
    ncomp, _ = connected_components(pattern, directed=True, connection="strong")
    report.update(
        rows=rows,
        cooperative=cooperative,
        fullyCoupled=bool(ncomp == 1),
        couplingPattern=pattern.tolist(),
        holds=all(r["inequalityHolds"] and r["maximumPrinciple"] and r["nonPositive"] for r in rows) and cooperative,
    )
    return report


def field_columns(h, spec, q=None):
    """Per-node real columns for CSV output."""
    cols = {}
    m = domination_margins(h, spec)
    for k in range(m.shape[-1]):
        cols[f"margin_{k + 1}"] = m[..., k]
    for k in range(spec.n):
        cols[f"v_{k + 1}"] = -m[..., k]
    if q is not None:
        e = energy_report(h, q, spec)
        cols["higgs_norm"] = e.higgsNorm
        cols["energy"] = e.energy
        cols["w_n"] = e.w_n
    return cols
