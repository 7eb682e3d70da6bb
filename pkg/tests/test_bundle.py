from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from higgs_lab import algebra as alg
from higgs_lab import bundle as bdl
from higgs_lab.suites import random_higgs_tuple, random_point

# |theta(0)|^2_{h_X} = n(n-1)(2n-1)/3, computed by hand for small n
MODEL_NORMS = {1: 0, 2: 2, 3: 10, 4: 28}
ENERGY_BOUNDS = {2: 4, 3: 40, 4: 168}


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_build_bundle_shapes_and_pairing(n):
    spec = bdl.build_bundle(n)
    assert spec.dim == 2 * n
    assert spec.degenerate == (n == 1)
    assert sorted(spec.sigma) == list(range(2 * n))
    C = spec.C_weight.entries.real
    assert np.array_equal(C, alg.standard_pairing(n).entries.real)
    assert np.array_equal(C @ C, np.eye(2 * n))
    assert (spec.labels == 0).sum() == n


def test_build_bundle_rejects_zero():
    with pytest.raises(ValueError):
        bdl.build_bundle(0)


def test_hX_constants_exact_values():
    assert bdl.hX_constants_exact(2) == [1, 1, 1]
    assert bdl.hX_constants_exact(3) == [Fraction(1, 6), Fraction(1, 3), 1, 3, 6]


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_hX_constants_pair_up(n):
    a = bdl.hX_constants_exact(n)
    for k in range(len(a)):
        assert a[k] * a[-1 - k] == 1


def test_hX_at_origin():
    spec = bdl.build_bundle(2)
    gx = 0.5 * 4.0  # g = 4 at z = 0
    diag = bdl.hX_diagonal(spec, gx)
    assert np.allclose(diag, [0.5, 1.0, 1.0, 2.0])
    assert np.allclose(alg.filtration_dets(np.diag(diag)), [0.5, 0.5, 0.5, 1.0])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_hX_is_compatible(n):
    spec = bdl.build_bundle(n)
    for gx in (0.7, 2.0, 13.0):
        H = bdl.hX_matrix(spec, gx)
        assert alg.compatibility_residual(H, spec.C_weight) < 1e-14


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_model_higgs_norm(n):
    assert bdl.model_higgs_norm(n) == MODEL_NORMS[n]
    spec = bdl.build_bundle(n)
    for z in (0.0, 0.4 + 0.3j, -0.8j):
        gx = 2.0 / (1 - abs(z) ** 2) ** 2
        _, A = bdl.theta_matrices(spec, bdl.HiggsTuple.zero(n), z)
        val = bdl.higgs_norm_sq(A, bdl.hX_matrix(spec, gx), gx)
        assert val == pytest.approx(MODEL_NORMS[n], abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_energy_bound_values(n):
    from higgs_lab.diagnostics import energy_bound

    assert energy_bound(n) == ENERGY_BOUNDS[n]
    assert energy_bound(n) == pytest.approx((2 * n - 2) * bdl.model_higgs_norm(n))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_model_higgs_field_raises_weight_by_one(n):
    spec = bdl.build_bundle(n)
    _, A = bdl.theta_matrices(spec, bdl.HiggsTuple.zero(n), 0.2 - 0.1j)
    p = spec.weight_powers
    rows, cols = np.nonzero(np.abs(A) > 0)
    assert len(rows) == 2 * n - 2
    assert np.all(p[rows] - p[cols] == 1)
    assert np.allclose(A[rows, cols], 1.0)


def test_higgs_tuple_evaluate_and_roundtrip():
    q = bdl.HiggsTuple(2, ((1.0, 2.0), (0.5j,)))
    vals = q.evaluate(np.array([0.0, 1.0]))
    assert np.allclose(vals[:, 0], [1.0, 3.0])
    assert np.allclose(vals[:, 1], [0.5j, 0.5j])
    assert bdl.HiggsTuple.from_dict(q.to_dict()) == q
    assert q.degrees == [2, 2]
    assert bdl.HiggsTuple.top(3, 0.1).coefficients == ((), (), (0.1,))
    assert bdl.HiggsTuple.zero(3).is_zero()
    with pytest.raises(ValueError):
        bdl.HiggsTuple(2, ((1.0,),))


@settings(max_examples=80, deadline=None)
@given(n=st.integers(1, 5), seed=st.integers(0, 2**31 - 1))
def test_theta_skew_for_split_pairing(n, seed):
    rng = np.random.default_rng(seed)
    spec = bdl.build_bundle(n)
    q = random_higgs_tuple(n, rng)
    A_block, A_weight = bdl.theta_matrices(spec, q, random_point(rng))
    assert bdl.skew_residual(spec, A_block) <= 1e-14
    # theta is off-diagonal for V + W
    assert np.abs(A_block[:n, :n]).max(initial=0) == 0 and np.abs(A_block[n:, n:]).max(initial=0) == 0
    S = spec.permutation
    assert np.allclose(S @ A_weight @ S.T, A_block)


def test_bundle_dump_is_json():
    import json

    data = json.loads(bdl.dumps(bdl.build_bundle(3)))
    assert data["n"] == 3 and data["oprime_slot"] == 3
