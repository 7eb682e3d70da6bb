import pytest

from higgs_lab import suites
from higgs_lab.domain import build_grid


@pytest.mark.parametrize("n", [1, 2, 3])
def test_algebra_suite_small(n):
    out = suites.algebra_suite(n, 25, seed=7)
    assert out["holds"], out["worst"]
    assert out["samples"] == 25


def test_algebra_suite_is_seeded():
    a = suites.algebra_suite(2, 10, seed=1)
    b = suites.algebra_suite(2, 10, seed=1)
    assert a == b


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_structure_suite_small(n):
    out = suites.structure_suite(n, 25, seed=3)
    assert out["holds"], out["worst"]
    key = "gamma" if n % 2 == 0 else "gammaPrime"
    assert key in out["worst"]


def test_perturbation_suites_small():
    assert suites.quasi_cyclic_suite(20, seed=5)["holds"]
    assert suites.nu_split_suite(20, seed=5)["holds"]
    assert suites.skew_suite(20, seed=5)["holds"]


def test_model_metric_suite():
    out = suites.model_metric_suite(3, build_grid(0.5, 8, 16))
    assert out["holds"] and out["target"] == 10
