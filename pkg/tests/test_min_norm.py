import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relubias.min_norm import (
    InfeasibleError,
    eq_ineq_qp,
    feasible_upper_bound_multi,
    feasible_witness_two,
    kkt_residual_two,
    linear_mni,
    min_norm_single,
    min_norm_single_pg,
    min_norm_two,
    original_residual_two,
    partition_sets,
    projected_gradient_qp,
    solve_restricted,
)
from relubias.spectral_data import DataError, LabelSpec

from conftest import make_ds, orthonormal_ds, random_ds
from oracles import brute_force_two, slsqp_single, small_instance


def test_linear_mni_examples():
    assert np.allclose(linear_mni([[3.0, 4.0]], [5.0]), [0.6, 0.8])
    ds = orthonormal_ds([0.3, 0.9, -0.2])
    assert np.allclose(linear_mni(ds.X, ds.y), ds.X.T @ ds.y)
    assert np.all(linear_mni(ds.X, np.zeros(3)) == 0)
    with pytest.raises(DataError):
        linear_mni([[1.0, 0.0], [2.0, 0.0]], [1.0, 1.0])


def test_single_hand_example():
    ds = make_ds([[1.0, 0.0], [1.0, 1.0]], [1.0, -1.0])
    sol = min_norm_single(ds)
    assert np.allclose(sol.weights[0], [1.0, -1.0])
    assert sol.objective == pytest.approx(1.0)
    assert sol.certificate == (0, 1)
    assert sol.multipliers["mu"].tolist() == pytest.approx([1.0])
    assert sol.multipliers["lambda"].tolist() == pytest.approx([-2.0])
    assert sol.kkt_residual <= 1e-12


def test_generic_qp_matches_hand_example():
    w, lam, mu, active = eq_ineq_qp([[1.0, 0.0]], [1.0], [[1.0, 1.0]], method="enumerate")
    assert np.allclose(w, [1.0, -1.0]) and active == (0,)
    w2, _, _, _ = projected_gradient_qp([[1.0, 0.0]], [1.0], [[1.0, 1.0]])
    assert np.allclose(w2, [1.0, -1.0], atol=1e-9)


def test_qp_degenerate_cases():
    A = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, -1.0])
    w, *_ = eq_ineq_qp(A, b, np.zeros((0, 3)))
    assert np.allclose(w, A.T @ np.linalg.solve(A @ A.T, b))
    w, *_ = eq_ineq_qp(A, np.zeros(2), [[1.0, 0.0, 0.0]])
    assert np.allclose(w, 0)


def test_all_positive_is_linear_mni():
    ds = random_ds(6, 40, 3, LabelSpec(frac_positive=1.0))
    sol = min_norm_single(ds)
    assert np.allclose(sol.weights[0], linear_mni(ds.X, ds.y))
    assert sol.certificate == tuple(range(6))


def test_orthogonal_negative_is_inactive():
    X = np.eye(4)[:3]
    ds = make_ds(X, [0.5, 0.7, -0.3])
    sol = min_norm_single(ds)
    assert sol.certificate == (0, 1)
    assert np.allclose(sol.weights[0], linear_mni(X[:2], [0.5, 0.7]))
    assert ds.X[2] @ sol.weights[0] == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_single_enumeration_matches_oracles(seed):
    ds = small_instance(seed)
    sol = min_norm_single(ds)
    pg = min_norm_single_pg(ds)
    assert np.linalg.norm(sol.weights[0] - pg.weights[0]) <= 1e-6
    assert sol.kkt_residual <= 1e-7
    assert np.linalg.norm(sol.weights[0] - slsqp_single(ds)) <= 1e-5
    # positives are always in the optimal subset
    assert set(range(ds.n_pos)) <= set(sol.certificate)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_qp_methods_agree(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(12, 30))
    p, q = int(rng.integers(0, 4)), int(rng.integers(1, 9))
    A = rng.standard_normal((p, d))
    G = rng.standard_normal((q, d))
    b = rng.standard_normal(p)
    w1, *_ = eq_ineq_qp(A, b, G, method="enumerate")
    w2, *_ = eq_ineq_qp(A, b, G, method="active_set")
    w3, *_ = projected_gradient_qp(A, b, G)
    assert np.allclose(w1, w2, atol=1e-9)
    assert np.linalg.norm(w1 - w3) <= 1e-6


def test_enumeration_cap():
    ds = random_ds(12, 40, 0, LabelSpec(frac_positive=0.0))
    with pytest.raises(DataError):
        min_norm_single(ds, cap=4)
    sol = min_norm_single(ds, cap=4, fallback=True)
    assert sol.solver == "active_set"
    assert np.allclose(sol.weights[0], 0)


@pytest.mark.parametrize("seed", range(8))
def test_two_against_brute_force(seed):
    ds = small_instance(seed, n_max=5, d_max=20)
    sol = min_norm_two(ds)
    wp, wm = sol.weights
    assert original_residual_two(ds, wp, wm).max() <= 1e-8
    assert sol.objective <= brute_force_two(ds) + 1e-7
    tp, tm = feasible_witness_two(ds)
    assert sol.objective <= 0.5 * (tp @ tp + tm @ tm) + 1e-12
    assert sol.kkt_residual <= 1e-7


def test_two_all_positive():
    ds = random_ds(3, 10, 1, LabelSpec(frac_positive=1.0))
    sol = min_norm_two(ds)
    assert np.allclose(sol.weights[1], 0, atol=1e-12)
    single = min_norm_single(ds)
    assert sol.objective == pytest.approx(single.objective)


def test_two_orthogonal_blocks():
    X = np.eye(6)[:4] * np.array([1, 2, 3, 4, 1, 1])
    ds = make_ds(X, [0.5, 0.8, -0.3, -0.6])
    sol = min_norm_two(ds)
    assert np.allclose(sol.weights[0], linear_mni(X[:2], [0.5, 0.8]))
    assert np.allclose(sol.weights[1], linear_mni(X[2:], [0.3, 0.6]))
    sets = partition_sets(sol.certificate)
    assert sets["S1"] == [0, 1] and sets["S3"] == [2, 3]


def test_two_methods_agree():
    ds = random_ds(8, 60, 5)
    a = min_norm_two(ds, method="enumerate")
    b = min_norm_two(ds, method="active_set")
    assert a.certificate == b.certificate
    assert np.allclose(a.weights[0], b.weights[0]) and np.allclose(a.weights[1], b.weights[1])


def test_restricted_kkt(hd_dataset):
    part = tuple(1 if y > 0 else 3 for y in hd_dataset.y)
    wp, wm, delta, mu, obj = solve_restricted(hd_dataset, part)
    assert kkt_residual_two(hd_dataset, (wp, wm), part, delta, mu) <= 1e-8
    with pytest.raises(DataError):
        solve_restricted(hd_dataset, (3,) * hd_dataset.n)


def test_witness_feasible_and_bound_symmetric():
    ds = random_ds(6, 50, 2)
    wp, wm = feasible_witness_two(ds)
    assert original_residual_two(ds, wp, wm).max() <= 1e-10
    flipped = make_ds(ds.X[::-1], -ds.y[::-1])
    a = feasible_upper_bound_multi(ds, 2, [1, -1])
    assert a == pytest.approx(feasible_upper_bound_multi(flipped, 2, [1, -1]))
    assert a >= min_norm_two(ds).objective - 1e-12


def test_upper_bound_orthonormal_all_positive():
    ds = orthonormal_ds([0.3, 0.5, 0.9])
    assert feasible_upper_bound_multi(ds, 2, [1, -1]) == pytest.approx(0.5 * ds.y @ ds.y)
    with pytest.raises(DataError):
        feasible_upper_bound_multi(ds, 2, [-1, -1])


def test_infeasible_reported():
    # identical rows with opposite labels cannot be fit by a single ReLU
    with pytest.raises(InfeasibleError):
        eq_ineq_qp([[1.0, 0.0]], [1.0], [[2.0, 0.0]])
