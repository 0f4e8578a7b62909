import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relubias.spectral_data import (
    Constants,
    DataError,
    LabelSpec,
    Spectrum,
    check_assumptions,
    default_constants,
    effective_dims,
    estimate_cg,
    load_dataset_json,
    make_spectrum,
    sample_dataset,
    save_dataset_csv,
    save_dataset_json,
)

from conftest import make_ds


def test_isotropic_spectrum():
    sp = make_spectrum("isotropic", 4)
    assert sp.lam.tolist() == [1, 1, 1, 1]
    assert sp.d2 == 4 and sp.dinf == 4


def test_geometric_spectrum():
    sp = make_spectrum("geometric", 3, [0.5])
    assert np.allclose(sp.lam, [1, 0.5, 0.25])
    assert sp.l1 == pytest.approx(1.75)
    assert sp.d2 == pytest.approx(1.75**2 / 1.3125)
    assert sp.d2 == pytest.approx(2.3333, abs=1e-4)
    assert sp.dinf == pytest.approx(1.75)


def test_explicit_spectrum():
    assert effective_dims(make_spectrum("explicit", params=[2, 2])) == pytest.approx((2, 2))


def test_effective_dims_examples():
    assert effective_dims(make_spectrum("isotropic", 100)) == pytest.approx((100, 100))
    assert effective_dims(Spectrum(np.array([1.0, 0, 0]))) == pytest.approx((1, 1))
    assert effective_dims(Spectrum(np.array([4.0, 1]))) == pytest.approx((25 / 17, 1.25))


@pytest.mark.parametrize("lam", [[1, 2], [-1, 1], [0, 0], []])
def test_bad_spectra(lam):
    with pytest.raises(DataError):
        Spectrum(np.array(lam, dtype=float))


@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=30))
def test_effective_dims_bounded_by_d(vals):
    lam = np.sort(np.array(vals))[::-1]
    if not np.any(lam > 0):
        return
    d2, dinf = effective_dims(Spectrum(lam))
    assert 1 - 1e-12 <= d2 <= lam.size * (1 + 1e-12)
    assert 1 - 1e-12 <= dinf <= lam.size * (1 + 1e-12)


def test_forced_positive_labels():
    ds = sample_dataset(make_spectrum("isotropic", 4), 2, LabelSpec(magnitude_dist="fixed", frac_positive=1.0), "gaussian", 7)
    assert ds.y.tolist() == [1.0, 1.0]
    assert ds.n_neg == 0


def test_sampling_is_deterministic():
    sp = make_spectrum("isotropic", 50)
    a = sample_dataset(sp, 5, LabelSpec(), "gaussian", 3)
    b = sample_dataset(sp, 5, LabelSpec(), "gaussian", 3)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_labels_do_not_depend_on_dimension():
    a = sample_dataset(make_spectrum("isotropic", 100), 10, LabelSpec(), "gaussian", 5)
    b = sample_dataset(make_spectrum("isotropic", 400), 10, LabelSpec(), "gaussian", 5)
    assert np.array_equal(a.y, b.y)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["gaussian", "rademacher", "uniform_unit_var"]), st.integers(1, 8))
def test_dataset_invariants(seed, z, n):
    ds = sample_dataset(make_spectrum("geometric", 30, [0.95]), n, LabelSpec(both_signs=n > 1), z, seed)
    pos = ds.y > 0
    assert not np.any(np.diff(pos.astype(int)) > 0)  # positives first
    assert np.all(ds.y != 0)
    assert np.all((np.abs(ds.y) >= 0.1) & (np.abs(ds.y) <= 1.0))
    assert np.linalg.matrix_rank(ds.X) == n


def test_feature_second_moments():
    # E[x x^T] = diag(lam) for the unrotated model
    sp = make_spectrum("geometric", 6, [0.5])
    ds = sample_dataset(sp, 6, LabelSpec(), "rademacher", 1)
    # rademacher z gives x_j^2 = lam_j exactly
    assert np.allclose(ds.X**2, np.broadcast_to(sp.lam, ds.X.shape))


def test_n_larger_than_d_rejected():
    with pytest.raises(DataError):
        sample_dataset(make_spectrum("isotropic", 3), 5, LabelSpec(), "gaussian", 0)


def test_dataset_rejects_bad_order_and_zero_labels():
    with pytest.raises(DataError):
        make_ds([[1, 0], [0, 1]], [-1, 1])
    with pytest.raises(DataError):
        make_ds([[1, 0], [0, 1]], [1, 0])


def test_assumption_fails_in_low_dim():
    ds = make_ds(np.eye(4)[:3], [1.0, 1.0, -1.0])
    rep = check_assumptions(ds, Constants(C_g=1, C_y=2, C_alpha=2, C_0=4), y_min=1, y_max=1)
    # C_0 enters squared: C_0^2 n^2 (y_max/y_min)^2
    assert rep.d2_required == 16 * 9
    c = Constants(C_g=1, C_y=2, C_alpha=2, C_0=4)
    assert not check_assumptions(ds, c).high_dim_holds


def test_assumption_required_dims_with_small_c0():
    # bypass validation to reproduce the literal C_0 = 2 example
    c = Constants(C_g=1, C_y=2, C_alpha=2, C_0=4)
    object.__setattr__(c, "C_0", 2.0)
    ds = make_ds(np.eye(4)[:3], [1.0, 1.0, -1.0])
    rep = check_assumptions(ds, c)
    assert rep.d2_required == 36
    assert not rep.high_dim_holds
    big = make_ds(np.eye(4)[:3], [1.0, 1.0, -1.0])
    object.__setattr__(big, "spectrum", make_spectrum("isotropic", 10**6))
    rep = check_assumptions(big, c)
    assert rep.d2_margin >= 0 and rep.dinf_margin >= 0 and rep.dinf_required == pytest.approx(2 * 3**1.5)


def test_equal_magnitudes_zero_margin():
    ds = make_ds(np.eye(3), [0.5, -0.5, -0.5])
    rep = check_assumptions(ds, Constants())
    assert rep.label_bounds_hold and rep.label_margin == 0


def test_constants_derivation_and_validation():
    c = Constants(C_g=3)
    assert c.C_alpha == 4 * max(9, 6)
    assert c.C_0 == 4 * c.C_alpha**2
    for bad in (dict(C_g=0.5), dict(C_y=1), dict(C_g=2, C_alpha=1), dict(C=0)):
        with pytest.raises(DataError):
            Constants(**bad)
    assert Constants(C_g=2).replace(C_g=3) == Constants(C_g=3)


def test_estimate_cg_orthonormal():
    ds = make_ds(np.eye(3), [1.0, -1.0, -1.0])
    # XX^T = I while l1 = 3, so C_g_hat = 3
    assert estimate_cg(ds) == pytest.approx(3.0)
    assert default_constants(ds, C=5).C == 5


def test_gram_helpers(hd_dataset):
    ds = hd_dataset
    assert np.all(np.diff(ds.gram_eigs) >= 0)
    b = np.arange(ds.n, dtype=float)
    assert np.allclose(ds.gram @ ds.solve_gram(b), b)
    B = np.vstack([b, -b])
    assert np.allclose(ds.solve_gram(B) @ ds.gram, B)


def test_json_roundtrip(tmp_path, hd_dataset):
    p = save_dataset_json(hd_dataset, tmp_path / "d.json")
    back = load_dataset_json(p)
    assert np.array_equal(back.X, hd_dataset.X) and np.array_equal(back.y, hd_dataset.y)
    assert back.spectrum.kind == hd_dataset.spectrum.kind and back.seed == hd_dataset.seed


def test_json_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(DataError):
        load_dataset_json(p)
    p.write_text('{"X": [[1]]}')
    with pytest.raises(DataError):
        load_dataset_json(p)


def test_csv_writer(tmp_path):
    ds = make_ds([[1, 2], [3, 4]], [0.5, -1])
    text = save_dataset_csv(ds, tmp_path / "d.csv").read_text().splitlines()
    assert text[0] == "row,label,x0,x1"
    assert text[2] == "1,-1.0,3.0,4.0"


def test_gaussian_labels_ignore_bounds():
    spec = LabelSpec(magnitude_dist="gaussian")
    y = spec.draw(1000, np.random.default_rng(0))
    assert np.abs(y).max() > 1 and math.isclose(np.mean(y), 0, abs_tol=0.1)
