import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from koopman_approx import basis as B

HAAR = B.HaarBasis1D(10)


def test_dyadic_cubes_partition_unit_square():
    cubes = [B.DyadicCube(2, (kx, ky)) for kx in range(4) for ky in range(4)]
    rng = np.random.default_rng(0)
    pts = rng.random((200, 2))
    pts[0] = [1.0, 1.0]          # right endpoint falls in the last cell
    hits = np.sum([c.contains(pts) for c in cubes], axis=0)
    assert np.all(hits == 1)


def test_dyadic_cube_rejects_bad_translate():
    with pytest.raises(ValueError):
        B.DyadicCube(2, (4,))
    with pytest.raises(ValueError):
        B.DyadicCube(-1, (0,))


def test_scaling_is_unit_indicator():
    idx = B.BasisIndex(0, (0,), B.SCALING)
    assert B.eval_basis(HAAR, idx, 0.3) == 1.0


def test_wavelet_sign_pattern():
    # psi_{1,0} = 2^{1/2} psi(2x): positive on [0, 1/4), negative on [1/4, 1/2)
    idx = B.BasisIndex(1, (0,), B.WAVELET)
    assert_allclose(B.eval_basis(HAAR, idx, 0.1), math.sqrt(2.0))
    assert_allclose(B.eval_basis(HAAR, idx, 0.3), -math.sqrt(2.0))
    assert B.eval_basis(HAAR, idx, 0.7) == 0.0


def test_right_endpoint_maps_to_last_cell():
    idx = B.BasisIndex(2, (3,), B.SCALING)
    assert B.eval_basis(HAAR, idx, 1.0) == 2.0


def test_point_outside_domain_raises():
    with pytest.raises(B.OutsideDomain):
        B.eval_basis(HAAR, B.BasisIndex(0, (0,), B.SCALING), 1.5)


def test_inadmissible_index_raises():
    with pytest.raises(B.InadmissibleIndex):
        B.eval_basis(HAAR, B.BasisIndex(2, (9,), B.SCALING), 0.5)


def test_index_set_counts_haar1d():
    gf, gw = B.index_sets(HAAR, 3)
    assert len(gf) == 8 and len(gw) == 8


def test_index_set_counts_tensor():
    bt = B.HaarTensorBasis(2, 4)
    gf, gw = B.index_sets(bt, 1)
    assert len(gf) == 4
    assert len(gw) == 3 * 4      # 2^d - 1 corners per cell


def test_index_set_counts_triangle():
    tb = B.TriangleMultiwaveletBasis(4)
    gf, gw = B.index_sets(tb, 0)
    assert len(gf) == 1 and len(gw) == 3
    assert len(tb.scaling_indices(2)) == 16


def test_level_beyond_bound_raises():
    with pytest.raises(B.InadmissibleIndex):
        B.index_sets(HAAR, 11)


def test_triangle_wavelet_value():
    # level-0 psi_1 on the child containing the anchor corner: (1/sqrt2) |child|^{-1/2}
    tb = B.TriangleMultiwaveletBasis(4)
    idx = B.BasisIndex(0, (0, 0, B.UP), B.WAVELET, member=1)
    expected = (1.0 / math.sqrt(2.0)) * tb.cell_area(1) ** -0.5
    assert_allclose(B.eval_basis(tb, idx, np.array([0.1, 0.1])), expected)
    # middle child carries the opposite sign
    assert_allclose(B.eval_basis(tb, idx, np.array([0.3, 0.3])), -expected)


def test_project_linear_function_level1():
    fld = B.project(lambda x: x, HAAR, 1, quad_level=12)
    assert_allclose(fld.cell_values(), [0.25, 0.75], atol=1e-9)


def test_project_reproduces_basis_function():
    phi23 = B.BasisIndex(2, (3,), B.SCALING)
    fld = B.project(lambda x: HAAR.evaluate(phi23, x), HAAR, 2, quad_level=10)
    expected = np.zeros(4)
    expected[3] = 1.0
    assert_allclose(fld.single_scale_array(2), expected, atol=1e-12)


def test_wavelet_coefficient_of_identity():
    # (x, psi_{0,0}) = int_0^{1/2} x - int_{1/2}^1 x = -1/4
    multi = B.fwt(B.project(lambda x: x, HAAR, 8, quad_level=14))
    assert_allclose(multi.entries[B.BasisIndex(0, (0,), B.WAVELET)], -0.25, atol=1e-9)


def test_quadrature_below_level_raises():
    with pytest.raises(ValueError):
        B.project(lambda x: x, HAAR, 5, quad_level=3)


def test_fwt_constant_field():
    fld = B.field_from_array(HAAR, 4, np.full(16, 2.0 ** -2))   # constant one
    multi = B.fwt(fld)
    details = [v for i, v in multi.entries.items() if i.level >= 0]
    assert np.max(np.abs(details)) < 1e-14
    assert_allclose(multi.entries[HAAR.coarse_index()], 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 6))
def test_fwt_roundtrip_haar1d(seed, J):
    v = np.random.default_rng(seed).standard_normal(2 ** J)
    back = B.ifwt(B.fwt(B.field_from_array(HAAR, J, v)), J)
    assert_allclose(back.single_scale_array(J), v, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 3))
def test_fwt_roundtrip_tensor(seed, J):
    bt = B.HaarTensorBasis(2, 4)
    v = np.random.default_rng(seed).standard_normal(4 ** J)
    back = B.ifwt(B.fwt(B.field_from_array(bt, J, v)), J)
    assert_allclose(back.single_scale_array(J), v, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 3))
def test_fwt_roundtrip_triangle(seed, J):
    tb = B.TriangleMultiwaveletBasis(5)
    v = np.random.default_rng(seed).standard_normal(4 ** J)
    back = B.ifwt(B.fwt(B.field_from_array(tb, J, v)), J)
    assert_allclose(back.single_scale_array(J), v, atol=1e-12)


def test_fwt_requires_single_scale():
    multi = B.CoefficientField(HAAR, {B.BasisIndex(0, (0,), B.WAVELET): 1.0})
    with pytest.raises(ValueError):
        B.fwt(multi)


def test_parseval_for_projected_identity():
    J = 4
    fld = B.project(lambda x: x, HAAR, J, quad_level=J + 8)
    multi = B.fwt(fld)
    # || Pi_4 x ||^2 by quadrature against the wavelet coefficient sum
    pts, w = HAAR.quadrature(J + 8)
    recon = fld.reconstruct(pts[:, 0])
    assert_allclose(multi.norm2(), np.sum(recon ** 2 * w), atol=1e-10)
    assert_allclose(multi.norm2(), fld.norm2(), atol=1e-12)


def test_nestedness_of_projections():
    # Pi_j Pi_J = Pi_j exactly on coefficient fields
    rng = np.random.default_rng(3)
    multi = B.fwt(B.field_from_array(HAAR, 6, rng.standard_normal(64)))
    once = B.truncate_field(multi, 3)
    twice = B.truncate_field(B.truncate_field(multi, 5), 3)
    assert once.entries == twice.entries


def test_orthonormality_gram_matrix():
    pts, w = HAAR.quadrature(9)
    idxs = HAAR.multiscale_indices(3)
    M = np.stack([HAAR.evaluate(i, pts[:, 0]) for i in idxs])
    G = (M * w) @ M.T
    assert np.max(np.abs(G - np.eye(len(idxs)))) < 1e-8


def test_triangle_orthonormality_and_tiling():
    tb = B.TriangleMultiwaveletBasis(4)
    pts, w = tb.quadrature(8)
    idxs = tb.multiscale_indices(2)
    M = np.stack([tb.evaluate(i, pts) for i in idxs])
    G = (M * w) @ M.T
    assert np.max(np.abs(G - np.eye(len(idxs)))) < 1e-8
    # children tile the parent: indicator sums match on a point cloud
    rng = np.random.default_rng(0)
    raw = rng.random((512, 2))
    cloud = raw[tb.in_domain(raw)]
    for cell in tb.cells(1):
        parent = [c == cell for c in tb.locate(cloud, 1)]
        kids = tb.children(cell)
        kid_hits = [c in set(kids) for c in tb.locate(cloud, 2)]
        assert parent == kid_hits


def test_projection_error_closed_form():
    err = B.projection_error(lambda x: x, HAAR, 1, "L2", J_ref=10)
    assert abs(err - 1.0 / math.sqrt(48.0)) / (1.0 / math.sqrt(48.0)) < 1e-4


def test_projection_error_vanishes_in_range():
    f = lambda x: HAAR.evaluate(B.BasisIndex(2, (1,), B.SCALING), x)
    assert B.projection_error(f, HAAR, 2, "L2", J_ref=9) <= 1e-12
    assert B.projection_error(f, HAAR, 3, "L2", J_ref=9) <= 1e-12


def test_projection_error_rate_slope():
    errs = [(j, B.projection_error(lambda x: x, HAAR, j, "L2", J_ref=j + 6))
            for j in range(2, 9)]
    x = np.array([e[0] for e in errs], dtype=float)
    y = np.log2([e[1] for e in errs])
    slope = np.polyfit(x, y, 1)[0]
    assert abs(slope + 1.0) < 0.05


def test_projection_error_reference_level_guard():
    with pytest.raises(ValueError):
        B.projection_error(lambda x: x, HAAR, 4, "L2", J_ref=6)


def test_wavelet_projection_error_is_zero_one():
    # || (I - Pi_j) psi_{j0,k0} || is 1 for j <= j0 and 0 beyond, exactly
    j0 = 3
    fld = B.CoefficientField(HAAR, {B.BasisIndex(j0, (5,), B.WAVELET): 1.0})
    for j in range(0, 7):
        resid = B.CoefficientField(
            HAAR, {i: v for i, v in fld.entries.items() if i.level >= j})
        assert math.isclose(math.sqrt(resid.norm2()), 1.0 if j <= j0 else 0.0)


def test_arq_seminorm_single_wavelet():
    c = B.CoefficientField(HAAR, {B.BasisIndex(3, (5,), B.WAVELET): 1.0})
    assert_allclose(float(B.arq_seminorm(c, 1.0, 2.0)), 8.0)


def test_arq_seminorm_coarse_bucket():
    c = B.CoefficientField(HAAR, {HAAR.coarse_index(): 1.0})
    for r in (0.25, 0.5, 1.0, 2.0):
        assert_allclose(float(B.arq_seminorm(c, r, 2.0)), 1.0)


def test_arq_seminorm_empty_field_raises():
    with pytest.raises(ValueError):
        B.arq_seminorm(B.CoefficientField(HAAR, {}), 1.0, 2.0)


def test_arq_seminorm_sup_stability():
    vals = {}
    for J in (8, 10):
        multi = B.fwt(B.project(lambda x: x, HAAR, J, quad_level=J + 6))
        vals[J] = float(B.arq_seminorm(multi, 0.4, math.inf))
    assert vals[10] < math.inf
    assert abs(vals[10] - vals[8]) / vals[8] < 0.05


def test_arq_seminorm_truncation_flag():
    c = B.CoefficientField(HAAR, {B.BasisIndex(2, (0,), B.WAVELET): 1.0})
    s = B.arq_seminorm(c, 0.5, 2.0)
    assert s.truncated and s.levels == (2,)


def test_tensor_gram_matrix_identity():
    bt = B.HaarTensorBasis(2, 3)
    pts, w = bt.quadrature(7)
    idxs = bt.multiscale_indices(1)
    M = np.stack([bt.evaluate(i, pts) for i in idxs])
    G = (M * w) @ M.T
    assert np.max(np.abs(G - np.eye(len(idxs)))) < 1e-10


@pytest.mark.parametrize("family,idx", [
    ("haar-tensor", B.BasisIndex(1, (0, 1), B.WAVELET, member=3)),
    ("triangle-multiwavelet", B.BasisIndex(1, (1, 0, B.UP), B.WAVELET, member=2)),
])
def test_transform_consistent_with_evaluation(family, idx):
    # projecting an evaluated wavelet and transforming recovers a unit entry
    basis = B.make_basis(family, 4, d=2)
    fld = B.project(lambda p: basis.evaluate(idx, p), basis, 3, quad_level=8)
    multi = B.fwt(fld)
    assert abs(multi.entries[idx] - 1.0) < 1e-12
    others = [v for i, v in multi.entries.items() if i != idx]
    assert np.max(np.abs(others)) < 1e-12


def test_coefficient_field_json_roundtrip():
    rng = np.random.default_rng(17)
    for basis in (HAAR, B.HaarTensorBasis(2, 3), B.TriangleMultiwaveletBasis(3)):
        fld = B.fwt(B.field_from_array(basis, 2,
                                       rng.standard_normal(basis.n_scalings(2))))
        back = B.field_from_json_dict(B.field_to_json_dict(fld))
        assert back.basis.family == basis.family
        assert back.entries == fld.entries


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.25, 0.5, 1.0]),
       st.integers(0, 5))
def test_approximation_rate_bound(seed, r, j):
    # || (I - Pi_j) f || <= 2^{-rj} |f|_{A^{r,2}} for finitely supported fields
    rng = np.random.default_rng(seed)
    multi = B.fwt(B.field_from_array(HAAR, 6, rng.standard_normal(64)))
    resid2 = sum(v * v for i, v in multi.entries.items() if i.level >= j)
    bound = 2.0 ** (-r * j) * float(B.arq_seminorm(multi, r, 2.0))
    assert math.sqrt(resid2) <= bound * (1.0 + 1e-12)
