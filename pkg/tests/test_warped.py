import numpy as np
import pytest
from numpy.testing import assert_allclose

from koopman_approx import basis as B
from koopman_approx import warped as W

HAAR = B.HaarBasis1D(8)
PSI00 = B.BasisIndex(0, (0,), B.WAVELET)
S00 = B.BasisIndex(0, (0,), B.SCALING)


@pytest.fixture(scope="module")
def squared_warp():
    # induced by w(x) = x^{1/2}: forward map M(xt) = xt^2, density 2 xt
    return W.WarpedBasis(HAAR, W.power_warp(0.5))


def test_power_warp_roundtrip():
    for alpha in (0.5, 1.0, 2.0):
        assert W.power_warp(alpha).roundtrip_defect() < 1e-10


def test_identity_warp_collapses_to_plain_eval():
    wb = W.WarpedBasis(HAAR, W.identity_warp())
    x = np.linspace(0.01, 0.99, 37)
    for idx in (S00, PSI00, B.BasisIndex(2, (1,), B.WAVELET)):
        assert_allclose(W.eval_warped(wb, idx, x), HAAR.evaluate(idx, x))


def test_eval_warped_composition(squared_warp):
    assert W.eval_warped(squared_warp, PSI00, 0.6) == 1.0    # M(0.6) = 0.36
    assert W.eval_warped(squared_warp, PSI00, 0.8) == -1.0   # M(0.8) = 0.64


def test_weighted_inner_orthonormality(squared_warp):
    assert abs(W.weighted_inner(squared_warp, S00, S00) - 1.0) < 1e-6
    assert abs(W.weighted_inner(squared_warp, PSI00,
                                B.BasisIndex(1, (0,), B.WAVELET))) < 1e-6


def test_weighted_inner_identity_matches_unweighted():
    wb = W.WarpedBasis(HAAR, W.identity_warp())
    pairs = [(S00, S00), (PSI00, PSI00), (S00, PSI00)]
    for a, b in pairs:
        pts, w = HAAR.quadrature(12)
        plain = float(np.sum(HAAR.evaluate(a, pts[:, 0])
                             * HAAR.evaluate(b, pts[:, 0]) * w))
        assert abs(W.weighted_inner(wb, a, b, quad_level=12) - plain) < 1e-10


def test_gram_matrix_identity(squared_warp):
    assert W.gram_defect(squared_warp, 3) < 1e-6


def test_warped_wavelet_has_unit_self_coefficient(squared_warp):
    # (psi~_{1,1}, psi~_{j,k})_weighted is 1 at (1,1) and 0 elsewhere
    target = B.BasisIndex(1, (1,), B.WAVELET)
    for idx in HAAR.multiscale_indices(2):
        want = 1.0 if idx == target else 0.0
        got = W.weighted_inner(squared_warp, target, idx, quad_level=12)
        assert abs(got - want) < 1e-9


def test_warped_project_reproduces_warped_wavelet(squared_warp):
    idx = B.BasisIndex(1, (1,), B.WAVELET)
    f = lambda xt: W.eval_warped(squared_warp, idx, xt)
    fld = W.warped_project(f, squared_warp, 2, quad_level=10)
    # the warped wavelet at level 1 expands over level-2 warped scalings
    recon = sum(v * W.eval_warped(squared_warp, i, np.array([0.3, 0.77]))
                for i, v in fld.entries.items())
    assert_allclose(recon, f(np.array([0.3, 0.77])), atol=1e-8)


def test_warped_project_constant_weight_mass(squared_warp):
    fld = W.warped_project(lambda x: np.ones_like(x), squared_warp, 0, quad_level=12)
    # coarse coefficient is int m~ dxt = |Omega| = 1 for a unit-mass warp
    coarse = fld.entries[B.BasisIndex(0, (0,), B.SCALING)]
    assert_allclose(coarse, 1.0, atol=1e-9)


def test_warped_project_matches_independent_quadrature(squared_warp):
    from numpy.polynomial.legendre import leggauss
    f = lambda x: x
    fld = W.warped_project(f, squared_warp, 3, quad_level=12)
    gx, gw = leggauss(24)
    for idx, got in fld.entries.items():
        # brute-force weighted quadrature on [0,1] split at warped breakpoints
        edges = np.sqrt(np.linspace(0.0, 1.0, 2 ** 6 + 1))
        mid = (edges[1:] + edges[:-1]) / 2
        half = (edges[1:] - edges[:-1]) / 2
        pts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
        wts = (half[:, None] * gw[None, :]).ravel()
        ref = np.sum(f(pts) * squared_warp.evaluate(idx, pts)
                     * squared_warp.warp.jacobian(pts) * wts)
        assert abs(got - ref) < 1e-8


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_koopman_factorization(alpha):
    # (f o w, psi_{j,k})_L2 == (f, warped psi_{j,k})_weighted for w(x) = x^alpha
    wb = W.WarpedBasis(HAAR, W.power_warp(alpha))
    w_map = lambda x: np.asarray(x, dtype=float) ** alpha
    defect = W.koopman_factorization_defect(np.sin, w_map, wb, 3, quad_level=17)
    assert defect < 1e-8


def test_quadrature_level_guard(squared_warp):
    with pytest.raises(ValueError):
        W.warped_project(lambda x: x, squared_warp, 5, quad_level=3)
