"""Warped wavelets: compositions psi_{j,k} o M that are orthonormal in the
jacobian-weighted inner product on the image domain.

A warp carries the forward change of variables M: domain_tilde -> domain, its
inverse, and the analytic jacobian density m(x) = |dM/dx|; no numerical
differentiation happens anywhere.  Quadrature nodes sit strictly inside cells
pulled back through the warp, so densities that blow up or vanish at the
boundary are never sampled at their singular points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .basis import BasisIndex, CoefficientField, MultiscaleBasis


@dataclass(frozen=True)
class CoordinateWarp:
    """Invertible map between [0,1] and itself with analytic jacobian."""

    forward: Callable[[np.ndarray], np.ndarray]      # M: x_tilde -> x
    inverse: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]     # m(x_tilde) = |dM/dx_tilde|
    name: str = "warp"

    def roundtrip_defect(self, n: int = 257) -> float:
        x = np.linspace(1e-6, 1.0 - 1e-6, n)
        return float(np.max(np.abs(self.forward(self.inverse(x)) - x)))


def identity_warp() -> CoordinateWarp:
    return CoordinateWarp(lambda x: x, lambda x: x,
                          lambda x: np.ones_like(np.asarray(x, dtype=float)),
                          name="identity")


def power_warp(alpha: float) -> CoordinateWarp:
    """Warp induced by the map w(x) = x^alpha on [0,1]: M(xt) = xt^(1/alpha).

    The jacobian density (1/alpha) xt^(1/alpha - 1) is singular at 0 for
    alpha > 1 and vanishes there for alpha < 1.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    inv_alpha = 1.0 / alpha

    def fwd(xt):
        return np.asarray(xt, dtype=float) ** inv_alpha

    def inv(x):
        return np.asarray(x, dtype=float) ** alpha

    def jac(xt):
        xt = np.asarray(xt, dtype=float)
        return inv_alpha * xt ** (inv_alpha - 1.0)

    return CoordinateWarp(fwd, inv, jac, name=f"power({alpha})")


@dataclass(frozen=True)
class WarpedBasis:
    base: MultiscaleBasis
    warp: CoordinateWarp

    def evaluate(self, idx: BasisIndex, x_tilde):
        return self.base.evaluate(idx, self.warp.forward(np.asarray(x_tilde, dtype=float)))


def eval_warped(wb: WarpedBasis, idx: BasisIndex, x_tilde):
    """psi~_{j,k}(x~) = psi_{j,k}(M(x~))."""
    return wb.evaluate(idx, x_tilde)


def warped_quadrature(warp: CoordinateWarp, level: int, order: int = 8):
    """Gauss-Legendre nodes on the pullbacks of the level-`level` dyadic cells.

    Basis functions composed with the warp are constant on each pulled-back
    cell, so only the smooth weight integrates approximately; nodes never
    touch cell endpoints.
    """
    edges = warp.inverse(np.linspace(0.0, 1.0, 2 ** level + 1))
    gx, gw = leggauss(order)
    lo, hi = edges[:-1], edges[1:]
    half = (hi - lo) / 2.0
    mid = (hi + lo) / 2.0
    pts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wts = (half[:, None] * gw[None, :]).ravel()
    return pts, wts


def weighted_inner(wb: WarpedBasis, idx_a: BasisIndex, idx_b: BasisIndex,
                   quad_level: int = 12, order: int = 8) -> float:
    """Weighted inner product int psi~_a psi~_b m dx~ on the image domain."""
    if quad_level < max(idx_a.level, idx_b.level, 0):
        raise ValueError("quadrature level below the index levels")
    pts, wts = warped_quadrature(wb.warp, quad_level, order)
    dens = wb.warp.jacobian(pts)
    if not np.all(np.isfinite(dens)):
        raise FloatingPointError("jacobian not finite at quadrature nodes")
    va = wb.evaluate(idx_a, pts)
    vb = wb.evaluate(idx_b, pts)
    return float(np.sum(va * vb * dens * wts))


def warped_project(f: Callable, wb: WarpedBasis, j: int,
                   quad_level: int | None = None, order: int = 8) -> CoefficientField:
    """Single-scale coefficients (f, psi~_{j,k}) in the weighted inner product."""
    if quad_level is None:
        quad_level = j + 6
    if quad_level < j:
        raise ValueError("quadrature level below target level")
    pts, wts = warped_quadrature(wb.warp, quad_level, order)
    dens = wb.warp.jacobian(pts)
    fv = np.asarray(f(pts), dtype=float)
    entries = {}
    for idx in wb.base.scaling_indices(j):
        va = wb.evaluate(idx, pts)
        entries[idx] = float(np.sum(fv * va * dens * wts))
    return CoefficientField(wb.base, entries)


def gram_defect(wb: WarpedBasis, j: int, quad_level: int = 12, order: int = 8) -> float:
    """Max deviation of the weighted Gram matrix of A_{j+1} from identity."""
    idxs = wb.base.multiscale_indices(j)
    pts, wts = warped_quadrature(wb.warp, quad_level, order)
    dens = wb.warp.jacobian(pts)
    M = np.stack([wb.evaluate(i, pts) for i in idxs])
    G = (M * (dens * wts)) @ M.T
    return float(np.max(np.abs(G - np.eye(len(idxs)))))


def koopman_factorization_defect(f: Callable, map_w: Callable, wb: WarpedBasis,
                                 j_max: int, quad_level: int = 19) -> float:
    """Max |(f o w, psi_{j,k})_L2 - (f, psi~_{j,k})_weighted| over levels <= j_max.

    The left side is integrated on the plain dyadic grid, the right side on
    warped cells; agreement is a change-of-variables identity, not a shared
    quadrature artifact.
    """
    base, warp = wb.base, wb.warp
    idxs = base.multiscale_indices(j_max)

    # left side: composite midpoint in the base variable
    n = 2 ** quad_level
    xm = (np.arange(n) + 0.5) / n
    wts_l = np.full(n, 1.0 / n)
    fw = np.asarray(f(map_w(xm)), dtype=float)

    # right side: Gauss-Legendre on pulled-back cells
    pts, wts_r = warped_quadrature(warp, min(quad_level, 14), order=10)
    dens = warp.jacobian(pts)
    fv = np.asarray(f(pts), dtype=float)

    worst = 0.0
    for idx in idxs:
        lhs = float(np.sum(fw * base.evaluate(idx, xm) * wts_l))
        rhs = float(np.sum(fv * wb.evaluate(idx, pts) * dens * wts_r))
        worst = max(worst, abs(lhs - rhs))
    return worst
