"""Concrete dynamical systems and their transfer operators.

Three kinds are supported: deterministic maps x -> w(x), Markov kernels given
by a transition density p(y, x) against a base measure, and IFS mixtures of
contractions applied with fixed probabilities.  The Koopman operator acts on
functions for every kind; the Perron-Frobenius operator acts on point-mass
measures by push-forward and on densities through Galerkin matrices.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import spectral
from .basis import MultiscaleBasis


@dataclass
class DynamicalSystem:
    kind: str                        # "deterministic-map" | "kernel-density" | "ifs"
    name: str
    domain: tuple[float, float] = (0.0, 1.0)
    dim: int = 1
    # deterministic / noisy maps
    map: Callable | None = None
    noise_scale: float = 0.0         # additive noise, wrapped back into the domain
    # kernel systems
    kernel: Callable | None = None   # broadcasting p(y, x)
    kernel_operator: spectral.SpectralOperator | None = None
    domain_volume: float | None = None
    # IFS
    ifs_maps: Sequence[Callable] = field(default_factory=tuple)
    ifs_probs: np.ndarray | None = None
    ifs_lipschitz: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "ifs":
            self.ifs_probs = np.asarray(self.ifs_probs, dtype=float)
            if abs(self.ifs_probs.sum() - 1.0) > 1e-12:
                raise ValueError("IFS probabilities must sum to 1")
            self.ifs_lipschitz = np.asarray(self.ifs_lipschitz, dtype=float)

    @property
    def mean_lipschitz(self) -> float:
        return float(np.sum(self.ifs_probs * self.ifs_lipschitz))

    def supports_stepping(self) -> bool:
        return self.kind in ("deterministic-map", "ifs")

    def step(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One chain step from each point in x."""
        x = np.asarray(x, dtype=float)
        if self.kind == "deterministic-map":
            y = self.map(x)
            if self.noise_scale > 0.0:
                lo, hi = self.domain
                y = lo + np.mod(y - lo + rng.normal(0.0, self.noise_scale, np.shape(y)),
                                hi - lo)
            return y
        if self.kind == "ifs":
            pts = np.atleast_2d(x)
            pick = rng.choice(len(self.ifs_maps), size=len(pts), p=self.ifs_probs)
            out = np.empty_like(pts)
            for lam, w in enumerate(self.ifs_maps):
                sel = pick == lam
                if np.any(sel):
                    out[sel] = w(pts[sel])
            return out if np.asarray(x).ndim > 1 else out[0]
        raise ValueError(f"system kind {self.kind!r} does not support stepping")


def koopman_apply(sys: DynamicalSystem, f: Callable, x, quad_level: int | None = None):
    """(U f)(x): composition, kernel average, or probability mixture."""
    x = np.asarray(x, dtype=float)
    if sys.kind == "deterministic-map":
        return f(sys.map(x))
    if sys.kind == "ifs":
        pts = np.atleast_2d(x)
        out = np.zeros(len(pts))
        for p, w in zip(sys.ifs_probs, sys.ifs_maps):
            out = out + p * np.asarray(f(w(pts)), dtype=float)
        return out if x.ndim > 1 else out[0]
    if sys.kind == "kernel-density":
        if quad_level is None:
            raise ValueError("kernel systems need a quadrature level")
        lo, hi = sys.domain
        n = 2 ** quad_level
        ys = lo + (np.arange(n) + 0.5) / n * (hi - lo)
        wq = (hi - lo) / n
        fy = np.asarray(f(ys), dtype=float)
        scalar = x.ndim == 0
        xs = np.atleast_1d(x)
        vals = sys.kernel(ys[None, :], xs[:, None]) @ fy * wq
        return vals[0] if scalar else vals
    raise ValueError(f"unknown system kind {sys.kind!r}")


@dataclass
class OperatorMatrix:
    """Square Galerkin matrix over a canonical basis enumeration."""

    array: np.ndarray
    indices: list
    basis: MultiscaleBasis

    def __post_init__(self):
        self.array = np.asarray(self.array, dtype=float)
        if not np.all(np.isfinite(self.array)):
            raise ValueError("matrix entries must be finite")


def schatten2_norm(m: OperatorMatrix | np.ndarray) -> float:
    arr = m.array if isinstance(m, OperatorMatrix) else np.asarray(m, dtype=float)
    return float(np.sqrt(np.sum(arr ** 2)))


def _galerkin(sys: DynamicalSystem, basis: MultiscaleBasis, j: int,
              quad_level: int, transpose_kernel: bool) -> OperatorMatrix:
    idxs = basis.multiscale_indices(j - 1) if j > 0 else [basis.coarse_index()]
    pts, w = basis.quadrature(quad_level)
    xs = pts if basis.dim > 1 else pts[:, 0]
    Psi = np.stack([basis.evaluate(i, xs) for i in idxs])
    if sys.kind == "deterministic-map":
        wx = sys.map(xs)
        PsiW = np.stack([basis.evaluate(i, wx) for i in idxs])
        # entry [a, b] = (psi_a, U psi_b) = int psi_a(x) psi_b(w(x)) dx
        M = (Psi * w) @ PsiW.T
    elif sys.kind == "ifs":
        M = np.zeros((len(idxs), len(idxs)))
        for p, wmap in zip(sys.ifs_probs, sys.ifs_maps):
            wx = wmap(pts)
            PsiW = np.stack([basis.evaluate(i, wx) for i in idxs])
            M += p * ((Psi * w) @ PsiW.T)
    elif sys.kind == "kernel-density":
        K = sys.kernel(xs[:, None], xs[None, :])
        if transpose_kernel:
            K = K.T
        # (psi_a, U psi_b) = iint psi_a(x) p(y, x) psi_b(y) dy dx
        M = (Psi * w) @ K.T @ (Psi * w).T
        return OperatorMatrix(M, idxs, basis)
    else:
        raise ValueError(f"unknown system kind {sys.kind!r}")
    if transpose_kernel:
        M = M.T
    return OperatorMatrix(M, idxs, basis)


def koopman_matrix(sys: DynamicalSystem, basis: MultiscaleBasis, j: int,
                   quad_level: int | None = None) -> OperatorMatrix:
    """Galerkin matrix of the Koopman operator on A_j, multiscale enumeration.

    Entry [a, b] = (psi_a, U psi_b); coefficients of U_j f are M @ c.
    """
    if quad_level is None:
        quad_level = j + 6
    return _galerkin(sys, basis, j, quad_level, transpose_kernel=False)


def pf_matrix(sys: DynamicalSystem, basis: MultiscaleBasis, j: int,
              quad_level: int | None = None) -> OperatorMatrix:
    """Galerkin matrix of the Perron-Frobenius operator on densities.

    Assembled independently from its own kernel orientation; for kernel
    systems it equals the transpose of :func:`koopman_matrix` up to
    quadrature error.
    """
    if quad_level is None:
        quad_level = j + 6
    if sys.kind != "kernel-density":
        raise ValueError("density-side Galerkin matrices need a kernel system")
    return _galerkin(sys, basis, j, quad_level, transpose_kernel=True)


def pf_pushforward_measure(sys: DynamicalSystem, nu):
    """Push a point-mass measure through the dynamics.

    Deterministic maps move every atom; an IFS splits each atom across its
    branches with the branch probabilities.  Total mass is preserved exactly.
    """
    from .measures import DiscreteMeasure

    pts = np.atleast_2d(nu.points)
    if sys.kind == "deterministic-map":
        moved = sys.map(pts[:, 0]) if sys.dim == 1 else sys.map(pts)
        return DiscreteMeasure(np.atleast_2d(moved).reshape(len(pts), -1),
                               nu.weights.copy())
    if sys.kind == "ifs":
        parts, wts = [], []
        for p, wmap in zip(sys.ifs_probs, sys.ifs_maps):
            parts.append(np.atleast_2d(wmap(pts)))
            wts.append(p * nu.weights)
        return DiscreteMeasure(np.concatenate(parts), np.concatenate(wts))
    raise ValueError("push-forward needs a deterministic or IFS system")


# ---------------------------------------------------------------------------
# registry of the named example systems
# ---------------------------------------------------------------------------

def _sierpinski_maps():
    shifts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def make(shift):
        return lambda x: 0.5 * (np.asarray(x, dtype=float) + shift)

    return [make(s) for s in shifts]


def system_registry(name: str) -> DynamicalSystem:
    """Named presets: x_alpha(a), sierpinski, heat(h), noisy_x_alpha(a, sigma)."""
    m = re.fullmatch(r"x_alpha\(([^)]+)\)", name)
    if m:
        alpha = float(m.group(1))
        return DynamicalSystem("deterministic-map", name,
                               map=lambda x: np.asarray(x, dtype=float) ** alpha)
    m = re.fullmatch(r"noisy_x_alpha\(([^,]+),([^)]+)\)", name)
    if m:
        alpha, sigma = float(m.group(1)), float(m.group(2))
        return DynamicalSystem("deterministic-map", name,
                               map=lambda x: np.asarray(x, dtype=float) ** alpha,
                               noise_scale=sigma)
    if name == "sierpinski":
        return DynamicalSystem("ifs", name, dim=2,
                               ifs_maps=_sierpinski_maps(),
                               ifs_probs=np.full(3, 1.0 / 3.0),
                               ifs_lipschitz=np.full(3, 0.5))
    m = re.fullmatch(r"heat\(([^,)]+)(?:,\s*(\d+))?\)", name)
    if m:
        h = float(m.group(1))
        k_max = int(m.group(2)) if m.group(2) else 16
        op = spectral.heat_kernel_operator(h, k_max)
        return DynamicalSystem("kernel-density", name,
                               domain=(0.0, 2.0 * np.pi),
                               kernel=spectral.fourier_kernel_callable(op),
                               kernel_operator=op,
                               domain_volume=2.0 * np.pi)
    raise KeyError(f"unknown system {name!r}")
