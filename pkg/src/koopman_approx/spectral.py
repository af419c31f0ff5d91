"""Eigen-structure machinery: the Fourier eigenbasis of the heat semigroup on
the circle, Nystrom eigendecomposition of symmetric kernel operators, spectral
seminorms, and truncated spectral operators with their error bounds.

Eigenvalues are kept in nonincreasing order.  Truncation follows the
convention "keep indices i < n" in 1-based counting: ``truncate_spectral(op,
n)`` retains the first n - 1 eigendirections, and the matching error bound
weight is the n-th eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass
class EigenSystem:
    """Nonincreasing eigenvalues with evaluable orthonormal eigenfunctions."""

    eigenvalues: np.ndarray
    source: str                      # "analytic-fourier" | "nystrom"
    _evaluate: Callable[[int, np.ndarray], np.ndarray]
    labels: tuple = ()               # fourier: (k, i) per eigenindex
    domain_volume: float = TWO_PI

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if np.any(np.diff(ev) > 1e-12) or np.any(ev < -1e-14):
            raise ValueError("eigenvalues must be nonincreasing and nonnegative")
        self.eigenvalues = ev

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def evaluate(self, i: int, x) -> np.ndarray:
        """Value of the i-th (0-based) eigenfunction."""
        return self._evaluate(i, np.asarray(x, dtype=float))

    def evaluate_all(self, x) -> np.ndarray:
        """Matrix (n_modes, len(x)) of eigenfunction values."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([self.evaluate(i, x) for i in range(len(self))])

    def gram_defect(self, quad_points: int = 4096) -> float:
        x = (np.arange(quad_points) + 0.5) / quad_points * self.domain_volume
        w = self.domain_volume / quad_points
        M = self.evaluate_all(x)
        G = (M * w) @ M.T
        return float(np.max(np.abs(G - np.eye(len(self)))))


def fourier_eigensystem(k_max: int) -> EigenSystem:
    """Eigenpairs of the inverse second-derivative operator on the circle.

    Modes cos(kx)/sqrt(pi), sin(kx)/sqrt(pi) for k = 1..k_max with eigenvalue
    1/k^2 of multiplicity two, cosine ordered before sine.  The constant mode
    spans the kernel of the operator and is excluded.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    ks = np.repeat(np.arange(1, k_max + 1), 2)
    labels = tuple((int(k), 1 if i % 2 == 0 else 2) for i, k in enumerate(ks))
    ev = 1.0 / ks.astype(float) ** 2
    inv_sqrt_pi = 1.0 / np.sqrt(np.pi)

    def ev_fun(i, x):
        k, trig = labels[i]
        return (np.cos(k * x) if trig == 1 else np.sin(k * x)) * inv_sqrt_pi

    return EigenSystem(ev, "analytic-fourier", ev_fun, labels=labels)


def fourier_block_counts(system: EigenSystem, j: int) -> int:
    """Number of eigenfunctions with frequency label k <= j."""
    return sum(1 for k, _ in system.labels if k <= j)


def fourier_antiderivative(system: EigenSystem, i: int, a: float, b: float) -> float:
    """Exact integral of the i-th Fourier eigenfunction over [a, b]."""
    if system.source != "analytic-fourier":
        raise ValueError("analytic integrals only for the Fourier system")
    k, trig = system.labels[i]
    if trig == 1:
        return (np.sin(k * b) - np.sin(k * a)) / (k * np.sqrt(np.pi))
    return (np.cos(k * a) - np.cos(k * b)) / (k * np.sqrt(np.pi))


def nystrom_eigensystem(kernel: Callable, grid: np.ndarray, weights: np.ndarray,
                        count: int) -> EigenSystem:
    """Top eigenpairs of the mu-weighted integral operator discretized on a grid.

    The kernel is symmetrized as sqrt(w_i) K(x_i, x_j) sqrt(w_j) so the
    discrete problem stays symmetric; eigenfunctions extend off the grid by
    the Nystrom formula u(x) = (1/lambda) sum_j w_j K(x, x_j) u(x_j).
    """
    grid = np.asarray(grid, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if count > len(grid):
        raise ValueError("count exceeds grid size")
    K = np.asarray(kernel(grid[:, None], grid[None, :]), dtype=float)
    asym = np.max(np.abs(K - K.T))
    if asym > 1e-10:
        raise ValueError(f"kernel asymmetry {asym:.2e} on the sampled grid")
    sw = np.sqrt(weights)
    lam, vec = np.linalg.eigh(sw[:, None] * K * sw[None, :])
    order = np.argsort(lam)[::-1][:count]
    lam = lam[order]
    # discrete eigenfunction values, normalized so sum_i w_i u(x_i)^2 = 1
    uvals = vec[:, order] / sw[:, None]

    def ev_fun(i, x):
        if lam[i] <= 0:
            raise ValueError("Nystrom extension undefined for nonpositive eigenvalue")
        Kx = np.asarray(kernel(np.atleast_1d(x)[:, None], grid[None, :]), dtype=float)
        out = Kx @ (weights * uvals[:, i]) / lam[i]
        return out if np.ndim(x) else out[0]

    lam_clipped = np.maximum(lam, 0.0)
    return EigenSystem(lam_clipped, "nystrom", ev_fun,
                       domain_volume=float(np.sum(weights)))


@dataclass
class SpectralOperator:
    """Operator expanded over a fixed eigensystem.

    Either diagonal (coefficients p_i on u_i (x) u_i) or dense
    (p_{m,n} = (P u_m, u_n)); the dense form is symmetric iff the operator is
    flagged self-adjoint.
    """

    system: EigenSystem
    diagonal: np.ndarray | None = None
    dense: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.diagonal is None) == (self.dense is None):
            raise ValueError("exactly one of diagonal/dense must be given")
        if self.diagonal is not None:
            self.diagonal = np.asarray(self.diagonal, dtype=float)
        else:
            self.dense = np.asarray(self.dense, dtype=float)

    @property
    def is_diagonal(self) -> bool:
        return self.diagonal is not None

    @property
    def size(self) -> int:
        return len(self.diagonal) if self.is_diagonal else self.dense.shape[0]

    @property
    def is_self_adjoint(self) -> bool:
        if self.is_diagonal:
            return True
        return bool(np.max(np.abs(self.dense - self.dense.T)) <= 1e-12)

    def hilbert_schmidt_norm(self) -> float:
        arr = self.diagonal if self.is_diagonal else self.dense
        return float(np.sqrt(np.sum(arr ** 2)))

    def kernel(self, x, y) -> np.ndarray:
        """Pointwise kernel sum p_i u_i(x) u_i(y) (diagonal operators)."""
        if not self.is_diagonal:
            raise ValueError("kernel evaluation implemented for diagonal operators")
        Ux = self.system.evaluate_all(np.atleast_1d(x))
        Uy = self.system.evaluate_all(np.atleast_1d(y))
        return np.einsum("a,ai,aj->ij", self.diagonal, Ux, Uy)

    def kernel_sup(self) -> float:
        """sup |p(x,y)| of the kernel induced by a diagonal operator."""
        d = self.diagonal
        if (self.system.source == "analytic-fourier" and np.all(d >= 0)
                and np.allclose(d[::2], d[1::2])):
            # p(x,y) = (1/pi) sum_k p_k cos k(x-y), maximal at x = y
            return float(np.sum(d[::2]) / np.pi)
        x = np.linspace(0, self.system.domain_volume, 1024, endpoint=False)
        return float(np.max(np.abs(self.kernel(x, x))))


def fourier_kernel_callable(op: SpectralOperator) -> Callable:
    """Broadcasting (x, y) -> p(x, y) for diagonal operators on the Fourier system."""
    if not (op.is_diagonal and op.system.source == "analytic-fourier"):
        raise ValueError("needs a diagonal operator on the Fourier system")
    labels = op.system.labels
    d = op.diagonal

    def K(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape, y.shape))
        for i, (k, trig) in enumerate(labels):
            if trig == 1:
                out = out + d[i] * np.cos(k * x) * np.cos(k * y) / np.pi
            else:
                out = out + d[i] * np.sin(k * x) * np.sin(k * y) / np.pi
        return out

    return K


def heat_kernel_operator(h: float, k_max: int) -> SpectralOperator:
    """Time-h heat semigroup on the circle: diagonal p_{k,i} = exp(-h k^2)."""
    if h <= 0:
        raise ValueError("h must be positive")
    system = fourier_eigensystem(k_max)
    ks = np.array([k for k, _ in system.labels], dtype=float)
    return SpectralOperator(system, diagonal=np.exp(-h * ks ** 2),
                            params={"h": h, "k_max": k_max})


def spectral_seminorm(c: np.ndarray, eigenvalues: np.ndarray, r: float) -> float:
    """(sum_i lambda_i^(-r) c_i^2)^(1/2); r = 0 recovers the plain norm."""
    if r < 0:
        raise ValueError("r must be >= 0")
    c = np.asarray(c, dtype=float)
    lam = np.asarray(eigenvalues, dtype=float)[: len(c)]
    if np.any((lam <= 0) & (c != 0)):
        raise ZeroDivisionError("zero eigenvalue with nonzero coefficient")
    terms = np.zeros_like(c)
    nz = c != 0
    terms[nz] = lam[nz] ** (-r) * c[nz] ** 2
    return float(np.sqrt(terms.sum()))


def truncate_spectral(op: SpectralOperator, n: int) -> SpectralOperator:
    """Retain eigenindices i < n (1-based), i.e. the first n - 1 directions."""
    if n < 1:
        raise ValueError("n must be >= 1")
    keep = min(n - 1, op.size)
    if op.is_diagonal:
        p = op.diagonal.copy()
        p[keep:] = 0.0
        return SpectralOperator(op.system, diagonal=p, params=dict(op.params))
    P = np.zeros_like(op.dense)
    P[:keep, :keep] = op.dense[:keep, :keep]
    return SpectralOperator(op.system, dense=P, params=dict(op.params))


def apply_spectral(op: SpectralOperator, c: np.ndarray) -> np.ndarray:
    """Coefficient action: diagonal multiply or dense matrix-vector product."""
    c = np.asarray(c, dtype=float)
    if len(c) > op.size:
        raise ValueError("coefficient vector longer than the operator")
    if op.is_diagonal:
        return op.diagonal[: len(c)] * c
    return op.dense[: len(c), : len(c)] @ c


def nonsa_seminorm(op: SpectralOperator, eigenvalues: np.ndarray, r: float) -> float:
    """Double-sum seminorm (sum_m (sum_n p_{m,n} lambda_n^(-r/2))^2)^(1/2).

    For diagonal operators this collapses to the self-adjoint seminorm
    sum lambda^-r p^2.
    """
    P = np.diag(op.diagonal) if op.is_diagonal else op.dense
    lam = np.asarray(eigenvalues, dtype=float)[: P.shape[1]]
    rows = P @ lam ** (-r / 2.0)
    return float(np.sqrt(np.sum(rows ** 2)))


def truncation_error_bound(op: SpectralOperator, n: int, r: float,
                           f_coeffs: np.ndarray) -> tuple[float, float]:
    """(actual, bound) for ||(P - P_n) f|| <= lambda_n^(r/2) |P f|_{A^{r,2}}."""
    f_coeffs = np.asarray(f_coeffs, dtype=float)
    pf = apply_spectral(op, f_coeffs)
    err = np.linalg.norm(pf - apply_spectral(truncate_spectral(op, n), f_coeffs))
    lam_n = op.system.eigenvalues[n - 1]     # first discarded index, 1-based n
    bound = lam_n ** (r / 2.0) * spectral_seminorm(pf, op.system.eigenvalues, r)
    return float(err), float(bound)
