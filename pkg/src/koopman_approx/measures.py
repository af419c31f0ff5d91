"""Approximation of signed and probability measures.

Dual projections expand a measure against an orthonormal family (wavelets or
eigenfunctions); the probability-preserving projector averages a density over
a dyadic partition, which keeps nonnegativity and total mass.  Weak*
convergence is quantified through pairings with test functions and through
the Wasserstein-1 distance; W1 is computed exactly (sorted CDFs in one
dimension, a transportation LP with a dual optimality certificate in two).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from .basis import BasisIndex, MultiscaleBasis, SCALING
from .spectral import EigenSystem, fourier_antiderivative, fourier_block_counts


@dataclass
class DiscreteMeasure:
    """Signed measure as weighted point masses."""

    points: np.ndarray               # (N, d)
    weights: np.ndarray              # (N,), signed

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights disagree in length")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def is_probability(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.weights >= -tol)
                    and abs(self.total_mass() - 1.0) <= max(tol, 1e-9))

    def consolidate(self, decimals: int = 12) -> "DiscreteMeasure":
        """Merge atoms at identical points (after rounding to `decimals`)."""
        key = np.round(self.points, decimals)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        w = np.zeros(len(uniq))
        np.add.at(w, inv, self.weights)
        return DiscreteMeasure(uniq, w)

    def integrate(self, f: Callable) -> float:
        pts = self.points if self.dim > 1 else self.points[:, 0]
        return float(np.sum(self.weights * np.asarray(f(pts), dtype=float)))


def dirac(point) -> DiscreteMeasure:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    return DiscreteMeasure(p.reshape(1, -1), np.ones(1))


def lebesgue_density(density: Callable, domain=(0.0, 1.0), quad_level: int = 12):
    """Measure nu(dx) = density(x) dx represented on a fine midpoint grid."""
    lo, hi = domain
    n = 2 ** quad_level
    x = lo + (np.arange(n) + 0.5) / n * (hi - lo)
    w = np.asarray(density(x), dtype=float) * (hi - lo) / n
    return DiscreteMeasure(x.reshape(-1, 1), w)


@dataclass
class DualCoefficients:
    """Coefficients nu_{j,k} = int psi_{j,k} d(nu) against a basis or eigensystem."""

    entries: dict
    basis: object
    kind: str = "multiscale"         # "multiscale" | "eigen" | "partition"
    meta: dict = field(default_factory=dict)

    def vector(self, order) -> np.ndarray:
        return np.array([self.entries[i] for i in order])

    def reconstruct_density(self, x) -> np.ndarray:
        """Density of the projected measure at the points x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "multiscale":
            out = np.zeros(len(x))
            for idx, c in self.entries.items():
                out += c * self.basis.evaluate(idx, x)
            return out
        if self.kind == "eigen":
            out = np.zeros(len(x))
            for i, c in self.entries.items():
                if i == "const":
                    out += c / math.sqrt(self.basis.domain_volume)
                else:
                    out += c * self.basis.evaluate(i, x)
            return out
        if self.kind == "partition":
            level = self.meta["level"]
            lo, hi = self.meta["domain"]
            n = 2 ** level
            cells = np.minimum(((x - lo) / (hi - lo) * n).astype(int), n - 1)
            return self.meta["values"][cells]
        raise ValueError(self.kind)

    def measure_of_interval(self, a: float, b: float) -> float:
        """(Pi'_j nu)([a, b]) via exact antiderivatives of the family."""
        if self.kind == "eigen":
            total = 0.0
            for i, c in self.entries.items():
                if i == "const":
                    total += c * (b - a) / math.sqrt(self.basis.domain_volume)
                else:
                    total += c * fourier_antiderivative(self.basis, i, a, b)
            return float(total)
        raise NotImplementedError("interval mass implemented for eigen expansions")


def dual_project(nu: DiscreteMeasure, basis, j: int,
                 include_constant: bool = False) -> DualCoefficients:
    """Dual projection Pi'_j of a measure.

    For a multiscale basis, coefficients over all multiscale indices of level
    <= j; for an eigensystem, over the eigenfunctions with frequency label
    <= j (plus optionally the constant mode, which the eigensystem itself
    excludes).  Atomic measures evaluate the family at the atoms, density
    measures carry their own quadrature weights.
    """
    pts = nu.points if nu.dim > 1 else nu.points[:, 0]
    if isinstance(basis, EigenSystem):
        n_keep = fourier_block_counts(basis, j) if basis.labels else j
        entries: dict = {}
        if include_constant:
            entries["const"] = float(np.sum(nu.weights)
                                     / math.sqrt(basis.domain_volume))
        for i in range(n_keep):
            entries[i] = float(np.sum(nu.weights * basis.evaluate(i, pts)))
        return DualCoefficients(entries, basis, kind="eigen")
    if not np.all(basis.in_domain(nu.points if basis.dim > 1 else pts)):
        raise ValueError("atom outside the basis domain")
    entries = {}
    for idx in basis.multiscale_indices(j):
        entries[idx] = float(np.sum(nu.weights * basis.evaluate(idx, pts)))
    return DualCoefficients(entries, basis, kind="multiscale")


def weak_star_error(nu: DiscreteMeasure, basis: MultiscaleBasis, j: int,
                    f: Callable, quad_level: int | None = None) -> float:
    """|<nu, (I - Pi_j) f>| where Pi_j projects onto the level-j cell averages."""
    if quad_level is None:
        quad_level = j + 8
    pts, w = basis.quadrature(quad_level)
    xs = pts if basis.dim > 1 else pts[:, 0]
    vals = np.asarray(f(xs), dtype=float)
    cells = basis.cell_index_of(pts, j)
    ncell = basis.n_scalings(j)
    mass = np.bincount(cells, weights=w, minlength=ncell)
    mean = np.bincount(cells, weights=vals * w, minlength=ncell) / mass
    atom_pts = nu.points if basis.dim > 1 else nu.points[:, 0]
    atom_cells = basis.cell_index_of(np.atleast_2d(nu.points), j)
    resid = np.asarray(f(atom_pts), dtype=float) - mean[atom_cells]
    return float(abs(np.sum(nu.weights * resid)))


def probability_project(h: Callable, j: int, domain=(0.0, 1.0),
                        mu_density: Callable | None = None,
                        quad_level: int | None = None) -> DualCoefficients:
    """Partition projector preserving nonnegativity and total mu-mass.

    Cell values are (int_cell h dmu) / mu(cell); empty-mass cells raise.
    The returned coefficients store the cell masses int_cell h dmu.
    """
    if quad_level is None:
        quad_level = j + 8
    if quad_level < j:
        raise ValueError("quadrature level below partition level")
    lo, hi = domain
    n = 2 ** quad_level
    x = lo + (np.arange(n) + 0.5) / n * (hi - lo)
    wq = (hi - lo) / n
    dens = np.ones(n) if mu_density is None else np.asarray(mu_density(x), dtype=float)
    hv = np.asarray(h(x), dtype=float)
    if np.any(hv < 0):
        raise ValueError("density must be nonnegative on the quadrature nodes")
    cells = np.minimum(((x - lo) / (hi - lo) * 2 ** j).astype(int), 2 ** j - 1)
    cell_mu = np.bincount(cells, weights=dens * wq, minlength=2 ** j)
    if np.any(cell_mu <= 0):
        raise ValueError("partition cell with zero mu-mass")
    cell_mass = np.bincount(cells, weights=hv * dens * wq, minlength=2 ** j)
    values = cell_mass / cell_mu
    entries = {BasisIndex(j, (k,), SCALING): float(cell_mass[k]) for k in range(2 ** j)}
    return DualCoefficients(entries, None, kind="partition",
                            meta={"level": j, "domain": domain, "values": values,
                                  "cell_mu": cell_mu, "input_mass": float(cell_mass.sum())})


# ---------------------------------------------------------------------------
# Wasserstein-1
# ---------------------------------------------------------------------------

def _w1_sorted_1d(xs, a, ys, b) -> float:
    grid = np.concatenate([xs, ys])
    order = np.argsort(grid, kind="stable")
    grid = grid[order]
    delta = np.concatenate([a, -b])[order]
    cdf_gap = np.cumsum(delta)[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(grid)))


def _transport_lp(xs, a, ys, b, edges):
    n, m = len(a), len(b)
    ii = np.fromiter((e[0] for e in edges), dtype=int)
    jj = np.fromiter((e[1] for e in edges), dtype=int)
    cc = np.linalg.norm(xs[ii] - ys[jj], axis=1)
    E = len(edges)
    rows = np.concatenate([ii, n + jj])
    cols = np.concatenate([np.arange(E), np.arange(E)])
    A = sparse.coo_matrix((np.ones(2 * E), (rows, cols)), shape=(n + m, E)).tocsr()
    res = linprog(cc, A_eq=A, b_eq=np.concatenate([a, b]), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    duals = res.eqlin.marginals
    return res.fun, duals[:n], duals[n:]


def _w1_lp_2d(xs, a, ys, b, tol: float = 1e-9) -> float:
    """Exact W1 by restricted LP with column generation.

    Candidate edges start from nearest neighbors; after each solve the dual
    pair (u, v) is checked against every cost u_i + v_j <= |x_i - y_j|, and
    violated pairs enter the edge set.  Termination certifies optimality on
    the complete bipartite problem.
    """
    n, m = len(a), len(b)
    k = min(12, n)
    _, nbr = cKDTree(xs).query(ys, k=k)
    nbr = np.atleast_2d(nbr.T).T if nbr.ndim == 1 else nbr
    edges = {(int(i), int(j)) for j, row in enumerate(nbr) for i in np.atleast_1d(row)}
    _, nbr2 = cKDTree(ys).query(xs, k=min(12, m))
    for i, row in enumerate(np.atleast_2d(nbr2.reshape(n, -1))):
        for j in row:
            edges.add((int(i), int(j)))
    for _ in range(100):
        edge_list = sorted(edges)
        val, u, v = _transport_lp(xs, a, ys, b, edge_list)
        added = 0
        chunk = max(1, int(4_000_000 // max(m, 1)))
        for s in range(0, n, chunk):
            D = np.linalg.norm(xs[s:s + chunk, None, :] - ys[None, :, :], axis=2)
            red = D - u[s:s + chunk, None] - v[None, :]
            bad = np.argwhere(red < -tol)
            if len(bad):
                worst = np.argsort(red[bad[:, 0], bad[:, 1]])[:4096]
                for bi, bj in bad[worst]:
                    edges.add((int(s + bi), int(bj)))
                added += len(worst)
        if added == 0:
            return float(val)
    raise RuntimeError("column generation did not certify optimality")


def wasserstein1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact optimal-transport distance with Euclidean ground metric.

    Inputs must be probability measures.  Arguments are canonicalized before
    solving so the result is symmetric by construction.
    """
    for m in (mu, nu):
        if not m.is_probability(tol=1e-9):
            raise ValueError("wasserstein1 requires probability measures")
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch")
    mu = mu.consolidate()
    nu = nu.consolidate()
    key_mu = (len(mu.points), mu.points.tobytes(), mu.weights.tobytes())
    key_nu = (len(nu.points), nu.points.tobytes(), nu.weights.tobytes())
    if key_nu < key_mu:
        mu, nu = nu, mu
    if mu.dim == 1:
        return _w1_sorted_1d(mu.points[:, 0], mu.weights, nu.points[:, 0], nu.weights)
    a = mu.weights / mu.weights.sum()
    b = nu.weights / nu.weights.sum()
    if len(a) * len(b) <= 40_000:
        edges = [(i, j) for i in range(len(a)) for j in range(len(b))]
        val, _, _ = _transport_lp(mu.points, a, nu.points, b, edges)
        return float(val)
    return _w1_lp_2d(mu.points, a, nu.points, b)


def ifs_contraction_ratios(sys, k_max: int, mu0: DiscreteMeasure) -> list[float]:
    """Ratios W1(P^{k+1} mu0, P^k mu0) / W1(P^k mu0, P^{k-1} mu0) for k = 2..k_max.

    Atoms are consolidated after every push-forward step.
    """
    from .systems import pf_pushforward_measure

    chain = [mu0.consolidate()]
    for _ in range(k_max + 1):
        chain.append(pf_pushforward_measure(sys, chain[-1]).consolidate())
    gaps = [wasserstein1(chain[k], chain[k + 1]) for k in range(1, k_max + 1)]
    return [gaps[k] / gaps[k - 1] for k in range(1, k_max)]
