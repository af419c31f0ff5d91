"""Orthonormal multiscale bases and their coefficient calculus.

Three families are provided: Haar wavelets on [0,1), tensor-product Haar
wavelets on [0,1)^d, and piecewise-constant multiwavelets on a triangle that
tiles itself under dyadic refinement.  All share the same index scheme:
scaling functions phi_{j,k} span the single-scale space A_j, wavelets
psi_{j,k} span the detail space W_j, and A_{j+1} = A_j (+) W_j.  The coarsest
scaling function is subsumed as a wavelet at level -1, so a multiscale field
over levels -1..J-1 carries the same information as a single-scale field at
level J.

Dyadic cells are half-open, [k 2^-j, (k+1) 2^-j); the right endpoint of the
domain is assigned to the last cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SCALING = "scaling"
WAVELET = "wavelet"

#: orientation codes for triangle cells: 0 = same as master, 1 = rotated copy
UP, DOWN = 0, 1


@dataclass(frozen=True)
class DyadicCube:
    """Half-open dyadic cube prod_i [k_i 2^-j, (k_i+1) 2^-j)."""

    level: int
    translate: tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("cube level must be nonnegative")
        if any(k < 0 or k > 2 ** self.level - 1 for k in self.translate):
            raise ValueError("translate outside the unit cube")

    @property
    def dim(self) -> int:
        return len(self.translate)

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        k = np.asarray(self.translate, dtype=float)
        return k * self.side, (k + 1) * self.side

    def contains(self, x) -> np.ndarray:
        """Membership with the boundary convention: 1.0 falls in the last cell."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        n = 2 ** self.level
        cells = np.minimum(np.floor(pts * n).astype(int), n - 1)
        return np.all(cells == np.asarray(self.translate), axis=1)


@dataclass(frozen=True, order=True)
class BasisIndex:
    """Index of one basis function.

    ``member`` disambiguates multi-member families: the tensor-corner bitmask
    e in 1..2^d-1 for tensor Haar wavelets, the multiwavelet number 1..3 for
    the triangle family, 0 otherwise.  Triangle translates carry a third
    component, the cell orientation.
    """

    level: int
    translate: tuple[int, ...]
    kind: str
    member: int = 0

    def __post_init__(self):
        if self.kind not in (SCALING, WAVELET):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.level < -1:
            raise ValueError("level must be >= -1")


class InadmissibleIndex(ValueError):
    pass


class OutsideDomain(ValueError):
    pass


def _cells_1d(x: np.ndarray, j: int) -> np.ndarray:
    n = 2 ** j
    return np.minimum(np.floor(x * n).astype(int), n - 1)


class MultiscaleBasis:
    """Common surface of the concrete families.

    Immutable; every method is reentrant.  ``max_level`` bounds the
    enumerable levels; evaluation accepts indices one level beyond it (the
    finest wavelets reach into ``max_level + 1`` cells).
    """

    family: str
    dim: int

    def __init__(self, max_level: int):
        if max_level < 0:
            raise ValueError("max_level must be >= 0")
        self.max_level = max_level

    # -- index enumeration ------------------------------------------------
    def scaling_indices(self, j: int) -> list[BasisIndex]:
        raise NotImplementedError

    def wavelet_indices(self, j: int) -> list[BasisIndex]:
        raise NotImplementedError

    def coarse_index(self) -> BasisIndex:
        """The subsumed coarsest scaling function, stored at level -1."""
        raise NotImplementedError

    def multiscale_indices(self, j: int) -> list[BasisIndex]:
        """All multiscale indices spanning A_{j+1}: level -1 plus wavelet levels 0..j."""
        out = [self.coarse_index()]
        for lev in range(0, j + 1):
            out.extend(self.wavelet_indices(lev))
        return out

    def n_scalings(self, j: int) -> int:
        return len(self.scaling_indices(j))

    def _check_level(self, j: int):
        if not 0 <= j <= self.max_level:
            raise InadmissibleIndex(f"level {j} outside 0..{self.max_level}")

    # -- evaluation --------------------------------------------------------
    def in_domain(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, idx: BasisIndex, x) -> np.ndarray:
        raise NotImplementedError

    # -- quadrature ---------------------------------------------------------
    def quadrature(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Composite midpoint/centroid rule on the level-`level` cells."""
        raise NotImplementedError

    def cell_index_of(self, x: np.ndarray, j: int) -> np.ndarray:
        """Position of each point in the canonical level-j cell enumeration."""
        raise NotImplementedError


class HaarBasis1D(MultiscaleBasis):
    """Classic Haar system on [0,1): phi = 1_[0,1), psi = phi(2x) - phi(2x-1)."""

    family = "haar1d"
    dim = 1

    def scaling_indices(self, j):
        self._check_level(j)
        return [BasisIndex(j, (k,), SCALING) for k in range(2 ** j)]

    def wavelet_indices(self, j):
        self._check_level(j)
        return [BasisIndex(j, (k,), WAVELET) for k in range(2 ** j)]

    def coarse_index(self):
        return BasisIndex(-1, (0,), SCALING)

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= 0.0) & (x <= 1.0)

    def evaluate(self, idx, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        if not np.all(self.in_domain(x)):
            raise OutsideDomain("point outside [0,1]")
        if idx.level == -1:
            out = np.ones_like(x)
        elif idx.kind == SCALING:
            self._admissible(idx)
            out = np.where(_cells_1d(x, idx.level) == idx.translate[0],
                           2.0 ** (idx.level / 2.0), 0.0)
        else:
            self._admissible(idx)
            j, k = idx.level, idx.translate[0]
            inside = _cells_1d(x, j) == k
            left = _cells_1d(x, j + 1) == 2 * k
            out = np.where(inside, np.where(left, 1.0, -1.0) * 2.0 ** (j / 2.0), 0.0)
        return out[0] if scalar else out

    def _admissible(self, idx):
        if idx.level > self.max_level + 1 or idx.level < 0:
            raise InadmissibleIndex(f"level {idx.level} not enumerable")
        if not 0 <= idx.translate[0] <= 2 ** idx.level - 1:
            raise InadmissibleIndex(f"translate {idx.translate} at level {idx.level}")

    def quadrature(self, level):
        n = 2 ** level
        pts = (np.arange(n) + 0.5) / n
        return pts.reshape(-1, 1), np.full(n, 1.0 / n)

    def cell_index_of(self, x, j):
        x = np.asarray(x, dtype=float).reshape(-1)
        return _cells_1d(x, j)


class HaarTensorBasis(MultiscaleBasis):
    """Tensor-product Haar wavelets on [0,1)^d.

    Wavelet members are the nonzero corners e in {0,1}^d stored as a bitmask;
    bit i applies the 1-d mother wavelet along coordinate i.
    """

    family = "haar-tensor"

    def __init__(self, d: int, max_level: int):
        if not 1 <= d <= 3:
            raise ValueError("tensor family supports d in 1..3")
        self.dim = d
        super().__init__(max_level)

    def scaling_indices(self, j):
        self._check_level(j)
        n = 2 ** j
        return [BasisIndex(j, k, SCALING)
                for k in np.ndindex(*([n] * self.dim))]

    def wavelet_indices(self, j):
        self._check_level(j)
        n = 2 ** j
        return [BasisIndex(j, k, WAVELET, member=e)
                for k in np.ndindex(*([n] * self.dim))
                for e in range(1, 2 ** self.dim)]

    def coarse_index(self):
        return BasisIndex(-1, (0,) * self.dim, SCALING)

    def in_domain(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all((pts >= 0.0) & (pts <= 1.0), axis=1)

    def evaluate(self, idx, x):
        pts = np.asarray(x, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.dim:
            raise OutsideDomain(f"expected points in R^{self.dim}")
        if not np.all(self.in_domain(pts)):
            raise OutsideDomain("point outside the unit cube")
        if idx.level == -1:
            out = np.ones(len(pts))
            return out[0] if scalar else out
        j = idx.level
        if j > self.max_level + 1:
            raise InadmissibleIndex(f"level {j} not enumerable")
        k = np.asarray(idx.translate)
        if np.any(k < 0) or np.any(k > 2 ** j - 1):
            raise InadmissibleIndex(f"translate {idx.translate}")
        cells = np.stack([_cells_1d(pts[:, i], j) for i in range(self.dim)], axis=1)
        inside = np.all(cells == k, axis=1)
        val = np.where(inside, 2.0 ** (j * self.dim / 2.0), 0.0)
        if idx.kind == WAVELET:
            if not 1 <= idx.member <= 2 ** self.dim - 1:
                raise InadmissibleIndex(f"tensor corner {idx.member}")
            for i in range(self.dim):
                if idx.member >> i & 1:
                    left = _cells_1d(pts[:, i], j + 1) == 2 * k[i]
                    val = val * np.where(left, 1.0, -1.0)
        out = val
        return out[0] if scalar else out

    def quadrature(self, level):
        n = 2 ** level
        axis = (np.arange(n) + 0.5) / n
        grids = np.meshgrid(*([axis] * self.dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        return pts, np.full(len(pts), n ** -float(self.dim))

    def cell_index_of(self, x, j):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        n = 2 ** j
        flat = np.zeros(len(pts), dtype=int)
        for i in range(self.dim):
            flat = flat * n + _cells_1d(pts[:, i], j)
        return flat


class TriangleMultiwaveletBasis(MultiscaleBasis):
    """Haar multiwavelets on the triangle {x,y >= 0, x + y < 1}.

    Refinement splits every triangle into four half-scale children (three in
    the corners, one rotated copy in the middle), so the level-j partition
    has 4^j cells.  Each level-j cell carries three wavelets built from its
    children c1 (corner at the right angle), c2, c3 (other corners), c4
    (middle, opposite orientation):

        psi_1 = (c1 - c4)/sqrt(2),  psi_2 = (c2 - c3)/sqrt(2),
        psi_3 = (c1 + c4 - c2 - c3)/2,

    each combination taken over L2-normalized child indicators.  Cell areas
    are exactly 2^(-2j-1).
    """

    family = "triangle-multiwavelet"
    dim = 2

    def cells(self, j: int) -> list[tuple[int, int, int]]:
        """Canonical (kx, ky, orient) enumeration of the level-j partition."""
        out = []
        n = 2 ** j
        for ky in range(n):
            for kx in range(n - ky):
                out.append((kx, ky, UP))
        for ky in range(max(n - 1, 0)):
            for kx in range(n - 1 - ky):
                out.append((kx, ky, DOWN))
        return out

    def children(self, cell: tuple[int, int, int]) -> list[tuple[int, int, int]]:
        """Children in pattern order (c1, c2, c3, c4)."""
        kx, ky, o = cell
        bx, by = 2 * kx, 2 * ky
        if o == UP:
            return [(bx, by, UP), (bx + 1, by, UP), (bx, by + 1, UP), (bx, by, DOWN)]
        return [(bx + 1, by + 1, DOWN), (bx + 1, by, DOWN), (bx, by + 1, DOWN),
                (bx + 1, by + 1, UP)]

    def scaling_indices(self, j):
        self._check_level(j)
        return [BasisIndex(j, c, SCALING) for c in self.cells(j)]

    def wavelet_indices(self, j):
        self._check_level(j)
        return [BasisIndex(j, c, WAVELET, member=i)
                for c in self.cells(j) for i in (1, 2, 3)]

    def coarse_index(self):
        return BasisIndex(-1, (0, 0, UP), SCALING)

    def in_domain(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return (pts[:, 0] >= 0.0) & (pts[:, 1] >= 0.0) & (pts.sum(axis=1) < 1.0)

    def locate(self, x, j) -> list[tuple[int, int, int]]:
        """Level-j cell of each point."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if not np.all(self.in_domain(pts)):
            raise OutsideDomain("point outside the master triangle")
        n = 2 ** j
        s = pts * n
        k = np.minimum(np.floor(s).astype(int), n - 1)
        frac = s - k
        orient = np.where(frac.sum(axis=1) < 1.0, UP, DOWN)
        return [(int(kx), int(ky), int(o)) for (kx, ky), o in zip(k, orient)]

    def cell_area(self, j: int) -> float:
        return 2.0 ** (-2 * j - 1)

    def evaluate(self, idx, x):
        pts = np.asarray(x, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if not np.all(self.in_domain(pts)):
            raise OutsideDomain("point outside the master triangle")
        if idx.level == -1:
            out = np.full(len(pts), self.cell_area(0) ** -0.5)
            return out[0] if scalar else out
        j = idx.level
        if j > self.max_level + 1:
            raise InadmissibleIndex(f"level {j} not enumerable")
        cell = tuple(idx.translate)
        if cell not in set(self.cells(j)):
            raise InadmissibleIndex(f"cell {cell} at level {j}")
        if idx.kind == SCALING:
            here = np.array([c == cell for c in self.locate(pts, j)])
            out = np.where(here, self.cell_area(j) ** -0.5, 0.0)
            return out[0] if scalar else out
        if idx.member not in (1, 2, 3):
            raise InadmissibleIndex(f"multiwavelet member {idx.member}")
        kids = self.children(cell)
        coeff = {1: (1, 0, 0, -1), 2: (0, 1, -1, 0), 3: (1, -1, -1, 1)}[idx.member]
        scale = self.cell_area(j + 1) ** -0.5
        scale *= 1.0 / math.sqrt(2.0) if idx.member in (1, 2) else 0.5
        fine = self.locate(pts, j + 1)
        lut = {kid: coeff[i] for i, kid in enumerate(kids)}
        out = np.array([lut.get(c, 0) for c in fine], dtype=float) * scale
        return out[0] if scalar else out

    def quadrature(self, level):
        pts = []
        for kx, ky, o in self.cells(level):
            if o == UP:
                pts.append((kx + 1.0 / 3.0, ky + 1.0 / 3.0))
            else:
                pts.append((kx + 2.0 / 3.0, ky + 2.0 / 3.0))
        pts = np.asarray(pts) / 2 ** level
        return pts, np.full(len(pts), self.cell_area(level))

    def cell_index_of(self, x, j):
        order = {c: i for i, c in enumerate(self.cells(j))}
        return np.array([order[c] for c in self.locate(x, j)])


def make_basis(family: str, max_level: int, d: int = 1) -> MultiscaleBasis:
    if family == "haar1d":
        return HaarBasis1D(max_level)
    if family == "haar-tensor":
        return HaarTensorBasis(d, max_level)
    if family == "triangle-multiwavelet":
        return TriangleMultiwaveletBasis(max_level)
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------

@dataclass
class CoefficientField:
    """Finitely supported map BasisIndex -> coefficient wrt the orthonormal family."""

    basis: MultiscaleBasis
    entries: dict[BasisIndex, float] = field(default_factory=dict)

    def norm2(self) -> float:
        return float(sum(v * v for v in self.entries.values()))

    def levels(self) -> list[int]:
        return sorted({i.level for i in self.entries})

    @property
    def max_level(self) -> int:
        return max((i.level for i in self.entries), default=-1)

    def is_single_scale(self) -> bool:
        lv = self.levels()
        return (len(lv) == 1 and lv[0] >= 0
                and all(i.kind == SCALING for i in self.entries))

    def is_multiscale(self) -> bool:
        return all(i.kind == WAVELET or i.level == -1 for i in self.entries)

    def reconstruct(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float)) if self.basis.dim > 1 \
            else np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros(len(pts))
        for idx, c in self.entries.items():
            out += c * self.basis.evaluate(idx, pts)
        return out

    def single_scale_array(self, j: int) -> np.ndarray:
        """Dense coefficient vector over the canonical level-j scaling order."""
        idxs = self.basis.scaling_indices(j)
        pos = {i: p for p, i in enumerate(idxs)}
        out = np.zeros(len(idxs))
        for idx, c in self.entries.items():
            if idx.level != j or idx.kind != SCALING:
                raise ValueError("field is not single-scale at level %d" % j)
            out[pos[idx]] = c
        return out

    def cell_values(self, j: int | None = None) -> np.ndarray:
        """Values of the reconstruction on level-j cells (single-scale fields)."""
        if j is None:
            j = self.max_level
        c = self.single_scale_array(j)
        if self.basis.family == "triangle-multiwavelet":
            return c * self.basis.cell_area(j) ** -0.5
        return c * 2.0 ** (j * self.basis.dim / 2.0)


def field_from_array(basis: MultiscaleBasis, j: int, values: np.ndarray) -> CoefficientField:
    idxs = basis.scaling_indices(j)
    if len(values) != len(idxs):
        raise ValueError("array length does not match the level-%d index set" % j)
    return CoefficientField(basis, {i: float(v) for i, v in zip(idxs, values)})


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def eval_basis(basis: MultiscaleBasis, idx: BasisIndex, x):
    """Pointwise value of one basis function."""
    return basis.evaluate(idx, x)


def index_sets(basis: MultiscaleBasis, j: int):
    """(Gamma_j^phi, Gamma_j^psi) at level j."""
    return basis.scaling_indices(j), basis.wavelet_indices(j)


def project(f: Callable, basis: MultiscaleBasis, j: int,
            quad_level: int | None = None, guard: int = 6) -> CoefficientField:
    """Single-scale coefficients (f, phi_{j,k}) by composite midpoint quadrature."""
    if quad_level is None:
        quad_level = j + guard
    if quad_level < j:
        raise ValueError("quadrature level below target level")
    pts, w = basis.quadrature(quad_level)
    vals = np.asarray(f(pts if basis.dim > 1 else pts[:, 0]), dtype=float)
    cells = basis.cell_index_of(pts, j)
    sums = np.bincount(cells, weights=vals * w, minlength=basis.n_scalings(j))
    if basis.family == "triangle-multiwavelet":
        sums = sums * basis.cell_area(j) ** -0.5
    else:
        sums = sums * 2.0 ** (j * basis.dim / 2.0)
    return field_from_array(basis, j, sums)


def _haar1d_analysis(values: np.ndarray):
    s = values.copy()
    details = []
    while len(s) > 1:
        even, odd = s[0::2], s[1::2]
        details.append((even - odd) / math.sqrt(2.0))
        s = (even + odd) / math.sqrt(2.0)
    return s[0], details[::-1]  # coarse, details indexed by level 0..J-1


def _haar1d_synthesis(coarse: float, details: list[np.ndarray]):
    s = np.array([coarse])
    for d in details:
        out = np.empty(2 * len(s))
        out[0::2] = (s + d) / math.sqrt(2.0)
        out[1::2] = (s - d) / math.sqrt(2.0)
        s = out
    return s


def _tensor_step(arr: np.ndarray, d: int):
    """One analysis/synthesis step of the d-dimensional Haar cascade.

    arr has shape (2n,)*d; returns (scaling (n,)*d, {corner e: (n,)*d}).
    """
    n2 = arr.shape[0]
    n = n2 // 2
    blocks = {}
    for c in np.ndindex(*([2] * d)):
        sl = tuple(slice(ci, None, 2) for ci in c)
        blocks[c] = arr[sl]
    out = {}
    for e in range(2 ** d):
        acc = np.zeros((n,) * d)
        for c, blk in blocks.items():
            sign = 1.0
            for i in range(d):
                if e >> i & 1 and c[i] == 1:
                    sign = -sign
            acc += sign * blk
        out[e] = acc / 2.0 ** (d / 2.0)
    return out


def _tensor_unstep(parts: dict[int, np.ndarray], d: int):
    n = parts[0].shape[0]
    arr = np.zeros((2 * n,) * d)
    for c in np.ndindex(*([2] * d)):
        acc = np.zeros((n,) * d)
        for e, blk in parts.items():
            sign = 1.0
            for i in range(d):
                if e >> i & 1 and c[i] == 1:
                    sign = -sign
            acc += sign * blk
        sl = tuple(slice(ci, None, 2) for ci in c)
        arr[sl] = acc / 2.0 ** (d / 2.0)
    return arr


def fwt(fine: CoefficientField) -> CoefficientField:
    """Fast wavelet transform: single-scale level-J field -> multiscale field.

    The output spans wavelet levels 0..J-1 plus the subsumed coarse scaling
    at level -1; the round trip with :func:`ifwt` reproduces the input to
    machine precision.
    """
    basis = fine.basis
    J = fine.max_level
    if not fine.is_single_scale():
        raise ValueError("fwt expects a single-scale field")
    vals = fine.single_scale_array(J)
    entries: dict[BasisIndex, float] = {}
    if basis.family == "haar1d":
        coarse, details = _haar1d_analysis(vals)
        entries[basis.coarse_index()] = float(coarse)
        for lev, d in enumerate(details):
            for k, v in enumerate(d):
                entries[BasisIndex(lev, (k,), WAVELET)] = float(v)
    elif basis.family == "haar-tensor":
        d = basis.dim
        arr = vals.reshape((2 ** J,) * d)
        for lev in range(J - 1, -1, -1):
            parts = _tensor_step(arr, d)
            arr = parts[0]
            n = 2 ** lev
            for e in range(1, 2 ** d):
                blk = parts[e]
                for k in np.ndindex(*([n] * d)):
                    entries[BasisIndex(lev, k, WAVELET, member=e)] = float(blk[k])
        entries[basis.coarse_index()] = float(arr.reshape(()))
    elif basis.family == "triangle-multiwavelet":
        cur = {c: v for c, v in zip(basis.cells(J), vals)}
        for lev in range(J - 1, -1, -1):
            nxt = {}
            for cell in basis.cells(lev):
                c1, c2, c3, c4 = (cur[k] for k in basis.children(cell))
                nxt[cell] = (c1 + c2 + c3 + c4) / 2.0
                entries[BasisIndex(lev, cell, WAVELET, 1)] = (c1 - c4) / math.sqrt(2.0)
                entries[BasisIndex(lev, cell, WAVELET, 2)] = (c2 - c3) / math.sqrt(2.0)
                entries[BasisIndex(lev, cell, WAVELET, 3)] = (c1 + c4 - c2 - c3) / 2.0
            cur = nxt
        entries[basis.coarse_index()] = float(cur[(0, 0, UP)])
    else:
        raise ValueError("mismatched basis family")
    return CoefficientField(basis, entries)


def ifwt(multi: CoefficientField, J: int | None = None) -> CoefficientField:
    """Inverse fast wavelet transform: multiscale field -> single-scale level J."""
    basis = multi.basis
    if not multi.is_multiscale():
        raise ValueError("ifwt expects a multiscale field")
    if J is None:
        J = multi.max_level + 1
    if J < multi.max_level + 1:
        raise ValueError("target level too small for the represented details")

    def detail(idx):
        return multi.entries.get(idx, 0.0)

    if basis.family == "haar1d":
        details = [np.array([detail(BasisIndex(lev, (k,), WAVELET))
                             for k in range(2 ** lev)]) for lev in range(J)]
        vals = _haar1d_synthesis(detail(basis.coarse_index()), details)
    elif basis.family == "haar-tensor":
        d = basis.dim
        arr = np.full((1,) * d, detail(basis.coarse_index()))
        for lev in range(J):
            n = 2 ** lev
            parts = {0: arr}
            for e in range(1, 2 ** d):
                blk = np.zeros((n,) * d)
                for k in np.ndindex(*([n] * d)):
                    blk[k] = detail(BasisIndex(lev, k, WAVELET, member=e))
                parts[e] = blk
            arr = _tensor_unstep(parts, d)
        vals = arr.ravel()
    elif basis.family == "triangle-multiwavelet":
        cur = {(0, 0, UP): detail(basis.coarse_index())}
        for lev in range(J):
            nxt = {}
            for cell in basis.cells(lev):
                s = cur[cell]
                d1 = detail(BasisIndex(lev, cell, WAVELET, 1))
                d2 = detail(BasisIndex(lev, cell, WAVELET, 2))
                d3 = detail(BasisIndex(lev, cell, WAVELET, 3))
                k1, k2, k3, k4 = basis.children(cell)
                r2 = math.sqrt(2.0)
                nxt[k1] = s / 2.0 + d1 / r2 + d3 / 2.0
                nxt[k2] = s / 2.0 + d2 / r2 - d3 / 2.0
                nxt[k3] = s / 2.0 - d2 / r2 - d3 / 2.0
                nxt[k4] = s / 2.0 - d1 / r2 + d3 / 2.0
            cur = nxt
        vals = np.array([cur[c] for c in basis.cells(J)])
    else:
        raise ValueError("mismatched basis family")
    return field_from_array(basis, J, vals)


def projection_error(f: Callable, basis: MultiscaleBasis, j: int,
                     norm: str = "L2", J_ref: int | None = None) -> float:
    """|| (I - Pi_j) f || estimated on the level-J_ref reference grid."""
    if J_ref is None:
        J_ref = j + 6
    if J_ref < j + 6:
        raise ValueError("reference level must be at least j + 6")
    pts, w = basis.quadrature(J_ref)
    vals = np.asarray(f(pts if basis.dim > 1 else pts[:, 0]), dtype=float)
    cells = basis.cell_index_of(pts, j)
    ncell = basis.n_scalings(j)
    mass = np.bincount(cells, weights=w, minlength=ncell)
    mean = np.bincount(cells, weights=vals * w, minlength=ncell) / mass
    diff = vals - mean[cells]
    if norm == "L2":
        return float(np.sqrt(np.sum(diff ** 2 * w)))
    if norm == "Linf":
        return float(np.max(np.abs(diff)))
    raise ValueError(f"unknown norm {norm!r}")


class SeminormValue(float):
    """Float carrying the truncation flag of a partial-sum seminorm."""

    def __new__(cls, value: float, truncated: bool, levels: tuple[int, ...]):
        obj = super().__new__(cls, value)
        obj.truncated = truncated
        obj.levels = levels
        return obj


def arq_seminorm(c: CoefficientField, r: float, q: float) -> SeminormValue:
    """Approximation-space seminorm (sum_j [2^{rj} ||Q_j f||]^q)^{1/q}.

    Operates on multiscale fields; the level -1 coarse entry is bucketed with
    level 0.  The value is the partial sum over represented levels, flagged
    truncated (an infinite tail is never extrapolated).
    """
    if not c.entries:
        raise ValueError("empty coefficient field")
    if not c.is_multiscale():
        raise ValueError("arq_seminorm needs a multiscale field; apply fwt first")
    if r <= 0 or q < 1:
        raise ValueError("need r > 0 and q >= 1")
    buckets: dict[int, float] = {}
    for idx, v in c.entries.items():
        lev = max(idx.level, 0)
        buckets[lev] = buckets.get(lev, 0.0) + v * v
    levels = tuple(sorted(buckets))
    terms = [2.0 ** (r * lev) * math.sqrt(buckets[lev]) for lev in levels]
    if math.isinf(q):
        val = max(terms)
    else:
        val = sum(t ** q for t in terms) ** (1.0 / q)
    return SeminormValue(val, truncated=True, levels=levels)


def field_to_json_dict(c: CoefficientField) -> dict:
    """Serialize a coefficient field to the schema shared with the CLI reports."""
    entries = [
        {"level": i.level, "translate": list(i.translate), "kind": i.kind,
         "member": i.member, "value": v}
        for i, v in sorted(c.entries.items())
    ]
    return {"schema": 1, "family": c.basis.family, "dim": c.basis.dim,
            "max_level": c.basis.max_level, "entries": entries}


def field_from_json_dict(payload: dict) -> CoefficientField:
    if payload.get("schema") != 1:
        raise ValueError(f"unsupported coefficient-field schema {payload.get('schema')!r}")
    basis = make_basis(payload["family"], payload["max_level"], d=payload.get("dim", 1))
    entries = {
        BasisIndex(e["level"], tuple(e["translate"]), e["kind"], e.get("member", 0)):
            float(e["value"])
        for e in payload["entries"]
    }
    return CoefficientField(basis, entries)


def wavelet_diagonal_apply(p: CoefficientField, c: CoefficientField) -> CoefficientField:
    """Apply the diagonal operator sum p_{j,k} psi_{j,k} (x) psi_{j,k} to c."""
    if p.basis is not c.basis:
        raise ValueError("fields live on different bases")
    out = {idx: p.entries[idx] * v for idx, v in c.entries.items() if idx in p.entries}
    return CoefficientField(c.basis, out)


def truncate_field(c: CoefficientField, j: int) -> CoefficientField:
    """Keep multiscale entries below level j (the A_j part)."""
    return CoefficientField(c.basis,
                            {i: v for i, v in c.entries.items() if i.level < j})
