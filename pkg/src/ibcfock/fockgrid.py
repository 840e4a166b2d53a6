"""Momentum lattices and the truncated symmetric Fock basis.

Momenta live on a uniform lattice {-k_max, ..., +k_max}^d with an odd
number of points per axis, so that 0 is always a lattice point.  A basis
state pairs one lattice point per nucleon with a multiset of boson
lattice points; multisets realize the symmetric sectors exactly, with
the symmetrization factors absorbed into matrix-element combinatorics
by the operator assembly.

Out-of-range momentum shifts are dropped (matrix element zero) rather
than wrapped periodically, because the dispersions are not periodic;
the resulting truncation error is part of the grid-refinement studies.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import BasisTooLarge, DimensionMismatch, EvenAxisCount
from .model import ModelParams

#: default cap on the total basis dimension; desk-scale guard
MAX_DIM_DEFAULT = 2_000_000


@dataclass(frozen=True)
class MomentumGrid:
    """Uniform momentum lattice {-k_max, ..., +k_max}^d.

    points enumerates the lattice in row-major (first axis slowest)
    order, so the flat index of a point with per-axis indices
    (i_1, ..., i_d) is sum_j i_j * n_per_axis^(d-j).  cell_weight = h^d
    is the quadrature weight of one lattice cell.
    """

    d: int
    k_max: float
    n_per_axis: int
    spacing: float
    axis: np.ndarray = field(compare=False)
    points: np.ndarray = field(compare=False)
    cell_weight: float

    @property
    def size(self) -> int:
        return self.n_per_axis ** self.d

    @property
    def center(self) -> int:
        """Per-axis index of the 0 lattice point."""
        return (self.n_per_axis - 1) // 2

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=-1)

    def multi_indices(self) -> np.ndarray:
        """Per-axis index table of shape (size, d)."""
        idx = np.arange(self.size)
        multi = np.empty((self.size, self.d), dtype=np.int32)
        for j in range(self.d - 1, -1, -1):
            idx, multi[:, j] = np.divmod(idx, self.n_per_axis)
        return multi

    def manifest(self) -> dict:
        return {"d": self.d, "k_max": self.k_max, "n_per_axis": self.n_per_axis,
                "spacing": self.spacing, "size": self.size,
                "cell_weight": self.cell_weight}


def build_grid(d: int, k_max: float, n_per_axis: int) -> MomentumGrid:
    """Construct the lattice; n_per_axis must be odd (1 is the degenerate
    single-mode lattice {0}, with the whole box as its cell)."""
    if n_per_axis < 1 or n_per_axis % 2 == 0:
        raise EvenAxisCount("n_per_axis must be odd and positive, got %d" % n_per_axis)
    if k_max <= 0:
        raise ValueError("k_max must be positive")
    if n_per_axis == 1:
        axis = np.zeros(1)
        spacing = 2.0 * k_max
    else:
        axis = np.linspace(-k_max, k_max, n_per_axis)
        spacing = 2.0 * k_max / (n_per_axis - 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    points = np.stack(mesh, axis=-1).reshape(-1, d)
    return MomentumGrid(d=d, k_max=float(k_max), n_per_axis=int(n_per_axis),
                        spacing=float(spacing), axis=axis, points=points,
                        cell_weight=float(spacing) ** d)


def point_index(grid: MomentumGrid, p) -> int:
    """Flat index of a lattice point given by coordinates; raises if p is
    not on the lattice."""
    p = np.asarray(p, dtype=float)
    if p.shape != (grid.d,):
        raise ValueError("expected a single point of dimension %d" % grid.d)
    idx = np.rint((p + grid.k_max) / grid.spacing).astype(int) if grid.n_per_axis > 1 \
        else np.zeros(grid.d, dtype=int)
    if np.any(idx < 0) or np.any(idx >= grid.n_per_axis):
        raise ValueError("point outside the lattice box")
    if not np.allclose(grid.axis[idx], p, rtol=0, atol=1e-9 * max(1.0, grid.k_max)):
        raise ValueError("point is not a lattice point")
    return int(np.dot(idx, grid.n_per_axis ** np.arange(grid.d - 1, -1, -1)))


def translate(grid: MomentumGrid, p, k) -> Optional[np.ndarray]:
    """p + k as an exact lattice point, or None if it leaves the box."""
    ip = point_index(grid, p)
    ik = point_index(grid, k)
    tgt, valid = translate_indices(grid, np.array([ip]), np.array([ik]))
    if not valid[0]:
        return None
    return grid.points[tgt[0]].copy()


def translate_indices(grid: MomentumGrid, ip, ik, sign: int = 1):
    """Vectorized lattice shift p + sign*k on flat indices.

    Returns (target flat indices, validity mask); invalid targets are
    set to 0 and must be masked by the caller.
    """
    multi = grid.multi_indices()
    mp = multi[np.asarray(ip)]
    mk = multi[np.asarray(ik)]
    tgt = mp + sign * (mk - grid.center)
    valid = np.all((tgt >= 0) & (tgt < grid.n_per_axis), axis=-1)
    tgt = np.where(valid[..., None], tgt, 0)
    strides = grid.n_per_axis ** np.arange(grid.d - 1, -1, -1)
    return tgt @ strides, valid


# ---------------------------------------------------------------------------
# truncated symmetric Fock basis

@dataclass(frozen=True)
class FockBasis:
    """Enumerated basis of the truncated Fock space.

    Sector n holds every pairing of a nucleon configuration (flat
    product index over M lattice points, row-major) with a boson
    multiset (nondecreasing mode-index tuples in lexicographic order).
    The flat index of a state is

        offsets[n] + i_nucleon * bos_dims[n] + i_boson.
    """

    params: ModelParams
    nucleon_grid: MomentumGrid
    boson_grid: MomentumGrid
    n_max: int
    nuc_dim: int
    bos_modes: Tuple[np.ndarray, ...] = field(compare=False)
    bos_keys: Tuple[np.ndarray, ...] = field(compare=False)
    sector_dims: Tuple[int, ...]
    offsets: Tuple[int, ...]
    total_dim: int

    # -- structure ---------------------------------------------------------
    def bos_dim(self, n: int) -> int:
        return self.bos_modes[n].shape[0]

    def sector_slice(self, n: int) -> slice:
        return slice(self.offsets[n], self.offsets[n] + self.sector_dims[n])

    def nucleon_mode_table(self) -> np.ndarray:
        """(nuc_dim, M) table of per-nucleon lattice indices."""
        idx = np.arange(self.nuc_dim)
        m = self.params.n_nucleons
        table = np.empty((self.nuc_dim, m), dtype=np.int32)
        for j in range(m - 1, -1, -1):
            idx, table[:, j] = np.divmod(idx, self.nucleon_grid.size)
        return table

    def nucleon_momenta(self) -> np.ndarray:
        """(nuc_dim, M, d) nucleon momentum configurations."""
        return self.nucleon_grid.points[self.nucleon_mode_table()]

    def boson_momenta(self, n: int) -> np.ndarray:
        """(bos_dim(n), n, d) boson momentum configurations of sector n."""
        return self.boson_grid.points[self.bos_modes[n]]

    # -- index maps --------------------------------------------------------
    def rank_bosons(self, n: int, modes) -> np.ndarray:
        """Index of sorted multisets (as (..., n) arrays of mode indices)
        within sector n's boson enumeration."""
        modes = np.asarray(modes, dtype=np.int64)
        if n == 0:
            return np.zeros(modes.shape[:-1], dtype=np.int64)
        base = np.int64(self.boson_grid.size + 1)
        key = np.zeros(modes.shape[:-1], dtype=np.int64)
        for j in range(n):
            key = key * base + modes[..., j]
        return np.searchsorted(self.bos_keys[n], key)

    def state_index(self, n: int, i_nuc, i_bos) -> np.ndarray:
        return self.offsets[n] + np.asarray(i_nuc) * self.bos_dim(n) + np.asarray(i_bos)

    def decode(self, i: int):
        """(sector, nucleon mode tuple, boson mode tuple) of flat index i."""
        if not 0 <= i < self.total_dim:
            raise IndexError("state index out of range")
        n = int(np.searchsorted(np.asarray(self.offsets), i, side="right") - 1)
        rel = i - self.offsets[n]
        i_nuc, i_bos = divmod(rel, self.bos_dim(n))
        nuc = tuple(int(v) for v in self.nucleon_mode_table()[i_nuc])
        bos = tuple(int(v) for v in self.bos_modes[n][i_bos])
        return n, nuc, bos

    def index_of(self, n: int, nuc_modes, bos_modes_sorted) -> int:
        """Flat index of a state given per-nucleon lattice indices and a
        boson multiset (any order; sorted internally)."""
        nuc_modes = np.asarray(nuc_modes, dtype=np.int64)
        i_nuc = 0
        for j in range(self.params.n_nucleons):
            i_nuc = i_nuc * self.nucleon_grid.size + nuc_modes[j]
        bos = np.sort(np.asarray(bos_modes_sorted, dtype=np.int64))
        i_bos = int(self.rank_bosons(n, bos))
        return int(self.state_index(n, i_nuc, i_bos))

    def manifest(self) -> dict:
        return {
            "total_dim": self.total_dim,
            "n_max": self.n_max,
            "n_nucleons": self.params.n_nucleons,
            "sector_dims": list(self.sector_dims),
            "offsets": list(self.offsets),
            "nucleon_grid": self.nucleon_grid.manifest(),
            "boson_grid": self.boson_grid.manifest(),
        }


def sector_dimension(n_modes: int, n_nucleons: int, nuc_size: int, n: int) -> int:
    """nuc_size^M * C(G+n-1, n): stars-and-bars count of sector n."""
    return nuc_size ** n_nucleons * math.comb(n_modes + n - 1, n)


def enumerate_basis(params: ModelParams, nucleon_grid: MomentumGrid,
                    boson_grid: MomentumGrid, n_max: int,
                    max_dim: int = MAX_DIM_DEFAULT) -> FockBasis:
    """Deterministic lexicographic enumeration of the truncated basis."""
    if nucleon_grid.d != boson_grid.d or nucleon_grid.d != params.d:
        raise DimensionMismatch("grids and model must share the dimension d")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    nuc_dim = nucleon_grid.size ** params.n_nucleons
    g = boson_grid.size
    dims = [sector_dimension(g, params.n_nucleons, nucleon_grid.size, n)
            for n in range(n_max + 1)]
    total = int(sum(dims))
    if total > max_dim:
        raise BasisTooLarge("basis dimension %d exceeds cap %d" % (total, max_dim))

    bos_modes = []
    bos_keys = []
    base = np.int64(g + 1)
    for n in range(n_max + 1):
        if n == 0:
            modes = np.zeros((1, 0), dtype=np.int32)
        elif n == 1:
            modes = np.arange(g, dtype=np.int32)[:, None]
        else:
            combos = itertools.combinations_with_replacement(range(g), n)
            modes = np.fromiter(itertools.chain.from_iterable(combos),
                                dtype=np.int32).reshape(-1, n)
        key = np.zeros(modes.shape[0], dtype=np.int64)
        for j in range(n):
            key = key * base + modes[:, j]
        bos_modes.append(modes)
        bos_keys.append(key)

    offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(dims)[:-1]]))
    return FockBasis(params=params, nucleon_grid=nucleon_grid,
                     boson_grid=boson_grid, n_max=n_max, nuc_dim=nuc_dim,
                     bos_modes=tuple(bos_modes), bos_keys=tuple(bos_keys),
                     sector_dims=tuple(int(v) for v in dims), offsets=offsets,
                     total_dim=total)


# ---------------------------------------------------------------------------
# diagonal multipliers

def diagonal_values(basis: FockBasis, f: Callable) -> np.ndarray:
    """Evaluate a diagonal multiplier f(P, K) on every basis state.

    f receives the nucleon momenta P with shape (B, M, d) and the boson
    momenta K with shape (B, n, d) for one sector at a time, and must
    return a vector of length B.
    """
    out = np.empty(basis.total_dim)
    nuc_p = basis.nucleon_momenta()
    for n in range(basis.n_max + 1):
        b_dim = basis.bos_dim(n)
        big_p = np.repeat(nuc_p, b_dim, axis=0)
        big_k = np.tile(basis.boson_momenta(n), (basis.nuc_dim, 1, 1))
        out[basis.sector_slice(n)] = np.asarray(f(big_p, big_k), dtype=float)
    return out


def apply_diag(basis: FockBasis, f: Callable, vec: np.ndarray) -> np.ndarray:
    """Amplitude-wise multiplication of a state vector by f(P, K)."""
    vec = np.asarray(vec)
    if vec.shape[0] != basis.total_dim:
        raise ValueError("state vector length does not match the basis")
    return vec * diagonal_values(basis, f)


def number_values(basis: FockBasis) -> np.ndarray:
    """Diagonal of the boson number operator."""
    return diagonal_values(basis, lambda p, k: np.full(p.shape[0], k.shape[1], dtype=float))
