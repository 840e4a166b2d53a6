"""Sparse assembly of the decomposed Hamiltonian on the truncated basis.

Every operator of the boundary decomposition is assembled here: the free
diagonal L, the cutoff creation/annihilation pair, the boundary map G,
the virtual-boson block T and its diagonal/off-diagonal split, and the
two assembly routes to the renormalized Hamiltonian whose exact equality
on the lattice is the package's core correctness check.

Conventions that make the equality exact:

* Annihilation is defined as the matrix adjoint of creation, so dropped
  out-of-lattice recoils never break Hermiticity.
* Occupation-number combinatorics carry the symmetrizer: adding a boson
  to a mode holding m quanta carries sqrt(m+1); the exchange pieces
  carry sqrt(m_q (m_q' + 1)) for distinct modes and plain m_q for a
  coinciding pair (the "+1" part of the coincidence belongs to the
  diagonal and nucleon-exchange pieces, mirroring the continuum split).
* Every virtual-boson piece (the resolvent part of the diagonal, and
  both exchange families) includes only intermediate configurations
  that exist in the truncation: they vanish on the top sector, exactly
  as the composition of truncated operators does.  The counterterm
  stays a plain diagonal at every sector.

Assembly is vectorized over states per boson mode (pure per-target-row
work, trivially parallelizable); assembled operators are treated as
immutable and safe to share.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import BasisMismatch, MasslessWithoutShift
from .fockgrid import FockBasis, MomentumGrid, diagonal_values
from .model import (
    ModelParams,
    check_condition_c,
    dispersion_boson,
    dispersion_boson_norm,
    dispersion_nucleon,
    form_factor,
)
from .quad import (
    counterterm,
    counterterm_grid,
    grid_mode_mask,
    integral_I,
    integral_J,
    resolvent_sum_grid,
)

from .errors import ConditionCViolated  # noqa: F401  (re-raised from checks)


@dataclass
class SparseOperator:
    """An assembled operator with its provenance tags.

    hermitian_flag records that the assembly route guarantees (up to
    rounding) a Hermitian matrix; it is verified by tests, not imposed.
    """

    basis: FockBasis
    matrix: sparse.csr_array
    tags: dict = field(default_factory=dict)
    hermitian_flag: bool = False

    def __post_init__(self):
        n = self.basis.total_dim
        if self.matrix.shape != (n, n):
            raise ValueError("operator shape %s does not match basis dimension %d"
                             % (self.matrix.shape, n))

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def hermiticity_defect(self) -> float:
        diff = (self.matrix - self.matrix.conj().T).tocoo()
        return float(np.abs(diff.data).max()) if diff.nnz else 0.0

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _csr(rows, cols, vals, dim) -> sparse.csr_array:
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        m = sparse.coo_array((v, (r, c)), shape=(dim, dim)).tocsr()
        m.sum_duplicates()
        return m
    return sparse.csr_array((dim, dim), dtype=complex)


def _diag_op(basis, values, tags, hermitian=True) -> SparseOperator:
    m = sparse.csr_array(sparse.diags_array(np.asarray(values, dtype=complex),
                                            format="csr"))
    return SparseOperator(basis, m, tags, hermitian)


# ---------------------------------------------------------------------------
# lattice shift table

def _shift_table(nuc_grid: MomentumGrid, bos_grid: MomentumGrid,
                 sign: int) -> np.ndarray:
    """(nuc_size, bos_size) flat nucleon index of p + sign*q, -1 when the
    shifted momentum leaves the nucleon lattice (dropped recoil)."""
    a, b = nuc_grid.axis, bos_grid.axis
    t = a[:, None] + sign * b[None, :]
    idx = np.rint((t - a[0]) / nuc_grid.spacing).astype(np.int64)
    ok = (idx >= 0) & (idx < nuc_grid.n_per_axis)
    recon = a[0] + idx * nuc_grid.spacing
    ok &= np.abs(recon - t) <= 1e-9 * max(1.0, nuc_grid.spacing)
    axmap = np.where(ok, idx, -1)
    mn = nuc_grid.multi_indices().astype(np.int64)
    mb = bos_grid.multi_indices().astype(np.int64)
    tgt = axmap[mn[:, None, :], mb[None, :, :]]
    valid = np.all(tgt >= 0, axis=-1)
    strides = nuc_grid.n_per_axis ** np.arange(nuc_grid.d - 1, -1, -1,
                                               dtype=np.int64)
    return np.where(valid, np.maximum(tgt, 0) @ strides, -1)


def _require_shared_lattice(basis: FockBasis):
    a, b = basis.nucleon_grid, basis.boson_grid
    same = (a.d == b.d and a.n_per_axis == b.n_per_axis
            and np.isclose(a.spacing, b.spacing)
            and np.allclose(a.axis, b.axis))
    if not same:
        raise ValueError("grid quadrature requires the nucleon and boson "
                         "grids to share one lattice")


# ---------------------------------------------------------------------------
# multiset surgery (rows are sorted mode tuples)

def _insert_mode(modes: np.ndarray, q: int) -> np.ndarray:
    """Insert mode q into every sorted row of (B, n) -> (B, n+1)."""
    b, n = modes.shape
    pos = (modes < q).sum(axis=1)
    cols = np.arange(n + 1)
    pad = np.zeros((b, 1), dtype=modes.dtype)
    left = np.concatenate([modes, pad], axis=1)
    right = np.concatenate([pad, modes], axis=1)
    return np.where(cols < pos[:, None], left,
                    np.where(cols == pos[:, None], q, right))


def _remove_mode(modes: np.ndarray, q: int) -> np.ndarray:
    """Remove one instance of q from every sorted row (rows must hold q)."""
    b, n = modes.shape
    pos = (modes < q).sum(axis=1)
    cols = np.arange(n - 1)
    return np.where(cols < pos[:, None], modes[:, :n - 1], modes[:, 1:])


# ---------------------------------------------------------------------------
# free diagonal

def assemble_L(basis: FockBasis, params: ModelParams) -> SparseOperator:
    """Free-energy diagonal: sum of nucleon dispersions plus boson
    dispersions of each configuration."""

    def free_energy(big_p, big_k):
        return (dispersion_nucleon(big_p, params).sum(axis=-1)
                + dispersion_boson(big_k, params).sum(axis=-1))

    vals = diagonal_values(basis, free_energy)
    return _diag_op(basis, vals, {"path": "diag", "kind": "L"})


def _free_diagonal(basis: FockBasis, params: ModelParams) -> np.ndarray:
    def free_energy(big_p, big_k):
        return (dispersion_nucleon(big_p, params).sum(axis=-1)
                + dispersion_boson(big_k, params).sum(axis=-1))

    return np.real(diagonal_values(basis, free_energy))


# ---------------------------------------------------------------------------
# creation / annihilation

def _creation_matrix(basis: FockBasis, lambda_uv,
                     params: ModelParams) -> sparse.csr_array:
    nuc, bos = basis.nucleon_grid, basis.boson_grid
    if lambda_uv is not None and lambda_uv > bos.k_max * (1 + 1e-12):
        warnings.warn("cutoff radius %.6g exceeds the boson box reach %.6g"
                      % (lambda_uv, bos.k_max), stacklevel=3)
    mask = grid_mode_mask(bos, lambda_uv, params)
    tbl = _shift_table(nuc, bos, sign=-1)
    nuc_table = basis.nucleon_mode_table().astype(np.int64)
    m_nuc = params.n_nucleons
    strides = nuc.size ** np.arange(m_nuc - 1, -1, -1, dtype=np.int64)
    sqrt_w = bos.cell_weight ** 0.5
    nuc_flat = np.arange(basis.nuc_dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    for n in range(basis.n_max):
        modes = basis.bos_modes[n]
        b_dim = basis.bos_dim(n)
        all_bos = np.arange(b_dim, dtype=np.int64)
        for q in np.flatnonzero(mask):
            q_pt = bos.points[q]
            new_modes = _insert_mode(modes.astype(np.int64), q)
            tgt_bos = basis.rank_bosons(n + 1, new_modes)
            mult = np.sqrt((modes == q).sum(axis=1) + 1.0)
            for i in range(m_nuc):
                src_mode = nuc_table[:, i]
                tgt_mode = tbl[src_mode, q]
                ok = tgt_mode >= 0
                if not ok.any():
                    continue
                src_nuc = nuc_flat[ok]
                tgt_nuc = src_nuc + (tgt_mode[ok] - src_mode[ok]) * strides[i]
                amp = np.broadcast_to(
                    np.asarray(form_factor(i, nuc.points[tgt_mode[ok]], q_pt,
                                           params) * sqrt_w),
                    src_nuc.shape)
                r = basis.state_index(n + 1, tgt_nuc[:, None], tgt_bos[None, :])
                c = basis.state_index(n, src_nuc[:, None], all_bos[None, :])
                v = amp[:, None] * mult[None, :]
                rows.append(r.ravel())
                cols.append(c.ravel())
                vals.append(v.ravel().astype(complex))
    return _csr(rows, cols, vals, basis.total_dim)


def assemble_creation(basis: FockBasis, lambda_uv,
                      params: ModelParams) -> SparseOperator:
    """Cutoff creation operator: adds one boson below the cutoff radius
    with the emitting nucleon recoiling on the lattice (out-of-lattice
    recoils are dropped)."""
    m = _creation_matrix(basis, lambda_uv, params)
    return SparseOperator(basis, m, {"path": "direct", "kind": "creation",
                                     "lambda_uv": lambda_uv}, False)


def assemble_annihilation(basis: FockBasis, lambda_uv,
                          params: ModelParams) -> SparseOperator:
    """Exact matrix adjoint of assemble_creation (the defining property)."""
    m = _creation_matrix(basis, lambda_uv, params).conj().T.tocsr()
    return SparseOperator(basis, m, {"path": "direct", "kind": "annihilation",
                                     "lambda_uv": lambda_uv}, False)


# ---------------------------------------------------------------------------
# boundary map G and the virtual-boson block

def assemble_G(basis: FockBasis, lambda_uv, lambda_shift: float,
               params: ModelParams) -> SparseOperator:
    """Boundary map G = -(L + lambda)^(-1) a*(V)."""
    if params.m_boson == 0.0 and lambda_shift <= 0.0:
        raise MasslessWithoutShift(
            "massless bosons need a positive energy shift lambda")
    if lambda_shift < 0.0:
        raise ValueError("lambda_shift must be >= 0")
    a_mat = _creation_matrix(basis, lambda_uv, params)
    lv = _free_diagonal(basis, params) + lambda_shift
    # scale rows of a*(V) directly: its range misses the states (if any)
    # where L + lambda could vanish, so only positive energies divide
    coo = a_mat.tocoo()
    g = sparse.coo_array((coo.data * (-1.0 / lv[coo.row]),
                          (coo.row, coo.col)),
                         shape=coo.shape).tocsr()
    return SparseOperator(basis, g, {"path": "ibc", "kind": "G",
                                     "lambda_uv": lambda_uv,
                                     "lambda_shift": lambda_shift}, False)


def assemble_T_cutoff(basis: FockBasis, lambda_uv, lambda_shift: float,
                      params: ModelParams) -> SparseOperator:
    """Virtual-boson block T = -G*(L+lambda)G; the equal product a(V)G is
    also formed and the agreement recorded in the tags."""
    g_op = assemble_G(basis, lambda_uv, lambda_shift, params)
    g = g_op.matrix
    lv = _free_diagonal(basis, params) + lambda_shift
    w = sparse.diags_array(lv, format="csr")
    t_main = sparse.csr_array(-(g.conj().T @ (w @ g)))
    a_mat = _creation_matrix(basis, lambda_uv, params)
    t_alt = sparse.csr_array(a_mat.conj().T @ g)
    diff = (t_main - t_alt).tocoo()
    agreement = float(np.abs(diff.data).max()) if diff.nnz else 0.0
    return SparseOperator(basis, t_main,
                          {"path": "ibc", "kind": "T_cutoff",
                           "lambda_uv": lambda_uv,
                           "lambda_shift": lambda_shift,
                           "product_agreement": agreement}, True)


# ---------------------------------------------------------------------------
# diagonal part of the renormalized block

def assemble_Td(basis: FockBasis, lambda_uv, variant: int, quad_mode: str,
                params: ModelParams, lambda_shift: float = 0.0,
                chunk: int = 40_000) -> SparseOperator:
    """Diagonal multiplier of the renormalized virtual-boson block.

    Equals counterterm(variant) minus the resolvent sum over one-boson
    intermediates; the resolvent part is present only below the top
    sector, where the intermediates exist in the truncation.  On inner
    sectors this is the familiar subtracted combination (variant 1 drops
    the dispersion-shift part, variant 2 includes it).
    """
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    if quad_mode not in ("grid", "continuum"):
        raise ValueError("quad_mode must be 'grid' or 'continuum'")
    report = check_condition_c(params)
    if not report.holds:
        raise ConditionCViolated(
            "ultraviolet degree %.6g outside [0, %.6g)"
            % (report.uv_degree, report.bound))
    if quad_mode == "grid":
        _require_shared_lattice(basis)
    grid = basis.boson_grid
    m_nuc = params.n_nucleons
    nuc_table = basis.nucleon_mode_table().astype(np.int64)
    theta_pt = np.real(dispersion_nucleon(basis.nucleon_grid.points, params))
    theta_state = theta_pt[nuc_table].sum(axis=1)
    lam_cont = np.inf if lambda_uv is None else lambda_uv

    # counterterm per nucleon configuration (boson independent)
    e_diag = np.zeros(basis.nuc_dim)
    memo_e = {}
    for ell in range(m_nuc):
        p_idx = nuc_table[:, ell]
        if quad_mode == "grid":
            e_diag += counterterm_grid(p_idx, grid, lambda_uv, variant,
                                       params, i_nucleon=ell)
        else:
            norms = np.linalg.norm(basis.nucleon_grid.points, axis=-1)
            for flat in np.unique(p_idx):
                key = (ell, round(float(norms[flat]), 12))
                if key not in memo_e:
                    memo_e[key] = counterterm(
                        basis.nucleon_grid.points[flat], lam_cont, variant,
                        params, i_nucleon=ell).value
            e_diag += np.array([memo_e[(ell, round(float(norms[f]), 12))]
                                for f in p_idx])

    diag = np.zeros(basis.total_dim)
    memo_j = {}
    for n in range(basis.n_max + 1):
        b_dim = basis.bos_dim(n)
        sl = basis.sector_slice(n)
        if n == basis.n_max:
            diag[sl] = np.repeat(e_diag, b_dim)
            continue
        omega_b = np.real(
            dispersion_boson(basis.boson_momenta(n), params).sum(axis=-1))
        if quad_mode == "grid":
            sector = np.repeat(e_diag, b_dim)
            for ell in range(m_nuc):
                p_rep = np.repeat(nuc_table[:, ell], b_dim)
                rest = (np.repeat(theta_state - theta_pt[nuc_table[:, ell]],
                                  b_dim)
                        + np.tile(omega_b, basis.nuc_dim))
                out = np.empty(p_rep.shape[0])
                for lo in range(0, p_rep.shape[0], chunk):
                    hi = min(lo + chunk, p_rep.shape[0])
                    out[lo:hi] = resolvent_sum_grid(
                        p_rep[lo:hi], rest[lo:hi], grid, lambda_uv, params,
                        i_nucleon=ell, lambda_shift=lambda_shift)
                sector -= out
            diag[sl] = sector
        else:
            # the subtracted integral depends on the state only through
            # (|p_ell|, rest energy) -- the same rotation covariance the
            # axial quadrature already assumes -- so memoize on that pair
            nuc_p = basis.nucleon_momenta()
            bos_k = basis.boson_momenta(n)
            p_norm_pt = np.linalg.norm(basis.nucleon_grid.points, axis=-1)
            memo_i = {}
            sector = np.empty(basis.sector_dims[n])
            for a in range(basis.nuc_dim):
                for b in range(b_dim):
                    val = 0.0
                    for ell in range(m_nuc):
                        flat = int(nuc_table[a, ell])
                        rest = (theta_state[a] - theta_pt[flat] + omega_b[b])
                        key = (ell, round(float(p_norm_pt[flat]), 12),
                               round(float(rest), 12))
                        if key not in memo_i:
                            memo_i[key] = integral_I(
                                nuc_p[a], bos_k[b], lam_cont, ell, params,
                                lambda_shift=lambda_shift).value
                        val -= memo_i[key]
                        if variant == 2:
                            jkey = (ell, round(float(p_norm_pt[flat]), 12))
                            if jkey not in memo_j:
                                memo_j[jkey] = integral_J(
                                    nuc_p[a, ell], lam_cont, params,
                                    i_nucleon=ell).value
                            val -= memo_j[jkey]
                    sector[a * b_dim + b] = val
            diag[sl] = sector
    return _diag_op(basis, diag, {"path": "ibc", "kind": "Td",
                                  "lambda_uv": lambda_uv, "variant": variant,
                                  "lambda_shift": lambda_shift,
                                  "quad_mode": quad_mode})


# ---------------------------------------------------------------------------
# off-diagonal exchange pieces

def assemble_theta(basis: FockBasis, i: int, ell: int, lambda_uv,
                   quad_mode: str, params: ModelParams,
                   lambda_shift: float = 0.0) -> SparseOperator:
    """Nucleon-exchange piece: the virtual boson is emitted by nucleon i
    and reabsorbed by nucleon ell (i != ell), the boson content of the
    state unchanged.  Always a lattice sum: continuum quadrature applies
    only to diagonal multipliers, so quad_mode merely tags the output.
    """
    m_nuc = params.n_nucleons
    if i == ell:
        raise IndexError("theta needs two distinct nucleon indices")
    if not (0 <= i < m_nuc and 0 <= ell < m_nuc):
        raise IndexError("nucleon index out of range")
    nuc, bos = basis.nucleon_grid, basis.boson_grid
    mask = grid_mode_mask(bos, lambda_uv, params)
    tbl_minus = _shift_table(nuc, bos, sign=-1)
    tbl_plus = _shift_table(nuc, bos, sign=+1)
    nuc_table = basis.nucleon_mode_table().astype(np.int64)
    strides = nuc.size ** np.arange(m_nuc - 1, -1, -1, dtype=np.int64)
    theta_pt = np.real(dispersion_nucleon(nuc.points, params))
    theta_state = theta_pt[nuc_table].sum(axis=1)
    om = np.real(dispersion_boson_norm(bos.norms(), params))
    nuc_flat = np.arange(basis.nuc_dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    for n in range(basis.n_max):           # intermediates live in sector n+1
        b_dim = basis.bos_dim(n)
        all_bos = np.arange(b_dim, dtype=np.int64)
        omega_b = np.real(
            dispersion_boson(basis.boson_momenta(n), params).sum(axis=-1))
        for q in np.flatnonzero(mask):
            q_pt = bos.points[q]
            src_i = nuc_table[:, i]
            z_i = tbl_minus[src_i, q]
            x_ell = tbl_plus[nuc_table[:, ell], q]
            ok = (z_i >= 0) & (x_ell >= 0)
            if not ok.any():
                continue
            src_nuc = nuc_flat[ok]
            tgt_nuc = (src_nuc + (z_i[ok] - src_i[ok]) * strides[i]
                       + (x_ell[ok] - nuc_table[ok, ell]) * strides[ell])
            wgt = np.broadcast_to(
                np.asarray(np.conj(form_factor(ell,
                                               nuc.points[nuc_table[ok, ell]],
                                               q_pt, params))
                           * form_factor(i, nuc.points[z_i[ok]], q_pt, params)
                           * bos.cell_weight),
                src_nuc.shape)
            theta_z = theta_state[ok] - theta_pt[src_i[ok]] + theta_pt[z_i[ok]]
            den = (theta_z[:, None] + omega_b[None, :]
                   + (om[q] + lambda_shift))
            r = basis.state_index(n, tgt_nuc[:, None], all_bos[None, :])
            c = basis.state_index(n, src_nuc[:, None], all_bos[None, :])
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append((wgt[:, None] / den).ravel())
    m = _csr(rows, cols, vals, basis.total_dim)
    return SparseOperator(basis, m, {"path": "ibc", "kind": "theta",
                                     "i": i, "ell": ell,
                                     "lambda_uv": lambda_uv,
                                     "lambda_shift": lambda_shift,
                                     "quad_mode": quad_mode}, False)


def assemble_tau(basis: FockBasis, i: int, ell: int, lambda_uv,
                 quad_mode: str, params: ModelParams,
                 lambda_shift: float = 0.0) -> SparseOperator:
    """Boson-exchange piece: nucleon i emits a boson while nucleon ell
    absorbs one already present (i = ell allowed).  Vanishes on the
    vacuum sector and on the top sector (no room for the intermediate).
    Always a lattice sum, as for assemble_theta.
    """
    m_nuc = params.n_nucleons
    if not (0 <= i < m_nuc and 0 <= ell < m_nuc):
        raise IndexError("nucleon index out of range")
    nuc, bos = basis.nucleon_grid, basis.boson_grid
    mask = grid_mode_mask(bos, lambda_uv, params)
    tbl_minus = _shift_table(nuc, bos, sign=-1)
    tbl_plus = _shift_table(nuc, bos, sign=+1)
    nuc_table = basis.nucleon_mode_table().astype(np.int64)
    strides = nuc.size ** np.arange(m_nuc - 1, -1, -1, dtype=np.int64)
    theta_pt = np.real(dispersion_nucleon(nuc.points, params))
    theta_state = theta_pt[nuc_table].sum(axis=1)
    om = np.real(dispersion_boson_norm(bos.norms(), params))
    nuc_flat = np.arange(basis.nuc_dim, dtype=np.int64)
    active = np.flatnonzero(mask)
    rows, cols, vals = [], [], []
    for n in range(1, basis.n_max):        # intermediates live in sector n+1
        modes = basis.bos_modes[n].astype(np.int64)
        omega_b = np.real(
            dispersion_boson(basis.boson_momenta(n), params).sum(axis=-1))
        for q in active:                   # mode removed from the source
            cnt_q = (modes == q).sum(axis=1)
            r_sel = np.flatnonzero(cnt_q >= 1)
            if r_sel.size == 0:
                continue
            reduced = _remove_mode(modes[r_sel], q)
            cnt_q_r = cnt_q[r_sel].astype(float)
            for q2 in active:              # mode created into the source
                new_modes = _insert_mode(reduced, q2)
                tgt_bos = basis.rank_bosons(n, new_modes)
                if q2 == q:
                    bf = cnt_q_r
                else:
                    cnt_q2 = (modes[r_sel] == q2).sum(axis=1).astype(float)
                    bf = np.sqrt(cnt_q_r * (cnt_q2 + 1.0))
                # nucleon side: y --(i emits q2)--> z --(ell absorbs q)--> x
                src_i = nuc_table[:, i]
                z_i = tbl_minus[src_i, q2]
                ok = z_i >= 0
                if i == ell:
                    z_ell = z_i
                else:
                    z_ell = nuc_table[:, ell]
                x_ell = np.where(ok, tbl_plus[np.maximum(z_ell, 0), q], -1)
                ok &= x_ell >= 0
                if not ok.any():
                    continue
                src_nuc = nuc_flat[ok]
                tgt_nuc = (src_nuc + (z_i[ok] - src_i[ok]) * strides[i]
                           + (x_ell[ok] - z_ell[ok]) * strides[ell])
                wgt = np.broadcast_to(
                    np.asarray(np.conj(form_factor(ell, nuc.points[z_ell[ok]],
                                                   bos.points[q], params))
                               * form_factor(i, nuc.points[z_i[ok]],
                                             bos.points[q2], params)
                               * bos.cell_weight),
                    src_nuc.shape)
                theta_z = (theta_state[ok] - theta_pt[src_i[ok]]
                           + theta_pt[z_i[ok]])
                den = (theta_z[:, None] + omega_b[r_sel][None, :]
                       + (om[q2] + lambda_shift))
                v = wgt[:, None] * bf[None, :] / den
                r = basis.state_index(n, tgt_nuc[:, None], tgt_bos[None, :])
                c = basis.state_index(n, src_nuc[:, None], r_sel[None, :])
                rows.append(r.ravel())
                cols.append(c.ravel())
                vals.append(v.ravel())
    m = _csr(rows, cols, vals, basis.total_dim)
    return SparseOperator(basis, m, {"path": "ibc", "kind": "tau",
                                     "i": i, "ell": ell,
                                     "lambda_uv": lambda_uv,
                                     "lambda_shift": lambda_shift,
                                     "quad_mode": quad_mode}, False)


def assemble_T_od(basis: FockBasis, lambda_uv, quad_mode: str,
                  params: ModelParams,
                  lambda_shift: float = 0.0) -> SparseOperator:
    """Off-diagonal renormalized block: minus the sum of all

    nucleon-exchange pieces (i != ell) and boson-exchange pieces (all
    pairs), with the explicit minus signs of the decomposition."""
    m_nuc = params.n_nucleons
    total = sparse.csr_array((basis.total_dim, basis.total_dim), dtype=complex)
    for a in range(m_nuc):
        for b in range(m_nuc):
            if a != b:
                total = total + assemble_theta(basis, a, b, lambda_uv,
                                               quad_mode, params,
                                               lambda_shift).matrix
            total = total + assemble_tau(basis, a, b, lambda_uv, quad_mode,
                                         params, lambda_shift).matrix
    return SparseOperator(basis, sparse.csr_array(-total),
                          {"path": "ibc", "kind": "T_od",
                           "lambda_uv": lambda_uv,
                           "lambda_shift": lambda_shift,
                           "quad_mode": quad_mode}, False)


# ---------------------------------------------------------------------------
# the two Hamiltonian assembly routes

def assemble_H_direct(basis: FockBasis, lambda_uv, variant: int,
                      quad_mode: str, params: ModelParams) -> SparseOperator:
    """Direct route: free diagonal plus the cutoff interaction pair plus
    the counterterm diagonal."""
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    if quad_mode not in ("grid", "continuum"):
        raise ValueError("quad_mode must be 'grid' or 'continuum'")
    if quad_mode == "grid":
        _require_shared_lattice(basis)
    a_mat = _creation_matrix(basis, lambda_uv, params)
    lv = _free_diagonal(basis, params)

    nuc_table = basis.nucleon_mode_table().astype(np.int64)
    e_diag = np.zeros(basis.nuc_dim)
    lam_cont = np.inf if lambda_uv is None else lambda_uv
    memo = {}
    for ell in range(params.n_nucleons):
        p_idx = nuc_table[:, ell]
        if quad_mode == "grid":
            e_diag += counterterm_grid(p_idx, basis.boson_grid, lambda_uv,
                                       variant, params, i_nucleon=ell)
        elif lam_cont == 0.0:
            pass
        else:
            norms = np.linalg.norm(basis.nucleon_grid.points, axis=-1)
            for flat in np.unique(p_idx):
                key = (ell, round(float(norms[flat]), 12))
                if key not in memo:
                    memo[key] = counterterm(
                        basis.nucleon_grid.points[flat], lam_cont, variant,
                        params, i_nucleon=ell).value
            e_diag += np.array([memo[(ell, round(float(norms[f]), 12))]
                                for f in p_idx])

    diag = np.concatenate([np.repeat(e_diag, basis.bos_dim(n))
                           for n in range(basis.n_max + 1)])
    h = sparse.csr_array(
        sparse.diags_array((lv + diag).astype(complex), format="csr")
        + a_mat + a_mat.conj().T)
    return SparseOperator(basis, h, {"path": "direct",
                                     "lambda_uv": lambda_uv,
                                     "variant": variant,
                                     "quad_mode": quad_mode}, True)


def assemble_H_ibc(basis: FockBasis, lambda_uv, variant: int,
                   lambda_shift: float, quad_mode: str,
                   params: ModelParams) -> SparseOperator:
    """Boundary route: (1-G)*(L+lambda)(1-G) + T_d + T_od - lambda.

    Algebraically equal to the direct route for every cutoff, variant
    and shift; the equality on the lattice is the package's central
    correctness check.
    """
    g_op = assemble_G(basis, lambda_uv, lambda_shift, params)
    lv = _free_diagonal(basis, params) + lambda_shift
    one = sparse.csr_array(sparse.eye_array(basis.total_dim, dtype=complex,
                                            format="csr"))
    one_minus_g = sparse.csr_array(one - g_op.matrix)
    w = sparse.diags_array(lv, format="csr")
    prod = sparse.csr_array(one_minus_g.conj().T @ (w @ one_minus_g))
    td = assemble_Td(basis, lambda_uv, variant, quad_mode, params,
                     lambda_shift=lambda_shift)
    tod = assemble_T_od(basis, lambda_uv, quad_mode, params,
                        lambda_shift=lambda_shift)
    h = sparse.csr_array(prod + td.matrix + tod.matrix
                         - lambda_shift * one)
    return SparseOperator(basis, h, {"path": "ibc",
                                     "lambda_uv": lambda_uv,
                                     "variant": variant,
                                     "lambda_shift": lambda_shift,
                                     "quad_mode": quad_mode}, True)


# ---------------------------------------------------------------------------
# identity verification and export

@dataclass(frozen=True)
class IdentityReport:
    max_abs_diff: float
    max_rel_diff: float
    opnorm_diff_estimate: float
    tol: float
    passed: bool


def verify_identity(a: SparseOperator, b: SparseOperator,
                    tol: float = 1e-10) -> IdentityReport:
    """Entrywise and norm-estimate comparison of two assembled operators
    on the same basis; passes when the largest entry difference, scaled
    by the largest entry magnitude, stays below tol."""
    if a.basis.manifest() != b.basis.manifest():
        raise BasisMismatch("operators live on different bases")
    d = (a.matrix - b.matrix).tocsr()
    dcoo = d.tocoo()
    max_abs = float(np.abs(dcoo.data).max()) if dcoo.nnz else 0.0
    scale = 0.0
    for m in (a.matrix, b.matrix):
        if m.nnz:
            scale = max(scale, float(np.abs(m.tocoo().data).max()))
    max_rel = max_abs / scale if scale > 0 else 0.0
    # power iteration on D* D for a spectral-norm estimate
    rng = np.random.default_rng(7)
    x = rng.standard_normal(d.shape[1]) + 1j * rng.standard_normal(d.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    dh = d.conj().T.tocsr()
    for _ in range(12):
        y = dh @ (d @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            est = 0.0
            break
        est = np.sqrt(ny)
        x = y / ny
    return IdentityReport(max_abs, max_rel, float(est), tol,
                          bool(max_rel <= tol))


def basis_digest(basis: FockBasis) -> str:
    """Stable hash of the basis manifest (labels exported operators)."""
    blob = json.dumps(basis.manifest(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def export_triplets(op: SparseOperator, path) -> None:
    """Write the operator as a JSON header line followed by one
    "row col re im" line per stored entry (row-major order)."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    header = {
        "format": "sparse-triplets-v1",
        "shape": [int(s) for s in coo.shape],
        "nnz": int(coo.nnz),
        "hermitian": bool(op.hermitian_flag),
        "tags": {k: (None if v is None else
                     (v if isinstance(v, (str, int, bool)) else float(v)))
                 for k, v in op.tags.items()},
        "basis_sha256": basis_digest(op.basis),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for k in order:
            fh.write("%d %d %.17g %.17g\n"
                     % (coo.row[k], coo.col[k],
                        coo.data[k].real, coo.data[k].imag))


def load_triplets(path):
    """Read back an exported operator: (header dict, csr matrix)."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        rows, cols, re_, im_ = [], [], [], []
        for line in fh:
            r, c, x, y = line.split()
            rows.append(int(r))
            cols.append(int(c))
            re_.append(float(x))
            im_.append(float(y))
    shape = tuple(header["shape"])
    m = sparse.coo_array(
        (np.array(re_) + 1j * np.array(im_),
         (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=shape).tocsr()
    return header, m
