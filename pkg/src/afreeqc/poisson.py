"""Masked Dirichlet solves and negative-Sobolev norms on domain fields.

The dual norm of the constraint residual over a masked domain is computed by
assembling the weak functional with centered differences, solving the discrete
Dirichlet problem with conjugate gradients, and evaluating the induced energy.
The plain variant dualizes the gradient seminorm (solve -Lap psi = f, return
the Dirichlet energy of psi); the screened variant dualizes the full H^1 norm
(solve (I - Lap) psi = g) and is the one used for comparisons against the
periodic negative norm of compactly supported sources.
"""

from __future__ import annotations

import hashlib

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import SolverError
from .fields import DomainField, GridSpec
from .operators import OperatorA

_CG_MAXITER_FACTOR = 40  # cap = factor * N per axis


def _cg_solve(A, b, rtol, maxiter, x0=None):
    try:
        x, info = cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter)
    except TypeError:  # scipy < 1.12 spelled the keyword 'tol'
        x, info = cg(A, b, x0=x0, tol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        res = np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300)
        raise SolverError(f"conjugate gradients stalled (info={info})", residual=float(res))
    return x


def centered_difference(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Centered difference with zero extension beyond the array."""
    out = np.zeros_like(values)
    fwd = [slice(None)] * values.ndim
    bwd = [slice(None)] * values.ndim
    mid_f = [slice(None)] * values.ndim
    mid_b = [slice(None)] * values.ndim
    fwd[axis] = slice(1, None)
    mid_f[axis] = slice(None, -1)
    bwd[axis] = slice(None, -1)
    mid_b[axis] = slice(1, None)
    out[tuple(mid_f)] += values[tuple(fwd)]
    out[tuple(mid_b)] -= values[tuple(bwd)]
    return out / (2.0 * h)


def assemble_constraint_source(op: OperatorA, field_values: np.ndarray, mask: np.ndarray,
                               h: float) -> np.ndarray:
    """Weak form of the constraint over the mask, as nodal source terms.

    Pairs -sum_i (A_i u)_j with centered-difference derivatives of test
    functions supported on the mask; summation by parts gives the nodal source
    f_j = sum_i D_i[(A_i u)_j restricted to the mask].
    """
    flux = np.einsum("idm,...m->...id", op.stacked(), field_values)
    flux = np.where(mask[..., None, None], flux, 0.0)
    f = np.zeros(mask.shape + (op.d,))
    for i in range(op.n):
        f += centered_difference(flux[..., i, :], axis=i, h=h)
    return f


class MaskPoissonSolver:
    """Pre-assembled Dirichlet Laplacian on a node mask, reusable across solves."""

    def __init__(self, grid: GridSpec, mask: np.ndarray, screened: bool = False):
        mask = np.asarray(mask, dtype=bool)
        self.grid = grid
        self.mask = mask
        self.screened = screened
        self.index = -np.ones(mask.shape, dtype=np.int64)
        self.index[mask] = np.arange(int(mask.sum()))
        self.num_nodes = int(mask.sum())
        self.matrix = self._assemble()

    def _assemble(self):
        n, h = self.grid.n, self.grid.h
        idx = self.index
        rows, cols, vals = [], [], []
        center = 2.0 * n / h ** 2 + (1.0 if self.screened else 0.0)
        own = idx[self.mask]
        rows.append(own)
        cols.append(own)
        vals.append(np.full(self.num_nodes, center))
        for axis in range(n):
            for shift in (1, -1):
                nb = np.roll(idx, -shift, axis=axis)
                edge = [slice(None)] * n
                edge[axis] = slice(-1, None) if shift == 1 else slice(0, 1)
                nb = nb.copy()
                nb[tuple(edge)] = -1  # zero Dirichlet beyond the box
                ok = self.mask & (nb >= 0)
                rows.append(idx[ok])
                cols.append(nb[ok])
                vals.append(np.full(int(ok.sum()), -1.0 / h ** 2))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        A = sp.coo_matrix((vals, (rows, cols)), shape=(self.num_nodes, self.num_nodes))
        return A.tocsr()

    def solve(self, f_nodal: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
        """Solve the (screened) Dirichlet problem for a nodal source on the mask."""
        b = f_nodal[self.mask]
        if not b.any():
            return np.zeros_like(f_nodal)
        maxiter = _CG_MAXITER_FACTOR * self.grid.N * max(self.grid.n, 2)
        x = _cg_solve(self.matrix, b, rtol=rtol, maxiter=maxiter)
        out = np.zeros(self.mask.shape)
        out[self.mask] = x
        return out

    def dual_norm(self, sources: np.ndarray, rtol: float = 1e-10) -> float:
        """sqrt(sum_j <f_j, psi_j> h^n) over the constraint components."""
        total = 0.0
        vol = self.grid.cell_volume
        for j in range(sources.shape[-1]):
            psi = self.solve(sources[..., j], rtol=rtol)
            total += float((sources[..., j] * psi)[self.mask].sum()) * vol
        return float(np.sqrt(max(total, 0.0)))

    def dual_norm_and_potentials(self, sources: np.ndarray, rtol: float = 1e-10):
        vol = self.grid.cell_volume
        psis = np.zeros_like(sources)
        total = 0.0
        for j in range(sources.shape[-1]):
            psi = self.solve(sources[..., j], rtol=rtol)
            psis[..., j] = psi
            total += float((sources[..., j] * psi)[self.mask].sum()) * vol
        return float(np.sqrt(max(total, 0.0))), psis


_solver_cache: dict = {}


def _mask_key(grid: GridSpec, mask: np.ndarray, screened: bool):
    digest = hashlib.sha1(np.packbits(mask).tobytes()).hexdigest()
    return (grid.n, grid.N, grid.box, screened, digest)


def get_solver(grid: GridSpec, mask: np.ndarray, screened: bool = False) -> MaskPoissonSolver:
    key = _mask_key(grid, mask, screened)
    solver = _solver_cache.get(key)
    if solver is None:
        solver = MaskPoissonSolver(grid, mask, screened=screened)
        if len(_solver_cache) > 32:
            _solver_cache.clear()
        _solver_cache[key] = solver
    return solver


def hminus1_norm_domain(op: OperatorA, field: DomainField, rtol: float = 1e-10) -> float:
    """Negative norm of the constraint over the field's mask (p = 2).

    Dualizes the Dirichlet gradient seminorm: assemble the weak constraint
    source per component, solve -Lap psi_j = f_j on the mask by conjugate
    gradients, and return (sum_j ||grad psi_j||_{L^2}^2)^(1/2).
    """
    if op.m != field.m or op.n != field.grid.n:
        raise ValueError("operator and field dimensions do not match")
    f = assemble_constraint_source(op, field.values, field.mask, field.grid.h)
    solver = get_solver(field.grid, field.mask, screened=False)
    return solver.dual_norm(f, rtol=rtol)


def hminus1_norm_dirichlet(grid: GridSpec, mask: np.ndarray, g_values: np.ndarray,
                           rtol: float = 1e-10) -> float:
    """Dual of the full H^1 norm on the mask for an explicit source field.

    Solves (I - Lap) psi_j = g_j with zero boundary values and returns
    sqrt(sum_j <g_j, psi_j> h^n).  This is the Dirichlet-side norm used in the
    comparison against the periodic negative norm.
    """
    g_values = np.asarray(g_values, dtype=float)
    if g_values.shape[:-1] != mask.shape:
        raise ValueError("source must have shape mask.shape + (d,)")
    g_values = np.where(mask[..., None], g_values, 0.0)
    solver = get_solver(grid, mask, screened=True)
    return solver.dual_norm(g_values, rtol=rtol)


def interior_cube_mask(grid: GridSpec, layers: int = 1) -> np.ndarray:
    """All nodes except the outermost ``layers`` cells per axis (discrete H^1_0 cube)."""
    mask = np.ones((grid.N,) * grid.n, dtype=bool)
    for axis in range(grid.n):
        sl = [slice(None)] * grid.n
        sl[axis] = slice(0, layers)
        mask[tuple(sl)] = False
        sl[axis] = slice(-layers, None)
        mask[tuple(sl)] = False
    return mask
