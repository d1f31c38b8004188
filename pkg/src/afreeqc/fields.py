"""Discrete vector fields on uniform grids: periodic cells and masked domains.

Periodic fields live on an axis-aligned cube sampled at cell centers; their
trigonometric interpolant supplies exact spectral differentiation, Parseval
norms and the periodic negative-Sobolev norm.  Domain fields live on a masked
bounding box (values vanish off the mask) and are integrated by the midpoint
rule; near-singular generated fields may carry a quadrature annotation (see
``sequences``/``capquad``) that replaces the midpoint rule on a few cells.

All norms here use the p = 2 machinery for dual norms; see the package
documentation for the surrogate policy at other exponents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import OperatorA


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid over a cube: N cells per axis, nodes at cell centers.

    ``box`` is ((lo, hi), ...) per axis; all axes must share one extent so the
    mesh width h = extent / N is a single scalar.
    """

    n: int
    N: int
    box: tuple

    def __post_init__(self):
        if self.N < 8 or (self.N & (self.N - 1)) != 0:
            raise ValueError("N must be a power of two, at least 8")
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if len(box) != self.n:
            raise ValueError("box must have one (lo, hi) pair per axis")
        extents = {hi - lo for lo, hi in box}
        if len(extents) != 1 or min(extents) <= 0:
            raise ValueError("all axes must share one positive extent")
        object.__setattr__(self, "box", box)

    @property
    def extent(self) -> float:
        lo, hi = self.box[0]
        return hi - lo

    @property
    def h(self) -> float:
        return self.extent / self.N

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def axis_nodes(self, i: int) -> np.ndarray:
        lo, _ = self.box[i]
        return lo + (np.arange(self.N) + 0.5) * self.h

    def nodes(self) -> np.ndarray:
        """Coordinates of all cell centers, shape (N, ..., N, n)."""
        axes = [self.axis_nodes(i) for i in range(self.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def frequencies(self) -> np.ndarray:
        """Integer frequency vectors matching numpy's FFT layout, shape (N,...,N,n)."""
        k = np.fft.fftfreq(self.N, d=1.0 / self.N)
        mesh = np.meshgrid(*([k] * self.n), indexing="ij")
        return np.stack(mesh, axis=-1)


def unit_cube_grid(n: int, N: int) -> GridSpec:
    """The periodic reference cell (-1/2, 1/2)^n."""
    return GridSpec(n=n, N=N, box=tuple((-0.5, 0.5) for _ in range(n)))


def box_grid(n: int, N: int, halfwidth: float = 1.0) -> GridSpec:
    return GridSpec(n=n, N=N, box=tuple((-halfwidth, halfwidth) for _ in range(n)))


class PeriodicField:
    """m-component field on a periodic cube, stored as nodal values.

    The forward DFT of the values (normalized by N^n) is cached on first use;
    coefficient ``xi`` multiplies exp(2 pi i xi . x / extent).
    """

    def __init__(self, grid: GridSpec, values):
        values = np.asarray(values, dtype=float)
        if values.shape[:-1] != (grid.N,) * grid.n:
            raise ValueError("values must have shape (N,)*n + (m,)")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = values
        self._fft = None

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    def fft(self) -> np.ndarray:
        if self._fft is None:
            axes = tuple(range(self.grid.n))
            self._fft = np.fft.fftn(self.values, axes=axes) / self.grid.N ** self.grid.n
        return self._fft

    def mean(self) -> np.ndarray:
        axes = tuple(range(self.grid.n))
        return self.values.mean(axis=axes)

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "PeriodicField":
        """Sample ``fn(points) -> (..., m)`` at the cell centers."""
        return cls(grid, fn(grid.nodes()))

    @classmethod
    def from_coefficients(cls, grid: GridSpec, coeffs) -> "PeriodicField":
        axes = tuple(range(grid.n))
        vals = np.fft.ifftn(np.asarray(coeffs) * grid.N ** grid.n, axes=axes)
        return cls(grid, vals.real)


@dataclass
class SpectralDistribution:
    """A d-component periodic distribution given by its Fourier coefficients."""

    grid: GridSpec
    coeffs: np.ndarray  # complex, shape (N,)*n + (d,)

    @property
    def d(self) -> int:
        return self.coeffs.shape[-1]

    def to_values(self) -> np.ndarray:
        axes = tuple(range(self.grid.n))
        vals = np.fft.ifftn(self.coeffs * self.grid.N ** self.grid.n, axes=axes)
        return vals.real


class DomainField:
    """m-component field supported on a node mask inside a bounding box.

    ``mask`` marks the cells whose centers belong to the domain; values vanish
    off the mask.  ``descriptor`` records how the domain was built (disk,
    half-ball, rectangle or explicit).  Optional quadrature annotations:

    - ``cell_patch``: per-cell subsampled values replacing the midpoint rule
      (used by dilation resampling near small supports),
    - ``singular_cap``: analytic second-moment cell integrals near a boundary
      singularity (used by the holomorphic concentration generator); it is
      consulted only by quadratic-modulus integrals.
    """

    def __init__(self, grid: GridSpec, mask, values, descriptor=None,
                 cell_patch=None, singular_cap=None):
        mask = np.asarray(mask, dtype=bool)
        values = np.asarray(values, dtype=float)
        if mask.shape != (grid.N,) * grid.n:
            raise ValueError("mask must have shape (N,)*n")
        if values.shape[:-1] != mask.shape:
            raise ValueError("values must have shape (N,)*n + (m,)")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if not mask.any():
            raise ValueError("mask must have positive volume")
        if np.any(values[~mask] != 0.0):
            values = values.copy()
            values[~mask] = 0.0
        self.grid = grid
        self.mask = mask
        self.values = values
        self.descriptor = descriptor or {"kind": "explicit"}
        self.cell_patch = cell_patch
        self.singular_cap = singular_cap

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    def volume(self) -> float:
        """Node-count estimate of the domain volume."""
        return float(self.mask.sum()) * self.grid.cell_volume

    def restrict(self, submask) -> "DomainField":
        """The field restricted to a subdomain (values zeroed off submask)."""
        submask = np.asarray(submask, dtype=bool) & self.mask
        vals = np.where(submask[..., None], self.values, 0.0)
        return DomainField(self.grid, submask, vals,
                           descriptor={"kind": "restricted", "parent": self.descriptor})

    @classmethod
    def from_function(cls, grid: GridSpec, mask, fn, descriptor=None) -> "DomainField":
        vals = fn(grid.nodes())
        vals = np.where(np.asarray(mask, dtype=bool)[..., None], vals, 0.0)
        return cls(grid, mask, vals, descriptor=descriptor)


# ---------------------------------------------------------------------------
# domain masks

def disk_mask(grid: GridSpec, center=(0.0, 0.0), radius: float = 1.0) -> np.ndarray:
    pts = grid.nodes()
    return ((pts - np.asarray(center)) ** 2).sum(axis=-1) < radius ** 2


def ball_mask(grid: GridSpec, center=None, radius: float = 1.0) -> np.ndarray:
    center = np.zeros(grid.n) if center is None else np.asarray(center)
    pts = grid.nodes()
    return ((pts - center) ** 2).sum(axis=-1) < radius ** 2


def half_ball_mask(grid: GridSpec, normal, radius: float = 1.0) -> np.ndarray:
    """The half-ball {|x| < radius, x . normal < 0} around the origin."""
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    pts = grid.nodes()
    return ((pts ** 2).sum(axis=-1) < radius ** 2) & (pts @ normal < 0.0)


def rectangle_mask(grid: GridSpec, lo, hi) -> np.ndarray:
    pts = grid.nodes()
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    return np.all((pts > lo) & (pts < hi), axis=-1)


def boundary_band(grid: GridSpec, mask, width_cells: int = 2) -> np.ndarray:
    """Mask nodes within ``width_cells`` cells of the mask transition."""
    if width_cells < 2:
        raise ValueError("band width must be at least 2 cells")
    from scipy.ndimage import binary_erosion

    eroded = binary_erosion(mask, iterations=width_cells, border_value=0)
    return mask & ~eroded


# ---------------------------------------------------------------------------
# quadrature and norms

def _pointwise_modulus(values) -> np.ndarray:
    return np.sqrt((values ** 2).sum(axis=-1))


def lp_norm(field, p: float) -> float:
    """Midpoint-rule L^p norm, (sum |u(node)|^p h^n)^(1/p).

    For domain fields carrying quadrature annotations the annotated cells are
    integrated by their refined rule; the analytic singular-cap annotation
    applies at p = 2 only (other exponents fall back to plain node values).
    """
    if not (1.0 < p < np.inf):
        raise ValueError("p must lie in (1, inf)")
    if not np.all(np.isfinite(field.values)):
        raise ValueError("field values must be finite")
    vol = field.grid.cell_volume
    mod = _pointwise_modulus(field.values)
    cap = getattr(field, "singular_cap", None)
    if cap is not None and p == 2.0:
        inside = mod ** 2 * vol
        inside[tuple(cap.cells.T)] = 0.0
        return float(np.sqrt(inside.sum() + cap.total_mass))
    patch = getattr(field, "cell_patch", None)
    if patch is not None:
        total = (mod ** p * vol).sum() - (mod[tuple(patch.cells.T)] ** p * vol).sum()
        total += patch.integrate_modulus_power(p) * vol
        return float(total ** (1.0 / p))
    return float(((mod ** p).sum() * vol) ** (1.0 / p))


def pair_weak(field: DomainField, test) -> float:
    """Quadrature pairing integral of u . w over the domain.

    ``test`` is an array of matching shape or a callable sampled at the nodes.
    Pairings are first-moment integrals, so plain node quadrature is used even
    for annotated fields (the sub-cell L^1 mass vanishes with h).
    """
    if callable(test):
        w = test(field.grid.nodes())
    else:
        w = np.asarray(test, dtype=float)
    if w.shape != field.values.shape:
        raise ValueError("test field shape does not match")
    return float((field.values * w)[field.mask].sum() * field.grid.cell_volume)


def mean_value(field: DomainField) -> np.ndarray:
    return field.values[field.mask].mean(axis=0)


# ---------------------------------------------------------------------------
# spectral application of an operator and periodic negative norms

def apply_A_periodic(op: OperatorA, u: PeriodicField) -> SpectralDistribution:
    """Spectral image of the constraint: coefficients (2 pi i / L) S(xi) u_hat(xi).

    Exact differentiation of the trigonometric interpolant; S(xi) is the
    symbol at the integer frequency vector xi and L the cell extent.
    """
    if op.m != u.m:
        raise ValueError(f"operator acts on m={op.m} components, field has {u.m}")
    if op.n != u.grid.n:
        raise ValueError(f"operator dimension n={op.n} does not match grid n={u.grid.n}")
    xi = u.grid.frequencies()
    stacked = op.stacked()
    # (..., d) = sum_i xi_i * A_i @ u_hat
    symbol_u = np.einsum("...i,idm,...m->...d", xi, stacked, u.fft())
    factor = 2j * np.pi / u.grid.extent
    return SpectralDistribution(u.grid, factor * symbol_u)


def hminus1_norm_periodic(g: SpectralDistribution) -> float:
    """Dual norm of the periodic H^1 space (full norm: L^2 plus gradient).

    Equals (sum_xi |g_hat(xi)|^2 / (1 + |2 pi xi / L|^2))^(1/2) scaled by the
    cell volume; on the unit cube this is the plain coefficient formula.
    """
    grid = g.grid
    xi = grid.frequencies()
    kappa2 = ((2.0 * np.pi / grid.extent) ** 2) * (xi ** 2).sum(axis=-1)
    weight = 1.0 / (1.0 + kappa2)
    total = (np.abs(g.coeffs) ** 2).sum(axis=-1) * weight
    vol = grid.extent ** grid.n
    return float(np.sqrt(total.sum() * vol))


def hminus1_norm_periodic_fd(grid: GridSpec, values) -> float:
    """Periodic dual norm built on the 2n+1-point discrete Laplacian.

    Companion to the masked Dirichlet norm: with matching discrete energies
    the cut-off comparison (Dirichlet below periodic for compactly supported
    sources) holds exactly at the discrete level.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[:-1] != (grid.N,) * grid.n:
        raise ValueError("values must have shape (N,)*n + (d,)")
    axes = tuple(range(grid.n))
    ghat = np.fft.fftn(values, axes=axes) / grid.N ** grid.n
    xi = grid.frequencies()
    h = grid.h
    mu = ((2.0 - 2.0 * np.cos(2.0 * np.pi * xi / grid.N)) / h ** 2).sum(axis=-1)
    total = (np.abs(ghat) ** 2).sum(axis=-1) / (1.0 + mu)
    vol = grid.extent ** grid.n
    return float(np.sqrt(total.sum() * vol))


def parseval_l2(u: PeriodicField) -> float:
    """L^2 norm from the DFT coefficients (Parseval)."""
    vol = u.grid.extent ** u.grid.n
    return float(np.sqrt((np.abs(u.fft()) ** 2).sum() * vol))
