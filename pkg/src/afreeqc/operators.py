"""First-order constant-coefficient differential operators and their symbols.

An operator acts on m-component fields over R^n as a sum of n coefficient
matrices applied to the partial derivatives,

    (op u)(x) = sum_i  A_i  du/dx_i(x),        A_i : R^m -> R^d.

The symbol at a frequency direction w is the d x m matrix sum_i w_i A_i.
Everything downstream (kernel projection, quasiconvexity testers) assumes the
constant-rank property: the symbol rank is the same integer r at every unit
direction.  ``check_constant_rank`` probes that property numerically and
``kernel_projector`` builds the orthogonal projector onto the symbol kernel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstantRankError

#: relative singular-value cutoff used for all numerical ranks
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class OperatorA:
    """A constant-coefficient first-order operator given by its coefficient matrices.

    Parameters
    ----------
    n : int
        Space dimension (number of coefficient matrices).
    m : int
        Number of field components the operator acts on.
    d : int
        Number of constraint components it produces.
    coeffs : tuple of (d, m) float arrays
        The matrices A_1, ..., A_n.
    name : str
        Identifier used in reports and the CLI.
    """

    n: int
    m: int
    d: int
    coeffs: tuple
    name: str = "custom"

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.d < 1:
            raise ValueError("operator dimensions must satisfy n, m, d >= 1")
        if len(self.coeffs) != self.n:
            raise ValueError(f"expected {self.n} coefficient matrices, got {len(self.coeffs)}")
        mats = []
        for A in self.coeffs:
            A = np.asarray(A, dtype=float)
            if A.shape != (self.d, self.m):
                raise ValueError(f"coefficient matrix has shape {A.shape}, expected {(self.d, self.m)}")
            if not np.all(np.isfinite(A)):
                raise ValueError("coefficient matrices must be finite")
            A = A.copy()
            A.flags.writeable = False
            mats.append(A)
        object.__setattr__(self, "coeffs", tuple(mats))

    def stacked(self):
        """Coefficients as one (n, d, m) array."""
        return np.stack(self.coeffs)

    def key(self):
        """Hashable identity of the coefficients, for caches."""
        return (self.name, self.n, self.m, self.d,
                b"".join(A.tobytes() for A in self.coeffs))

    def to_json(self):
        return {
            "name": self.name,
            "n": self.n,
            "m": self.m,
            "d": self.d,
            "coeffs": [A.tolist() for A in self.coeffs],
        }


@dataclass(frozen=True)
class RankReport:
    """Outcome of a constant-rank probe over sampled unit directions."""

    rank: int
    min_rank: int
    max_rank: int
    num_samples: int
    tol: float
    witness_direction: tuple = field(default=())

    @property
    def constant_rank(self) -> bool:
        return self.min_rank == self.max_rank

    def to_json(self):
        return {
            "rank": self.rank,
            "min_rank": self.min_rank,
            "max_rank": self.max_rank,
            "constant_rank": self.constant_rank,
            "num_samples": self.num_samples,
            "tol": self.tol,
            "witness_direction": list(self.witness_direction),
        }


def symbol_at(op: OperatorA, w) -> np.ndarray:
    """Evaluate the symbol sum_i w_i A_i as an exact linear combination.

    ``w`` is expected to be a unit vector by callers that interpret the result
    as a direction symbol; the combination itself is formed for any nonzero
    finite ``w`` (the map is linear in ``w``).
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (op.n,):
        raise ValueError(f"direction has shape {w.shape}, expected ({op.n},)")
    if not np.all(np.isfinite(w)):
        raise ValueError("direction must be finite")
    if not np.any(w):
        raise ValueError("direction must be nonzero")
    return np.einsum("i,idm->dm", w, op.stacked())


def symbols_at(op: OperatorA, W) -> np.ndarray:
    """Symbols for a batch of directions: (K, n) -> (K, d, m)."""
    W = np.asarray(W, dtype=float)
    return np.einsum("ki,idm->kdm", W, op.stacked())


def _fibonacci_circle(num):
    t = (np.arange(num) + 0.5) / num * 2.0 * np.pi
    return np.stack([np.cos(t), np.sin(t)], axis=1)


def _fibonacci_sphere(num):
    # golden-angle lattice on S^2
    i = np.arange(num) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / num)
    golden = np.pi * (1.0 + 5.0**0.5)
    theta = golden * i
    return np.stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], axis=1
    )


def sphere_samples(n: int, num: int, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-uniform unit directions plus the coordinate axes.

    Uses a lattice construction for n in {2, 3} and seeded Gaussian samples
    otherwise; the 2n signed coordinate directions are always included.
    """
    axes = np.concatenate([np.eye(n), -np.eye(n)])
    if n == 2:
        body = _fibonacci_circle(num)
    elif n == 3:
        body = _fibonacci_sphere(num)
    else:
        rng = np.random.default_rng(seed)
        body = rng.standard_normal((num, n))
        body /= np.linalg.norm(body, axis=1, keepdims=True)
    return np.concatenate([axes, body])


def _ranks_of(symbols, tol):
    # rank = number of singular values above tol relative to the largest
    s = np.linalg.svd(symbols, compute_uv=False)
    lead = s[:, :1]
    lead = np.where(lead > 0, lead, 1.0)
    return (s / lead > tol).sum(axis=1)


def check_constant_rank(op: OperatorA, num_samples: int = 4096, tol: float = RANK_TOL,
                        seed: int = 0) -> RankReport:
    """Probe the symbol rank over quasi-uniform unit directions.

    The report aggregates min/max rank; the probe is deterministic for fixed
    ``num_samples`` and ``seed``.
    """
    if num_samples < 2 * op.n:
        raise ValueError("num_samples must be at least 2n")
    W = sphere_samples(op.n, num_samples, seed=seed)
    ranks = _ranks_of(symbols_at(op, W), tol)
    imin = int(np.argmin(ranks))
    return RankReport(
        rank=int(ranks.max()),
        min_rank=int(ranks.min()),
        max_rank=int(ranks.max()),
        num_samples=W.shape[0],
        tol=tol,
        witness_direction=tuple(W[imin]),
    )


def kernel_projector(op: OperatorA, w, rank: int | None = None, tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal m x m projector onto the kernel of the symbol at ``w``.

    Computed as I - V_r V_r^T from the singular value decomposition, i.e. the
    Moore-Penrose construction I - pinv(S) S truncated at the constant rank.
    Raises ``ConstantRankError`` when the singular values at ``w`` disagree
    with the expected rank.
    """
    w = np.asarray(w, dtype=float)
    nrm = np.linalg.norm(w)
    if not (np.isfinite(nrm) and nrm > 0):
        raise ValueError("direction must be nonzero and finite")
    S = symbol_at(op, w / nrm)
    if rank is None:
        rank = check_constant_rank(op).rank
    _, sv, Vt = np.linalg.svd(S)
    lead = sv[0] if sv.size and sv[0] > 0 else 1.0
    above = int((sv / lead > tol).sum())
    if above != rank:
        raise ConstantRankError(
            f"symbol rank {above} at direction {w.tolist()} disagrees with expected rank {rank}"
        )
    Vr = Vt[:rank]
    return np.eye(op.m) - Vr.T @ Vr


def kernel_projectors(op: OperatorA, W, rank: int, tol: float = RANK_TOL) -> np.ndarray:
    """Batched kernel projectors for directions W of shape (K, n) -> (K, m, m).

    Rows of W need not be normalized (the kernel of the symbol is invariant
    under positive scaling of the direction); zero rows are rejected.
    """
    W = np.asarray(W, dtype=float)
    nrm = np.linalg.norm(W, axis=1)
    if np.any(nrm == 0):
        raise ValueError("directions must be nonzero")
    S = symbols_at(op, W / nrm[:, None])
    _, sv, Vt = np.linalg.svd(S)
    lead = np.where(sv[:, :1] > 0, sv[:, :1], 1.0)
    counts = (sv / lead > tol).sum(axis=1)
    if np.any(counts != rank):
        bad = int(np.argmax(counts != rank))
        raise ConstantRankError(
            f"symbol rank {int(counts[bad])} at direction {W[bad].tolist()} "
            f"disagrees with expected rank {rank}"
        )
    Vr = Vt[:, :rank, :]
    return np.eye(op.m) - np.einsum("krm,krl->kml", Vr, Vr)


# ---------------------------------------------------------------------------
# built-in catalog

def make_div(n: int = 2) -> OperatorA:
    """Divergence on m = n components: coefficient matrices are the rows e_i^T."""
    coeffs = [np.eye(n)[i][None, :] for i in range(n)]
    return OperatorA(n=n, m=n, d=1, coeffs=tuple(coeffs), name=f"div{n}" if n != 2 else "div")


def make_curl2d() -> OperatorA:
    """Planar rotation d1 u2 - d2 u1 on m = 2 components (kernel: gradients)."""
    A1 = np.array([[0.0, 1.0]])
    A2 = np.array([[-1.0, 0.0]])
    return OperatorA(n=2, m=2, d=1, coeffs=(A1, A2), name="curl2d")


def make_curl3d() -> OperatorA:
    """Full curl on R^3: symbol maps s to w x s."""
    eps = np.zeros((3, 3, 3))
    for i, j, k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    coeffs = tuple(eps[:, i, :] for i in range(3))
    return OperatorA(n=3, m=3, d=3, coeffs=coeffs, name="curl3d")


def make_cauchy_riemann() -> OperatorA:
    """The elliptic system d1 u1 - d2 u2 = 0 = d2 u1 + d1 u2 (u1 + i u2 holomorphic)."""
    A1 = np.array([[1.0, 0.0], [0.0, 1.0]])
    A2 = np.array([[0.0, -1.0], [1.0, 0.0]])
    return OperatorA(n=2, m=2, d=2, coeffs=(A1, A2), name="cauchy_riemann")


def make_hessian_curl() -> OperatorA:
    """Compatibility operator for planar Hessian fields (w11, w12, w22).

    Its kernel consists of fields (d11 u, d12 u, d22 u) for scalar u:
    constraints d2 w11 - d1 w12 and d2 w12 - d1 w22.
    """
    A1 = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    A2 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return OperatorA(n=2, m=3, d=2, coeffs=(A1, A2), name="hessian_curl")


def rowwise_operator(base: OperatorA, copies: int, name: str | None = None) -> OperatorA:
    """Apply ``base`` independently to ``copies`` stacked component blocks.

    Used e.g. for matrix fields: the planar curl applied row-wise to 2x2
    matrix fields (m = 4) has gradients as its kernel.
    """
    coeffs = []
    for A in base.coeffs:
        blocks = np.zeros((copies * base.d, copies * base.m))
        for c in range(copies):
            blocks[c * base.d:(c + 1) * base.d, c * base.m:(c + 1) * base.m] = A
        coeffs.append(blocks)
    return OperatorA(
        n=base.n, m=copies * base.m, d=copies * base.d, coeffs=tuple(coeffs),
        name=name or f"{base.name}_x{copies}",
    )


def rotated_operator(op: OperatorA, R, name: str | None = None) -> OperatorA:
    """Operator expressed in rotated coordinates x = R y (columns of R = new axes).

    The component space is untouched; coefficients become A'_j = sum_i R_ij A_i.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (op.n, op.n):
        raise ValueError("rotation must be n x n")
    if not np.allclose(R @ R.T, np.eye(op.n), atol=1e-12):
        raise ValueError("rotation must be orthogonal")
    stacked = op.stacked()
    coeffs = tuple(np.einsum("i,idm->dm", R[:, j], stacked) for j in range(op.n))
    return OperatorA(n=op.n, m=op.m, d=op.d, coeffs=coeffs, name=name or f"{op.name}_rot")


CATALOG_NAMES = ("div", "curl2d", "curl3d", "cauchy_riemann", "hessian_curl")


def catalog(name: str, n: int | None = None) -> OperatorA:
    """Look up a built-in operator by name; ``n`` selects the dimension for div."""
    if name == "div":
        return make_div(2 if n is None else n)
    if n is not None:
        raise ValueError(f"operator {name!r} does not take a dimension parameter")
    makers = {
        "curl2d": make_curl2d,
        "curl3d": make_curl3d,
        "cauchy_riemann": make_cauchy_riemann,
        "hessian_curl": make_hessian_curl,
    }
    if name not in makers:
        raise ValueError(f"unknown operator {name!r}; built-ins: {', '.join(CATALOG_NAMES)}")
    return makers[name]()


def operator_from_json(source) -> OperatorA:
    """Load a custom operator from a JSON document (path, file object, or dict).

    Expected keys: n, m, d, coeffs (n row-major d x m matrices), optional name.
    """
    if isinstance(source, dict):
        doc = source
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    required = {"n", "m", "d", "coeffs"}
    missing = required - doc.keys()
    if missing:
        raise ValueError(f"operator document is missing keys: {sorted(missing)}")
    return OperatorA(
        n=int(doc["n"]), m=int(doc["m"]), d=int(doc["d"]),
        coeffs=tuple(np.asarray(A, dtype=float) for A in doc["coeffs"]),
        name=str(doc.get("name", "custom")),
    )
