"""Integrands h(x, s) with p-growth, recession estimates and functional evaluation.

Evaluators are vectorized over trailing point axes: ``evaluate(x, s)`` takes
``x`` of shape (..., n) (or None for x-independent integrands) and ``s`` of
shape (..., m) and returns (...).  Positively homogeneous integrands get a
spot-checked homogeneity certificate at construction; they are the admissible
objectives for the boundary testers.

User-defined integrands can be parsed from a tiny arithmetic expression
grammar over the components of s and x (operators + - * /, functions abs,
pow, det2; see ``expression_integrand``).
"""

from __future__ import annotations

import ast

import numpy as np

from .fields import DomainField, PeriodicField


class Integrand:
    """An evaluable h(x, s) with growth exponent p.

    Parameters
    ----------
    name : str
    p : float
        Growth exponent, > 1.
    fn : callable
        Vectorized evaluator ``fn(x, s) -> values``.
    growth_const : float, optional
        C with |h(x,s)| <= C (1 + |s|^p); estimated by sampling when omitted.
    grad : callable, optional
        Analytic s-gradient ``grad(x, s) -> (..., m)``; central finite
        differences are used when omitted.
    recession : Integrand, optional
        Analytic recession integrand, when known.
    moment2_coeff : float, optional
        Set when h(x, s) = c |s|^2 exactly; lets singular-cap quadrature
        evaluate the functional analytically on annotated fields.
    """

    homogeneous = False

    def __init__(self, name, p, fn, m=None, growth_const=None, grad=None,
                 recession=None, moment2_coeff=None, x_dependent=False):
        if not p > 1:
            raise ValueError("growth exponent must exceed 1")
        self.name = name
        self.p = float(p)
        self._fn = fn
        self.m = m
        self._grad = grad
        self.recession = recession
        self.moment2_coeff = moment2_coeff
        self.x_dependent = x_dependent
        self.growth_const = growth_const

    def evaluate(self, x, s):
        s = np.asarray(s, dtype=float)
        out = np.asarray(self._fn(x, s), dtype=float)
        return out

    def gradient(self, x, s, step=1e-6):
        """s-gradient; central finite differences unless an analytic one is set."""
        s = np.asarray(s, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(x, s), dtype=float)
        scale = np.maximum(1.0, np.abs(s))
        g = np.empty_like(s)
        for j in range(s.shape[-1]):
            hj = step * scale[..., j]
            sp = s.copy()
            sm = s.copy()
            sp[..., j] += hj
            sm[..., j] -= hj
            g[..., j] = (self.evaluate(x, sp) - self.evaluate(x, sm)) / (2.0 * hj)
        return g

    def estimate_growth_const(self, m, n=2, samples=256, seed=0):
        """Sampled estimate of C in |h(x,s)| <= C (1 + |s|^p)."""
        rng = np.random.default_rng(seed)
        s = rng.standard_normal((samples, m)) * rng.uniform(0.1, 50.0, (samples, 1))
        x = rng.uniform(-1.0, 1.0, (samples, n)) if self.x_dependent else None
        vals = np.abs(self.evaluate(x, s))
        return float(np.max(vals / (1.0 + np.linalg.norm(s, axis=-1) ** self.p)))

    def frozen(self, x0):
        """The x-frozen integrand s -> h(x0, s)."""
        if not self.x_dependent:
            return self
        x0 = np.asarray(x0, dtype=float)

        def fn(_, s):
            xs = np.broadcast_to(x0, s.shape[:-1] + x0.shape)
            return self._fn(xs, s)

        cls = HomogeneousIntegrand if self.homogeneous else Integrand
        return cls(f"{self.name}@frozen", self.p, fn, m=self.m,
                   grad=None if self._grad is None else
                   (lambda _, s: self._grad(np.broadcast_to(x0, s.shape[:-1] + x0.shape), s)),
                   moment2_coeff=None)


class HomogeneousIntegrand(Integrand):
    """Positively p-homogeneous integrand, v(x, t s) = t^p v(x, s) for t >= 0.

    Homogeneity is spot-checked at construction on sampled unit vectors and
    scales t in {0.5, 2, 7}; violations raise ValueError.
    """

    homogeneous = True

    def __init__(self, name, p, fn, m=None, check_m=None, **kw):
        super().__init__(name, p, fn, m=m, **kw)
        probe_m = check_m or m
        if probe_m is not None:
            self._check_homogeneity(probe_m)

    def _check_homogeneity(self, m, samples=16, seed=7, rtol=1e-10):
        rng = np.random.default_rng(seed)
        s = rng.standard_normal((samples, m))
        s /= np.linalg.norm(s, axis=-1, keepdims=True)
        x = rng.uniform(-0.4, 0.4, (samples, 8))
        base = self.evaluate(x if self.x_dependent else None, s)
        for t in (0.5, 2.0, 7.0):
            scaled = self.evaluate(x if self.x_dependent else None, t * s)
            ref = t ** self.p * base
            tol = rtol * np.maximum(np.abs(ref), 1.0)
            if not np.all(np.abs(scaled - ref) <= tol):
                raise ValueError(f"{self.name}: not positively {self.p}-homogeneous at t={t}")
        zero = self.evaluate(x[:1] if self.x_dependent else None, np.zeros((1, m)))
        if abs(float(zero[0])) > 1e-12:
            raise ValueError(f"{self.name}: homogeneous integrand must vanish at s=0")


# ---------------------------------------------------------------------------
# catalog

def abs_power(p: float = 2.0) -> HomogeneousIntegrand:
    """|s|^p (convex, hence quasiconvex under any constraint)."""

    def fn(_, s):
        return np.linalg.norm(s, axis=-1) ** p

    def grad(_, s):
        r = np.linalg.norm(s, axis=-1, keepdims=True)
        safe = np.where(r > 0, r, 1.0)
        return p * safe ** (p - 2.0) * s * (r > 0)

    h = HomogeneousIntegrand(f"abs{p:g}", p, fn, grad=grad,
                             moment2_coeff=1.0 if p == 2.0 else None)
    h.recession = h
    return h


def neg_abs_power(p: float = 2.0) -> HomogeneousIntegrand:
    """-|s|^p, the canonical boundary-concentration objective."""
    base = abs_power(p)

    def fn(x, s):
        return -base.evaluate(x, s)

    def grad(x, s):
        return -base.gradient(x, s)

    h = HomogeneousIntegrand(f"neg_abs{p:g}", p, fn, grad=grad,
                             moment2_coeff=-1.0 if p == 2.0 else None)
    h.recession = h
    return h


def det2_full() -> HomogeneousIntegrand:
    """Determinant of 2x2 matrix fields s = (F11, F12, F21, F22); a null
    Lagrangian under the gradient constraint."""

    def fn(_, s):
        return s[..., 0] * s[..., 3] - s[..., 1] * s[..., 2]

    def grad(_, s):
        return np.stack([s[..., 3], -s[..., 2], -s[..., 1], s[..., 0]], axis=-1)

    return HomogeneousIntegrand("det2", 2.0, fn, m=4, grad=grad)


def det2_sym() -> HomogeneousIntegrand:
    """Determinant on symmetric 2x2 fields s = (w11, w12, w22)."""

    def fn(_, s):
        return s[..., 0] * s[..., 2] - s[..., 1] ** 2

    def grad(_, s):
        return np.stack([s[..., 2], -2.0 * s[..., 1], s[..., 0]], axis=-1)

    return HomogeneousIntegrand("det2_sym", 2.0, fn, m=3, grad=grad)


_SYM3 = ((0, 1, 2), (1, 3, 4), (2, 4, 5))  # symmetric 3x3 from 6 components


def _sym3_matrix(s):
    rows = [np.stack([s[..., j] for j in row], axis=-1) for row in _SYM3]
    return np.stack(rows, axis=-2)


def cofactor_normal(a_fn, nu_fn=None) -> HomogeneousIntegrand:
    """h(x, F) = a(x) . (Cof F) nu(x) on symmetric 3x3 fields (m = 6).

    ``a_fn`` maps points to R^3; ``nu_fn`` defaults to x itself, which agrees
    with the outer unit normal on the unit sphere.  2-homogeneous in F, and
    weakly continuous along Hessian-constrained sequences.
    """
    if nu_fn is None:
        nu_fn = lambda x: x

    def fn(x, s):
        if x is None:
            raise ValueError("cofactor integrand requires evaluation points")
        F = _sym3_matrix(np.asarray(s, dtype=float))
        # cofactor via 2x2 minors, valid for singular F as well
        cof = np.empty_like(F)
        for i in range(3):
            for j in range(3):
                minor = np.delete(np.delete(F, i, axis=-2), j, axis=-1)
                det = minor[..., 0, 0] * minor[..., 1, 1] - minor[..., 0, 1] * minor[..., 1, 0]
                cof[..., i, j] = (-1.0) ** (i + j) * det
        a = np.asarray(a_fn(x), dtype=float)
        nu = np.asarray(nu_fn(x), dtype=float)
        return np.einsum("...i,...ij,...j->...", a, cof, nu)

    return HomogeneousIntegrand("cofactor_normal", 2.0, fn, m=6,
                                x_dependent=True, check_m=6)


def weighted(v: HomogeneousIntegrand, weight_fn, name=None) -> HomogeneousIntegrand:
    """h(x, s) = w(x) v(s) for a continuous positive weight; used to exercise
    the freeze-the-base-point property of the boundary testers."""

    def fn(x, s):
        if x is None:
            raise ValueError("weighted integrand requires evaluation points")
        return np.asarray(weight_fn(x), dtype=float) * v.evaluate(None, s)

    def grad(x, s):
        return np.asarray(weight_fn(x), dtype=float)[..., None] * v.gradient(None, s)

    return HomogeneousIntegrand(name or f"weighted_{v.name}", v.p, fn, m=v.m,
                                grad=grad, x_dependent=True, check_m=v.m)


BUILTIN_INTEGRANDS = {
    "abs2": lambda: abs_power(2.0),
    "neg_abs2": lambda: neg_abs_power(2.0),
    "det2": det2_full,
    "det2_sym": det2_sym,
}


def integrand_catalog(name: str, params: dict | None = None):
    """Catalog integrands addressed by name plus a parameter document."""
    params = params or {}
    if name in ("abs", "abs_p"):
        return abs_power(float(params.get("p", 2.0)))
    if name in ("neg_abs", "neg_abs_p"):
        return neg_abs_power(float(params.get("p", 2.0)))
    if name in BUILTIN_INTEGRANDS:
        return BUILTIN_INTEGRANDS[name]()
    if name == "cofactor_normal":
        a = np.asarray(params.get("a", (1.0, 0.0, 0.0)), dtype=float)
        return cofactor_normal(lambda x: np.broadcast_to(a, x.shape[:-1] + (3,)))
    if name == "expr":
        return expression_integrand(params["expr"], n=int(params["n"]), m=int(params["m"]),
                                    p=float(params.get("p", 2.0)))
    raise ValueError(f"unknown integrand {name!r}")


# ---------------------------------------------------------------------------
# expression grammar

_ALLOWED_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
                   ast.Div: np.divide}
_ALLOWED_CALLS = {"abs", "pow", "det2"}


def _compile_expr(node, names):
    if isinstance(node, ast.Expression):
        return _compile_expr(node.body, names)
    if isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ValueError("only numeric constants are allowed")
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        if node.id not in names:
            raise ValueError(f"unknown variable {node.id!r}")
        key = node.id
        return lambda env: env[key]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile_expr(node.operand, names)
        sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
        return lambda env: sign * inner(env)
    if isinstance(node, ast.BinOp) and type(node.op) in _ALLOWED_BINOPS:
        fn = _ALLOWED_BINOPS[type(node.op)]
        left = _compile_expr(node.left, names)
        right = _compile_expr(node.right, names)
        return lambda env: fn(left(env), right(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        fname = node.func.id
        if fname not in _ALLOWED_CALLS:
            raise ValueError(f"unknown function {fname!r}")
        args = [_compile_expr(a, names) for a in node.args]
        if fname == "abs":
            if len(args) != 1:
                raise ValueError("abs takes one argument")
            return lambda env: np.abs(args[0](env))
        if fname == "pow":
            if len(args) != 2:
                raise ValueError("pow takes two arguments")
            return lambda env: np.power(args[0](env), args[1](env))
        if len(args) != 4:
            raise ValueError("det2 takes four arguments")
        return lambda env: args[0](env) * args[3](env) - args[1](env) * args[2](env)
    raise ValueError(f"disallowed syntax: {ast.dump(node)}")


def expression_integrand(expr: str, n: int, m: int, p: float = 2.0,
                         name: str | None = None) -> Integrand:
    """Integrand from an arithmetic expression over s1..s<m> and x1..x<n>.

    Grammar: + - * /, unary minus, numeric constants, and the functions
    abs(e), pow(e, c), det2(a, b, c, d).
    """
    names = {f"s{j + 1}" for j in range(m)} | {f"x{i + 1}" for i in range(n)}
    tree = ast.parse(expr, mode="eval")
    compiled = _compile_expr(tree, names)
    uses_x = any(isinstance(node, ast.Name) and node.id.startswith("x")
                 for node in ast.walk(tree))

    def fn(x, s):
        env = {f"s{j + 1}": s[..., j] for j in range(m)}
        if uses_x:
            if x is None:
                raise ValueError(f"expression {expr!r} references x but no points were given")
            env.update({f"x{i + 1}": x[..., i] for i in range(n)})
        out = compiled(env)
        return np.broadcast_to(out, s.shape[:-1]).astype(float)

    return Integrand(name or f"expr:{expr}", p, fn, m=m, x_dependent=uses_x)


# ---------------------------------------------------------------------------
# recession estimates and functional evaluation

def recession_estimate(h: Integrand, x, s, t_schedule=(1e1, 1e2, 1e3, 1e4)):
    """Estimate the recession value h(x, t s) / t^p along increasing scales.

    Returns (estimate, diffs, converged): the value at the largest scale, the
    successive differences, and a convergence flag (differences decreasing).
    Raises OverflowError via a scale-limit check when values leave float range.
    """
    t_schedule = tuple(sorted(float(t) for t in t_schedule))
    if len(t_schedule) < 3 or t_schedule[-1] < 1e3:
        raise ValueError("t_schedule needs at least 3 scales reaching 1e3")
    s = np.asarray(s, dtype=float)
    vals = []
    for t in t_schedule:
        v = h.evaluate(x, t * s) / t ** h.p
        if not np.all(np.isfinite(v)):
            raise OverflowError(f"integrand overflowed at scale t={t:g}")
        vals.append(float(np.asarray(v).reshape(-1)[0]) if np.ndim(v) == 0 or v.size == 1 else v)
    vals = [np.asarray(v, dtype=float) for v in vals]
    diffs = [float(np.max(np.abs(vals[i + 1] - vals[i]))) for i in range(len(vals) - 1)]
    converged = all(diffs[i + 1] <= diffs[i] + 1e-15 for i in range(len(diffs) - 1))
    estimate = vals[-1]
    if estimate.size == 1:
        estimate = float(estimate.reshape(-1)[0])
    return estimate, diffs, converged


def functional_eval(h: Integrand, field, region=None) -> float:
    """Quadrature of h(x, u(x)) over the field's domain (or a sub-mask).

    Domain fields carrying quadrature annotations are handled cell-wise: the
    refined-cell annotation re-evaluates h on sub-cell samples, the analytic
    singular-cap annotation applies when h is exactly a multiple of |s|^2.
    """
    grid = field.grid
    vol = grid.cell_volume
    pts = grid.nodes() if h.x_dependent else None
    vals = h.evaluate(pts, field.values)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand produced non-finite values")

    if isinstance(field, PeriodicField):
        if region is not None:
            return float(vals[region].sum() * vol)
        return float(vals.sum() * vol)

    mask = field.mask
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if np.any(region & ~mask):
            raise ValueError("region must be contained in the field mask")
        mask = region

    cap = getattr(field, "singular_cap", None)
    if cap is not None and h.moment2_coeff is not None:
        contrib = np.where(mask, vals, 0.0) * vol
        cells = tuple(cap.cells.T)
        in_region = mask[cells]
        contrib[cells] = 0.0
        return float(contrib.sum() + h.moment2_coeff * (cap.masses[in_region]).sum())

    patch = getattr(field, "cell_patch", None)
    if patch is not None:
        contrib = np.where(mask, vals, 0.0) * vol
        cells = tuple(patch.cells.T)
        in_region = mask[cells]
        contrib[cells] = 0.0
        refined = patch.integrate(h, which=in_region) * vol
        return float(contrib.sum() + refined)

    return float(vals[mask].sum() * vol)


def nemytskii_gap_table(h: HomogeneousIntegrand, u_seq, v_seq, bound: float | None = None):
    """Per-index L^1 gaps of h along two field sequences vs their L^p gaps.

    Checks the boundedness hypothesis first: both sequences must be bounded in
    L^p (by ``bound`` when given, else by 10x the first norm).
    """
    from .fields import lp_norm

    if len(u_seq) != len(v_seq):
        raise ValueError("sequences must have equal length")
    p = h.p
    norms = [max(lp_norm(u, p), lp_norm(v, p)) for u, v in zip(u_seq, v_seq)]
    cap = bound if bound is not None else 10.0 * max(norms[0], 1e-12)
    if max(norms) > cap:
        raise ValueError(f"sequence is not L^p-bounded (norm {max(norms):g} over bound {cap:g})")
    rows = []
    for u, v in zip(u_seq, v_seq):
        hu = h.evaluate(u.grid.nodes() if h.x_dependent else None, u.values)
        hv = h.evaluate(v.grid.nodes() if h.x_dependent else None, v.values)
        mask = getattr(u, "mask", None)
        weight = u.grid.cell_volume
        diff = np.abs(hu - hv)
        l1 = float(diff[mask].sum() * weight) if mask is not None else float(diff.sum() * weight)
        gap_vals = u.values - v.values
        if mask is not None:
            gap_field = DomainField(u.grid, mask, np.where(mask[..., None], gap_vals, 0.0))
        else:
            gap_field = PeriodicField(u.grid, gap_vals)
        rows.append({"l1_gap": l1, "lp_gap": lp_norm(gap_field, p)})
    return rows
