"""Independent references for the grid solvers and the pointwise algebra.

Nothing here imports the grid operators: the radial oracle works on a 1D
log-spaced mesh, ``symbolic_ddc`` differentiates symbolically, and
``exterior_expand`` multiplies forms term by term in a free exterior algebra.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .expressions import Expression, parse

ORACLE_MAGIC = "ORACLE1"


class OracleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# axisymmetric Calabi problem


@dataclass
class RadialProblem:
    """Axisymmetric density ``f(r)`` on CP^1, ``r = |w|``, sampled on a log mesh."""

    f: Callable[[np.ndarray], np.ndarray]
    nodes: int = 4096
    r_min: float = 1e-6
    r_max: float = 1e6
    lam: float | None = None

    @classmethod
    def from_expression(cls, expr: str | Expression, **kw) -> "RadialProblem":
        e = parse(expr)
        return cls(lambda r: e.evaluate_chart(np.asarray(r, dtype=complex), 0), **kw)


@dataclass
class RadialSolution:
    s: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    lam: float
    residual: float

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.s)

    def __call__(self, r) -> np.ndarray:
        """``u`` at radius ``r`` (``r = 0`` and ``inf`` map to the mesh ends)."""
        r = np.asarray(r, dtype=float)
        s = np.log(np.clip(r, self.r[0], self.r[-1]))
        return self._spline(s)

    def __post_init__(self) -> None:
        self._spline = CubicSpline(self.s, self.u)


def _interval_integrals(fn, s: np.ndarray, order: int = 8) -> np.ndarray:
    """Gauss-Legendre integral of ``fn`` over every mesh interval ``[s_i, s_i+1]``."""
    x, wts = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (s[1:] + s[:-1])
    half = 0.5 * np.diff(s)
    pts = mid[:, None] + half[:, None] * x[None, :]
    return np.sum(fn(pts) * wts[None, :], axis=1) * half


def solve_radial(prob: RadialProblem) -> RadialSolution:
    """Solve ``(r u')' = r (lam e^f - 1) 4/(1+r^2)^2`` by nested quadrature.

    In ``s = log r`` the equation reads ``u_ss = sech(s)^2 (lam e^f - 1)``.
    Regularity at the pole (``r u' -> 0``) gives
    ``u(s) = int_{-inf}^s (s - t) rhs(t) dt``, and the gauge
    ``int u sech^2 ds = 0`` fixes the constant.  Each cumulative integral is
    summed from per-interval Gauss-Legendre rules; the gauge integral uses
    Simpson's rule on the mesh.
    """
    s = np.linspace(math.log(prob.r_min), math.log(prob.r_max), prob.nodes)
    if np.any(np.diff(s) <= 0):
        raise OracleError("radial mesh must be strictly increasing")

    def density(t):
        v = np.asarray(prob.f(np.exp(t)), dtype=float)
        if not np.all(np.isfinite(v)):
            raise OracleError("density is not finite on the radial mesh")
        return v

    def area(t):
        return 1.0 / np.cosh(t) ** 2

    lam = prob.lam
    if lam is None:
        lam = (np.sum(_interval_integrals(area, s))
               / np.sum(_interval_integrals(lambda t: area(t) * np.exp(density(t)), s)))

    def rhs(t):
        return area(t) * (lam * np.exp(density(t)) - 1.0)

    first = np.concatenate([[0.0], np.cumsum(_interval_integrals(rhs, s))])
    moment = np.concatenate([[0.0], np.cumsum(_interval_integrals(lambda t: t * rhs(t), s))])
    u = s * first - moment
    u -= simpson(u * area(s), x=s) / simpson(area(s), x=s)

    # sixth-order second difference against the right-hand side, away from the ends
    ds = s[1] - s[0]
    co = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0
    u_ss = sum(co[k] * u[k:len(u) - 6 + k] for k in range(7)) / ds**2
    residual = float(np.max(np.abs(u_ss - rhs(s)[3:-3])))
    # no flux through the far pole
    residual = max(residual, abs(float(first[-1])))
    return RadialSolution(s, u, float(lam), residual)


def regression_table(sol: RadialSolution, radii: Sequence[float] = (0.0, 0.5, 1.0, 2.0)) -> list[tuple[float, float]]:
    return [(float(r), float(sol(r))) for r in radii]


def write_oracle(path: str | Path, rows: Sequence[tuple[float, float]]) -> None:
    lines = [ORACLE_MAGIC] + [f"{r:.17g} {u:.17g}" for r, u in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_oracle(path: str | Path) -> list[tuple[float, float]]:
    lines = Path(path).read_text().split("\n")
    if not lines or lines[0].strip() != ORACLE_MAGIC:
        raise OracleError(f"{path}: not an {ORACLE_MAGIC} file")
    rows = []
    for ln in lines[1:]:
        if ln.strip():
            r, u = ln.split()
            rows.append((float(r), float(u)))
    return rows


# ---------------------------------------------------------------------------
# symbolic chart Laplacian


def symbolic_ddc(expr: str | Expression):
    """Exact chart-A component of ``dd^c expr``, i.e. its flat Laplacian.

    Returns ``(sympy_expr, fn)`` where ``fn(w)`` evaluates the result.
    """
    import sympy as spy

    e, x, y = parse(expr).to_sympy()
    lap = spy.simplify(spy.diff(e, x, 2) + spy.diff(e, y, 2))
    fn = spy.lambdify((x, y), lap, "numpy")

    def evaluate(w):
        w = np.asarray(w, dtype=complex)
        return np.broadcast_to(np.asarray(fn(w.real, w.imag), dtype=float), w.shape)

    return lap, evaluate


# ---------------------------------------------------------------------------
# free exterior algebra


def _wedge(a: dict, b: dict) -> dict:
    out: dict = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            if set(ka) & set(kb):
                continue
            idx = ka + kb
            # sign of the sorting permutation
            sign = 1
            lst = list(idx)
            for i in range(len(lst)):
                for j in range(len(lst) - 1 - i):
                    if lst[j] > lst[j + 1]:
                        lst[j], lst[j + 1] = lst[j + 1], lst[j]
                        sign = -sign
            key = tuple(lst)
            out[key] = out.get(key, 0) + sign * va * vb
    return out


def _unit(sample):
    """The imaginary unit in the number system of ``sample``."""
    if isinstance(sample, (Fraction, int)):
        import sympy as spy

        return spy.I
    return 1j


def _to_exact(v):
    if isinstance(v, Fraction):
        import sympy as spy

        return spy.Rational(v.numerator, v.denominator)
    return v


def hermitian_to_form(matrix) -> dict:
    """``i sum_jk A_jk dz_j ^ dzbar_k`` with generators ``dz_j -> j``, ``dzbar_k -> m + k``."""
    A = [list(row) for row in (matrix.matrix if hasattr(matrix, "matrix") else matrix)]
    m = len(A)
    unit = _unit(A[0][0])
    return {(j, m + k): unit * _to_exact(A[j][k]) for j in range(m) for k in range(m) if A[j][k] != 0}


def exterior_expand(values: Sequence, pattern: Sequence[int]) -> object:
    """Coefficient of ``values[p0] ^ values[p1] ^ ...`` on the volume unit.

    Each value is a Hermitian (1,1)-form (matrix or ``HermitianValue``) and
    ``len(pattern)`` must equal the dimension ``m``.  The volume unit is
    ``prod_k (i dz_k ^ dzbar_k)``.  Rational (``Fraction``) input is expanded
    exactly.
    """
    mats = [v.matrix if hasattr(v, "matrix") else v for v in values]
    exact = all(isinstance(x, (Fraction, int)) for M in mats for row in M for x in row)
    forms = [hermitian_to_form(v) for v in values]
    dims = {len(M) for M in mats}
    if len(dims) != 1:
        raise OracleError("dimension mismatch between forms")
    m = dims.pop()
    if len(pattern) != m or m > 3:
        raise OracleError(f"pattern length {len(pattern)} must equal m={m} (m <= 3)")
    prod: dict = {(): 1}
    for p in pattern:
        prod = _wedge(prod, forms[p])
    unit = _unit(Fraction(0)) if exact else 1j
    vol: dict = {(): 1}
    for k in range(m):
        vol = _wedge(vol, {(k, m + k): unit})
    top = tuple(range(2 * m))
    coef = prod.get(top, 0) / vol[top]
    if exact:
        import sympy as spy

        q = spy.nsimplify(spy.expand(coef))
        if q.is_Rational:
            return Fraction(int(q.p), int(q.q))
    return coef


def flat_volume_ratio(n: int) -> float:
    """``omega^n / (Omega ^ Omega-bar)`` for ``omega = dd^c |z|^2`` on ``C^n``.

    Works in the real basis ``dx_1, dy_1, ..., dx_n, dy_n`` (generator
    ``2a`` is ``dx_a``, ``2a+1`` is ``dy_a``), with ``dz = dx + i dy``.
    """
    omega: dict = {(2 * a, 2 * a + 1): 4.0 for a in range(n)}
    top = tuple(range(2 * n))
    power: dict = {(): 1.0}
    for _ in range(n):
        power = _wedge(power, omega)
    dz = [{(2 * a,): 1.0, (2 * a + 1,): 1j} for a in range(n)]
    dzb = [{(2 * a,): 1.0, (2 * a + 1,): -1j} for a in range(n)]
    vol: dict = {(): 1.0}
    for one in dz + dzb:
        vol = _wedge(vol, one)
    return complex(power.get(top, 0) / vol[top])


def permutation_sign(perm: Sequence[int]) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if not seen[i]:
            j, length = i, 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                length += 1
            sign *= -1 if length % 2 == 0 else 1
    return sign


def mixed_coefficient(mats: Sequence[np.ndarray]) -> complex:
    """Permutation-sum formula ``sum sgn(s) sgn(t) prod_k A_k[s(k), t(k)]``."""
    m = len(mats)
    total = 0
    for s in itertools.permutations(range(m)):
        for t in itertools.permutations(range(m)):
            term = permutation_sign(s) * permutation_sign(t)
            for k in range(m):
                term = term * mats[k][s[k]][t[k]]
            total += term
    return total
