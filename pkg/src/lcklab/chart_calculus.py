"""Exterior calculus on CP^1 through a two-chart stereographic atlas.

Chart 0 uses the coordinate ``w``, chart 1 uses ``w' = 1/w``.  Each chart is
a uniform ``N x N`` Cartesian grid on ``[-R, R]^2``; ``values[c, i, j]`` is
the value at ``x = xs[i], y = xs[j]`` of chart ``c``.

A transverse (1,1)-form is stored by its component ``c`` with respect to
``dx ^ dy``.  With ``d^c = i(dbar - d)`` the component of ``dd^c u`` is the
flat chart Laplacian of ``u``, and components transform as
``c_0(w) = c_1(1/w) |w|^-4``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy import special

from .expressions import Expression, parse

TOL_TRANSITION = 1e-6
# width (in log|w|) of the smooth crossover between the two chart weights
CHI_WIDTH = 0.08

# central second-difference weights by order of accuracy
_D2 = {
    4: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0,
    6: np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0,
}
# Lagrange points per axis when transporting values between charts inside operators
SOLVER_INTERP_POINTS = 8


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Resolution ``N`` per chart axis, chart half-width ``R`` and stencil order."""

    N: int = 64
    R: float = 1.5
    order: int = 6

    def __post_init__(self) -> None:
        if self.order not in _D2:
            raise GridError(f"finite-difference order must be one of {sorted(_D2)}")
        if self.R <= 1.0:
            raise GridError(f"chart radius R={self.R} must exceed 1 for the charts to overlap")
        if self.N < 17:
            raise GridError(f"N={self.N} is below the stencil support minimum of 17")
        if self.h * self.R >= 0.25:
            raise GridError(f"h*R = {self.h * self.R:.4f} violates the resolution bound 0.25")

    @property
    def h(self) -> float:
        return 2.0 * self.R / (self.N - 1)

    @cached_property
    def xs(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.N)

    @cached_property
    def w(self) -> np.ndarray:
        """Complex chart coordinate at every node, shape ``(N, N)``."""
        X, Y = np.meshgrid(self.xs, self.xs, indexing="ij")
        return X + 1j * Y

    @property
    def half_width(self) -> int:
        return self.order // 2

    @cached_property
    def interior(self) -> np.ndarray:
        """Nodes where the Laplacian stencil fits inside the chart."""
        k = self.half_width
        m = np.zeros((self.N, self.N), dtype=bool)
        m[k:-k, k:-k] = True
        return m

    @cached_property
    def chi(self) -> np.ndarray:
        """Partition-of-unity weights, shape ``(2, N, N)``; they sum to one on CP^1."""
        c = partition_weight(np.abs(self.w))
        return np.stack([c, c])


def partition_weight(rho):
    """Chart weight ``erfc(log(rho) / CHI_WIDTH) / 2``.

    Symmetric under ``rho -> 1/rho`` up to complementation, so the two charts'
    weights add to one exactly.  Tails beyond the chart square are below 1e-12.
    """
    with np.errstate(divide="ignore"):
        return 0.5 * special.erfc(np.log(np.asarray(rho, dtype=float)) / CHI_WIDTH)


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise GridError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (2, self.grid.N, self.grid.N):
            raise GridError(f"field shape {v.shape} does not match grid")
        _check_finite(v, "scalar field")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_expression(cls, expr: str | Expression, grid: GridSpec) -> "ScalarField":
        e = parse(expr)
        return cls(grid, np.stack([e.evaluate_chart(grid.w, c) for c in (0, 1)]))

    @classmethod
    def constant(cls, c: float, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.full((2, grid.N, grid.N), float(c)))

    def __add__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, a: float):
        return ScalarField(self.grid, self.values * a)

    __rmul__ = __mul__

    def map(self, fn) -> "ScalarField":
        return ScalarField(self.grid, fn(self.values))


@dataclass(frozen=True, eq=False)
class Form11Field:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (2, self.grid.N, self.grid.N):
            raise GridError(f"form shape {v.shape} does not match grid")
        _check_finite(v, "(1,1)-form")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other: "Form11Field") -> "Form11Field":
        return Form11Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Form11Field") -> "Form11Field":
        return Form11Field(self.grid, self.values - other.values)

    def __mul__(self, a):
        if isinstance(a, ScalarField):
            return Form11Field(self.grid, self.values * a.values)
        return Form11Field(self.grid, self.values * a)

    __rmul__ = __mul__

    def is_positive(self, floor: float = 0.0) -> bool:
        return bool(np.all(self.values > floor))

    def ratio(self, other: "Form11Field") -> ScalarField:
        """Pointwise quotient of two (1,1)-forms, a chart-independent function."""
        return ScalarField(self.grid, self.values / other.values)


# ---------------------------------------------------------------------------
# interpolation between charts


def lagrange_weights(grid: GridSpec, t: np.ndarray, npts: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange stencil of ``npts`` nodes along one axis: start indices and weights."""
    t = np.asarray(t, dtype=float)
    s = (t + grid.R) / grid.h
    i0 = np.clip(np.floor(s).astype(int) - (npts // 2 - 1), 0, grid.N - npts)
    u = s - i0
    wts = np.ones(t.shape + (npts,))
    for k in range(npts):
        for m in range(npts):
            if m != k:
                wts[..., k] *= (u - m) / (k - m)
    return i0, wts


def interpolation_matrix(grid: GridSpec, points: np.ndarray, npts: int = 4) -> sp.csr_matrix:
    """Sparse map from one chart's flattened values to values at ``points``.

    ``points`` are complex coordinates in that chart.  Tensor-product Lagrange
    interpolation with ``npts`` nodes per axis (4 = bicubic); rows sum to one.
    """
    points = np.asarray(points, dtype=complex).ravel()
    ix, wx = lagrange_weights(grid, points.real, npts)
    iy, wy = lagrange_weights(grid, points.imag, npts)
    M = points.size
    ar = np.arange(npts)
    rows = np.repeat(np.arange(M), npts * npts)
    cols = ((ix[:, None, None] + ar[None, :, None]) * grid.N
            + (iy[:, None, None] + ar[None, None, :])).reshape(-1)
    vals = (wx[:, :, None] * wy[:, None, :]).reshape(-1)
    return sp.csr_matrix((vals, (rows, cols)), shape=(M, grid.N * grid.N))


def interpolate(grid: GridSpec, chart_values: np.ndarray, points: np.ndarray, npts: int = 4) -> np.ndarray:
    P = interpolation_matrix(grid, points, npts)
    return (P @ np.asarray(chart_values).ravel()).reshape(np.shape(points))


def transition_defect(f: ScalarField | Form11Field, npts: int | None = None) -> float:
    """Max mismatch between the two chart representations on the overlap annulus.

    ``npts`` is the number of Lagrange points per axis (4 is bicubic); the
    default matches the operators' inter-chart transport.
    """
    npts = SOLVER_INTERP_POINTS if npts is None else npts
    g = f.grid
    rho = np.abs(g.w)
    inv = 1.0 / np.where(rho > 0, g.w, 1.0)
    mask = ((rho >= 1.0 / g.R) & (rho <= g.R)
            & (np.abs(inv.real) <= g.R) & (np.abs(inv.imag) <= g.R))
    worst = 0.0
    for c in (0, 1):
        here = f.values[c][mask]
        there = interpolate(g, f.values[1 - c], inv[mask], npts)
        if isinstance(f, Form11Field):
            there = there * rho[mask] ** -4
        worst = max(worst, float(np.max(np.abs(here - there), initial=0.0)))
    return worst


# ---------------------------------------------------------------------------
# differential operators


def chart_laplacian_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Central-difference Laplacian on one chart (all rows; edge rows are invalid)."""
    N, h, k = grid.N, grid.h, grid.half_width
    coef = _D2[grid.order]
    off = np.arange(-k, k + 1)
    D = sp.diags([np.full(N - abs(o), coef[o + k]) for o in off], off, shape=(N, N)) / h**2
    I = sp.identity(N)
    return (sp.kron(D, I) + sp.kron(I, D)).tocsr()


def _flat_laplacian(grid: GridSpec, v: np.ndarray) -> np.ndarray:
    k = grid.half_width
    coef = _D2[grid.order]
    n = v.shape[0]
    acc = 2 * coef[k] * v[k:n - k, k:n - k]
    for o in range(-k, k + 1):
        if o:
            acc = acc + coef[o + k] * (v[k + o:n - k + o, k:n - k] + v[k:n - k, k + o:n - k + o])
    out = np.zeros_like(v)
    out[k:-k, k:-k] = acc / grid.h**2
    return out


def _fill_edges(grid: GridSpec, comp: np.ndarray) -> np.ndarray:
    """Replace edge-node form components by transported values from the other chart."""
    out = comp.copy()
    edge = ~grid.interior
    pts = grid.w[edge]
    for c in (0, 1):
        other = interpolate(grid, comp[1 - c], 1.0 / pts, SOLVER_INTERP_POINTS)
        out[c][edge] = other * np.abs(pts) ** -4
    return out


def ddc(u: ScalarField) -> Form11Field:
    """``dd^c u`` as a (1,1)-form; the component is the chart Laplacian.

    Nodes too close to a chart edge for the stencil take the transported value
    from the other chart.
    """
    g = u.grid
    comp = np.stack([_flat_laplacian(g, u.values[c]) for c in (0, 1)])
    return Form11Field(g, _fill_edges(g, comp))


def fubini_study_component(w) -> np.ndarray:
    return 4.0 / (1.0 + np.abs(w) ** 2) ** 2


def fubini_study_reference(grid: GridSpec) -> Form11Field:
    """``dd^c log(1 + |w|^2)`` evaluated in closed form on both charts."""
    c = fubini_study_component(grid.w)
    return Form11Field(grid, np.stack([c, c]))


def integrate(f: Form11Field) -> float:
    """Integral over CP^1 via the partition of unity and the trapezoid rule.

    The integrand ``chi_c * f_c`` is smooth and negligible near each chart's
    edge, so the uniform-grid rule converges faster than any fixed order.
    """
    g = f.grid
    chi = g.chi
    if np.any(chi < 0) or np.any(chi > 1):
        raise RuntimeError("partition weights left [0, 1]")
    return float(np.sum(chi * f.values) * g.h**2)


def l2_mean(u: ScalarField, reference: Form11Field) -> float:
    """Mean of ``u`` against the volume of ``reference``."""
    return integrate(reference * u) / integrate(reference)


# ---------------------------------------------------------------------------
# pointwise Hermitian algebra


class HermitianError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HermitianValue:
    """Coefficient matrix of a real (1,1)-form ``i sum a_jk dz_j ^ dz_k-bar`` in dimension ``m``.

    The same container holds the dual matrix ``P`` of an ``(m-1, m-1)``-form,
    defined by ``beta ^ Pi = tr(P beta) * vol`` for every (1,1)-form ``beta``.
    """

    matrix: np.ndarray = field(repr=False)
    dual: bool = False

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        if a.ndim != 2 or a.shape[0] != a.shape[1] or not 1 <= a.shape[0] <= 3:
            raise HermitianError(f"expected an m x m matrix with m in 1..3, got {a.shape}")
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.conj().T)) > 1e-14 * scale:
            raise HermitianError("matrix is not Hermitian")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_positive(self) -> bool:
        return bool(self.eigenvalues()[0] > 0)


def adjugate(a: np.ndarray) -> np.ndarray:
    """Classical adjugate by cofactors (valid for singular input)."""
    a = np.asarray(a)
    m = a.shape[0]
    if m == 1:
        return np.ones((1, 1), dtype=a.dtype)
    out = np.empty_like(a)
    for i in range(m):
        for j in range(m):
            minor = np.delete(np.delete(a, j, axis=0), i, axis=1)
            out[i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return out


def hermitian_power(a: HermitianValue, k: int) -> HermitianValue | float:
    """Coefficient of the normalized exterior power ``a^k / k!``.

    ``k = 0`` and ``k = m`` give scalars (``1`` and ``det a``); ``k = m-1`` is
    returned in dual form, whose matrix is the adjugate of ``a``; ``k = 1``
    with ``m = 3`` returns ``a`` itself.
    """
    m = a.m
    if not 0 <= k <= m:
        raise HermitianError(f"power k={k} outside 0..{m}")
    if k == m - 1:
        return HermitianValue(adjugate(a.matrix), dual=True)
    if k == 0:
        return 1.0
    if k == m:
        return float(np.linalg.det(a.matrix).real)
    return HermitianValue(a.matrix)


def root_extract(p: HermitianValue, m: int | None = None) -> HermitianValue:
    """Positive (1,1)-form ``alpha`` with ``alpha^(m-1)/(m-1)!`` dual to ``p``.

    Uses ``alpha = det(p)^(1/(m-1)) p^-1``.
    """
    m = p.m if m is None else m
    if m != p.m or m not in (2, 3):
        raise HermitianError(f"root extraction needs m in {{2, 3}} matching the matrix, got m={m}")
    try:
        np.linalg.cholesky(p.matrix)
    except np.linalg.LinAlgError:
        raise HermitianError("no positive root: input is not positive definite") from None
    det = float(np.linalg.det(p.matrix).real)
    return HermitianValue(det ** (1.0 / (m - 1)) * np.linalg.inv(p.matrix))


def root_extract_m2(p: HermitianValue) -> HermitianValue:
    """Adjugate identity for ``m = 2``: ``alpha = tr(p) Id - p``."""
    if p.m != 2:
        raise HermitianError("adjugate identity only holds for m = 2")
    return HermitianValue(np.trace(p.matrix).real * np.eye(2) - p.matrix)


def random_positive_hermitian(rng: np.random.Generator, m: int, cond: float = 10.0) -> HermitianValue:
    """Random positive definite Hermitian matrix with eigenvalues in ``[1, cond]``."""
    z = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    q, _ = np.linalg.qr(z)
    lam = rng.uniform(1.0, cond, m)
    return HermitianValue((q * lam) @ q.conj().T)


# ---------------------------------------------------------------------------
# global degrees of freedom


class ChartGlue:
    """Glues the two chart grids into one linear system on CP^1.

    Every point of the sphere is owned by exactly one chart: chart 0 owns
    ``|w| <= 1`` and chart 1 owns ``|w'| < 1``.  An operator is imposed at
    owned nodes; every other node is tied to the other chart by Lagrange
    interpolation.  Unknowns are both charts' node values, flattened in the
    order of ``ScalarField.values``.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        g = grid
        n2 = g.N * g.N
        rho = np.abs(g.w).ravel()
        self.owned = np.concatenate([rho <= 1.0, rho < 1.0])
        free = ~self.owned
        inv = 1.0 / np.where(rho > 0, g.w.ravel(), 1.0)
        blocks: list[list] = [[None, None], [None, None]]
        for c in (0, 1):
            sel = free[c * n2:(c + 1) * n2]
            P = interpolation_matrix(g, np.where(sel, inv, 0.0), SOLVER_INTERP_POINTS)
            blocks[c][c] = sp.diags(sel.astype(float))
            blocks[c][1 - c] = -(sp.diags(sel.astype(float)) @ P)
        self.transfer = sp.bmat(blocks, format="csr")
        L = chart_laplacian_matrix(g)
        self.laplacian = sp.block_diag([L, L], format="csr")
        self.owned_diag = sp.diags(self.owned.astype(float))
        c0 = fubini_study_component(g.w).ravel()
        self.reference = np.concatenate([c0, c0])
        self.gauge_weights = (g.chi.reshape(-1) * self.reference) * g.h**2
        self.size = 2 * n2

    def assemble(self, row_operator: sp.spmatrix) -> sp.csr_matrix:
        """Matrix with ``row_operator`` on owned rows and transfer rows elsewhere."""
        return (self.owned_diag @ row_operator + self.transfer).tocsr()

    def field(self, vec: np.ndarray) -> ScalarField:
        return ScalarField(self.grid, vec.reshape(2, self.grid.N, self.grid.N))
