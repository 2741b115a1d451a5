"""Transverse Monge-Ampère problems on the leaf space CP^1 and the uniqueness machinery.

With transverse complex dimension one, the Calabi problem
``eta0 + dd^c u = lam e^f eta0`` is a Poisson equation for the round
Laplacian, while the Aubin family
``log((eta0 - dd^c psi) / eta0) = eps psi + f + const`` is genuinely
nonlinear for ``eps != 0``.  Both are solved by damped Newton iteration on the
glued two-chart system, with a bordered gauge row ``int u eta0 = 0``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .chart_calculus import (
    ChartGlue,
    Form11Field,
    GridSpec,
    HermitianError,
    HermitianValue,
    ScalarField,
    adjugate,
    ddc,
    fubini_study_reference,
    integrate,
    root_extract,
)

log = logging.getLogger(__name__)

_GLUE_CACHE: dict[GridSpec, ChartGlue] = {}


def glue_for(grid: GridSpec) -> ChartGlue:
    if grid not in _GLUE_CACHE:
        _GLUE_CACHE[grid] = ChartGlue(grid)
    return _GLUE_CACHE[grid]


@dataclass(frozen=True, eq=False)
class CalabiProblem:
    f: ScalarField
    eta0: Form11Field

    def __post_init__(self) -> None:
        if not self.eta0.is_positive():
            raise ValueError("reference form eta0 must be positive")

    @classmethod
    def from_expression(cls, f: str, grid: GridSpec) -> "CalabiProblem":
        return cls(ScalarField.from_expression(f, grid), fubini_study_reference(grid))

    @property
    def grid(self) -> GridSpec:
        return self.f.grid

    @property
    def lam(self) -> float:
        return normalization_constant(self.f, self.eta0)


@dataclass(frozen=True)
class SolverConfig:
    tol_newton: float = 1e-10
    tol_linear: float = 1e-12
    max_iter: int = 50
    delta_pos: float = 1e-8
    max_halvings: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.tol_newton, self.tol_linear, self.delta_pos) <= 0:
            raise ValueError("tolerances must be positive")
        if self.delta_pos >= 1:
            raise ValueError("delta_pos must be below 1")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    lam: float
    gauge: float
    wall_ms: float
    compatibility: float = 0.0
    message: str = ""
    trace: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_sup": self.residual,
            "lambda": self.lam,
            "gauge": self.gauge,
            "wall_ms": self.wall_ms,
            "compatibility": self.compatibility,
            "message": self.message,
        }


# ---------------------------------------------------------------------------
# residuals


def normalization_constant(f: ScalarField, eta0: Form11Field) -> float:
    """``lam`` with ``int eta0 = lam int e^f eta0``."""
    lam = integrate(eta0) / integrate(eta0 * f.map(np.exp))
    if not lam > 0:
        raise ValueError("normalization constant is not positive")
    return lam


def gauge_value(u: ScalarField, eta0: Form11Field) -> float:
    return integrate(eta0 * u)


@dataclass
class Residual:
    """Pointwise residual component and its sup over owned nodes."""

    field: Form11Field
    sup: float
    admissible: bool


def calabi_residual(u: ScalarField, prob: CalabiProblem, lam: float | None = None) -> Residual:
    """Component of ``(eta0 + dd^c u) - lam e^f eta0`` in each chart.

    The sup is taken over the nodes each chart owns, so every point of CP^1 is
    counted once.  ``admissible`` is false when ``eta0 + dd^c u`` is not
    positive.
    """
    lam = prob.lam if lam is None else lam
    lhs = prob.eta0 + ddc(u)
    res = lhs - prob.eta0 * prob.f.map(lambda v: lam * np.exp(v))
    glue = glue_for(u.grid)
    sup = float(np.max(np.abs(res.values.reshape(-1)[glue.owned])))
    return Residual(res, sup, bool(np.all(lhs.values.reshape(-1)[glue.owned] > 0)))


# ---------------------------------------------------------------------------
# Newton machinery


def _bordered_solve(J: sp.spmatrix, border: np.ndarray, gauge: np.ndarray,
                    rhs: np.ndarray, gauge_rhs: float, tol_linear: float) -> tuple[np.ndarray, float]:
    """Solve ``[[J, border], [gauge, 0]] [x; k] = [rhs; gauge_rhs]`` with refinement."""
    n = J.shape[0]
    K = sp.bmat([[J, sp.csr_matrix(border.reshape(n, 1))],
                 [sp.csr_matrix(gauge.reshape(1, n)), None]], format="csc")
    b = np.concatenate([rhs, [gauge_rhs]])
    lu = spl.splu(K)
    x = lu.solve(b)
    scale = max(float(np.max(np.abs(b))), 1e-300)
    for _ in range(3):
        r = b - K @ x
        if np.max(np.abs(r)) <= tol_linear * scale:
            break
        x = x + lu.solve(r)
    return x[:-1], float(x[-1])


@dataclass
class _NewtonResult:
    v: np.ndarray
    k: float
    converged: bool
    iterations: int
    trace: list


def _damped_newton(G, jac, admissible, v0: np.ndarray, k0: float, glue: ChartGlue,
                   cfg: SolverConfig, done=None) -> _NewtonResult:
    """Newton on ``G(v, k) = 0`` plus the gauge row, halving steps as needed.

    ``k`` is the scalar bordering unknown whose column is the owned-row
    indicator.  A step is accepted when the trial point is admissible and the
    residual sup-norm decreases.  Iteration stops once the residual is below
    ``tol_newton`` and the last accepted update was below it too, so a large
    step that happens to land on a small residual is followed by one polish.
    """
    border = glue.owned.astype(float)
    v, k = v0.copy(), k0
    res = G(v, k)
    trace = []
    it = 0
    converged = False
    last = 0.0
    while True:
        gauge = float(glue.gauge_weights @ v)
        rnorm = float(np.max(np.abs(res)))
        trace.append(rnorm)
        if rnorm <= cfg.tol_newton and abs(gauge) <= 1e-12 and last <= cfg.tol_newton:
            # the bordered system is solved; ``done`` may still reject a
            # discretization floor, which further steps cannot lower
            converged = done is None or done(v, k)
            break
        if it >= cfg.max_iter:
            break
        J = jac(v)
        dv, dk = _bordered_solve(J, border, glue.gauge_weights, -res, -gauge, cfg.tol_linear)
        step = 1.0
        for _ in range(cfg.max_halvings + 1):
            tv, tk = v + step * dv, k + step * dk
            if admissible(tv):
                tres = G(tv, tk)
                tnorm = float(np.max(np.abs(tres)))
                if np.isfinite(tnorm) and (tnorm <= (1 - 1e-4 * step) * rnorm or tnorm <= cfg.tol_newton):
                    break
            step *= 0.5
        else:
            log.info("newton: step rejected after %d halvings (|G|=%.3e)", cfg.max_halvings, rnorm)
            break
        last = step * float(np.max(np.abs(dv)))
        v, k, res = tv, tk, tres
        it += 1
        log.debug("newton it=%d step=%.3g |G|=%.3e", it, step, tnorm)
    return _NewtonResult(v, k, converged, it, trace)


def _initial_vector(glue: ChartGlue, init: ScalarField | None) -> np.ndarray:
    if init is None:
        return np.zeros(glue.size)
    if init.grid != glue.grid:
        raise ValueError("initial guess lives on a different grid")
    return init.values.reshape(-1).copy()


def solve_calabi(prob: CalabiProblem, cfg: SolverConfig = SolverConfig(),
                 init: ScalarField | None = None) -> tuple[ScalarField, SolveReport]:
    """Damped Newton for ``eta0 + dd^c u = lam e^f eta0`` with ``int u eta0 = 0``.

    ``lam`` is the quadrature normalization constant.  The glued discrete
    operator has a one-dimensional cokernel, so a bordering shift on the owned
    rows absorbs the discrete compatibility defect; its size is reported as
    ``compatibility`` and it is not part of ``residual``.
    """
    t0 = time.perf_counter()
    glue = glue_for(prob.grid)
    lam = prob.lam
    c0 = prob.eta0.values.reshape(-1)
    target = lam * np.exp(prob.f.values.reshape(-1)) * c0
    border = glue.owned.astype(float)
    J = glue.assemble(glue.laplacian)

    def F(v):
        return glue.owned_diag @ (c0 + glue.laplacian @ v - target) + glue.transfer @ v

    def admissible(v):
        return bool(np.all((c0 + glue.laplacian @ v)[glue.owned] >= cfg.delta_pos))

    out = _damped_newton(lambda v, k: F(v) + k * border, lambda v: J, admissible,
                         _initial_vector(glue, init), 0.0, glue, cfg,
                         done=lambda v, k: float(np.max(np.abs(F(v)))) <= cfg.tol_newton)
    residual = float(np.max(np.abs(F(out.v))))
    report = SolveReport(
        converged=out.converged and residual <= cfg.tol_newton,
        iterations=out.iterations,
        residual=residual,
        lam=lam,
        gauge=float(glue.gauge_weights @ out.v),
        wall_ms=(time.perf_counter() - t0) * 1e3,
        compatibility=abs(out.k),
        trace=out.trace,
    )
    if not report.converged:
        if out.trace[-1] <= cfg.tol_newton:
            report.message = (f"discrete compatibility defect {abs(out.k):.3e} exceeds tol_newton; "
                              "refine the grid")
        else:
            report.message = "Newton iteration did not reach tol_newton"
    return glue.field(out.v), report


def calabi_jacobian(grid: GridSpec) -> sp.csr_matrix:
    """Jacobian of the glued Calabi residual (owned rows and transfer rows)."""
    glue = glue_for(grid)
    return glue.assemble(glue.laplacian)


def calabi_system_residual(u: ScalarField, prob: CalabiProblem) -> np.ndarray:
    """The glued residual vector the Calabi Newton iteration drives to zero."""
    glue = glue_for(u.grid)
    v = u.values.reshape(-1)
    c0 = prob.eta0.values.reshape(-1)
    target = prob.lam * np.exp(prob.f.values.reshape(-1)) * c0
    return glue.owned_diag @ (c0 + glue.laplacian @ v - target) + glue.transfer @ v


# ---------------------------------------------------------------------------
# Aubin family

AUBIN_EPSILONS = (-1.0, 0.0, 1.0)
CONTINUATION_STEP = 0.25


def aubin_system_residual(psi: ScalarField, const: float, eps: float, prob: CalabiProblem) -> np.ndarray:
    """``log((eta0 - dd^c psi)/eta0) - eps psi - f - const`` on owned rows, transfer rows elsewhere."""
    glue = glue_for(psi.grid)
    v = psi.values.reshape(-1)
    return _aubin_G(glue, prob, eps)(v, -const)


def aubin_jacobian(psi: ScalarField, eps: float, prob: CalabiProblem) -> sp.csr_matrix:
    glue = glue_for(psi.grid)
    return _aubin_jac(glue, prob, eps)(psi.values.reshape(-1))


def _aubin_G(glue: ChartGlue, prob: CalabiProblem, eps: float):
    c0 = prob.eta0.values.reshape(-1)
    f = prob.f.values.reshape(-1)
    owned = glue.owned

    def G(v, k):
        dens = c0 - glue.laplacian @ v
        out = np.zeros_like(v)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[owned] = (np.log(dens[owned] / c0[owned]) - eps * v[owned] - f[owned] + k)
        return out + glue.transfer @ v

    return G


def _aubin_jac(glue: ChartGlue, prob: CalabiProblem, eps: float):
    c0 = prob.eta0.values.reshape(-1)

    def jac(v):
        dens = c0 - glue.laplacian @ v
        row = sp.diags(-1.0 / dens) @ glue.laplacian - eps * sp.identity(glue.size)
        return glue.assemble(row)

    return jac


def _aubin_once(eps: float, prob: CalabiProblem, cfg: SolverConfig, v0: np.ndarray, k0: float):
    glue = glue_for(prob.grid)
    c0 = prob.eta0.values.reshape(-1)

    def admissible(v):
        return bool(np.all((c0 - glue.laplacian @ v)[glue.owned] >= cfg.delta_pos))

    if not admissible(v0):
        raise ValueError("initial guess violates eta0 - dd^c psi > 0")
    return _damped_newton(_aubin_G(glue, prob, eps), _aubin_jac(glue, prob, eps),
                          admissible, v0, k0, glue, cfg)


def solve_aubin(eps: float, prob: CalabiProblem, cfg: SolverConfig = SolverConfig(),
                init: ScalarField | None = None) -> tuple[ScalarField, SolveReport]:
    """Solve ``log(det(eta0 - dd^c psi)/det eta0) = eps psi + f + const``.

    ``const`` is solved for jointly with ``psi`` (it is the bordering unknown)
    and reported in the ``lam`` slot.  ``eps = 1`` is reached by continuation
    from ``eps = 0`` in steps of 0.25; failure along the path is reported, not
    raised.
    """
    if eps not in AUBIN_EPSILONS:
        raise ValueError(f"eps must be one of {AUBIN_EPSILONS}")
    t0 = time.perf_counter()
    glue = glue_for(prob.grid)
    v = _initial_vector(glue, init)
    k = 0.0
    if eps <= 0:
        path = [eps]
    else:
        n = int(round(eps / CONTINUATION_STEP))
        path = [CONTINUATION_STEP * j for j in range(n + 1)]
    trace = []
    out = None
    for e in path:
        out = _aubin_once(e, prob, cfg, v, k)
        trace.append({"eps": e, "iterations": out.iterations, "residual": out.trace[-1],
                      "converged": out.converged})
        if not out.converged:
            break
        v, k = out.v, out.k
    assert out is not None
    report = SolveReport(
        converged=out.converged and len(trace) == len(path),
        iterations=sum(t["iterations"] for t in trace),
        residual=float(out.trace[-1]),
        lam=-float(out.k),
        gauge=float(glue.gauge_weights @ out.v),
        wall_ms=(time.perf_counter() - t0) * 1e3,
        trace=trace,
    )
    if not report.converged:
        report.message = f"no convergence at eps={trace[-1]['eps']}"
        if eps == 1:
            report.message += " (eps = 1 is not guaranteed to converge)"
    return glue.field(out.v), report


# ---------------------------------------------------------------------------
# random band-limited data

BAND_PRIMITIVES = ("h1", "re_w1", "im_w1", "re_w2", "im_w2")


def random_band_limited(grid: GridSpec, amplitude: float, seed: int) -> ScalarField:
    """Random combination of degree <= 2 spherical harmonics with sup-norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(len(BAND_PRIMITIVES))
    v = sum(c * ScalarField.from_expression(p, grid).values for c, p in zip(coef, BAND_PRIMITIVES))
    return ScalarField(grid, v * (amplitude / np.max(np.abs(v))))


# ---------------------------------------------------------------------------
# D-operator and the uniqueness chain


def d_operator(f: ScalarField, alpha: Form11Field, m: int = 1) -> ScalarField:
    """``D(f) = dd^c f ^ alpha^(m-1) / alpha^m``; on the grid only ``m = 1``."""
    if m != 1:
        raise ValueError("grid D-operator is only defined for transverse dimension 1")
    if not alpha.is_positive():
        raise ValueError("alpha must be positive at every node")
    return ddc(f).ratio(alpha)


def d_operator_pointwise(hessian: HermitianValue, alpha: HermitianValue) -> float:
    """``dd^c f ^ alpha^(m-1) / alpha^m = tr(alpha^-1 H) / m`` at one point."""
    if not alpha.is_positive():
        raise HermitianError("alpha must be positive")
    m = alpha.m
    return float(np.trace(np.linalg.solve(alpha.matrix, hessian.matrix)).real) / m


def rho_mix(eta1, eta2, n: int):
    """``rho = sum_{k+l=n-2} eta1^k ^ eta2^l`` in dual representation.

    For ``n = 2`` this is the scalar 1.  Otherwise ``eta1, eta2`` are
    ``HermitianValue`` of dimension ``m = n - 1`` and the result is the dual
    matrix of the ``(m-1, m-1)``-form ``rho``.
    """
    if n == 2:
        for e in (eta1, eta2):
            if isinstance(e, Form11Field) and not e.is_positive():
                raise ValueError("rho_mix needs positive inputs")
        return 1.0
    m = n - 1
    if m not in (2, 3):
        raise ValueError("rho_mix supports n in {2, 3, 4}")
    for e in (eta1, eta2):
        if e.m != m or not e.is_positive():
            raise HermitianError("rho_mix needs positive inputs of dimension n - 1")
    A, B = eta1.matrix, eta2.matrix
    if m == 2:
        P = adjugate(A) + adjugate(B)
    else:
        # eta1^2 + eta1 eta2 + eta2^2, with a^2/2 dual to adj(a) and polarization for the cross term
        P = adjugate(A + B) + adjugate(A) + adjugate(B)
    return HermitianValue(P, dual=True)


def rho_root(rho: HermitianValue) -> HermitianValue:
    """Form ``alpha`` with ``alpha^(m-1) = rho`` (unnormalized power)."""
    m = rho.m
    return root_extract(HermitianValue(rho.matrix / math.factorial(m - 1), dual=True), m)


@dataclass
class UniquenessVerdict:
    verdict: str
    psi_oscillation: float
    d_sup: float
    residuals: tuple[float, float]

    @property
    def unique(self) -> bool:
        return self.verdict == "unique"


def uniqueness_check(u1: ScalarField, u2: ScalarField, prob: CalabiProblem,
                     tol: float = 1e-8) -> UniquenessVerdict:
    """Run ``D(psi) = 0 => psi constant`` on two solutions of the same problem.

    ``psi = u1 - u2`` plays ``log(phi1/phi2)``; for transverse dimension one
    ``rho = 1`` so ``alpha = eta0``.
    """
    r1 = calabi_residual(u1, prob).sup
    r2 = calabi_residual(u2, prob).sup
    psi = u1 - u2
    glue = glue_for(prob.grid)
    d = d_operator(psi, prob.eta0).values.reshape(-1)
    d_sup = float(np.max(np.abs(d[glue.owned])))
    mean = integrate(prob.eta0 * psi) / integrate(prob.eta0)
    osc = float(np.max(np.abs(psi.values - mean)))
    if max(r1, r2) > tol:
        verdict = "inapplicable"
    elif d_sup <= tol and osc <= 1e-8:
        verdict = "unique"
    else:
        verdict = "not-unique"
    return UniquenessVerdict(verdict, osc, d_sup, (r1, r2))


@dataclass
class KernelSummary:
    singular_values: tuple[float, float]
    constant_cosine: float
    kernel_oscillation: float
    size: int


def d_operator_matrix(alpha: Form11Field) -> sp.csr_matrix:
    """Glued matrix of ``D = dd^c / alpha`` (owned rows) with transfer rows."""
    if not alpha.is_positive():
        raise ValueError("alpha must be positive at every node")
    glue = glue_for(alpha.grid)
    inv = 1.0 / alpha.values.reshape(-1)
    return glue.assemble(sp.diags(inv) @ glue.laplacian)


def kernel_check(alpha: Form11Field, m: int = 1) -> KernelSummary:
    """Two smallest singular values of the glued D-operator and its kernel direction."""
    if m != 1:
        raise ValueError("kernel_check is implemented for m = 1")
    D = d_operator_matrix(alpha).toarray()
    try:
        _, svals, vt = np.linalg.svd(D)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise RuntimeError(f"D-operator SVD failed: {exc}") from exc
    kernel = vt[-1]
    ones = np.ones_like(kernel) / math.sqrt(kernel.size)
    cos = abs(float(kernel @ ones))
    k = kernel / kernel[np.argmax(np.abs(kernel))]
    return KernelSummary((float(svals[-1]), float(svals[-2])), cos,
                         float(k.max() - k.min()), kernel.size)
