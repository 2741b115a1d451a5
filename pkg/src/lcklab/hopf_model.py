"""Pointwise LCK geometry of the diagonal Hopf manifold ``(C^n \\ 0) / <z -> q z>``.

The cover carries the Kähler potential ``phi = |z|^2 exp(u o pi)`` with ``pi``
the projection to the leaf space CP^(n-1).  The transverse function ``u`` is
written in the leaf-space primitives; for ``n = 3`` they are evaluated on
``(z1, z2)`` with the full ``|z|^2`` as normalization.  Every tensor is obtained
from ``phi`` by nested central differences in the real coordinates
``x = (x1, y1, x2, y2, ...)`` with ``z_a = x_a + i y_a``, each level carrying
one Richardson extrapolation.

Conventions
-----------
* ``J d/dx_a = d/dy_a``; ``d^c f = -df o J``, so that ``dd^c |z|^2 = 4 sum dx^dy``.
* Two-forms are antisymmetric matrices ``W`` with ``w = sum_{i<j} W_ij dx^i ^ dx^j``;
  the metric of a form is ``g(X, Y) = w(X, JY)``, i.e. ``G = W J``.
* ``omega = omega_tilde / phi`` and the Lee form is ``theta = -d log phi`` so
  that ``d omega = theta ^ omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .chart_calculus import SOLVER_INTERP_POINTS, ScalarField, interpolate
from .expressions import Expression, parse

H_AMB = 1e-2
TOL_EW = 1e-3


class AnalyticModeRequired(ValueError):
    """Raised when a grid-mode potential is asked for third or higher derivatives."""

    def __init__(self, what: str = "") -> None:
        super().__init__(f"analytic mode required{': ' + what if what else ''}")


class NotLCKError(ValueError):
    pass


# ---------------------------------------------------------------------------
# finite differences


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    """Derivative of a batched function, derivative index last.

    ``fn`` maps ``(..., d)`` to ``(..., *out)`` and must broadcast over leading
    axes.  Central differences at steps ``h`` and ``h/2`` combined by one
    Richardson level, so the error is ``O(h^4)``.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    hl = h * np.linalg.norm(x, axis=-1)  # scale-aware step
    steps = np.array([1.0, -1.0, 0.5, -0.5])
    off = hl[..., None, None, None] * steps[:, None, None] * np.eye(d)[None, :, :]  # (..., 4, d, d)
    F = np.asarray(fn(x[..., None, None, :] + off))
    lead = x.ndim - 1
    F = np.moveaxis(F, (lead, lead + 1), (-2, -1)) if F.ndim > lead + 2 else F
    # F now has shape (..., *out, 4, d)
    hb = hl.reshape(hl.shape + (1,) * (F.ndim - lead - 1))
    d_h = (F[..., 0, :] - F[..., 1, :]) / (2 * hb)
    d_h2 = (F[..., 2, :] - F[..., 3, :]) / hb
    return (4 * d_h2 - d_h) / 3


def complex_structure(n: int) -> np.ndarray:
    J = np.zeros((2 * n, 2 * n))
    for a in range(n):
        J[2 * a + 1, 2 * a] = 1.0
        J[2 * a, 2 * a + 1] = -1.0
    return J


def ddc_matrix(H: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Matrix of ``dd^c f`` from the real Hessian of ``f``."""
    return -(H @ J) - (J @ H)


def complex_hessian(H: np.ndarray) -> np.ndarray:
    """``d^2 f / dz_a dz_b-bar`` from the real Hessian (batched)."""
    xx = H[..., 0::2, 0::2]
    yy = H[..., 1::2, 1::2]
    xy = H[..., 0::2, 1::2]
    yx = H[..., 1::2, 0::2]
    return 0.25 * (xx + yy + 1j * (xy - yx))


def wedge11(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., :, None] * b[..., None, :] - a[..., None, :] * b[..., :, None]


def pfaffian4(W: np.ndarray) -> np.ndarray:
    return W[..., 0, 1] * W[..., 2, 3] - W[..., 0, 2] * W[..., 1, 3] + W[..., 0, 3] * W[..., 1, 2]


# ---------------------------------------------------------------------------
# potentials and samples


@dataclass(frozen=True)
class AutomorphicPotential:
    """``phi = |z|^2 exp(u o pi)`` on ``C^n \\ 0`` with deck factor ``q``.

    ``u`` is an expression (analytic mode) or a ``ScalarField`` on the leaf-space
    grid (grid mode, ``n = 2`` only).  ``offset`` is a test hook: a nonzero value
    gives the non-automorphic ansatz ``phi = |z|^2 + offset`` (``u`` is ignored).
    """

    n: int = 2
    q: float = 2.0
    u: Expression | ScalarField | str = "0"
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self) -> None:
        if self.n not in (2, 3):
            raise ValueError("n must be 2 or 3")
        if not (np.isfinite(self.q) and self.q > 1):
            raise ValueError("deck factor q must be real and > 1")
        if isinstance(self.u, str):
            object.__setattr__(self, "u", parse(self.u))
        if isinstance(self.u, ScalarField) and self.n != 2:
            raise ValueError("grid-mode u requires n = 2")

    @classmethod
    def standard(cls, n: int = 2, q: float = 2.0) -> "AutomorphicPotential":
        return cls(n, q, "0")

    @classmethod
    def non_automorphic(cls, n: int = 2, q: float = 2.0) -> "AutomorphicPotential":
        """Negative control ``phi = |z|^2 + 1``."""
        return cls(n, q, "0", offset=1.0)

    @property
    def analytic(self) -> bool:
        return isinstance(self.u, Expression)

    def require_analytic(self, what: str) -> None:
        if not self.analytic:
            raise AnalyticModeRequired(what)

    def transverse(self, x: np.ndarray) -> np.ndarray:
        """``u o pi`` at real points ``x`` of shape ``(..., 2n)``."""
        z1 = x[..., 0] + 1j * x[..., 1]
        z2 = x[..., 2] + 1j * x[..., 3]
        if self.analytic:
            if self.u.is_zero:
                return np.zeros(x.shape[:-1])
            # |z|^2 normalization makes u smooth on CP^(n-1) for n = 3 as well
            return self.u.evaluate_homogeneous(z1, z2, np.sum(x * x, axis=-1))
        return self._grid_value(z1, z2)

    def _grid_value(self, z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
        f: ScalarField = self.u
        z1, z2 = np.broadcast_arrays(z1, z2)
        out = np.empty(z1.shape)
        first = np.abs(z2) <= np.abs(z1)
        for chart, mask, w in ((0, first, z2[first] / z1[first]),
                               (1, ~first, z1[~first] / z2[~first])):
            if mask.any():
                out[mask] = interpolate(f.grid, f.values[chart], w, SOLVER_INTERP_POINTS)
        return out

    def phi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        if self.offset:
            return self.scale * (r2 + self.offset)
        return self.scale * r2 * np.exp(self.transverse(x))

    def log_phi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        if self.offset:
            return np.log(self.scale * (r2 + self.offset))
        return math.log(self.scale) + np.log(r2) + self.transverse(x)

    def rescaled(self, c: float) -> "AutomorphicPotential":
        return AutomorphicPotential(self.n, self.q, self.u, self.scale * c, self.offset)


@dataclass(frozen=True)
class AmbientSample:
    """A batch of points of ``C^n \\ 0`` in the fundamental annulus ``1/q <= |z| <= q``."""

    x: np.ndarray
    h_amb: float = H_AMB

    def __post_init__(self) -> None:
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if x.shape[-1] % 2:
            raise ValueError("sample coordinates must come in real pairs")
        object.__setattr__(self, "x", x)
        if self.h_amb >= np.min(np.linalg.norm(x, axis=-1)) / 10:
            raise ValueError("h_amb must be below |z|/10")

    @classmethod
    def random(cls, n: int, q: float, count: int, seed: int = 0, h_amb: float = H_AMB) -> "AmbientSample":
        rng = np.random.default_rng(seed)
        d = rng.standard_normal((count, 2 * n))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        r = q ** rng.uniform(-1.0, 1.0, count)
        return cls(d * r[:, None], h_amb)

    @classmethod
    def point(cls, z, h_amb: float = H_AMB) -> "AmbientSample":
        z = np.asarray(z, dtype=complex)
        x = np.stack([z.real, z.imag], axis=-1).reshape(-1)
        return cls(x, h_amb)

    def check_annulus(self, q: float) -> None:
        r = np.linalg.norm(self.x, axis=-1)
        if np.any(r < 1 / q - 1e-12) or np.any(r > q + 1e-12):
            raise ValueError("sample outside the fundamental annulus [1/q, q]")

    def __len__(self) -> int:
        return self.x.shape[0]


# ---------------------------------------------------------------------------
# structure tensors


class _Calculus:
    """Batched derivatives of one potential at one step size."""

    def __init__(self, p: AutomorphicPotential, h: float):
        self.p = p
        self.h = h
        self.J = complex_structure(p.n)

    def grad(self, fn, x):
        return fd_jacobian(fn, x, self.h)

    def hess(self, fn, x):
        H = fd_jacobian(lambda y: fd_jacobian(fn, y, self.h), x, self.h)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def omega_tilde(self, x):
        return ddc_matrix(self.hess(self.p.phi, x), self.J)

    def theta(self, x):
        return -self.grad(self.p.log_phi, x)

    def omega(self, x):
        return self.omega_tilde(x) / self.p.phi(x)[..., None, None]

    def metric(self, x):
        G = self.omega(x) @ self.J
        return 0.5 * (G + np.swapaxes(G, -1, -2))

    def log_det_complex_hessian(self, x):
        C = complex_hessian(self.hess(self.p.phi, x))
        sign, logdet = np.linalg.slogdet(C)
        return logdet.real


@dataclass(frozen=True)
class StructureTensors:
    """LCK structure at a batch of sample points (leading axis = sample)."""

    phi: np.ndarray
    theta: np.ndarray
    theta_sharp: np.ndarray
    omega_tilde: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    J: np.ndarray

    @cached_property
    def g(self) -> np.ndarray:
        G = self.omega @ self.J
        return 0.5 * (G + np.swapaxes(G, -1, -2))

    @cached_property
    def g_tilde(self) -> np.ndarray:
        G = self.omega_tilde @ self.J
        return 0.5 * (G + np.swapaxes(G, -1, -2))

    @property
    def j_theta(self) -> np.ndarray:
        """``J theta := -theta o J``."""
        return self.theta @ self.J.T

    def eta_kernel_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the symmetric form ``eta(X, JY)``, ascending, per sample."""
        S = self.eta @ self.J
        return np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))


def tensors_at(p: AutomorphicPotential, s: AmbientSample) -> StructureTensors:
    """All pointwise tensors at the sample batch; raises if ``omega_tilde`` is not positive."""
    c = _Calculus(p, s.h_amb)
    x = s.x
    phi = p.phi(x)
    wt = c.omega_tilde(x)
    J = c.J
    gt = wt @ J
    gt = 0.5 * (gt + np.swapaxes(gt, -1, -2))
    if np.any(np.linalg.eigvalsh(gt)[..., 0] <= 0):
        raise NotLCKError("potential not LCK at sample")
    theta = c.theta(x)
    omega = wt / phi[..., None, None]
    g = gt / phi[..., None, None]
    sharp = np.linalg.solve(g, theta[..., None])[..., 0]
    eta = omega - wedge11(theta, theta @ J.T)
    return StructureTensors(phi, theta, sharp, wt, omega, eta, J)


def eta_via_dc_theta(p: AutomorphicPotential, s: AmbientSample) -> np.ndarray:
    """Second path to ``eta``: ``d^c theta = dd^c log phi`` from the Hessian of ``log phi``."""
    c = _Calculus(p, s.h_amb)
    return ddc_matrix(c.hess(p.log_phi, s.x), c.J)


@dataclass(frozen=True)
class EtaComparison:
    two_path: float
    kernel_eigs: np.ndarray
    kernel_residual: float
    margin: float


def eta_check(p: AutomorphicPotential, s: AmbientSample) -> EtaComparison:
    """Compare the two ``eta`` paths and inspect its kernel.

    ``margin`` is the smallest ratio, over samples, of the third eigenvalue of
    ``eta(X, JY)`` to the median positive eigenvalue.
    """
    t = tensors_at(p, s)
    e2 = eta_via_dc_theta(p, s)
    two_path = float(np.max(np.abs(t.eta - e2)))
    eigs = t.eta_kernel_eigenvalues()
    kern = np.concatenate([t.eta @ t.theta_sharp[..., None], t.eta @ (t.theta_sharp @ t.J.T)[..., None]], axis=-1)
    scale = np.linalg.norm(t.theta_sharp, axis=-1)[:, None, None]
    med = np.median(eigs[:, 2:], axis=-1)
    return EtaComparison(two_path, eigs, float(np.max(np.abs(kern / scale))),
                         float(np.min(eigs[:, 2] / med)))


def lee_norms(p: AutomorphicPotential, s: AmbientSample) -> tuple[np.ndarray, np.ndarray]:
    """``|theta|_g^2`` and ``g_tilde(theta_sharp, theta_sharp)`` per sample."""
    t = tensors_at(p, s)
    th = t.theta_sharp
    return (np.einsum("ki,ki->k", t.theta, th),
            np.einsum("ki,kij,kj->k", th, t.g_tilde, th))


# ---------------------------------------------------------------------------
# predicates


@dataclass(frozen=True)
class LCKResidual:
    identity: float
    closedness: float
    descent: float

    @property
    def residual(self) -> float:
        return max(self.identity, self.descent)


def g_sup(T: np.ndarray, g: np.ndarray) -> float:
    """Sup of the components of a covariant tensor in a ``g``-orthonormal frame.

    ``T`` and ``g`` carry one leading sample axis.  Frame norms are invariant
    under the deck group, so residuals are comparable across the annulus.
    """
    try:
        M = np.swapaxes(np.linalg.inv(np.linalg.cholesky(g)), -1, -2)
    except np.linalg.LinAlgError:
        raise NotLCKError("potential not LCK at sample") from None
    k = T.ndim - 1
    idx = "abcdef"[:k]
    spec = "z" + "".join(idx) + "," + ",".join(f"z{c}{c.upper()}" for c in idx) + "->z" + idx.upper()
    return float(np.max(np.abs(np.einsum(spec, T, *([M] * k)))))


def _cyclic3(T: np.ndarray) -> np.ndarray:
    """``(dW)_{ijk}`` from ``T[..., i, j, k] = d_k W_ij``."""
    return (np.einsum("...jki->...ijk", T) + np.einsum("...kij->...ijk", T)
            + np.einsum("...ijk->...ijk", T))


def check_lck(p: AutomorphicPotential, s: AmbientSample) -> LCKResidual:
    """``d omega - theta ^ omega``, ``d theta`` and deck invariance of ``omega``, ``theta``."""
    p.require_analytic("check_lck")
    c = _Calculus(p, s.h_amb)
    x = s.x
    om = c.omega(x)
    th = c.theta(x)
    dom = _cyclic3(c.grad(c.omega, x))
    # (theta ^ omega)_ijk = th_i om_jk - th_j om_ik + th_k om_ij
    tw = (th[..., :, None, None] * om[..., None, :, :]
          - th[..., None, :, None] * om[..., :, None, :]
          + th[..., None, None, :] * om[..., :, :, None])
    g = c.metric(x)
    ident = g_sup(dom - tw, g)
    dth = c.grad(c.theta, x)
    closed = g_sup(dth - np.swapaxes(dth, -1, -2), g)
    q = p.q
    desc = max(g_sup(q * q * c.omega(q * x) - om, g), g_sup(q * c.theta(q * x) - th, g))
    return LCKResidual(ident, closed, desc)


def _euler_lie(fn, x, weight_scale, h):
    """``d/dt|_0 weight_scale(e^t) * fn(e^t x)`` by Richardson central differences."""
    def at(t):
        return weight_scale(math.exp(t)) * fn(math.exp(t) * x)
    d_h = (at(h) - at(-h)) / (2 * h)
    d_h2 = (at(h / 2) - at(-h / 2)) / h
    return (4 * d_h2 - d_h) / 3


def check_homogeneity(p: AutomorphicPotential, s: AmbientSample) -> float:
    """``max(|Lie_v omega_tilde - 2 omega_tilde|, |Lie_v phi / phi - 2|)`` with ``v`` the Euler field.

    The form residual is measured in the frame of ``g_tilde``.
    """
    c = _Calculus(p, s.h_amb)
    x = s.x
    wt = c.omega_tilde(x)
    lie_w = _euler_lie(c.omega_tilde, x, lambda t: t * t, s.h_amb)
    phi = p.phi(x)
    lie_p = _euler_lie(p.phi, x, lambda t: 1.0, s.h_amb)
    gt = wt @ c.J
    gt = 0.5 * (gt + np.swapaxes(gt, -1, -2))
    return max(g_sup(lie_w - 2 * wt, gt), float(np.max(np.abs(lie_p / phi - 2))))


def check_gauduchon(p: AutomorphicPotential, s: AmbientSample) -> float:
    """``max |d* theta|`` with ``d* theta = -(1/sqrt g) d_i(sqrt g g^ij theta_j)``."""
    p.require_analytic("check_gauduchon")
    c = _Calculus(p, s.h_amb)

    def flux(y):
        g = c.metric(y)
        vol = np.sqrt(np.linalg.det(g))
        return vol[..., None] * np.linalg.solve(g, c.theta(y)[..., None])[..., 0]

    x = s.x
    div = np.trace(c.grad(flux, x), axis1=-2, axis2=-1)
    vol = np.sqrt(np.linalg.det(c.metric(x)))
    return float(np.max(np.abs(div / vol)))


def christoffel(c: _Calculus, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Levi-Civita ``Gamma[..., k, i, j]`` and the metric at ``x``."""
    g = c.metric(x)
    dg = c.grad(c.metric, x)  # [..., i, j, k] = d_k g_ij
    # lower-index Gamma_{l,ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    low = 0.5 * (np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg)
                 - np.einsum("...ijl->...lij", dg))
    gam = np.einsum("...kl,...lij->...kij", np.linalg.inv(g), low)
    return 0.5 * (gam + np.swapaxes(gam, -1, -2)), g


def check_vaisman(p: AutomorphicPotential, s: AmbientSample) -> float:
    """``max |nabla^g theta|`` over components in a ``g``-orthonormal frame."""
    p.require_analytic("check_vaisman")
    c = _Calculus(p, s.h_amb)
    x = s.x
    gam, g = christoffel(c, x)
    th = c.theta(x)
    dth = np.swapaxes(c.grad(c.theta, x), -1, -2)  # [..., i, j] = d_i theta_j
    return g_sup(dth - np.einsum("...kij,...k->...ij", gam, th), g)


@dataclass(frozen=True)
class WeylConnection:
    """Coefficients ``gamma[..., k, i, j]`` of ``nabla_{e_i} e_j = gamma^k_ij e_k``."""

    gamma: np.ndarray
    levi_civita: np.ndarray
    metric: np.ndarray
    theta: np.ndarray

    @property
    def torsion(self) -> float:
        return float(np.max(np.abs(self.gamma - np.swapaxes(self.gamma, -1, -2))))


def weyl_connection_at(p: AutomorphicPotential, s: AmbientSample) -> WeylConnection:
    """``nabla = nabla^g - 1/2 (theta (x) Id + Id (x) theta - g (x) theta_sharp)``."""
    p.require_analytic("weyl_connection_at")
    c = _Calculus(p, s.h_amb)
    x = s.x
    lc, g = christoffel(c, x)
    th = c.theta(x)
    sharp = np.linalg.solve(g, th[..., None])[..., 0]
    eye = np.eye(g.shape[-1])
    corr = (th[..., None, :, None] * eye[:, None, :] + th[..., None, None, :] * eye[:, :, None]
            - g[..., None, :, :] * sharp[..., :, None, None])
    return WeylConnection(lc - 0.5 * corr, lc, g, th)


def weyl_metricity_defect(p: AutomorphicPotential, s: AmbientSample) -> float:
    """``max |nabla g - theta (x) g|`` for the Weyl connection."""
    W = weyl_connection_at(p, s)
    c = _Calculus(p, s.h_amb)
    dg = c.grad(c.metric, s.x)  # [..., i, j, k] = d_k g_ij
    g = W.metric
    G = W.gamma
    nab = (np.einsum("...ijk->...kij", dg)
           - np.einsum("...lki,...lj->...kij", G, g)
           - np.einsum("...lkj,...il->...kij", G, g))
    return g_sup(nab - W.theta[..., :, None, None] * g[..., None, :, :], g)


def weyl_ricci_at(p: AutomorphicPotential, s: AmbientSample) -> float:
    """``max |rho_tilde|`` (``g``-frame) with ``rho_tilde = -dd^c log det(d^2 phi / dz dz-bar)``."""
    p.require_analytic("weyl_ricci_at")
    c = _Calculus(p, s.h_amb)
    rho = -ddc_matrix(c.hess(c.log_det_complex_hessian, s.x), c.J)
    return g_sup(rho, c.metric(s.x))


def einstein_weyl(p: AutomorphicPotential, s: AmbientSample, tol: float = TOL_EW) -> bool:
    return weyl_ricci_at(p, s) <= tol


def _psi(p1: AutomorphicPotential, p2: AutomorphicPotential, h: float):
    c1, c2 = _Calculus(p1, h), _Calculus(p2, h)
    return lambda y: np.exp(c1.log_det_complex_hessian(y) - c2.log_det_complex_hessian(y))


def _same_family(p1: AutomorphicPotential, p2: AutomorphicPotential) -> None:
    if p1.q != p2.q or p1.n != p2.n:
        raise ValueError("potentials must share n and the deck factor q")
    p1.require_analytic("psi")
    p2.require_analytic("psi")


@dataclass(frozen=True)
class PsiFlow:
    flow: float
    monodromy: float


def psi_flow_check(p1: AutomorphicPotential, p2: AutomorphicPotential, s: AmbientSample) -> PsiFlow:
    """``max |Lie_{theta_sharp} Psi|`` and ``max |Psi(qz)/Psi(z) - 1|`` with ``Psi = omega1^n / omega2^n``."""
    _same_family(p1, p2)
    psi = _psi(p1, p2, s.h_amb)
    x = s.x
    sharp = tensors_at(p1, s).theta_sharp
    dpsi = fd_jacobian(psi, x, s.h_amb)
    flow = np.einsum("ki,ki->k", dpsi, sharp)
    mono = psi(p1.q * x) / psi(x) - 1
    return PsiFlow(float(np.max(np.abs(flow))), float(np.max(np.abs(mono))))


@dataclass(frozen=True)
class DeterminantRatio:
    residual: float
    volume_ratios: np.ndarray


def volume_ratio(wt: np.ndarray) -> np.ndarray:
    """``omega_tilde^2 / (Omega ^ Omega-bar)`` for ``n = 2``, ``Omega = dz1 ^ dz2``.

    ``omega^2 = 2 Pf(W) vol`` and ``dz1^dz2^dz1-bar^dz2-bar = 4 vol``.
    """
    return 2.0 * pfaffian4(wt) / 4.0


def determinant_ratio_check(p1: AutomorphicPotential, p2: AutomorphicPotential,
                            s: AmbientSample) -> DeterminantRatio:
    """``max |(det omega1 / det omega2) / Psi - (phi2/phi1)^n|`` and the flat volume ratios.

    ``det omega_i`` is taken from the real forms (Pfaffian), ``Psi`` from the
    complex Hessians, so the two sides come from independent code paths.
    """
    _same_family(p1, p2)
    if p1.n != 2:
        raise ValueError("determinant_ratio_check is implemented for n = 2")
    t1, t2 = tensors_at(p1, s), tensors_at(p2, s)
    lhs = pfaffian4(t1.omega) / pfaffian4(t2.omega) / _psi(p1, p2, s.h_amb)(s.x)
    rhs = (t2.phi / t1.phi) ** p1.n
    return DeterminantRatio(float(np.max(np.abs(lhs - rhs))), volume_ratio(t1.omega_tilde))


# ---------------------------------------------------------------------------
# one-call verification


@dataclass
class VerifyReport:
    values: dict
    thresholds: dict

    @property
    def passed(self) -> dict:
        return {k: self.values[k] <= self.thresholds[k] for k in self.thresholds}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


VERIFY_THRESHOLDS = {
    "lck": 1e-8, "dtheta": 1e-8, "homogeneity": 1e-8, "gauduchon": 1e-6,
    "vaisman": 1e-5, "weyl_metricity": 1e-5, "weyl_torsion": 0.0, "ricci": 1e-4,
}


def verify(p: AutomorphicPotential, s: AmbientSample, thresholds: dict | None = None) -> VerifyReport:
    """Run every ambient predicate on one sample batch."""
    lck = check_lck(p, s)
    vals = {
        "lck": lck.residual,
        "dtheta": lck.closedness,
        "homogeneity": check_homogeneity(p, s),
        "gauduchon": check_gauduchon(p, s),
        "vaisman": check_vaisman(p, s),
        "weyl_metricity": weyl_metricity_defect(p, s),
        "weyl_torsion": weyl_connection_at(p, s).torsion,
        "ricci": weyl_ricci_at(p, s),
    }
    return VerifyReport(vals, dict(thresholds or VERIFY_THRESHOLDS))
