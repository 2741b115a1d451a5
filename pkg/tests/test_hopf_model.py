import numpy as np
import pytest

from lcklab import oracle
from lcklab.chart_calculus import GridSpec, ScalarField
from lcklab.hopf_model import (
    VERIFY_THRESHOLDS,
    AmbientSample,
    AnalyticModeRequired,
    AutomorphicPotential,
    NotLCKError,
    check_gauduchon,
    check_homogeneity,
    check_lck,
    check_vaisman,
    christoffel,
    complex_structure,
    determinant_ratio_check,
    einstein_weyl,
    eta_check,
    fd_jacobian,
    lee_norms,
    psi_flow_check,
    tensors_at,
    verify,
    weyl_connection_at,
    weyl_metricity_defect,
    weyl_ricci_at,
    _Calculus,
)

STD = AutomorphicPotential.standard()
BUMP = AutomorphicPotential(u="0.1*h1")
CONTROL = AutomorphicPotential.non_automorphic()


@pytest.fixture(scope="module")
def batch():
    return AmbientSample.random(2, 2.0, 20, seed=3)


def flat_form(n):
    J = complex_structure(n)
    return -4 * J  # dd^c |z|^2 with J dx = dy


# -- construction ------------------------------------------------------------

def test_potential_validation():
    with pytest.raises(ValueError):
        AutomorphicPotential(n=4)
    with pytest.raises(ValueError):
        AutomorphicPotential(q=1.0)
    with pytest.raises(ValueError):
        AutomorphicPotential(n=3, u=ScalarField.constant(0.0, GridSpec(32)))


def test_sample_validation():
    with pytest.raises(ValueError):
        AmbientSample(np.array([1.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        AmbientSample.point([0.05, 0])
    s = AmbientSample.random(2, 2.0, 50, seed=1)
    s.check_annulus(2.0)
    with pytest.raises(ValueError):
        AmbientSample.point([3, 0]).check_annulus(2.0)


def test_weight_two_and_equivariance(batch):
    p = AutomorphicPotential(u="0.2*h1 + 0.1*re_w1")
    x = batch.x
    for t in (0.3, 1.7, 2.0):
        assert np.allclose(p.phi(t * x), t * t * p.phi(x), rtol=1e-13)


def test_fd_jacobian_polynomial():
    x = np.array([[0.7, -0.2, 1.1]])
    J = fd_jacobian(lambda y: y[..., 0] ** 3 * y[..., 1] + y[..., 2] ** 2, x, 1e-2)
    assert np.allclose(J, [[3 * 0.49 * -0.2, 0.343, 2.2]], atol=1e-10)


# -- tensors ------------------------------------------------------------------

def test_standard_at_unit_vector():
    t = tensors_at(STD, AmbientSample.point([1, 0]))
    assert t.phi[0] == pytest.approx(1.0)
    # theta = -d log phi under our convention; d log |z|^2 = 2 dx1 here
    assert np.allclose(t.theta[0], [-2, 0, 0, 0], atol=1e-10)
    assert np.allclose(t.omega_tilde[0], flat_form(2), atol=1e-9)


def test_standard_omega_tilde_is_flat(batch):
    t = tensors_at(STD, batch)
    assert np.max(np.abs(t.omega_tilde - flat_form(2))) < 1e-8


def test_tensor_invariants(batch):
    t = tensors_at(BUMP, batch)
    wt = t.omega_tilde
    assert np.max(np.abs(wt + np.swapaxes(wt, -1, -2))) < 1e-12
    assert np.max(np.abs(t.J.T @ wt @ t.J - wt)) < 1e-8
    assert np.all(np.linalg.eigvalsh(t.g)[:, 0] > 0)
    assert np.allclose(t.omega, wt / t.phi[:, None, None])
    jt = t.j_theta
    wedge = t.theta[:, :, None] * jt[:, None, :] - jt[:, :, None] * t.theta[:, None, :]
    assert np.allclose(t.eta, t.omega - wedge)


def test_lee_norms(batch):
    # |theta|^2_g is 1 in our normalization; g_tilde(theta_sharp, theta_sharp) = phi
    a, b = lee_norms(STD, batch)
    assert np.allclose(a, 1.0, atol=1e-9)
    assert np.allclose(b, STD.phi(batch.x), rtol=1e-9)
    a, b = lee_norms(BUMP, batch)
    assert np.allclose(a, 1.0, atol=1e-8)
    assert np.allclose(b, BUMP.phi(batch.x), rtol=1e-8)


def test_not_lck_rejected():
    p = AutomorphicPotential(u="3*h1")
    with pytest.raises(NotLCKError, match="potential not LCK at sample"):
        tensors_at(p, AmbientSample.point([1, 0.1]))


def test_grid_mode_limits():
    g = GridSpec(32)
    pg = AutomorphicPotential(u=ScalarField.from_expression("0.1*h1", g))
    s = AmbientSample.random(2, 2.0, 10, seed=2)
    diff = tensors_at(pg, s).omega_tilde - tensors_at(BUMP, s).omega_tilde
    assert np.max(np.abs(diff)) < 1e-4
    for fn in (check_lck, check_gauduchon, check_vaisman, weyl_connection_at, weyl_ricci_at):
        with pytest.raises(AnalyticModeRequired, match="analytic mode required"):
            fn(pg, s)
    assert check_homogeneity(pg, s) < 1e-6


# -- eta ------------------------------------------------------------------------

@pytest.mark.parametrize("p", [STD, BUMP], ids=["zero", "bump"])
def test_eta_two_paths_and_kernel(p, batch):
    e = eta_check(p, batch)
    assert e.two_path <= 1e-6
    assert np.max(np.abs(e.kernel_eigs[:, :2])) <= 1e-6
    assert e.kernel_residual <= 1e-6
    assert e.margin >= 0.1


# -- predicates -------------------------------------------------------------------

def test_standard_predicates(batch):
    lck = check_lck(STD, batch)
    assert lck.residual <= 1e-8 and lck.closedness <= 1e-8
    assert check_homogeneity(STD, batch) <= 1e-8
    assert check_gauduchon(STD, batch) <= 1e-6
    assert check_vaisman(STD, batch) <= 1e-5


def test_automorphic_predicates(batch):
    assert check_lck(BUMP, batch).residual <= 1e-6
    assert check_homogeneity(BUMP, batch) <= 1e-6
    assert check_gauduchon(BUMP, batch) <= 1e-5
    assert check_vaisman(BUMP, batch) <= 1e-4


def test_negative_control(batch):
    assert check_lck(CONTROL, batch).residual > 1e-2
    assert check_homogeneity(CONTROL, batch) > 1e-2
    assert check_gauduchon(CONTROL, batch) > 1e-3
    assert check_vaisman(CONTROL, batch) > 1e-2


def test_predicates_dimension_three():
    p = AutomorphicPotential(n=3, u="0.1*h1")
    s = AmbientSample.random(3, 2.0, 5, seed=4)
    assert check_lck(p, s).residual <= 1e-6
    assert check_homogeneity(p, s) <= 1e-6
    assert check_vaisman(p, s) <= 1e-4
    assert eta_check(p, s).two_path <= 1e-6


# -- Weyl connection ----------------------------------------------------------------

def test_weyl_at_unit_vector():
    s = AmbientSample.point([1, 0])
    W = weyl_connection_at(STD, s)
    lc, g = christoffel(_Calculus(STD, s.h_amb), s.x)
    th = np.array([-2.0, 0, 0, 0])
    sharp = np.linalg.solve(g[0], th)
    corr = np.zeros((4, 4, 4))
    for k in range(4):
        for i in range(4):
            for j in range(4):
                corr[k, i, j] = th[i] * (k == j) + th[j] * (k == i) - g[0, i, j] * sharp[k]
    assert np.allclose(W.gamma[0], lc[0] - 0.5 * corr, atol=1e-8)
    assert W.torsion == 0.0


def test_weyl_metricity(batch):
    for p in (STD, BUMP):
        assert weyl_metricity_defect(p, batch) <= 1e-5
        assert weyl_connection_at(p, batch).torsion == 0.0


def test_ricci_predicate(batch):
    assert weyl_ricci_at(STD, batch) <= 1e-4
    assert einstein_weyl(STD, batch)
    assert weyl_ricci_at(STD.rescaled(3.5), batch) <= 1e-4
    big = AutomorphicPotential(u="0.3*h1")
    assert weyl_ricci_at(big, batch) > 1e-2
    assert not einstein_weyl(big, batch)
    assert weyl_ricci_at(BUMP.rescaled(0.4), batch) == pytest.approx(weyl_ricci_at(BUMP, batch), rel=1e-5)


# -- Psi and determinant ratio --------------------------------------------------------

def test_psi_flow(batch):
    same = psi_flow_check(BUMP, BUMP, batch)
    assert same.flow == 0.0 and same.monodromy == 0.0
    r = psi_flow_check(STD, BUMP, batch)
    assert r.flow <= 1e-5 and r.monodromy <= 1e-6
    with pytest.raises(ValueError):
        psi_flow_check(STD, AutomorphicPotential(q=3.0), batch)
    with pytest.raises(AnalyticModeRequired):
        psi_flow_check(STD, AutomorphicPotential(u=ScalarField.constant(0.0, GridSpec(32))), batch)


def test_determinant_ratio():
    s = AmbientSample.random(2, 2.0, 100, seed=9)
    same = determinant_ratio_check(BUMP, BUMP, s)
    assert same.residual <= 1e-12
    vr = determinant_ratio_check(STD, STD, s).volume_ratios
    assert np.ptp(vr) <= 1e-10
    assert vr[0] == pytest.approx(oracle.flat_volume_ratio(2).real, abs=1e-9)
    assert determinant_ratio_check(STD, BUMP, s).residual <= 1e-5
    with pytest.raises(ValueError):
        determinant_ratio_check(AutomorphicPotential(n=3), AutomorphicPotential(n=3), s)


# -- verify ---------------------------------------------------------------------------

def test_verify_report(batch):
    rep = verify(STD, batch)
    assert set(rep.values) == set(VERIFY_THRESHOLDS)
    assert rep.ok
    bad = verify(CONTROL, batch)
    assert not bad.ok and not bad.passed["lck"]


def test_fd_step_choice():
    s1 = AmbientSample.random(2, 2.0, 5, seed=6, h_amb=2e-2)
    s2 = AmbientSample(s1.x, 5e-3)
    assert eta_check(BUMP, s1).two_path <= 1e-6
    assert eta_check(BUMP, s2).two_path <= 1e-6
