import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcklab.chart_calculus import (
    ChartGlue,
    Form11Field,
    GridError,
    GridSpec,
    HermitianError,
    HermitianValue,
    ScalarField,
    adjugate,
    ddc,
    fubini_study_reference,
    hermitian_power,
    integrate,
    partition_weight,
    random_positive_hermitian,
    root_extract,
    root_extract_m2,
    transition_defect,
)
from lcklab.oracle import symbolic_ddc

SMOOTH = "exp(0.3*h1 + 0.2*re_w1 + 0.1*im_w2 + 0.1*re_w1*h1)"


# -- grid -------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(R=1.0), dict(N=16), dict(N=20, R=3.0), dict(order=2)])
def test_grid_rejects(kw):
    with pytest.raises(GridError):
        GridSpec(**kw)


def test_grid_defaults():
    g = GridSpec()
    assert (g.N, g.R) == (64, 1.5)
    assert math.isclose(g.h, 3.0 / 63)


def test_partition_of_unity_is_complementary():
    rho = np.geomspace(0.2, 5.0, 101)
    assert np.allclose(partition_weight(rho) + partition_weight(1 / rho), 1.0, atol=1e-15)
    g = GridSpec(32)
    ring = np.ones((32, 32), dtype=bool)
    ring[1:-1, 1:-1] = False
    assert np.max(g.chi[0][ring]) < 1e-12


def test_fields_reject_bad_input(grid32):
    v = np.zeros((2, 32, 32))
    v[0, 3, 3] = np.nan
    with pytest.raises(GridError):
        ScalarField(grid32, v)
    with pytest.raises(GridError):
        Form11Field(grid32, np.zeros((2, 31, 31)))


def test_fields_are_immutable(grid32):
    f = ScalarField.constant(1.0, grid32)
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 2.0


# -- ddc --------------------------------------------------------------------

def test_ddc_quadratic_is_four(grid32):
    u = ScalarField.from_expression("x**2 + y**2", grid32)
    comp = ddc(u).values[0][grid32.interior]
    assert np.allclose(comp, 4.0, atol=1e-10)


def test_ddc_constant_is_zero(grid32):
    assert np.max(np.abs(ddc(ScalarField.constant(2.5, grid32)).values)) < 1e-10


def test_ddc_log_potential_chart_a():
    # log(1 + |w|^2) is a potential, not a function on CP^1: compare chart A interior only
    g = GridSpec(64)
    u = ScalarField.from_expression("log(1 + absw2)", g)
    comp = ddc(u).values[0]
    assert abs(comp[31, 31] - 4 / (1 + abs(g.w[31, 31]) ** 2) ** 2) < 1e-5
    _, exact = symbolic_ddc("log(1 + absw2)")
    assert exact(0j) == pytest.approx(4.0, abs=1e-15)
    assert np.max(np.abs(comp - exact(g.w))[g.interior]) < 1e-5


def test_ddc_linear(grid32):
    u = ScalarField.from_expression("h1", grid32)
    v = ScalarField.from_expression("re_w2", grid32)
    lhs = ddc(u * 2.0 + v * -3.0).values
    rhs = 2.0 * ddc(u).values - 3.0 * ddc(v).values
    assert np.max(np.abs(lhs - rhs)) < 1e-9


@pytest.mark.parametrize("src", ["h1", "exp(0.3*h1)*re_w1", SMOOTH])
def test_ddc_matches_symbolic_oracle_with_convergence(src):
    _, exact = symbolic_ddc(src)
    errs = []
    for N in (32, 64):
        g = GridSpec(N)
        d = ddc(ScalarField.from_expression(src, g)).values[0]
        errs.append(np.max(np.abs(d - exact(g.w))))
    assert errs[1] < 1e-5
    assert errs[0] / errs[1] >= 14


def test_ddc_of_h1_is_first_eigenfunction(grid64):
    # dd^c h1 = -2 h1 eta0 on the round sphere
    u = ScalarField.from_expression("h1", grid64)
    lhs = ddc(u).values
    rhs = -2 * u.values * fubini_study_reference(grid64).values
    assert np.max(np.abs(lhs - rhs)) < 1e-5


def test_ddc_pluriharmonic_vanishes(grid64):
    u = ScalarField(grid64, np.stack([(grid64.w**3).real, (grid64.w**3).real]))
    assert np.max(np.abs(ddc(u).values[0][grid64.interior])) < 1e-8


def test_ddc_transition_rule():
    g = GridSpec(64)
    d = ddc(ScalarField.from_expression(SMOOTH, g))
    assert transition_defect(d) < 1e-6


def test_scalar_transition_defect(grid64):
    assert transition_defect(ScalarField.from_expression(SMOOTH, grid64)) < 1e-6


# -- reference form and quadrature ------------------------------------------

def test_fubini_study_values(grid64):
    eta = fubini_study_reference(grid64)
    assert eta.is_positive()
    w = grid64.w
    i0 = np.unravel_index(np.argmin(np.abs(w)), w.shape)
    assert eta.values[0][i0] == pytest.approx(4 / (1 + abs(w[i0]) ** 2) ** 2, abs=1e-15)
    assert 4 / (1 + 1.0) ** 2 == 1.0
    assert transition_defect(eta) < 1e-8


def test_integrate_reference_and_linearity(grid64, grid32):
    eta = fubini_study_reference(grid64)
    assert abs(integrate(eta) - 4 * math.pi) < 1e-6
    assert integrate(eta * 0.0) == 0.0
    assert abs(integrate(eta * 2.0) - 8 * math.pi) < 2e-6
    d32 = abs(integrate(fubini_study_reference(grid32)) - 4 * math.pi)
    d64 = abs(integrate(eta) - 4 * math.pi)
    assert d32 / max(d64, 1e-300) >= 14


def test_stokes():
    defects = [abs(integrate(ddc(ScalarField.from_expression(SMOOTH, GridSpec(N))))) for N in (32, 64)]
    assert defects[1] < 1e-8
    assert defects[0] / defects[1] >= 14


# -- Hermitian algebra ------------------------------------------------------

def test_hermitian_value_checks():
    with pytest.raises(HermitianError):
        HermitianValue(np.array([[1, 2], [0, 1]]))
    with pytest.raises(HermitianError):
        HermitianValue(np.eye(4))
    assert HermitianValue(np.diag([1.0, 2.0])).is_positive()
    assert not HermitianValue(np.diag([1.0, -2.0])).is_positive()


def test_power_examples():
    p = hermitian_power(HermitianValue(np.diag([2.0, 3.0])), 1)
    assert p.dual and np.allclose(p.matrix, np.diag([3.0, 2.0]))
    p = hermitian_power(HermitianValue(np.diag([1.0, 2.0, 3.0])), 2)
    assert np.allclose(p.matrix, np.diag([6.0, 3.0, 2.0]))
    assert hermitian_power(HermitianValue(np.diag([5.0, 7.0])), 0) == 1.0
    assert hermitian_power(HermitianValue(np.diag([5.0, 7.0])), 2) == pytest.approx(35.0)
    with pytest.raises(HermitianError):
        hermitian_power(HermitianValue(np.eye(2)), 3)


def test_root_examples():
    a = root_extract(HermitianValue(np.diag([3.0, 2.0]), dual=True), 2)
    assert np.allclose(a.matrix, np.diag([2.0, 3.0]), atol=1e-14)
    a = root_extract(HermitianValue(np.diag([6.0, 3.0, 2.0]), dual=True), 3)
    assert np.allclose(a.matrix, np.diag([1.0, 2.0, 3.0]), atol=1e-14)
    with pytest.raises(HermitianError, match="no positive root"):
        root_extract(HermitianValue(np.diag([1.0, -1.0]), dual=True))
    with pytest.raises(HermitianError):
        root_extract(HermitianValue(np.eye(2), dual=True), 3)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.sampled_from([2, 3]), cond=st.floats(1.0, 50.0))
def test_root_power_round_trip(seed, m, cond):
    a = random_positive_hermitian(np.random.default_rng(seed), m, cond)
    back = root_extract(hermitian_power(a, m - 1), m)
    assert np.max(np.abs(back.matrix - a.matrix)) <= 1e-10 * np.max(np.abs(a.matrix))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_m2_adjugate_identity(seed):
    p = random_positive_hermitian(np.random.default_rng(seed), 2)
    assert np.allclose(root_extract_m2(p).matrix, root_extract(p).matrix, atol=1e-12)


def test_adjugate_singular():
    a = np.array([[1.0, 2.0], [2.0, 4.0]])
    assert np.allclose(adjugate(a), [[4.0, -2.0], [-2.0, 1.0]])


# -- gluing -----------------------------------------------------------------

def test_glue_partitions_sphere(grid32):
    g = ChartGlue(grid32)
    rho = np.abs(grid32.w).ravel()
    n2 = rho.size
    # each point with |w| in the overlap is owned by exactly one chart
    assert np.all(g.owned[:n2] == (rho <= 1))
    assert np.all(g.owned[n2:] == (rho < 1))
    # transfer rows reproduce a smooth field
    u = ScalarField.from_expression(SMOOTH, grid32).values.ravel()
    assert np.max(np.abs(g.transfer @ u)) < 1e-6
