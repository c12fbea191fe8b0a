import numpy as np
import pytest

from epds import (
    Controller,
    DegenerateSector,
    NotInSet,
    Plant,
    Sector,
    ZeroOutputRow,
    build_closed_loop,
    closed_loop_rhs,
    growth_check,
    higs_preset,
    lifted_tangent_cone,
    oracle_project,
    sector_tangent_cone,
)
from conftest import make_higs_benchmark


def double_integrator():
    return Plant(n=2, f_p=lambda x, u, w: np.array([x[1], u + w]), gp=np.array([-1.0, 0.0]))


def one_state_integrator(omega=1.0):
    return Controller(m=1, f_c=lambda z, e: np.array([omega * e]))


def test_build_assembles_h_and_e():
    sys = build_closed_loop(double_integrator(), one_state_integrator(), Sector(0.0, 1.0))
    assert np.allclose(sys.H, [[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(sys.E.basis, [[0.0], [0.0], [1.0]])
    xi = np.array([2.0, -1.0, 0.5])
    assert np.allclose(sys.output_pair(xi), [-2.0, 0.5])
    # lifted membership is sector membership of H xi
    assert sys.in_set(np.array([-2.0, 0.0, 1.0]))
    assert not sys.in_set(np.array([-2.0, 0.0, 3.0]))


def test_build_error_cases():
    with pytest.raises(ZeroOutputRow):
        Plant(n=2, f_p=lambda x, u, w: np.zeros(2), gp=np.array([0.0, 0.0]))
    with pytest.raises(DegenerateSector):
        build_closed_loop(double_integrator(), one_state_integrator(), (1.0, 1.0))
    with pytest.raises(ValueError):
        Controller(m=0, f_c=lambda z, e: np.zeros(0))


def test_rhs_interior_unprojected(higs_system):
    xi = np.array([1.0, 0.0, -0.5])  # (e, u) = (-1, -0.5), strict interior
    r = closed_loop_rhs(higs_system, xi, 0.0)
    assert r.branch == "interior"
    assert r.correction_norm == 0.0
    assert np.allclose(r.field, higs_system.unprojected_field(xi, 0.0))


def test_rhs_boundary_example(higs_system):
    # e = 1, u = 1 on the upper line; edot = -x2 = 0, fc1 = e = 1 -> vstar = 0
    xi = np.array([-1.0, 0.0, 1.0])
    r = closed_loop_rhs(higs_system, xi, 0.0)
    assert r.edot == 0.0
    assert r.vstar == pytest.approx(0.0, abs=1e-12)
    assert r.branch == "K"
    # x components unchanged
    assert np.allclose(r.field[:2], higs_system.unprojected_field(xi, 0.0)[:2])


def test_rhs_corner_zero_edot(higs_system):
    # (e, u) = (0, 0) and edot = 0 with fc1 = 0.5 via a doctored controller
    ctrl = Controller(m=1, f_c=lambda z, e: np.array([0.5]))
    sys = build_closed_loop(higs_system.plant, ctrl, higs_system.sector)
    xi = np.array([0.0, 0.0, 0.0])
    r = closed_loop_rhs(sys, xi, 0.0)
    assert r.edot == 0.0
    assert r.vstar == pytest.approx(0.0, abs=1e-12)
    assert r.branch == "corner"


def test_rhs_requires_membership(higs_system):
    with pytest.raises(NotInSet):
        closed_loop_rhs(higs_system, np.array([1.0, 0.0, 0.5]), 0.0)  # e=-1, u=0.5


def test_higs_preset():
    ctrl, sec = higs_preset(2.0, 5.0)
    assert (sec.k1, sec.k2) == (0.0, 2.0)
    assert np.allclose(ctrl.f_c(np.array([0.3]), 1.5), [7.5])
    with pytest.raises(ValueError):
        higs_preset(0.0, 1.0)
    with pytest.raises(ValueError):
        higs_preset(1.0, -1.0)


def test_projection_locality_and_edot_preservation(rng, higs_system):
    sys = make_higs_benchmark()
    for _ in range(200):
        x = rng.standard_normal(2) * 2
        e = float(sys.plant.gp @ x)
        u = float(rng.uniform(min(0.0, e), max(0.0, e)))
        xi = np.array([x[0], x[1], u])
        w = float(rng.standard_normal())
        r = closed_loop_rhs(sys, xi, w)
        f = sys.unprojected_field(xi, w)
        # first n components pass through exactly; e-dynamics untouched
        assert np.array_equal(r.field[:2], f[:2])
        assert float(sys.plant.gp @ r.field[:2]) == r.edot


def test_reduction_matches_lifted_oracle(rng, higs_system):
    sys = higs_system
    worst = 0.0
    for i in range(60):
        x = rng.standard_normal(2) * 2
        if i % 3 == 2:
            gp = sys.plant.gp
            x = x - (gp @ x) / (gp @ gp) * gp
            u = 0.0
        else:
            e = float(sys.plant.gp @ x)
            u = (sys.sector.k1 if i % 3 == 0 else sys.sector.k2) * e
        xi = np.array([x[0], x[1], u])
        r = closed_loop_rhs(sys, xi, 0.0)
        low = sector_tangent_cone(sys.sector, sys.output_pair(xi))
        lifted = lifted_tangent_cone(sys.H, low, xi)
        w_oracle = oracle_project(lifted, sys.E, sys.unprojected_field(xi, 0.0))
        worst = max(worst, float(np.linalg.norm(r.field - w_oracle)))
    assert worst <= 1e-6


def test_growth_check_zero_field():
    plant = Plant(n=1, f_p=lambda x, u, w: np.zeros(1), gp=np.array([1.0]))
    ctrl = Controller(m=1, f_c=lambda z, e: np.zeros(1))
    sys = build_closed_loop(plant, ctrl, Sector(0.0, 1.0))
    rep = growth_check(sys, M=1.0, samples=500, seed=1)
    assert rep.c_observed == 0.0
    assert rep.m_prime_observed == 0.0
    assert not rep.violations


def test_growth_check_superlinear_negative_control():
    plant = Plant(
        n=1, f_p=lambda x, u, w: np.array([np.dot(x, x)]), gp=np.array([1.0])
    )
    ctrl = Controller(m=1, f_c=lambda z, e: np.zeros(1))
    sys = build_closed_loop(plant, ctrl, Sector(0.0, 1.0))
    rep = growth_check(sys, M=0.5, samples=300, seed=1)
    assert len(rep.violations) > 0
    assert rep.violations[0]["f_norm"] > rep.violations[0]["bound"]
