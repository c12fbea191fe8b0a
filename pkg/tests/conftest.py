import numpy as np
import pytest

from epds import Plant, build_closed_loop, higs_preset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_higs_benchmark():
    """Mass-spring-damper + hybrid-integrator loop used across the tests."""
    ctrl, sec = higs_preset(1.0, 1.0)
    plant = Plant(
        n=2,
        f_p=lambda x, u, w: np.array([x[1], -x[0] - x[1] + u + w]),
        gp=np.array([-1.0, 0.0]),
    )
    return build_closed_loop(plant, ctrl, sec)


@pytest.fixture
def higs_system():
    return make_higs_benchmark()


def orthant(dim=2):
    from epds import ConstraintSet, affine_constraint

    cons = tuple(
        affine_constraint(np.eye(dim)[i], 0.0) for i in range(dim)
    )
    return ConstraintSet(dim=dim, constraints=cons)


def unit_disk():
    """{x : 1 - x1^2 - x2^2 >= 0}"""
    from epds import ConstraintSet, quadratic_constraint

    return ConstraintSet(
        dim=2,
        constraints=(quadratic_constraint(-np.eye(2), np.zeros(2), 1.0),),
    )
