import numpy as np
import pytest

from pshlab import comparison as C
from pshlab.scenarios import build_scenario, sample_psh


@pytest.fixture(scope="module")
def flat():
    return build_scenario("flat_kahler")


def test_s_max_and_factor():
    assert C.s_max(0.5, 0.0, 2) == np.inf
    assert C.s_max(0.5, 1.0, 3) == pytest.approx(0.125 / 128)
    assert C.comparison_factor(0.0, 0.5, 1.0, 2) == pytest.approx(1.0)
    assert C.comparison_factor(C.s_max(0.5, 1.0, 2), 0.5, 1.0, 2) == pytest.approx((7 / 8) ** 2)


def test_comparison_closed(flat):
    u, v = sample_psh(flat, 2, seed=1)
    reps = C.modified_comparison_check(flat, u, v, 0.5, [1e-3, 1e-2, 5e-2], B=0.0)
    assert all(r.passed for r in reps)
    assert [r.cells for r in reps] == sorted(r.cells for r in reps)
    assert reps[0].to_dict()["extras"]["s_max"] == np.inf


def test_comparison_argument_checks(flat):
    u, v = sample_psh(flat, 2, seed=1)
    with pytest.raises(ValueError):
        C.modified_comparison_check(flat, u, v, 1.5, [0.1], B=0.0)
    with pytest.raises(ValueError):
        C.modified_comparison_check(flat, u, v, 0.5, [-0.1], B=0.0)
    with pytest.raises(ValueError):
        C.modified_comparison_check(flat, u, v, 0.5, [0.1], B=1.0)


def test_contact_pair(flat):
    psi = sample_psh(flat, 1, seed=4)[0]
    u, R, a = C.contact_pair(flat, psi, 0.05)
    assert a > 0 and R.any()
    assert np.all(u.values <= psi.u.values + 1e-15)
    assert np.array_equal(u.values[R], psi.u.values[R])
    r = C.contact_inequality_check(flat, u, psi, R)
    assert r["passed"] and r["region_cells"] == int(R.sum())


def test_domination_small(flat):
    r = C.domination_falsification(flat, trials=40, pool=6, seed=2)
    assert r["passed"] and r["violations"] == 0
    assert r["constructive_passed"] == 40
    with pytest.raises(ValueError):
        C.domination_falsification(build_scenario("nef_degenerate"), trials=2)
