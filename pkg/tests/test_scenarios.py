import dataclasses

import numpy as np
import pytest

from pshlab.scenarios import (
    DEFAULTS, BuildError, build_scenario, condition_b_constant, is_omega_psh, sample_psh,
)
from pshlab.volume_bounds import sample_masses

NAMES = list(DEFAULTS)


@pytest.mark.parametrize("name", NAMES)
def test_build_all(name):
    s = build_scenario(name)
    assert s.grid.n == 2 and s.grid.res == 16
    assert s.checks["omega_min_eig"] >= -1e-10
    d = s.to_dict()
    assert d["name"] == name and d["grid"] == {"n": 2, "res": 16}


def test_flags():
    assert build_scenario("guan_li_closed").closed
    assert not build_scenario("nonclosed_hermitian").closed
    assert build_scenario("nef_degenerate").degenerate
    assert build_scenario("product_collapsing").degenerate
    assert not build_scenario("flat_kahler").degenerate


def test_closed_scenario_checks():
    s = build_scenario("guan_li_closed")
    assert s.checks["ddc_omega_sup"] < 1e-9 and s.checks["dw_dcw_sup"] < 1e-9
    s = build_scenario("nonclosed_hermitian")
    assert s.checks["d_omega_sup"] > 1e-3


def test_collapsing_zero_outside_bump():
    s = build_scenario("product_collapsing")
    assert s.checks["zero_outside_support"]
    lo, hi = s.extras["support_x1"]
    x1 = (s.grid.coords()[0].ravel() + 0.5) % 1.0 - 0.5
    outside = np.abs(x1) >= hi
    assert np.all(s.omega.mats[outside] == 0)


@pytest.mark.parametrize("name,params,key", [
    ("guan_li_closed", {"amplitude": 1.5}, "amplitude"),
    ("nonclosed_hermitian", {"amplitude": 0.9}, "amplitude"),
    ("nef_degenerate", {"scale": 0.5}, "scale"),
    ("product_collapsing", {"half_width": 0.4}, "half_width"),
    ("flat_kahler", {"bogus": 1}, "bogus"),
])
def test_build_errors_name_parameter(name, params, key):
    with pytest.raises(BuildError, match=key):
        build_scenario(name, params)


def test_condition_b():
    assert condition_b_constant(build_scenario("guan_li_closed"))[0] == pytest.approx(0.0, abs=1e-9)
    B = condition_b_constant(build_scenario("nonclosed_hermitian"))[0]
    assert 0 < B < np.inf


@pytest.mark.parametrize("name", NAMES)
def test_samples_are_psh_and_deterministic(name):
    s = build_scenario(name)
    a = sample_psh(s, 3, seed=5)
    b = sample_psh(s, 3, seed=5)
    for x, y in zip(a, b):
        assert np.array_equal(x.u.values, y.u.values)
        assert x.u.values.max() <= 1e-12
        assert is_omega_psh(s, x.u)[0]


def test_moment_masses_match_direct():
    s = build_scenario("nonclosed_hermitian")
    for smp in sample_psh(s, 3, seed=1, keep_hessian=True):
        fast = sample_masses(s, smp, [0, 1, 2])[0]
        slow = sample_masses(s, dataclasses.replace(smp, moments=None, rel_min_eig=None), [0, 1, 2])[0]
        for j in fast:
            assert fast[j] == pytest.approx(slow[j], rel=1e-12)


def test_regularized():
    s = build_scenario("nef_degenerate")
    r = s.regularized(0.1)
    assert not r.degenerate and r.params["eps"] == pytest.approx(0.1)
    assert float(np.min(r.omega.min_eigenvalue())) >= 0.1 - 1e-12
