import numpy as np
import pytest

from pshlab import envelope as E
from pshlab.form_calculus import GridSpec, ScalarField
from pshlab.scenarios import build_scenario


@pytest.fixture(scope="module")
def flat1():
    return build_scenario("flat_kahler", {"n": 1, "res": 32})


def test_default_betas():
    assert E.default_betas(16384) == [16.0, 64.0, 256.0, 1024.0, 4096.0, 16384.0]
    assert E.default_betas(1000)[-1] == 1000.0
    assert E.scheme_tol(16384) == pytest.approx(14 / 16384)


@pytest.mark.parametrize("name", sorted(E.BUILTIN_OBSTACLES))
def test_builtin_obstacles(name):
    g = GridSpec(2, 16)
    h = E.builtin_obstacle(name, g, seed=1)
    assert h.values.shape == g.shape and np.all(np.isfinite(h.values))
    with pytest.raises(ValueError):
        E.builtin_obstacle("nope", g)


def test_psh_obstacle_is_fixed(flat1):
    # h = a small cosine is omega-psh, so P(h) = h up to the scheme error
    g = flat1.grid
    x, y = g.coords()
    h = ScalarField(g, np.broadcast_to(0.01 * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y), g.shape))
    r = E.envelope_beta(flat1, h, [16.0, 64.0, 256.0, 1024.0])
    assert np.abs(r.phi.values - h.values).max() <= r.scheme_tol
    assert r.contact_mask.mean() == 1.0


@pytest.mark.parametrize("name", ["bump", "two_wells"])
def test_oracle_agreement_small(flat1, name):
    h = E.builtin_obstacle(name, flat1.grid)
    r = E.envelope_beta(flat1, h, E.default_betas(4096))
    o = E.envelope_obstacle_1d(1.0, h)
    assert np.abs(r.phi.values - o.values).max() <= 2 * r.scheme_tol
    assert r.sup_violation <= r.scheme_tol
    assert r.orthogonality_defect <= 1e-3 * r.total_mass
    assert r.orthogonality_defect == pytest.approx(E.orthogonality_defect(flat1, r, h), abs=1e-6)
    assert r.min_eigenvalue > 0


def test_warm_start_reaches_same_solution(flat1):
    h = E.builtin_obstacle("two_wells", flat1.grid)
    r = E.envelope_beta(flat1, h, E.default_betas(1024))
    again = E.envelope_beta(flat1, h, [1024.0], {"phi0": r.phi})
    assert np.abs(again.phi.values - r.phi.values).max() < 1e-9


def test_errors(flat1):
    h = E.builtin_obstacle("bump", flat1.grid)
    with pytest.raises(ValueError):
        E.envelope_beta(flat1, h, [64.0, 16.0])
    nef = build_scenario("nef_degenerate")
    with pytest.raises(ValueError, match="positive definite"):
        E.envelope_beta(nef, E.builtin_obstacle("bump", nef.grid))
    with pytest.raises(E.SchemeError):
        E.envelope_beta(flat1, h, [16.0], {"max_newton": 1})
    with pytest.raises(ValueError):
        E.envelope_obstacle_1d(1.0, E.builtin_obstacle("bump", GridSpec(2, 16)))


def test_sor_oracle_properties():
    g = GridSpec(1, 32)
    h = E.builtin_obstacle("bump", g)
    o = E.envelope_obstacle_1d(1.0, h)
    assert np.all(o.values <= h.values + 1e-12)
    o2 = E.envelope_obstacle_1d(1.0, ScalarField(g, h.values + 0.25))
    assert np.abs(o2.values - o.values - 0.25).max() < 1e-8


def test_crease_and_boxes():
    g = GridSpec(1, 32)
    x, y = g.coords()
    u = ScalarField(g, np.broadcast_to(np.sin(2 * np.pi * x), g.shape))
    v = ScalarField.constant(g, 0.0)
    m = E.crease_mask(u, v)
    # zeros of sin(2 pi x) on the grid: the lines x = 0 and x = 1/2
    assert m[0].all() and m[16].all() and not m[8].any()
    boxes = E.box_family(g, 2)
    assert len(boxes) == 4
    cover = np.zeros(g.shape, int)
    for b in boxes:
        cover[b] += 1
    assert np.all(cover == 1)
