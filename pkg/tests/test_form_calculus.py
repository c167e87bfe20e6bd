import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pshlab.form_calculus import (
    ConeError, FormField, GridSpec, HermitianForm11Field, ScalarField, check_bandlimit, d_c, ddc,
    exterior_d, integrate, ma_density, mixed_ma_density, read_hmaf, stokes_defect, write_hmaf,
)
from pshlab.hermitian_algebra import DimensionError

from conftest import random_field, random_positive_field


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(2, 12)
    with pytest.raises(ValueError):
        GridSpec(2, 8)
    with pytest.raises(DimensionError):
        GridSpec(4, 16)
    g = GridSpec(3, 8)
    assert g.shape == (8,) * 6 and g.points == 8 ** 6


def test_ddc_of_cosine():
    g = GridSpec(1, 16)
    x, y = g.coords()
    u = ScalarField(g, np.broadcast_to(np.cos(2 * np.pi * x), g.shape))
    # d^2/dz dzbar = Laplacian / 4
    h = ddc(u).mats[..., 0, 0].real
    assert np.allclose(h, -np.pi ** 2 * np.cos(2 * np.pi * x) * np.ones(g.shape), atol=1e-10)


def test_ddc_mixed_term_n2():
    g = GridSpec(2, 16)
    x1, y1, x2, y2 = g.coords()
    u = ScalarField(g, np.broadcast_to(np.cos(2 * np.pi * (x1 + x2)), g.shape))
    H = ddc(u).mats
    # d/dz_j = (d/dx_j - i d/dy_j) / 2, so H_12 = (1/4) u_{x1 x2}
    want = -np.pi ** 2 * np.cos(2 * np.pi * (x1 + x2)) * np.ones(g.shape)
    assert np.allclose(H[..., 0, 1], want, atol=1e-10)
    assert np.allclose(H[..., 0, 0], want, atol=1e-10)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_d_squared_vanishes(seed):
    g = GridSpec(2, 16)
    u = random_field(g, seed, K=2)
    f = FormField.scalar(u)
    assert exterior_d(exterior_d(f)).sup_norm() < 1e-9
    assert exterior_d(d_c(f)).sup_norm() > 1e-3
    # dd^c agrees with the complex Hessian field
    diff = exterior_d(d_c(f)) - ddc(u).to_form()
    assert diff.sup_norm() < 1e-9


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_stokes_flat(seed):
    g = GridSpec(2, 16)
    u = random_field(g, seed, K=2, scale=0.002)
    om = HermitianForm11Field.identity(g)
    assert stokes_defect(om, u) < 1e-12


def test_flat_volume_and_mixed_density():
    g = GridSpec(2, 16)
    om = HermitianForm11Field.identity(g)
    assert integrate(mixed_ma_density([om, om], g)) == pytest.approx(2.0)
    t = random_positive_field(g, 3)
    a = mixed_ma_density([om, t], g).values
    assert np.allclose(a, np.trace(t.full(), axis1=-2, axis2=-1).real * np.ones(g.shape))


def test_ma_density_cone_error():
    g = GridSpec(1, 16)
    x, _ = g.coords()
    u = ScalarField(g, np.broadcast_to(np.cos(2 * np.pi * x), g.shape))
    with pytest.raises(ConeError) as exc:
        ma_density(HermitianForm11Field.identity(g), u)
    assert exc.value.worst_eigenvalue < 0
    dens = ma_density(HermitianForm11Field.identity(g), u, check=False)
    assert dens.values.min() < 0


def test_bandlimit_validator():
    g = GridSpec(2, 16)
    check_bandlimit(g, 2, 2)
    with pytest.raises(ValueError):
        check_bandlimit(g, 4, 2)


def test_hmaf_roundtrip(tmp_path):
    g = GridSpec(2, 16)
    u = random_field(g, 1)
    t = random_positive_field(g, 2)
    f = ddc(u).to_form().wedge(t.to_form())
    for name, obj in (("u", u), ("t", t), ("f", f)):
        p = tmp_path / f"{name}.hmaf"
        write_hmaf(p, obj)
        back = read_hmaf(p)
        assert p.read_bytes()[:4] == b"HMAF"
        if name == "u":
            assert np.array_equal(back.values, u.values)
        elif name == "t":
            assert np.array_equal(back.full(), t.full())
        else:
            assert (back - f).sup_norm() == 0.0
    bad = tmp_path / "bad.hmaf"
    bad.write_bytes(b"XXXX" + bytes(24))
    with pytest.raises(ValueError):
        read_hmaf(bad)


def test_grid_mismatch():
    a = random_field(GridSpec(2, 16), 0)
    b = random_field(GridSpec(2, 32), 0)
    with pytest.raises(DimensionError):
        a + b
