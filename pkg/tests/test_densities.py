import numpy as np
import pytest
from scipy import integrate

from sphere_ot.densities import (
    Callable,
    NodalDensity,
    Scaled,
    TwoBump,
    Uniform,
    VonMisesFisher,
    parse_density,
    read_nodal_values,
)
from sphere_ot.exceptions import ConfigError, FileParse


def sphere_integral(f):
    def inner(theta, phi):
        x = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
        return float(f(x[None])[0]) * np.sin(theta)

    val, _ = integrate.dblquad(inner, 0, 2 * np.pi, 0, np.pi, epsabs=1e-10, epsrel=1e-10)
    return val


@pytest.mark.parametrize("density", [
    Uniform(),
    VonMisesFisher(kappa=2.0, weight=0.5),
    VonMisesFisher(mean=(1, 1, 0), kappa=8.0, weight=0.9),
    TwoBump(kappa=4.0, weight=0.6),
])
def test_unit_mass(density):
    assert sphere_integral(density) == pytest.approx(1.0, abs=1e-8)


def test_vmf_large_kappa_is_finite():
    d = VonMisesFisher(kappa=800.0, weight=0.5)
    vals = d(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]))
    assert np.all(np.isfinite(vals))
    assert vals[0] == pytest.approx(0.5 / (4 * np.pi) + 0.5 * 800 / (2 * np.pi), rel=1e-12)
    assert vals[1] == pytest.approx(0.5 / (4 * np.pi), rel=1e-12)


def test_validation():
    with pytest.raises(ConfigError):
        VonMisesFisher(kappa=0.0)
    with pytest.raises(ConfigError):
        VonMisesFisher(weight=1.0)
    with pytest.raises(ConfigError):
        TwoBump(kappa=-1.0)


def test_scaled_and_callable():
    s = Scaled(Uniform(), 2.0)
    np.testing.assert_allclose(s(np.array([[0, 0, 1.0]])), 2 / (4 * np.pi))
    assert "2" in s.describe()
    c = Callable(lambda x: 1 + x[..., 2], name="tilt")
    np.testing.assert_allclose(c(np.array([[0, 0, 1.0], [1.0, 0, 0]])), [2.0, 1.0])


def test_parse_density(ico162):
    assert isinstance(parse_density("uniform"), Uniform)
    d = parse_density("vmf:3:0.4")
    assert isinstance(d, VonMisesFisher) and d.kappa == 3.0 and d.weight == 0.4
    d = parse_density("twobump:5")
    assert isinstance(d, TwoBump) and d.kappa == 5.0
    with pytest.raises(ConfigError):
        parse_density("gaussian")
    with pytest.raises(ConfigError):
        parse_density("vmf:abc")
    with pytest.raises(ConfigError):
        parse_density("file:x.txt")


def test_nodal_density_file(tmp_path, ico162):
    vals = 1 + 0.5 * ico162.nodes[:, 2]
    path = tmp_path / "f.csv"
    path.write_text("index,value\n" + "".join(f"{i},{v:.17g}\n" for i, v in enumerate(vals)))
    np.testing.assert_array_equal(read_nodal_values(path), vals)
    d = parse_density(f"file:{path}", ico162)
    assert isinstance(d, NodalDensity)
    np.testing.assert_allclose(d(ico162.nodes), vals, atol=1e-12)
    assert d.describe() == f"file:{path}"
    with pytest.raises(ConfigError):
        NodalDensity(ico162, vals[:-1])


def test_nodal_file_errors(tmp_path):
    with pytest.raises(FileParse):
        read_nodal_values(tmp_path / "missing")
    bad = tmp_path / "bad"
    bad.write_text("1.0\nfoo\n")
    with pytest.raises(FileParse):
        read_nodal_values(bad)
    bad.write_text("value\nfoo\n")
    with pytest.raises(FileParse):
        read_nodal_values(bad)
    bad.write_text("# only a comment\n")
    with pytest.raises(FileParse):
        read_nodal_values(bad)
