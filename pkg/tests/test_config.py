import pytest

from nlhelmholtz.config import load_config, parse_config
from nlhelmholtz.errors import ConfigurationError
from nlhelmholtz.solver import Kerr, Linear, SaturatedKerr

BASE = """
kappa = 2
R = 1
N = 8
mesh.h = 0.2
mesh.a = 0.5
"""


def err_key(text):
    with pytest.raises(ConfigurationError) as e:
        load_config(text)
    return e.value.key, str(e.value)


def test_defaults_and_types():
    rc = load_config(BASE)
    assert rc.ctx.kappa == 2.0 and rc.ctx.N == 8
    assert isinstance(rc.nonlinearity(), Linear)
    assert rc.solver().tol == 1e-10
    assert rc.incident().amplitude == 1.0


def test_comments_and_complex_values():
    v = parse_config("kappa = 3 # wavenumber\n# full comment\nnonlinearity.eps = 2+0.1j\n")
    assert v["kappa"] == 3.0 and v["nonlinearity.eps"] == 2 + 0.1j


def test_nonlinearity_kinds():
    k = load_config(BASE + "nonlinearity.kind = kerr\nnonlinearity.eps = 6\nnonlinearity.alpha = 1e-4\n")
    assert isinstance(k.nonlinearity(), Kerr)
    s = load_config(BASE + "nonlinearity.kind = satkerr\nnonlinearity.gamma = 10\n")
    assert isinstance(s.nonlinearity(), SaturatedKerr)


@pytest.mark.parametrize(
    "extra, key",
    [
        ("kappa = -1\n", "kappa"),
        ("R = 0\n", "R"),
        ("N = -2\n", "N"),
        ("N = 2.5\n", "N"),
        ("mesh.a = 1.2\n", "mesh.a"),
        ("mesh.h = 0\n", "mesh.h"),
        ("mesh.obstacle = cube\n", "mesh.obstacle"),
        ("nonlinearity.kind = cubic\n", "nonlinearity.kind"),
        ("nonlinearity.eps = 2-1j\n", "nonlinearity.eps"),
        ("incident.angle = 4\n", "incident.angle"),
        ("incident.kind = beam\n", "incident.kind"),
        ("solver.damping = 0\n", "solver.damping"),
    ],
)
def test_invalid_values_name_key(extra, key):
    lines = [l for l in BASE.splitlines() if not l.startswith(extra.split("=")[0].strip() + " ")]
    got, msg = err_key("\n".join(lines) + "\n" + extra)
    assert got == key and key in msg


def test_unknown_duplicate_missing():
    assert err_key(BASE + "colour = red\n")[0] == "colour"
    assert err_key(BASE + "kappa = 3\n")[0] == "kappa"
    assert err_key("R = 1\nN = 3\nmesh.h = 0.1\nmesh.a = 0.5\n")[0] == "kappa"
    assert err_key(BASE + "just words\n")[0].startswith("line")


def test_polygon_obstacle_config():
    rc = load_config(BASE.replace("mesh.a = 0.5", "mesh.obstacle = polygon\nmesh.vertices = -0.3,-0.3; 0.3,-0.3; 0.3,0.3; -0.3,0.3"))
    assert rc.build_mesh().n_nodes > 0
    key, _ = err_key(BASE.replace("mesh.a = 0.5", "mesh.obstacle = polygon\nmesh.vertices = -2,-2; 2,-2; 2,2"))
    assert key == "mesh.vertices"


def test_mesh_error_mapped_to_key():
    rc = load_config(BASE.replace("mesh.a = 0.5", "mesh.a = 0.97"))
    with pytest.raises(ConfigurationError) as e:
        rc.build_mesh()
    assert e.value.key == "mesh.a"
