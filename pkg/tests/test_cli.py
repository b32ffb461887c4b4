import numpy as np
import pytest

from chsmc import cli
from chsmc.errors import ConfigError
from chsmc.grid import Grid, read_snapshot

NEUMANN_CONFIG = """\
[grid]
dim = 1
cells = 32
lengths = 1.0

[potential]
kind = regular

[bc]
kind = neumann

[control]
rho = 0
eps = 1e-2

[data]
tau = 1.0
phi0 = cosine amplitude=0.4 mode=1 offset=0.1

[time]
dt = 1e-3
T = 0.01
outputs = 3

[solver]
scheme = coupled_neumann
eps = 1e-2
"""


@pytest.fixture
def neumann_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(NEUMANN_CONFIG)
    return str(path)


# -- profile language -------------------------------------------------------


def test_parse_profile_constant():
    f = cli.parse_profile("constant value=2.5")
    X = (np.array([0.0, 1.0]),)
    assert np.array_equal(f(X, 0.0), [2.5, 2.5])


def test_parse_profile_cosine_with_lengths():
    grid = Grid(shape=(16,), lengths=(0.5,))
    f = cli.parse_profile("cosine amplitude=2 mode=1 offset=1", (0.5,))
    x = grid.meshgrid()[0]
    assert np.allclose(f((x,), 0.0), 2.0 * np.cos(np.pi * x / 0.5) + 1.0)


def test_parse_profile_cosine_infers_box_from_centers():
    grid = Grid(shape=(16,), lengths=(0.5,))
    f = cli.parse_profile("cosine amplitude=1 mode=2")
    x = grid.meshgrid()[0]
    assert np.allclose(f((x,), 0.0), np.cos(2.0 * np.pi * x / 0.5))


def test_parse_profile_ramp_and_tanh():
    X = (np.array([0.0, 1.0, 2.0]),)
    ramp = cli.parse_profile("ramp slope=2 offset=-1")
    assert np.array_equal(ramp(X, 0.0), [-1.0, 1.0, 3.0])
    front = cli.parse_profile("tanh_front center=1 width=0.5 amplitude=2")
    assert front(X, 0.0)[1] == pytest.approx(0.0)


def test_parse_profile_errors():
    with pytest.raises(ConfigError):
        cli.parse_profile("")
    with pytest.raises(ConfigError):
        cli.parse_profile("vortex radius=1")
    with pytest.raises(ConfigError):
        cli.parse_profile("constant 2.5")
    with pytest.raises(ConfigError):
        cli.parse_profile("constant")  # missing required parameter


def test_parse_boundary_profile_scalar():
    datum = cli.parse_boundary_profile("constant value=0.7")
    assert datum((0.0,), 0.0) == 0.7


# -- config loading -----------------------------------------------------------


def test_load_config(neumann_config):
    data, cfg, extras = cli.load_config(neumann_config)
    assert data.grid.shape == (32,)
    assert data.bc.kind == "neumann"
    assert cfg.scheme == "coupled_neumann"
    assert cfg.T == 0.01
    assert len(cfg.output_times) == 3
    assert extras == {}


def test_load_config_missing_key_names_it(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(NEUMANN_CONFIG.replace("dt = 1e-3\n", ""))
    with pytest.raises(ConfigError, match=r"\[time\] dt"):
        cli.load_config(str(path))


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        cli.load_config("/nonexistent/run.ini")


def test_load_config_rejects_scheme_bc_mismatch(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(NEUMANN_CONFIG.replace("coupled_neumann",
                                           "eliminated_dirichlet"))
    with pytest.raises(ConfigError, match="incompatible"):
        cli.load_config(str(path))


# -- commands and exit codes -----------------------------------------------------


def test_simulate_writes_outputs(neumann_config, tmp_path):
    out = tmp_path / "out"
    code = cli.main(["simulate", "--config", neumann_config,
                     "--out", str(out), "--quiet"])
    assert code == 0
    assert (out / "diagnostics.csv").exists()
    snaps = sorted(out.glob("snapshot_*.bin"))
    assert len(snaps) == 3
    grid, t, field = read_snapshot(snaps[0])
    assert t == 0.0
    assert grid.shape == (32,)


def test_simulate_is_deterministic(neumann_config, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["simulate", "--config", neumann_config,
                         "--out", str(out), "--quiet"]) == 0
        outs.append(out)
    assert ((outs[0] / "diagnostics.csv").read_bytes()
            == (outs[1] / "diagnostics.csv").read_bytes())
    assert ((outs[0] / "snapshot_0002.bin").read_bytes()
            == (outs[1] / "snapshot_0002.bin").read_bytes())


def test_verify_all_passes_on_zero_flux_run(neumann_config, tmp_path,
                                            capsys):
    code = cli.main(["verify-all", "--config", neumann_config,
                     "--out", str(tmp_path / "v")])
    out = capsys.readouterr().out
    assert code == 0
    assert "mass conservation: pass" in out
    assert "energy decay: pass" in out
    assert "control saturation: pass" in out


def test_config_error_exit_code(tmp_path, capsys):
    code = cli.main(["simulate", "--config", str(tmp_path / "none.ini"),
                     "--quiet"])
    assert code == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_numerical_error_exit_code(capsys):
    # eps >= w0 makes the comparison-ODE integration ill-posed
    code = cli.main(["ode-oracle", "--w0", "0.5", "--M", "1", "--rho", "5",
                     "--eps", "0.5"])
    assert code == cli.EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_ode_oracle_output(capsys):
    code = cli.main(["ode-oracle", "--w0", "0", "--M", "1", "--rho", "4",
                     "--eps", "0.01", "--dt", "0.001", "--T", "0.02"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("T* = ")
    header = out.splitlines()[1]
    assert header == "t,w_numeric,w_limit_closed_form,w_eps_closed_form"


def test_design_rho_output(capsys):
    code = cli.main(["design-rho", "--Chat", "0.5", "--Cstr", "0.7",
                     "--betastar", "0.2", "--w0", "1", "--vol", "0.1"])
    assert code == 0
    out = capsys.readouterr().out
    assert "rhostar" in out and "deltastar" in out


def test_design_rho_volume_failure(capsys):
    code = cli.main(["design-rho", "--Chat", "0.5", "--Cstr", "0.7",
                     "--betastar", "0.2", "--w0", "1", "--vol", "50"])
    assert code == cli.EXIT_NUMERICAL


def test_contdep_command(tmp_path, neumann_config, capsys):
    path = tmp_path / "cd.ini"
    path.write_text(NEUMANN_CONFIG + "\n[contdep]\nwhich = g\n"
                    "shape = cosine amplitude=1 mode=1\n"
                    "deltas = 1e-1,1e-2\n")
    out = tmp_path / "cdout"
    code = cli.main(["contdep", "--config", str(path), "--out", str(out)])
    assert code == 0
    lines = (out / "contdep.csv").read_text().splitlines()
    assert lines[0] == "delta,lhs,rhs,ratio"
    assert len(lines) == 3
