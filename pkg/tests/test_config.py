import numpy as np
import pytest
from numpy.testing import assert_allclose

from eitpimc.config import ORACLE_SHORTHANDS, ConfigError, RunConfig


def test_defaults_round_trip():
    cfg = RunConfig()
    back = RunConfig.from_ini(cfg.to_ini())
    assert back == cfg
    assert back.hash == cfg.hash


def test_partial_file_keeps_defaults():
    cfg = RunConfig.from_ini("[solver]\nn_paths = 1000\nseed = 7\n")
    assert cfg.solver.n_paths == 1000 and cfg.solver.seed == 7
    assert cfg.solver.epsilon == RunConfig().solver.epsilon
    assert cfg.bem == RunConfig().bem


def test_vectors_parse():
    cfg = RunConfig.from_ini("[solver]\npoint = 0.1, -0.2 0.3\n[bem]\nrings = 4, 3, 3, 2\n")
    assert cfg.solver.point == (0.1, -0.2, 0.3)
    assert cfg.bem.rings == (4, 3, 3, 2)
    assert_allclose(cfg.point, [0.1, -0.2, 0.3])


def test_hash_ignores_runtime_keys():
    cfg = RunConfig()
    assert cfg.with_overrides(workers=3, fmt="json", out="x.txt").hash == cfg.hash
    assert cfg.with_overrides(seed=99).hash != cfg.hash
    assert "workers" not in cfg.to_ini(runtime=False)
    assert "workers" in cfg.to_ini()


@pytest.mark.parametrize(
    "text, field",
    [
        ("[solver]\nn_pathz = 3\n", "solver.n_pathz"),
        ("[solverx]\nn_paths = 3\n", "solverx"),
        ("[solver]\nn_paths = many\n", "solver.n_paths"),
        ("[solver]\nn_paths = 0\n", "solver.n_paths"),
        ("[solver]\nepsilon = 0.001\n", "solver.epsilon"),
        ("[solver]\nepsilon = nan\n", "solver.epsilon"),
        ("[solver]\nrobin_mode = other\n", "solver.robin_mode"),
        ("[solver]\nseed = -1\n", "solver.seed"),
        ("[solver]\nworkers = -2\n", "solver.workers"),
        ("[solver]\npoint = 1, 2\n", "solver.point"),
        ("[solver]\nlocal_time_scale = -1\n", "solver.local_time_scale"),
        ("[output]\nformat = xml\n", "output.format"),
        ("[data]\npreset = cos5theta\n", "data.preset"),
        ("[data]\npreset = constant:abc\n", "data.preset"),
        ("[data]\npreset = robin-sphere:1\n", "data.preset"),
        ("[bem]\nrings = 1.5, 2, 2, 2\n", "bem.rings"),
        ("[bem]\nr_ext = 0.1\n", "bem"),
        ("[domain]\ncap_radius = 0.9\n", "domain"),
        ("no section header\n", "file"),
    ],
)
def test_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_ini(text)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_file(tmp_path / "none.ini")
    assert info.value.field == "file"


def test_file_round_trip(tmp_path):
    cfg = RunConfig.from_ini("[data]\npreset = constant:2\n[solver]\nrobin_mode = weighted\n")
    path = tmp_path / "run.ini"
    path.write_text(cfg.to_ini())
    assert RunConfig.from_file(path) == cfg


def test_data_presets():
    x = np.array([[0.0, 0.0, 1.0]])
    cfg = RunConfig()
    dom = cfg.build_domain()
    assert len(dom.electrodes) == 8 and not dom.has_anomaly
    assert_allclose(cfg.build_data().phi1_at(dom, 1, x), 1.0)
    zero = RunConfig.from_ini("[data]\npreset = zero\n").build_data()
    assert zero.is_zero
    const = RunConfig.from_ini("[data]\npreset = constant:2.5\n").build_data()
    assert_allclose(const.phi1_at(dom, 1, x), 2.5)


def test_anomaly_in_domain():
    cfg = RunConfig.from_ini("[domain]\nanomaly_radius = 0.5\n")
    dom = cfg.build_domain()
    assert dom.has_anomaly and dom.anomaly_radius == 0.5


@pytest.mark.parametrize("short", sorted(ORACLE_SHORTHANDS))
def test_oracle_presets_replace_the_domain(short):
    cfg = RunConfig.from_ini(f"[data]\npreset = {short}\n")
    assert cfg.oracle_name == ORACLE_SHORTHANDS[short]
    case = cfg.oracle_case()
    assert cfg.build_domain() == case.domain
    assert repr(cfg.build_data()) == repr(case.data)


def test_builders():
    cfg = RunConfig.from_ini("[solver]\nlocal_time_scale = 1.5\nn_paths = 10\n[bem]\ndepth = 2\n")
    wp = cfg.walk_params()
    assert wp.n_paths == 10 and wp.resolved_scale() == 1.5
    assert RunConfig().walk_params().resolved_scale() == pytest.approx(1.29083, abs=1e-5)
    assert cfg.mesh_params().depth == 2
    assert RunConfig().oracle_case() is None
