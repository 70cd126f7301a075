import pytest

from bodybgk.config import Settings, find_env_file, load_settings
from bodybgk.errors import PreconditionError
from bodybgk.models import OutputFormat


def test_defaults(monkeypatch):
    monkeypatch.delenv("BODYBGK_NODES_1D", raising=False)
    settings = Settings(_env_file=None)
    assert settings.seed == 20240601
    assert settings.nodes_1d == 128
    assert settings.nodes_s3 == 48
    assert settings.output_format == OutputFormat.CSV
    assert settings.stop_grad_norm == pytest.approx(1e-9)
    assert settings.max_step == pytest.approx(1.0)


def test_environment_override(monkeypatch):
    monkeypatch.setenv("BODYBGK_NODES_1D", "64")
    monkeypatch.setenv("BODYBGK_OUTPUT_FORMAT", "json")
    settings = load_settings()
    assert settings.nodes_1d == 64
    assert settings.output_format == OutputFormat.JSON


def test_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("BODYBGK_SEED", "1")
    monkeypatch.setenv("BODYBGK_JOBS", "3")
    config = tmp_path / "run.cfg"
    config.write_text("seed=2\nnodes-s3=32\n", encoding="utf-8")

    settings = load_settings(str(config), seed=3, jobs=None)
    assert settings.seed == 3          # 显式参数
    assert settings.nodes_s3 == 32     # 配置文件
    assert settings.jobs == 3          # 环境变量


def test_config_file_with_prefixed_keys(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("# 注释\nBODYBGK_T_MAX=50\n", encoding="utf-8")
    assert load_settings(str(config)).t_max == pytest.approx(50.0)


def test_config_file_errors(tmp_path):
    with pytest.raises(PreconditionError):
        load_settings(str(tmp_path / "missing.cfg"))
    config = tmp_path / "bad.cfg"
    config.write_text("warp_speed=9\n", encoding="utf-8")
    with pytest.raises(PreconditionError):
        load_settings(str(config))


@pytest.mark.parametrize("overrides", [
    {"nodes_1d": 8},
    {"nodes_s3": 10},
    {"jobs": -1},
    {"t_max": 0.0},
    {"seed": -5},
    {"max_step": 0.0},
])
def test_invalid_values(overrides):
    with pytest.raises(PreconditionError):
        load_settings(**overrides)


def test_projections():
    settings = load_settings(nodes_1d=64, nodes_s3=32, t_max=10.0, stop_grad_norm=1e-6, jobs=2)
    assert settings.quadrature().nodes_1d == 64
    assert settings.quadrature().nodes_s3 == 32
    opts = settings.flow_options()
    assert opts.t_max == pytest.approx(10.0)
    assert opts.stop_grad_norm == pytest.approx(1e-6)
    assert opts.max_step == pytest.approx(1.0)
    assert settings.run_config().quadrature == settings.quadrature()
    assert settings.effective_jobs() == 2


def test_env_file_lookup_stops_at_project_root(tmp_path, monkeypatch):
    monkeypatch.delenv("BODYBGK_ENV_FILE", raising=False)
    project = tmp_path / "project"
    nested = project / "runs" / "sweep"
    nested.mkdir(parents=True)
    (project / "pyproject.toml").write_text("", encoding="utf-8")
    (tmp_path / ".env").write_text("BODYBGK_SEED=1\n", encoding="utf-8")
    assert find_env_file(nested) is None

    (project / ".env").write_text("BODYBGK_SEED=2\n", encoding="utf-8")
    assert find_env_file(nested) == (project / ".env").resolve()


def test_env_file_from_environment(tmp_path, monkeypatch):
    env = tmp_path / "custom.env"
    env.write_text("BODYBGK_SEED=4\n", encoding="utf-8")
    monkeypatch.setenv("BODYBGK_ENV_FILE", str(env))
    assert find_env_file(tmp_path) == env

    monkeypatch.setenv("BODYBGK_ENV_FILE", str(tmp_path / "missing.env"))
    assert find_env_file(tmp_path) is None
