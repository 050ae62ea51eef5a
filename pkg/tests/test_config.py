# tests/test_config.py - Pipeline configuration resolution tests
import pytest

from retypelab.core.config import CONFIG_ENV_VAR, load_pipeline_config
from retypelab.core.errors import ConfigError
from retypelab.schemas.asm import LabelScheme, TypeLabel
from retypelab.schemas.model import Algorithm


@pytest.fixture(autouse=True)
def no_config_env(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)


def test_seed_required():
    """Test a run without any seed source is refused."""
    with pytest.raises(ConfigError):
        load_pipeline_config()


def test_overrides_only():
    config = load_pipeline_config(overrides={"seed": 5, "threads": 2})

    assert config.seed == 5
    assert config.threads == 2
    assert config.synth.rng_seed == 5
    assert config.algorithm == Algorithm.DECISION_TREE


def test_file_then_overrides(tmp_path):
    """Test flags win over the config file and None flags are ignored."""
    path = tmp_path / "run.conf"
    path.write_text(
        "seed=3\n"
        "scheme=size_rep\n"
        "algorithm=random_forest\n"
        "hyperparameter.n_trees=20\n"
        "hyperparameter.max_depth=none\n"
        "include_post=false\n"
        "selection_methods=rfe:0.2,sfm:extra_trees:mean\n"
        "grid.knn.k=1,3\n"
        "synth.count=7\n"
        "synth.count.void=2\n"
    )
    config = load_pipeline_config(path, {"seed": 9, "algorithm": None, "scheme": None})

    assert config.seed == 9
    assert config.scheme == LabelScheme.SIZE_REP
    assert config.algorithm == Algorithm.RANDOM_FOREST
    assert config.hyperparameters == {"n_trees": 20, "max_depth": None}
    assert not config.include_post
    assert [m.name for m in config.selection_methods] == ["rfe:0.2", "sfm:extra_trees:mean"]
    assert config.grid.points(Algorithm.KNN) == [{"k": 1}, {"k": 3}]
    assert config.synth.counts[TypeLabel.INT] == 7
    assert config.synth.counts[TypeLabel.VOID] == 2
    assert config.synth.rng_seed == 9


def test_config_from_environment(tmp_path, monkeypatch):
    path = tmp_path / "env.conf"
    path.write_text("seed=11\n")
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))

    assert load_pipeline_config().seed == 11


@pytest.mark.parametrize("body", [
    "seed=1\nunknown_key=3\n",
    "seed=1\ninclude_post=maybe\n",
    "seed=-4\n",
    "seed=1\nrepetitions=1\n",
    "seed=1\nselection_methods=boruta\n",
])
def test_invalid_config(tmp_path, body):
    path = tmp_path / "bad.conf"
    path.write_text(body)

    with pytest.raises(ConfigError):
        load_pipeline_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_pipeline_config(tmp_path / "absent.conf", {"seed": 1})
