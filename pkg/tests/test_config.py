import pytest

from isoproof.config import AugmentFlags, RunConfig, config_from_dict, load_config
from isoproof.errors import ConfigError


def base(**sections):
    data = {"run": {"manifest": "m.jsonl", "workspace": "ws"}}
    for k, v in sections.items():
        data.setdefault(k, {}).update(v)
    return data


def test_defaults_and_relative_paths(tmp_path):
    cfg = config_from_dict(base(), base=tmp_path)
    assert cfg.manifest == (tmp_path / "m.jsonl").resolve()
    assert cfg.workspace == (tmp_path / "ws").resolve()
    assert cfg.chunk_library == cfg.workspace / "chunks.jsonl"
    assert cfg.runs_dir == cfg.workspace / "runs"
    assert cfg.prover.cache_dir == str(cfg.workspace / "prover-cache")
    assert cfg.prover.timeout_seconds == 600
    assert (cfg.k, cfg.sampling.temperature, cfg.seed) == (1, 0.0, 0)
    assert cfg.categories == ("P1", "P2", "P3", "D")
    assert cfg.endpoint.api_key_env == "ISOPROOF_API_KEY"


def test_run_k_moves_to_sampling(tmp_path):
    cfg = config_from_dict(base(run={"k": 10}), base=tmp_path)
    assert cfg.k == 10 and cfg.sampling.temperature == 0.5


@pytest.mark.parametrize("section,key", [("endpoint", "api_key"), ("endpoint", "token"), ("run", "password"),
                                         ("prover", "secret")])
def test_secrets_rejected(tmp_path, section, key):
    with pytest.raises(ConfigError, match="environment"):
        config_from_dict(base(**{section: {key: "sk-123"}}), base=tmp_path)


@pytest.mark.parametrize("data", [
    {"run": {"workspace": "w"}},
    {**base(), "extra": {}},
    base(run={"bogus": 1}),
    base(prover={"kind": "coq"}),
    base(endpoint={"kind": "scripted"}),
    base(sampling={"top_p": 2}),
    base(augment={"fixing": True, "try_again": True}),
])
def test_invalid_configs(tmp_path, data):
    with pytest.raises(ConfigError):
        config_from_dict(data, base=tmp_path)


def test_fixing_and_try_again_exclusive():
    with pytest.raises(ConfigError):
        AugmentFlags(fixing=True, try_again=True).validate()
    assert AugmentFlags(similar=True, fixing=True).enabled() == ["similar", "fixing"]


def test_validate_checks_files(tmp_path):
    cfg = config_from_dict(base(augment={"similar": True}), base=tmp_path)
    with pytest.raises(ConfigError, match="manifest"):
        cfg.validate()
    (tmp_path / "m.jsonl").write_text("{}\n")
    with pytest.raises(ConfigError, match="chunk library"):
        cfg.validate()
    cfg.validate(check_files=False)
    with pytest.raises(ConfigError):
        RunConfig("m", "w", categories=("P9",)).validate(check_files=False)


def test_load_config_with_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('[run]\nmanifest = "m.jsonl"\nworkspace = "ws"\nseed = 3\n\n[augment]\nsimilar = true\n')
    cfg = load_config(path, {"augment.fixing": True, "seed": 7})
    assert cfg.seed == 7 and cfg.augment.enabled() == ["similar", "fixing"]
    assert cfg.source == path
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    (tmp_path / "bad.toml").write_text("[run\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")


def test_describe_is_portable_and_secret_free(tmp_path, monkeypatch):
    monkeypatch.setenv("ISOPROOF_API_KEY", "sk-very-secret")
    cfg = config_from_dict(base(endpoint={"base_url": "http://x/v1"}), base=tmp_path)
    text = repr(cfg.describe())
    assert "sk-very-secret" not in text and str(tmp_path) not in text
    other = config_from_dict(base(), base=tmp_path / "elsewhere")
    assert other.digest() == config_from_dict(base(), base=tmp_path).digest()
    assert config_from_dict(base(run={"seed": 1}), base=tmp_path).digest() != other.digest()
