import pytest

from ctrlbench import config as C


def defaults(algo):
    return C.dumps(C.ExperimentConfig(algo=algo)).splitlines()


def test_tuned_defaults_text():
    assert "lr = 0.0001" in defaults("ca3c")
    assert "lr = 0.0001" in defaults("d3pg")
    p3o = defaults("p3o")
    assert "lr = 0.001" in p3o
    assert "clip_eps = 0.2" in p3o and "gae_lambda = 0.97" in p3o
    nes = defaults("nes")
    assert "nes_sigma = 0.1" in nes and "nes_alpha = 0.1" in nes
    assert "cmaes_sigma0 = 1.0" in defaults("cmaes")
    for algo in C.RL_ALGOS:
        assert "window = 50" in defaults(algo)
    assert "seeds = 0,1,2,3,4,5,6,7,8,9" in p3o
    assert "test_episodes = 10" in p3o


def test_gamma_is_labelled_as_chosen():
    assert C.ExperimentConfig().gamma == 0.99
    assert C.PROVENANCE["gamma"].startswith("chosen")


def test_unknown_key_names_key():
    with pytest.raises(C.ConfigError, match="learning_rate"):
        C.parse_config(overrides={"learning_rate": "0.1"})


@pytest.mark.parametrize("key, value, pattern", [
    ("hidden", "32", r"hidden.*\{16, 64\}"),
    ("gamma", "1.5", r"gamma.*\[0.0, 1.0\]"),
    ("workers", "0", r"workers.*\[1, 256\]"),
    ("lr", "0", r"lr.*\(0.0, 1.0\]"),
    ("max_steps", "2e7", r"max_steps"),
    ("algo", "sac", r"algo"),
    ("env", "cartpole", r"env"),
])
def test_range_errors(key, value, pattern):
    with pytest.raises(C.ConfigError, match=pattern):
        C.parse_config(overrides={key: value})


def test_type_error():
    with pytest.raises(C.ConfigError, match="workers"):
        C.parse_config(overrides={"workers": "four"})


def test_mirrored_nes_needs_even_population():
    with pytest.raises(C.ConfigError, match="popsize"):
        C.parse_config(overrides={"algo": "nes", "popsize": "7"})
    C.parse_config(overrides={"algo": "nes", "popsize": "7", "mirrored": "false"})


def test_file_and_flag_precedence(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("# experiment\nalgo = d3pg\nworkers = 2   # two\nseeds = 0-3\n")
    cfg = C.parse_config(str(path), {"workers": "8"})
    assert (cfg.algo, cfg.workers, cfg.seeds, cfg.lr) == ("d3pg", 8, (0, 1, 2, 3), 1e-4)
    path.write_text("algo d3pg\n")
    with pytest.raises(C.ConfigError, match="line 1"):
        C.parse_config(str(path))


def test_dumps_round_trip():
    cfg = C.ExperimentConfig(algo="neat", hidden=64, seeds=(3, 5), max_steps=12345)
    again = C.parse_config(overrides=C.parse_text(C.dumps(cfg)))
    assert again == cfg
    assert C.content_hash(C.dumps(cfg)) == C.content_hash(C.dumps(again))


def test_content_hash_matches_git_blob():
    # `printf 'hello\n' | git hash-object --stdin`
    assert C.content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_seed_ranges():
    assert C.parse_seeds("0-2,7") == (0, 1, 2, 7)
