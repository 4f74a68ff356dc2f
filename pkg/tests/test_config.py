import pytest

from spoofbench.config import REFERENCE, RunConfig
from spoofbench.errors import ConfigError


def test_reference_defaults():
    cfg = RunConfig("reference")
    assert cfg["audio"]["target_length"] == 64600
    assert cfg["antispoof"]["lr"] == 1e-6 and cfg["antispoof"]["max_epochs"] == 100
    assert cfg["antispoof"]["batch"] == 32
    assert (cfg["spkembed"]["margin"], cfg["spkembed"]["scale"]) == (0.3, 15.0)
    assert cfg["spkembed"]["peak_lr"] == 1e-5
    assert cfg["spkembed"]["total_iters"] == 100000
    assert (cfg["enhancer"]["repeats"], cfg["enhancer"]["blocks_per_repeat"]) == (3, 8)
    assert (cfg["enhancer"]["lr"], cfg["enhancer"]["epochs"], cfg["enhancer"]["batch"]) == \
        (1e-5, 300, 8)
    assert cfg["split"]["attacker_systems"] == "A01,A03,A05"


def test_toy_profile_overrides_only_scale():
    toy = RunConfig("toy")
    assert toy["audio"]["target_length"] == 8000
    assert toy["spkembed"]["margin"] == REFERENCE["spkembed"]["margin"]
    assert toy.profile == "toy"


def test_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nglobal.seed = 5\nantispoof.batch = 4\nenhancer.epochs = 7\n")
    cfg = RunConfig.load("toy", path, overrides=["enhancer.epochs=9"],
                         env={"SPOOFBENCH_SEED": "11"})
    assert cfg.seed == 11
    assert cfg["antispoof"]["batch"] == 4
    assert cfg["enhancer"]["epochs"] == 9
    assert cfg["audio"]["target_length"] == 8000
    cfg = RunConfig.load("toy", path, env={"SPOOFBENCH_SEED": "11"}, seed=3)
    assert cfg.seed == 3
    cfg = RunConfig.load(None, path, env={})
    assert cfg.seed == 5 and cfg.profile == "reference"


def test_profile_named_in_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("global.profile = toy\n")
    assert RunConfig.load(None, path, env={})["audio"]["target_length"] == 8000


def test_round_trip_text():
    cfg = RunConfig("toy")
    again = RunConfig("reference")
    again.update_from_text(cfg.to_text())
    assert again.data == cfg.data


@pytest.mark.parametrize("text, match", [("nokey\n", "section.key = value"),
                                         ("antispoof.nope = 1\n", "unknown"),
                                         ("antispoof.lr = fast\n", "parse"),
                                         ("enhancer.resample_pairs = maybe\n", "boolean")])
def test_bad_config_lines(text, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig().update_from_text(text, "x.cfg")


def test_unknown_profile():
    with pytest.raises(ConfigError):
        RunConfig("huge")
