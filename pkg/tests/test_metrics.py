import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofbench.audio import Waveform
from spoofbench.errors import InvalidInputError
from spoofbench.metrics import (MISSING, ScoreSet, ScoringRun, compute_eer, dominance_fraction,
                                emit_report, join_scores, read_scores, score_distribution,
                                spectrogram, write_scores)
from spoofbench.protocol import TrialRecord

from conftest import brute_force_eer, tone


def eer(bona, spoof):
    return compute_eer(ScoreSet.from_arrays(bona, spoof))


def test_eer_examples():
    assert eer([1, 2, 3], [-1, 0])[0] == 0.0
    e, t = eer([0], [1])
    assert e == 1.0 and t == 0.5
    with pytest.raises(InvalidInputError):
        eer([1, 2], [])


def test_eer_chance_band():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        e, _ = eer(rng.standard_normal(200), rng.standard_normal(200))
        assert 0.35 <= e <= 0.65


scores = st.lists(st.integers(-8, 8).map(lambda v: v / 4), min_size=1, max_size=30)


@settings(max_examples=150, deadline=None)
@given(bona=scores, spoof=scores)
def test_eer_matches_brute_force(bona, spoof):
    got = eer(bona, spoof)
    want = brute_force_eer(bona, spoof)
    assert got[0] == pytest.approx(want[0], abs=1e-9)
    assert got[1] == pytest.approx(want[1], abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(bona=scores, spoof=scores)
def test_eer_invariant_under_increasing_transform(bona, spoof):
    f = lambda x: np.exp(np.asarray(x) / 2.0) * 3 + 1  # noqa: E731
    assert eer(f(bona), f(spoof))[0] == pytest.approx(eer(bona, spoof)[0], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(bona=scores, spoof=scores, tie=st.integers(-8, 8))
def test_duplicated_pair_moves_eer_little(bona, spoof, tie):
    base = eer(bona, spoof)[0]
    moved = eer(bona + [tie / 4], spoof + [tie / 4])[0]
    assert abs(moved - base) <= 1.0 / min(len(bona), len(spoof)) + 1e-12


def test_score_distribution_examples():
    t = score_distribution({"a": [2.0]}, bins=5)
    assert t.grid[0] < 2.0 <= t.grid[-1]
    assert list(t.cdfs["a"]) == [0.0 if x < 2.0 else 1.0 for x in t.grid]
    t = score_distribution({"a": [1, 2, 3], "b": [1, 2, 3]})
    np.testing.assert_array_equal(t.cdfs["a"], t.cdfs["b"])


@settings(max_examples=40, deadline=None)
@given(a=scores, b=scores, bins=st.integers(2, 300))
def test_cdfs_monotone_and_end_at_one(a, b, bins):
    t = score_distribution(ScoreSet.from_arrays(a, b), bins)
    assert len(t.grid) == bins
    for c in t.cdfs.values():
        assert np.all(np.diff(c) >= 0) and c[-1] == 1.0


def test_dominance_fraction():
    t = score_distribution({"hi": np.arange(10) + 5.0, "lo": np.arange(10.0)})
    assert dominance_fraction(t, "hi", "lo") == 1.0
    assert dominance_fraction(t, "lo", "hi") < 0.2


def test_spectrogram_tone_and_shape():
    spec = spectrogram(Waveform(tone(1000.0, 16000)))
    assert spec.shape == ((16000 - 512) // 256 + 1, 257)
    assert round(1000 * 512 / 16000) == 32
    assert np.all(spec.argmax(axis=1) == 32)
    assert spec.max() == 0.0


def test_spectrogram_silence_and_short():
    assert np.all(spectrogram(Waveform(np.zeros(1024))) == -80.0)
    with pytest.raises(InvalidInputError):
        spectrogram(Waveform(np.zeros(511)))


def test_score_file_round_trip(tmp_path):
    data = {"a": 0.1, "b": -3.25, "c": 1e-7}
    write_scores(data, tmp_path / "s.txt")
    assert read_scores(tmp_path / "s.txt") == pytest.approx(data)
    (tmp_path / "bad.txt").write_text("a 1 2\n")
    with pytest.raises(InvalidInputError, match=":1:"):
        read_scores(tmp_path / "bad.txt")
    recs = [TrialRecord("s", "a", "-", "bonafide"), TrialRecord("s", "b", "A01", "spoof"),
            TrialRecord("s", "z", "A01", "spoof")]
    joined = join_scores(data, recs)
    assert joined.entries == [("a", 0.1, "bonafide"), ("b", -3.25, "spoof")]


def test_report_table_and_images(tmp_path, caplog):
    ss = ScoreSet.from_arrays([1.0, 2.0, 0.3], [0.5, -1.0, 0.0])
    runs = [ScoringRun("wav2vec 2.0", "None", ss), ScoringRun("wav2vec 2.0", "HuBERT", None)]
    with caplog.at_level(logging.WARNING):
        result = emit_report(runs, tmp_path, {"utt": (Waveform(tone(n=4000)),
                                                     Waveform(tone(500.0, 4000)))})
    assert result["table"] == {"wav2vec 2.0": {"None": round(compute_eer(ss)[0] * 100, 2),
                                               "HuBERT": MISSING}}
    assert "missing" in caplog.text
    assert (tmp_path / "results.csv").read_text(encoding="utf-8").splitlines()[1].endswith(MISSING)
    assert json.loads((tmp_path / "results.json").read_text())["missing"] == [
        ["wav2vec 2.0", "HuBERT"]]
    for name in result["images"]:
        assert (tmp_path / name).read_bytes()[:4] == b"\x89PNG"
    assert len(result["images"]) == 2


def test_report_one_cell(tmp_path):
    result = emit_report([ScoringRun("m", "c", ScoreSet.from_arrays([1], [0]))], tmp_path)
    assert result["table"] == {"m": {"c": 0.0}}
    with pytest.raises(InvalidInputError):
        emit_report([], tmp_path)
