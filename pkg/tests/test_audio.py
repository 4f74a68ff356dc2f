import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofbench.audio import (AlignPolicy, Waveform, align_length, align_samples, quantize,
                              read_audio, write_audio)
from spoofbench.errors import InvalidInputError, UnsupportedFormatError


def test_waveform_is_read_only_and_validated():
    w = Waveform(np.zeros(10))
    assert w.samples.dtype == np.float32
    with pytest.raises(ValueError):
        w.samples[0] = 1.0
    with pytest.raises(InvalidInputError):
        Waveform(np.array([]))
    with pytest.raises(InvalidInputError):
        Waveform(np.array([0.0, np.nan]))
    with pytest.raises(UnsupportedFormatError):
        Waveform(np.zeros(4), sample_rate=8000)


def test_align_examples():
    short = Waveform(np.arange(1, 4, dtype=np.float32))
    out = align_length(short, AlignPolicy(8, "fixed_start"))
    np.testing.assert_array_equal(out.samples, [1, 2, 3, 1, 2, 3, 1, 2])

    long = Waveform(np.arange(64600 + 100, dtype=np.float32))
    fixed = align_length(long, AlignPolicy())
    np.testing.assert_array_equal(fixed.samples, long.samples[:64600])

    exact = Waveform(np.ones(64600))
    assert align_length(exact, AlignPolicy()) is exact


def test_random_crop_seeded_and_in_range():
    x = np.arange(1000, dtype=np.float32)
    p = AlignPolicy(100, "random_crop", seed=3)
    a = align_samples(x, p)
    b = align_samples(x, p)
    np.testing.assert_array_equal(a, b)
    start = int(a[0])
    np.testing.assert_array_equal(a, x[start:start + 100])
    rng = np.random.default_rng(0)
    starts = {int(align_samples(x, p, rng)[0]) for _ in range(50)}
    assert len(starts) > 10


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 300), target=st.integers(1, 300),
       mode=st.sampled_from(["fixed_start", "random_crop"]), seed=st.integers(0, 100))
def test_align_length_property(n, target, mode, seed):
    x = np.random.default_rng(seed).standard_normal(n).astype(np.float32)
    out = align_samples(x, AlignPolicy(target, mode, seed))
    assert out.shape == (target,)
    # every output sample is a cyclic copy of a contiguous input run
    if n >= target:
        assert any(np.array_equal(out, x[s:s + target]) for s in range(n - target + 1))
    else:
        np.testing.assert_array_equal(out, np.resize(x, target))


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 1600).astype(np.float32)
    path = tmp_path / "a.wav"
    write_audio(Waveform(x), path)
    y = read_audio(path).samples
    assert np.max(np.abs(y - x)) <= 1 / 32768


def test_quantization_saturates_and_round_trips_exactly(tmp_path):
    assert quantize(np.array([2.0, -2.0, 1.0]))[:3].tolist() == [32767, -32768, 32767]
    pcm = np.arange(-32768, 32768, 97, dtype=np.int16)
    w = Waveform(pcm.astype(np.float32) / 32768)
    write_audio(w, tmp_path / "b.wav")
    assert read_audio(tmp_path / "b.wav") == w


def test_read_rejects_bad_formats(tmp_path):
    stereo = tmp_path / "stereo.wav"
    with wave.open(str(stereo), "wb") as fh:
        fh.setnchannels(2)
        fh.setsampwidth(2)
        fh.setframerate(16000)
        fh.writeframes(b"\x00" * 40)
    with pytest.raises(UnsupportedFormatError, match="mono"):
        read_audio(stereo)
    slow = tmp_path / "slow.wav"
    with wave.open(str(slow), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(8000)
        fh.writeframes(b"\x00" * 40)
    with pytest.raises(UnsupportedFormatError, match="16000"):
        read_audio(slow)
    with pytest.raises(FileNotFoundError):
        read_audio(tmp_path / "missing.wav")
    (tmp_path / "x.mp3").write_bytes(b"junk")
    with pytest.raises(UnsupportedFormatError):
        read_audio(tmp_path / "x.mp3")


def test_flac_round_trip(tmp_path):
    soundfile = pytest.importorskip("soundfile")
    pcm = np.arange(-1000, 1000, dtype=np.int16)
    soundfile.write(str(tmp_path / "a.flac"), pcm, 16000, subtype="PCM_16")
    np.testing.assert_array_equal(read_audio(tmp_path / "a.flac").samples,
                                  pcm.astype(np.float32) / 32768)
