"""Waveforms, length alignment and 16 kHz audio file I/O."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import InvalidInputError, UnsupportedFormatError

SAMPLE_RATE = 16000
TARGET_LENGTH = 64600
PCM_SCALE = 32768.0
PCM_MAX = 1.0 - 1.0 / PCM_SCALE


@dataclass(frozen=True, eq=False)
class Waveform:
    """Immutable mono waveform at 16 kHz.

    ``samples`` is stored as a read-only float32 array so instances can be
    shared freely between threads.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float32, copy=True).reshape(-1)
        if arr.size < 1:
            raise InvalidInputError("waveform must contain at least one sample")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("waveform contains NaN or Inf samples")
        if self.sample_rate != SAMPLE_RATE:
            raise UnsupportedFormatError(
                f"sample rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return (self.sample_rate == other.sample_rate
                and np.array_equal(self.samples, other.samples))

    __hash__ = None

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def as_waveform(x) -> Waveform:
    return x if isinstance(x, Waveform) else Waveform(np.asarray(x))


@dataclass(frozen=True)
class AlignPolicy:
    """How utterances are brought to a fixed length.

    Training uses ``random_crop``; evaluation uses ``fixed_start`` so that
    scores are reproducible.
    """

    target_length: int = TARGET_LENGTH
    mode: Literal["random_crop", "fixed_start"] = "fixed_start"
    seed: int = 0

    def __post_init__(self):
        if self.target_length < 1:
            raise InvalidInputError("target_length must be positive")
        if self.mode not in ("random_crop", "fixed_start"):
            raise InvalidInputError(f"unknown align mode {self.mode!r}")


def align_samples(samples: np.ndarray, policy: AlignPolicy,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Array-level worker behind :func:`align_length`.

    Shorter inputs are tiled end-to-end and cropped from the start; longer
    inputs are cropped to a contiguous window whose start is 0 for
    ``fixed_start`` and uniform for ``random_crop``.
    """
    samples = np.asarray(samples).reshape(-1)
    n = samples.shape[0]
    if n == 0:
        raise InvalidInputError("cannot align an empty waveform")
    target = policy.target_length
    if n == target:
        return samples
    if n < target:
        reps = -(-target // n)
        return np.tile(samples, reps)[:target]
    if policy.mode == "fixed_start":
        start = 0
    else:
        if rng is None:
            rng = np.random.default_rng(policy.seed)
        start = int(rng.integers(0, n - target + 1))
    return samples[start:start + target]


def align_length(wav: Waveform, policy: AlignPolicy,
                 rng: np.random.Generator | None = None) -> Waveform:
    """Crop and/or repeat ``wav`` to ``policy.target_length`` samples.

    With ``random_crop`` and no explicit ``rng`` the crop start is drawn from
    a generator seeded with ``policy.seed``, so a single call is
    deterministic. Training loops pass their own generator to get fresh
    crops each epoch.
    """
    if len(wav.samples) == 0:
        raise InvalidInputError("cannot align an empty waveform")
    if len(wav) == policy.target_length:
        return wav
    return Waveform(align_samples(wav.samples, policy, rng), wav.sample_rate)


def _read_wav(path: Path) -> Waveform:
    with wave.open(str(path), "rb") as fh:
        channels = fh.getnchannels()
        rate = fh.getframerate()
        width = fh.getsampwidth()
        if channels != 1:
            raise UnsupportedFormatError(
                f"{path}: expected mono audio, got {channels} channels")
        if rate != SAMPLE_RATE:
            raise UnsupportedFormatError(
                f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
        if width != 2:
            raise UnsupportedFormatError(
                f"{path}: expected 16-bit PCM, got {8 * width}-bit")
        raw = fh.readframes(fh.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float32) / PCM_SCALE)


def _read_soundfile(path: Path) -> Waveform:
    try:
        import soundfile
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise UnsupportedFormatError(
            f"{path}: reading {path.suffix} needs the optional 'soundfile' "
            "package") from exc
    info = soundfile.info(str(path))
    if info.channels != 1:
        raise UnsupportedFormatError(
            f"{path}: expected mono audio, got {info.channels} channels")
    if info.samplerate != SAMPLE_RATE:
        raise UnsupportedFormatError(
            f"{path}: expected {SAMPLE_RATE} Hz, got {info.samplerate} Hz")
    pcm, _ = soundfile.read(str(path), dtype="int16")
    return Waveform(pcm.astype(np.float32) / PCM_SCALE)


def read_audio(path) -> Waveform:
    """Read a mono 16 kHz 16-bit WAV (or FLAC, if soundfile is installed)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    suffix = path.suffix.lower()
    if suffix == ".wav":
        try:
            return _read_wav(path)
        except wave.Error as exc:
            raise UnsupportedFormatError(f"{path}: {exc}") from exc
    if suffix == ".flac":
        return _read_soundfile(path)
    raise UnsupportedFormatError(f"{path}: unsupported container {suffix!r}")


def quantize(samples: np.ndarray) -> np.ndarray:
    """Float samples to int16 PCM: clip to [-1, 1 - 2**-15], round to nearest."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, PCM_MAX)
    return np.round(clipped * PCM_SCALE).astype("<i2")


def write_audio(wav: Waveform, path) -> None:
    """Write ``wav`` as 16-bit PCM WAV, saturating out-of-range samples."""
    path = Path(path)
    pcm = quantize(wav.samples)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(wav.sample_rate)
        fh.writeframes(pcm.tobytes())
