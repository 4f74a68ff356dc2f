"""Synthetic multi-speaker corpus with "spoofed" variants for desk-scale runs.

Each speaker has a fundamental frequency and three formant resonances.
Bona fide utterances are jittered glottal pulse trains through the
speaker's formant filter plus breath noise. Spoofed utterances imitate the
target speaker imperfectly: a formant shift of system-specific size and random sign, a flattened
pitch contour and a vocoder-like high-band buzz.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .audio import SAMPLE_RATE, Waveform, write_audio
from .protocol import TrialRecord, write_protocol

SYSTEMS = ("A01", "A02", "A03", "A04", "A05", "A06")

# formant shift magnitude, buzz band (Hz), buzz level, pitch jitter kept;
# the shift direction is drawn per utterance
_SYSTEM_STYLE = {
    "A01": (0.12, (5200, 6800), 0.08, 0.2),
    "A02": (0.10, (5600, 7200), 0.07, 0.3),
    "A03": (0.08, (4800, 6400), 0.10, 0.1),
    "A04": (0.12, (6000, 7600), 0.06, 0.2),
    "A05": (0.15, (5000, 7000), 0.09, 0.3),
    "A06": (0.14, (5400, 7400), 0.08, 0.1),
}


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    f0: float
    formants: tuple[float, float, float]
    bandwidths: tuple[float, float, float]
    breath: float


def make_profiles(n_speakers: int, rng: np.random.Generator) -> list[SpeakerProfile]:
    profiles = []
    for i in range(n_speakers):
        profiles.append(SpeakerProfile(
            speaker_id=f"LA_{79 + i:04d}",
            f0=float(rng.uniform(90, 240)),
            formants=(float(rng.uniform(350, 900)), float(rng.uniform(1000, 2200)),
                      float(rng.uniform(2300, 3500))),
            bandwidths=(float(rng.uniform(60, 120)), float(rng.uniform(80, 160)),
                        float(rng.uniform(120, 220))),
            breath=float(rng.uniform(0.01, 0.05)),
        ))
    return profiles


def _resonator(x, freq, bw):
    r = np.exp(-np.pi * bw / SAMPLE_RATE)
    theta = 2 * np.pi * freq / SAMPLE_RATE
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return signal.lfilter([1.0 - r], a, x)


def _voice(profile, n, rng, formant_scale=1.0, jitter=1.0):
    t = np.arange(n) / SAMPLE_RATE
    vibrato = 1.0 + jitter * 0.04 * np.sin(2 * np.pi * rng.uniform(3, 6) * t
                                           + rng.uniform(0, 2 * np.pi))
    drift = 1.0 + jitter * 0.06 * (rng.standard_normal() * 0.5)
    f_inst = profile.f0 * vibrato * drift
    phase = np.cumsum(2 * np.pi * f_inst / SAMPLE_RATE) + rng.uniform(0, 2 * np.pi)
    pulses = np.maximum(np.sin(phase), 0) ** 8
    src = pulses - pulses.mean() + profile.breath * rng.standard_normal(n)
    y = np.zeros(n)
    for f, bw in zip(profile.formants, profile.bandwidths):
        y += _resonator(src, min(f * formant_scale, 7500), bw)
    env = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(2, 5) * t + rng.uniform(0, 2 * np.pi))
    return y * env


def _normalize(y, peak=0.5):
    return (y * (peak / (np.max(np.abs(y)) + 1e-9))).astype(np.float32)


def bonafide_utterance(profile, n, rng) -> Waveform:
    return Waveform(_normalize(_voice(profile, n, rng)))


def spoof_utterance(profile, system, n, rng) -> Waveform:
    shift, (lo, hi), level, jitter = _SYSTEM_STYLE[system]
    scale = 1.0 + shift * rng.choice((-1.0, 1.0))
    y = _voice(profile, n, rng, formant_scale=scale, jitter=jitter)
    y = y / (np.max(np.abs(y)) + 1e-9)
    sos = signal.butter(4, [lo, hi], btype="bandpass", fs=SAMPLE_RATE, output="sos")
    buzz = signal.sosfilt(sos, rng.standard_normal(n))
    y = y + level * buzz / (np.std(buzz) + 1e-9)
    return Waveform(_normalize(y))


def make_corpus(n_speakers=8, bonafide_per_speaker=8, spoof_per_system=2,
                systems=SYSTEMS, length=8000, seed=0, prefix="LA_T"):
    """Build ``(records, audio)``; ``audio`` maps utt_id to a Waveform.

    Speaker voices depend only on ``seed``; utterance randomness also
    depends on ``prefix`` so train and eval corpora differ for the same
    speakers.
    """
    rng = np.random.default_rng(seed)
    profiles = make_profiles(n_speakers, rng)
    utt_rng = np.random.default_rng([seed, sum(map(ord, prefix))])
    records, audio = [], {}
    counter = 1000000 + 7919 * sum(map(ord, prefix))
    for p in profiles:
        for _ in range(bonafide_per_speaker):
            counter += 1
            utt = f"{prefix}_{counter}"
            records.append(TrialRecord(p.speaker_id, utt, "-", "bonafide"))
            audio[utt] = bonafide_utterance(p, length, utt_rng)
        for system in systems:
            for _ in range(spoof_per_system):
                counter += 1
                utt = f"{prefix}_{counter}"
                records.append(TrialRecord(p.speaker_id, utt, system, "spoof"))
                audio[utt] = spoof_utterance(p, system, length, utt_rng)
    return records, audio


def write_corpus(records, audio, out_dir, protocol_name="protocol.txt"):
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        write_audio(audio[rec.utt_id], wav_dir / f"{rec.utt_id}.wav")
    write_protocol(records, out_dir / protocol_name)
    return out_dir / protocol_name, wav_dir
