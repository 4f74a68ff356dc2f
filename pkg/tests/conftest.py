"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from spoofbench.frontend import FrontendConfig, build_tiny_frontend

torch.set_num_threads(1)

# ASVspoof 2019 LA training partition: 20 speakers, 2580 bona fide trials,
# 3800 spoofed trials for each of A01..A06.
LA19_SPEAKERS = 20
LA19_BONAFIDE = 2580
LA19_PER_SYSTEM = 3800
LA19_SYSTEMS = ("A01", "A02", "A03", "A04", "A05", "A06")


def la19_train_lines(seed: int = 7) -> list[str]:
    """Format-identical stand-in for ASVspoof2019.LA.cm.train.trn.txt.

    Same column layout, speaker/utterance id style and class totals; per
    speaker bona fide counts vary and include odd numbers.
    """
    rng = np.random.default_rng(seed)
    speakers = [f"LA_{79 + i:04d}" for i in range(LA19_SPEAKERS)]
    counts = rng.multinomial(LA19_BONAFIDE - 20 * 100, np.full(20, 1 / 20)) + 100
    ids = rng.choice(np.arange(1000000, 10000000), size=LA19_BONAFIDE
                     + 6 * LA19_PER_SYSTEM, replace=False)
    lines, k = [], 0
    for spk, n in zip(speakers, counts):
        for _ in range(n):
            lines.append(f"{spk} LA_T_{ids[k]} - - bonafide")
            k += 1
    per_spk = LA19_PER_SYSTEM // LA19_SPEAKERS
    for system in LA19_SYSTEMS:
        for spk in speakers:
            for _ in range(per_spk):
                lines.append(f"{spk} LA_T_{ids[k]} - {system} spoof")
                k += 1
    order = rng.permutation(len(lines))
    return [lines[i] for i in order]


@pytest.fixture(scope="session")
def la19_protocol(tmp_path_factory):
    path = tmp_path_factory.mktemp("la19") / "ASVspoof2019.LA.cm.train.trn.txt"
    path.write_text("\n".join(la19_train_lines()) + "\n", encoding="utf-8")
    return path


def brute_force_eer(bona, spoof):
    """O(n^2) EER: every candidate threshold, rates counted trial by trial.

    Thresholds: the lowest score, each midpoint between consecutive distinct
    scores and a point above the highest score. Accept when score >= t.
    The EER is read off by linear interpolation of (FAR, FRR, t) between
    the last point with FAR > FRR and the first with FAR <= FRR.
    """
    bona, spoof = list(map(float, bona)), list(map(float, spoof))
    levels = sorted(set(bona + spoof))
    cands = [levels[0]]
    cands += [(a + b) / 2 for a, b in zip(levels, levels[1:])]
    cands.append(math.nextafter(levels[-1], math.inf))
    points = []
    for t in cands:
        far = sum(1 for s in spoof if s >= t) / len(spoof)
        frr = sum(1 for s in bona if s < t) / len(bona)
        points.append((far, frr, t))
    for j, (far, frr, t) in enumerate(points):
        if far - frr <= 0:
            if far == frr:
                return far, t
            f0, r0, t0 = points[j - 1]
            d0, d1 = f0 - r0, far - frr
            a = d0 / (d0 - d1)
            return f0 + a * (far - f0), t0 + a * (t - t0)
    raise AssertionError("FAR - FRR never reached zero")


def xent_cosine_oracle(emb, weights, target, scale=1.0):
    """Plain softmax cross-entropy over s*cos logits, in float64 numpy."""
    e = emb / np.linalg.norm(emb)
    w = weights / np.linalg.norm(weights, axis=1, keepdims=True)
    z = scale * (w @ e)
    z = z - z.max()
    return float(-(z[target] - np.log(np.exp(z).sum())))


@pytest.fixture
def tiny_frontend():
    return build_tiny_frontend(FrontendConfig(embed_dim=16, hidden_layers=1), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tone(freq=1000.0, n=16000, amp=0.5):
    t = np.arange(n) / 16000.0
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.float32)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number, title, ok, detail):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
