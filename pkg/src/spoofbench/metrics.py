"""EER, bona fide score distributions, spectrograms and run reports."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .audio import as_waveform
from .errors import InvalidInputError

log = logging.getLogger(__name__)

MISSING = "—"

# Published full-scale EERs (%) for anti-spoofing models trained on the whole
# 2019 LA training set, keyed test set -> model -> enhancement condition.
# Kept for side-by-side display in reports; not reproducible at toy scale.
REFERENCE_EER = {
    "2019LA": {
        "RawNet2": {"None": 17.49, "wav2vec 2.0": 60.60, "HuBERT": 57.03},
        "wav2vec 2.0": {"None": 0.81, "wav2vec 2.0": 0.60, "HuBERT": 0.71},
        "HuBERT": {"None": 1.62, "wav2vec 2.0": 2.86, "HuBERT": 2.83},
        "WavLM": {"None": 1.03, "wav2vec 2.0": 2.68, "HuBERT": 2.53},
        "WavLM+": {"None": 0.44, "wav2vec 2.0": 0.24, "HuBERT": 0.23},
    },
    "2021LA": {
        "RawNet2": {"None": 18.06, "wav2vec 2.0": 67.68, "HuBERT": 63.70},
        "wav2vec 2.0": {"None": 7.20, "wav2vec 2.0": 16.57, "HuBERT": 16.47},
        "HuBERT": {"None": 4.89, "wav2vec 2.0": 25.94, "HuBERT": 23.95},
        "WavLM": {"None": 7.99, "wav2vec 2.0": 33.95, "HuBERT": 32.59},
        "WavLM+": {"None": 7.55, "wav2vec 2.0": 26.94, "HuBERT": 25.66},
    },
    "2021DF": {
        "RawNet2": {"None": 24.01, "wav2vec 2.0": 68.46, "HuBERT": 65.77},
        "wav2vec 2.0": {"None": 10.31, "wav2vec 2.0": 25.49, "HuBERT": 26.36},
        "HuBERT": {"None": 18.93, "wav2vec 2.0": 46.22, "HuBERT": 45.49},
        "WavLM": {"None": 16.14, "wav2vec 2.0": 46.71, "HuBERT": 45.97},
        "WavLM+": {"None": 11.08, "wav2vec 2.0": 33.63, "HuBERT": 32.24},
    },
}


@dataclass
class ScoreSet:
    """Labeled bona fide scores: ``(utt_id, score, key)`` entries."""

    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.entries = [(str(u), float(s), str(k)) for u, s, k in self.entries]
        for u, s, k in self.entries:
            if k not in ("bonafide", "spoof"):
                raise InvalidInputError(f"{u}: unknown key {k!r}")
            if not math.isfinite(s):
                raise InvalidInputError(f"{u}: non-finite score")

    @classmethod
    def from_arrays(cls, bonafide=(), spoof=()):
        entries = [(f"b{i}", s, "bonafide") for i, s in enumerate(bonafide)]
        entries += [(f"s{i}", s, "spoof") for i, s in enumerate(spoof)]
        return cls(entries)

    def scores(self, key: str) -> np.ndarray:
        return np.array([s for _, s, k in self.entries if k == key], dtype=np.float64)

    def __len__(self):
        return len(self.entries)


def compute_eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and the threshold where FAR and FRR cross.

    Operating points sit at score boundaries: the lowest score (everything
    accepted), the midpoint between each pair of adjacent distinct scores,
    and just above the highest score (everything rejected). A trial is
    accepted when its score is >= the threshold. FAR - FRR falls from 1 to
    -1 across these points; the EER and threshold are linearly interpolated
    between the two points where it changes sign (or taken exactly where it
    is zero).
    """
    bona = scores.scores("bonafide")
    spoof = scores.scores("spoof")
    if bona.size == 0 or spoof.size == 0:
        raise InvalidInputError("EER needs at least one bona fide and one spoof score")
    bona.sort()
    spoof.sort()
    levels = np.unique(np.concatenate([bona, spoof]))
    # rates with threshold "at" each distinct level, then the reject-all point
    far = np.append(
        (spoof.size - np.searchsorted(spoof, levels, side="left")) / spoof.size, 0.0)
    frr = np.append(np.searchsorted(bona, levels, side="left") / bona.size, 1.0)
    thresholds = np.concatenate([
        levels[:1], (levels[:-1] + levels[1:]) / 2.0,
        [np.nextafter(levels[-1], np.inf)]])
    diff = far - frr
    i = int(np.argmax(diff <= 0))
    if diff[i] == 0:
        return float(far[i]), float(thresholds[i])
    alpha = diff[i - 1] / (diff[i - 1] - diff[i])
    eer = far[i - 1] + alpha * (far[i] - far[i - 1])
    thr = thresholds[i - 1] + alpha * (thresholds[i] - thresholds[i - 1])
    return float(eer), float(thr)


@dataclass
class CDFTable:
    grid: np.ndarray
    cdfs: dict

    def to_rows(self):
        names = list(self.cdfs)
        yield ["score"] + names
        for j, x in enumerate(self.grid):
            yield [float(x)] + [float(self.cdfs[n][j]) for n in names]


def score_distribution(scores, bins: int = 200) -> CDFTable:
    """Empirical CDFs (fraction of scores <= x) on a shared score grid.

    ``scores`` is a :class:`ScoreSet` (one curve per key) or a mapping from
    curve name to score arrays. The grid spans the observed range; a
    degenerate range is widened by one unit either side.
    """
    if isinstance(scores, ScoreSet):
        groups = {k: scores.scores(k) for k in ("bonafide", "spoof")
                  if scores.scores(k).size}
    else:
        groups = {k: np.asarray(v, dtype=np.float64) for k, v in scores.items()}
    groups = {k: np.sort(v) for k, v in groups.items() if v.size}
    if not groups:
        raise InvalidInputError("no scores for a distribution")
    if bins < 2:
        raise InvalidInputError("need at least two grid points")
    allv = np.concatenate(list(groups.values()))
    lo, hi = allv.min(), allv.max()
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    grid = np.linspace(lo, hi, bins)
    grid[-1] = hi
    cdfs = {k: np.searchsorted(v, grid, side="right") / v.size
            for k, v in groups.items()}
    return CDFTable(grid, cdfs)


def dominance_fraction(table: CDFTable, right: str, left: str) -> float:
    """Share of grid points where ``right``'s CDF is <= ``left``'s."""
    return float(np.mean(table.cdfs[right] <= table.cdfs[left]))


def spectrogram(wav, frame: int = 512, hop: int = 256, floor_db: float = -80.0) -> np.ndarray:
    """Magnitude STFT in dB relative to the maximum, shape ``(frames, frame//2+1)``.

    Periodic Hann window, no centering padding. Values are clipped from
    below at ``floor_db``; an all-zero input gives the floor everywhere.
    """
    x = as_waveform(wav).samples.astype(np.float64)
    if x.size < frame:
        raise InvalidInputError(f"need at least {frame} samples for a spectrogram")
    window = np.hanning(frame + 1)[:-1]
    frames = np.lib.stride_tricks.sliding_window_view(x, frame)[::hop]
    mag = np.abs(np.fft.rfft(frames * window, axis=1))
    ref = mag.max()
    if ref == 0:
        return np.full(mag.shape, floor_db)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / ref)
    return np.maximum(db, floor_db)


@dataclass
class ScoringRun:
    model: str
    condition: str
    scores: ScoreSet | None = None


def results_table(runs: Sequence[ScoringRun]):
    models = list(dict.fromkeys(r.model for r in runs))
    conditions = list(dict.fromkeys(r.condition for r in runs))
    cells = {}
    for r in runs:
        if r.scores is None or len(r.scores) == 0:
            continue
        try:
            cells[(r.model, r.condition)] = round(compute_eer(r.scores)[0] * 100, 2)
        except InvalidInputError as exc:
            log.warning("run %s/%s not scorable: %s", r.model, r.condition, exc)
    table = {m: {c: cells.get((m, c), MISSING) for c in conditions} for m in models}
    missing = [(m, c) for m in models for c in conditions if (m, c) not in cells]
    return table, conditions, missing


def emit_report(runs: Sequence[ScoringRun], out_dir,
                spectrogram_pairs: Mapping[str, tuple] | None = None,
                metadata: dict | None = None, bins: int = 200) -> dict:
    """Write results.csv/json, CDF plots and before/after spectrogram plots.

    Missing or unscorable model x condition cells are written as an em dash
    and logged as warnings; the report is produced regardless.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not runs:
        raise InvalidInputError("no scoring runs to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table, conditions, missing = results_table(runs)
    for m, c in missing:
        log.warning("missing result for %s under %s", m, c)

    with open(out_dir / "results.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["anti-spoofing"] + conditions)
        for m, row in table.items():
            w.writerow([m] + [row[c] for c in conditions])

    images = []
    by_model = {}
    for r in runs:
        if r.scores is not None and len(r.scores):
            by_model.setdefault(r.model, []).append(r)
    for model, model_runs in by_model.items():
        groups = {}
        for r in model_runs:
            bona = r.scores.scores("bonafide")
            spoof = r.scores.scores("spoof")
            if bona.size and "bona fide" not in groups:
                groups["bona fide"] = bona
            if spoof.size:
                groups[f"spoof ({r.condition})"] = spoof
        cdf = score_distribution(groups, bins)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, curve in cdf.cdfs.items():
            ax.step(cdf.grid, curve, where="post", label=name)
        ax.set_xlabel("bona fide score")
        ax.set_ylabel("cumulative fraction")
        ax.legend(fontsize="small")
        fig.tight_layout()
        path = out_dir / f"cdf_{_slug(model)}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        images.append(path.name)
        with open(out_dir / f"cdf_{_slug(model)}.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(cdf.to_rows())

    for name, (before, after) in (spectrogram_pairs or {}).items():
        fig, axes = plt.subplots(2, 1, figsize=(5, 5), sharex=True)
        for ax, wav, title in zip(axes, (before, after), ("original", "enhanced")):
            ax.imshow(spectrogram(wav).T, origin="lower", aspect="auto", cmap="magma")
            ax.set_title(f"{name} ({title})", fontsize="small")
            ax.set_ylabel("frequency bin")
        axes[-1].set_xlabel("frame")
        fig.tight_layout()
        path = out_dir / f"spec_{_slug(name)}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        images.append(path.name)

    result = {"table": table, "conditions": conditions,
              "missing": [list(x) for x in missing], "images": images,
              "reference_eer_percent": REFERENCE_EER,
              "metadata": metadata or {}}
    with open(out_dir / "results.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, ensure_ascii=False)
    return result


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)


def read_scores(path) -> dict[str, float]:
    """``utt_id<TAB>score`` lines."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise InvalidInputError(f"{path}:{lineno}: expected 'utt_id score'")
            out[parts[0]] = float(parts[1])
    return out


def write_scores(scores: Mapping[str, float], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt, s in scores.items():
            fh.write(f"{utt}\t{float(s):.9g}\n")


def join_scores(scores: Mapping[str, float], records) -> ScoreSet:
    """Attach protocol keys to scores; records without a score are skipped."""
    entries = [(r.utt_id, scores[r.utt_id], r.key) for r in records if r.utt_id in scores]
    if not entries:
        raise InvalidInputError("no scored utterances match the protocol")
    return ScoreSet(entries)
