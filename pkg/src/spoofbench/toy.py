"""End-to-end attacker/defender run on the synthetic corpus.

Used by the acceptance suite and handy for quick experiments::

    from spoofbench.toy import run_toy_attack
    result = run_toy_attack(seed=0)
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .antispoof import AntispoofConfig, bonafide_scores, build_antispoof, train_antispoof
from .audio import AlignPolicy
from .enhancer import EnhancerConfig, SpoofPair, build_enhancer, enhance_many, train_enhancer
from .frontend import FrontendConfig, build_tiny_frontend
from .metrics import dominance_fraction, score_distribution
from .protocol import SplitPlan, make_split, pair_for_enhancement
from .speaker import (AAMConfig, LrSchedule, build_extractor, cosine_scores,
                      extract_embeddings, freeze, train_extractor)
from .synth import make_corpus

TOY_LENGTH = 8000
TOY_FRONTEND = FrontendConfig(embed_dim=32, hidden_layers=2)
TOY_ANTISPOOF = AntispoofConfig(reduce_dim=24, stage1_channels=8, stage2_channels=16,
                                lr=1e-3, max_epochs=15, batch=16)
TOY_ENHANCER = EnhancerConfig(encoder_filters=64, encoder_kernel=32, encoder_stride=16,
                              bottleneck_channels=32, block_channels=32,
                              skip_channels=32, repeats=3, blocks_per_repeat=8,
                              lr=1e-3, epochs=15, batch=8)


@dataclass
class ToyAttackResult:
    cos_original: float
    cos_enhanced: float
    dominance: float
    eer_original: float
    eer_enhanced: float
    enhancer_losses: list = field(default_factory=list)
    extractor_losses: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def cos_gain(self) -> float:
        return self.cos_enhanced - self.cos_original


def run_toy_attack(seed: int = 0, n_speakers: int = 8, length: int = TOY_LENGTH,
                   bonafide_per_speaker: int = 40, spoof_per_system: int = 6,
                   spk_iters: int = 300, spk_peak: float = 3e-3,
                   enhancer_config: EnhancerConfig = TOY_ENHANCER,
                   antispoof_config: AntispoofConfig = TOY_ANTISPOOF,
                   verbose: bool = False) -> ToyAttackResult:
    from .metrics import ScoreSet, compute_eer

    start = time.time()
    torch.manual_seed(seed)
    records, audio = make_corpus(n_speakers, bonafide_per_speaker,
                                 spoof_per_system, length=length, seed=seed)
    attacker, defender = make_split(records, SplitPlan(seed=seed))
    eval_records, eval_audio = make_corpus(n_speakers, bonafide_per_speaker=4,
                                           spoof_per_system=2, length=length,
                                           seed=seed, prefix="LA_E")
    train_policy = AlignPolicy(length, "random_crop", seed)

    # attacker: speaker extractor on its bona fide half
    bona = [r for r in attacker if r.key == "bonafide"]
    extractor = build_extractor(build_tiny_frontend(TOY_FRONTEND, seed))
    spk_report = train_extractor(
        extractor, [audio[r.utt_id] for r in bona], [r.speaker_id for r in bona],
        LrSchedule(spk_iters, peak=spk_peak), AAMConfig(), batch=16,
        policy=train_policy, seed=seed)
    freeze(extractor)
    _tick(verbose, "extractor", start)

    pairs = [SpoofPair(audio[p.spoof.utt_id], audio[p.bonafide.utt_id], p.target_speaker)
             for p in pair_for_enhancement(attacker, seed)]
    pool = {}
    for r in bona:
        pool.setdefault(r.speaker_id, []).append(audio[r.utt_id])
    enhancer = build_enhancer(enhancer_config.__class__(
        **{**enhancer_config.__dict__, "seed": seed}))
    enh_report = train_enhancer(enhancer, pairs, extractor, bonafide_pool=pool)
    _tick(verbose, "enhancer", start)

    # held out: eval-corpus spoofs against eval-corpus bona fide of the same speaker
    eval_spoof = [r for r in eval_records if r.key == "spoof"]
    eval_bona = [r for r in eval_records if r.key == "bonafide"]
    spoof_wavs = [eval_audio[r.utt_id] for r in eval_spoof]
    enhanced = enhance_many(spoof_wavs, enhancer)
    rng = np.random.default_rng(seed)
    by_spk = {}
    for r in eval_bona:
        by_spk.setdefault(r.speaker_id, []).append(eval_audio[r.utt_id])
    refs = [by_spk[r.speaker_id][int(rng.integers(len(by_spk[r.speaker_id])))]
            for r in eval_spoof]
    ref_emb = extract_embeddings(refs, extractor)
    cos_orig = cosine_scores(extract_embeddings(spoof_wavs, extractor), ref_emb)
    cos_enh = cosine_scores(extract_embeddings(enhanced, extractor), ref_emb)

    # defender: separately trained anti-spoofing model on its own split
    d_front = build_tiny_frontend(TOY_FRONTEND, seed + 1000)
    cfg = antispoof_config.__class__(**{**antispoof_config.__dict__, "seed": seed})
    detector = build_antispoof(d_front, cfg)
    train_antispoof(detector, [audio[r.utt_id] for r in defender],
                    [int(r.key == "bonafide") for r in defender], cfg, train_policy)
    _tick(verbose, "detector", start)
    s_orig = bonafide_scores(spoof_wavs, detector)
    s_enh = bonafide_scores(enhanced, detector)
    s_bona = bonafide_scores([eval_audio[r.utt_id] for r in eval_bona], detector)
    table = score_distribution({"enhanced": s_enh, "original": s_orig})
    result = ToyAttackResult(
        cos_original=float(cos_orig.mean()), cos_enhanced=float(cos_enh.mean()),
        dominance=dominance_fraction(table, "enhanced", "original"),
        eer_original=compute_eer(ScoreSet.from_arrays(s_bona, s_orig))[0],
        eer_enhanced=compute_eer(ScoreSet.from_arrays(s_bona, s_enh))[0],
        enhancer_losses=enh_report.epoch_losses,
        extractor_losses=spk_report.epoch_losses,
        seconds=time.time() - start)
    if verbose:
        print(result)
    return result


def _tick(verbose, what, start):
    if verbose:
        print(f"[{time.time() - start:7.1f}s] {what} trained")
