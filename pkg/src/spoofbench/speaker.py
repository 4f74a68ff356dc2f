"""Speaker embedding extractor trained with additive angular margin softmax.

The embedding is the time-average of the frontend frames; there is no
projection layer after pooling. Class weights for the AAM head live in a
separate module and are discarded after training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .audio import AlignPolicy, Waveform, as_waveform
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, InvalidInputError, NumericDomainError
from .frontend import Frontend, frontend_from_header
from .training import TrainReport, iterate_minibatches, module_dtype, stack_aligned

COS_CLAMP = 1.0 - 1e-7


@dataclass(frozen=True)
class AAMConfig:
    margin: float = 0.3
    scale: float = 15.0
    num_speakers: int = 2

    def __post_init__(self):
        if not 0.0 <= self.margin < math.pi / 2:
            raise ConfigError("AAM margin must lie in [0, pi/2)")
        if self.scale <= 0:
            raise ConfigError("AAM scale must be positive")


@dataclass(frozen=True)
class LrSchedule:
    """Linear warm-up, constant plateau, linear decay to zero."""

    total_iters: int
    peak: float = 1e-5
    warmup_frac: float = 0.10
    constant_frac: float = 0.40
    decay_frac: float = 0.50

    def __post_init__(self):
        if self.total_iters <= 0:
            raise ConfigError("total_iters must be positive")
        fracs = (self.warmup_frac, self.constant_frac, self.decay_frac)
        if min(fracs) < 0 or abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError("schedule fractions must be non-negative and sum to 1")

    def __call__(self, iteration: float) -> float:
        t = float(iteration)
        total = float(self.total_iters)
        warm_end = self.warmup_frac * total
        decay_start = (self.warmup_frac + self.constant_frac) * total
        if t <= 0.0 or t >= total:
            return 0.0
        if t < warm_end:
            return self.peak * t / warm_end
        if t <= decay_start:
            return self.peak
        return self.peak * (total - t) / (total - decay_start)


class SpeakerExtractor(nn.Module):
    """Frontend followed by mean pooling over frames."""

    def __init__(self, frontend: Frontend):
        super().__init__()
        self.frontend = frontend
        self.frozen = False

    @property
    def embed_dim(self) -> int:
        return self.frontend.embed_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.frontend(x).mean(dim=1)


def freeze(extractor: SpeakerExtractor) -> SpeakerExtractor:
    """Disable gradients, switch to eval mode and mark as frozen."""
    extractor.requires_grad_(False)
    extractor.eval()
    extractor.frozen = True
    return extractor


def is_frozen(extractor: nn.Module) -> bool:
    return (getattr(extractor, "frozen", False)
            and not extractor.training
            and not any(p.requires_grad for p in extractor.parameters()))


class AAMHead(nn.Module):
    def __init__(self, embed_dim: int, config: AAMConfig):
        super().__init__()
        self.config = config
        self.weight = nn.Parameter(torch.empty(config.num_speakers, embed_dim))
        nn.init.xavier_uniform_(self.weight)

    def forward(self, embeddings, speakers):
        return aam_softmax_loss(embeddings, speakers, self.weight, self.config)


def _unit(x: torch.Tensor, what: str) -> torch.Tensor:
    norm = x.norm(dim=-1, keepdim=True)
    if bool((norm == 0).any()):
        raise NumericDomainError(f"zero-norm {what} in angular computation")
    return x / norm


def aam_softmax_loss(embedding, speaker, weights, config: AAMConfig,
                     reduction: str = "mean"):
    """Additive angular margin softmax loss.

    With theta_j the angle between the embedding and class weight j, the
    target logit is ``s * cos(theta_y + m)`` and the others ``s * cos(theta_j)``;
    the loss is the cross-entropy over these logits. Accepts a single
    embedding or a batch, as tensors or arrays; arrays give a float back.
    """
    as_numpy = not isinstance(embedding, torch.Tensor)
    emb = torch.as_tensor(np.asarray(embedding) if as_numpy else embedding)
    w = torch.as_tensor(weights, dtype=emb.dtype)
    single = emb.dim() == 1
    if single:
        emb = emb.unsqueeze(0)
    target = torch.as_tensor(speaker, dtype=torch.long).reshape(-1)
    if target.numel() != emb.shape[0]:
        raise InvalidInputError("one speaker index per embedding required")

    cos = _unit(emb, "embedding") @ _unit(w, "class weight").T
    cos = cos.clamp(-COS_CLAMP, COS_CLAMP)
    cos_y = cos.gather(1, target[:, None])
    target_logit = torch.cos(torch.acos(cos_y) + config.margin)
    onehot = F.one_hot(target, cos.shape[1]).bool()
    logits = config.scale * torch.where(onehot, target_logit, cos)
    loss = F.cross_entropy(logits, target, reduction=reduction)
    if as_numpy:
        return loss.detach().numpy().astype(float) if reduction == "none" else float(loss.detach())
    return loss


def build_extractor(frontend: Frontend) -> SpeakerExtractor:
    return SpeakerExtractor(frontend)


def extract_embedding(wav: Waveform, extractor: SpeakerExtractor) -> np.ndarray:
    """Raw (unnormalized) time-averaged frame vector for one waveform."""
    wav = as_waveform(wav)
    x = torch.tensor(wav.samples, dtype=module_dtype(extractor)).unsqueeze(0)
    was_training = extractor.training
    extractor.eval()
    try:
        with torch.no_grad():
            return extractor(x)[0].cpu().numpy()
    finally:
        extractor.train(was_training)


def extract_embeddings(wavs: Sequence, extractor: SpeakerExtractor,
                       policy: AlignPolicy | None = None, batch: int = 16) -> np.ndarray:
    was_training = extractor.training
    extractor.eval()
    out = []
    try:
        with torch.no_grad():
            for i in range(0, len(wavs), batch):
                x = stack_aligned(wavs[i:i + batch], policy, None, extractor)
                out.append(extractor(x).cpu().numpy())
    finally:
        extractor.train(was_training)
    return np.concatenate(out)


def cosine_scores(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(a).astype(np.float64)
    b = np.atleast_2d(b).astype(np.float64)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise NumericDomainError("zero-norm embedding in cosine similarity")
    return np.clip(np.sum(a * b, axis=1) / (na * nb), -1.0, 1.0)


def train_extractor(extractor: SpeakerExtractor, waves: Sequence, speakers,
                    schedule: LrSchedule, config: AAMConfig | None = None,
                    batch: int = 32, policy: AlignPolicy | None = None,
                    seed: int = 0, head: AAMHead | None = None) -> TrainReport:
    """Fine-tune ``extractor`` (frontend included) with AAM softmax.

    ``speakers`` may be arbitrary hashable labels; they are mapped to class
    indices in sorted order. Runs exactly ``schedule.total_iters`` Adam
    steps, setting the learning rate from the schedule before each step.
    """
    if getattr(extractor, "frozen", False):
        raise ConfigError("cannot train a frozen extractor")
    labels, index = np.unique(np.asarray(speakers), return_inverse=True)
    if len(labels) < 2:
        raise ConfigError("speaker extractor training needs at least two speakers")
    if len(waves) != len(index):
        raise ConfigError("waves and speakers differ in length")
    if config is None:
        config = AAMConfig(num_speakers=len(labels))
    elif config.num_speakers != len(labels):
        config = AAMConfig(config.margin, config.scale, len(labels))
    if policy is None:
        policy = AlignPolicy(mode="random_crop", seed=seed)

    rng = np.random.default_rng(seed)
    if head is None:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            head = AAMHead(extractor.embed_dim, config)
        head.to(module_dtype(extractor))
    extractor.requires_grad_(True)
    extractor.train()
    params = list(extractor.parameters()) + list(head.parameters())
    opt = torch.optim.Adam(params, lr=0.0, betas=(0.9, 0.999), eps=1e-8)
    report = TrainReport()
    it, epoch_total, epoch_count = 0, 0.0, 0
    while it < schedule.total_iters:
        for idx in iterate_minibatches(len(waves), batch, rng):
            if it >= schedule.total_iters:
                break
            lr = schedule(it)
            for group in opt.param_groups:
                group["lr"] = lr
            x = stack_aligned([waves[i] for i in idx], policy, rng, extractor)
            y = torch.as_tensor(index[idx], dtype=torch.long)
            loss = head(extractor(x), y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            report.learning_rates.append(lr)
            report.iteration_losses.append(float(loss.detach()))
            epoch_total += float(loss.detach()) * len(idx)
            epoch_count += len(idx)
            it += 1
        report.epoch_losses.append(epoch_total / max(epoch_count, 1))
        epoch_total, epoch_count = 0.0, 0
    extractor.eval()
    extractor.speaker_labels = [str(s) for s in labels]
    return report


def verify_eer(extractor: SpeakerExtractor, trials: Sequence,
               policy: AlignPolicy | None = None) -> float:
    """Speaker verification EER from cosine scores.

    ``trials`` holds ``(wav_a, wav_b, same)`` triples where ``same`` is
    truthy for target (same-speaker) pairs.
    """
    from .metrics import ScoreSet, compute_eer

    if not trials:
        raise InvalidInputError("no verification trials")
    same = np.array([bool(t[2]) for t in trials])
    if same.all() or not same.any():
        raise InvalidInputError("trials must contain both target and non-target pairs")
    emb_a = extract_embeddings([t[0] for t in trials], extractor, policy)
    emb_b = extract_embeddings([t[1] for t in trials], extractor, policy)
    scores = cosine_scores(emb_a, emb_b)
    keys = ["bonafide" if s else "spoof" for s in same]
    entries = [(f"trial{i}", float(sc), k)
               for i, (sc, k) in enumerate(zip(scores, keys))]
    return compute_eer(ScoreSet(entries))[0]


def parse_trial_list(path) -> list[tuple[int, str, str]]:
    """VoxCeleb-style ``label utt1 utt2`` lines, label in {0, 1}."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3 or parts[0] not in ("0", "1"):
                raise InvalidInputError(f"{path}:{lineno}: malformed trial line")
            out.append((int(parts[0]), parts[1], parts[2]))
    if not out:
        raise InvalidInputError(f"{path}: empty trial list")
    return out


def save_extractor(extractor: SpeakerExtractor, path) -> None:
    sections = {"frontend": extractor.frontend.header(),
                "speaker": {"labels": list(getattr(extractor, "speaker_labels", []))}}
    save_checkpoint(path, "speaker", sections, extractor.state_dict())


def load_extractor(path) -> SpeakerExtractor:
    blob = load_checkpoint(path, kind="speaker")
    extractor = SpeakerExtractor(frontend_from_header(blob["sections"]["frontend"]))
    extractor.load_state_dict(blob["state"])
    extractor.speaker_labels = blob["sections"]["speaker"]["labels"]
    extractor.eval()
    return extractor

