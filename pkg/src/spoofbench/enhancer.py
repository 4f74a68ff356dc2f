"""Time-domain spoofing enhancer trained against a frozen speaker extractor.

The converter is a single-output Conv-TasNet: a ReLU conv encoder, a
temporal convolutional network of ``repeats`` x ``blocks`` dilated blocks
producing a sigmoid mask over the encoder output, and a transposed-conv
decoder with overlap-add. It is optimized with

    loss = 1 - cos(embed(enhance(spoof)), embed(bonafide))

while the extractor stays fixed.
"""

from __future__ import annotations

import logging
import shutil
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .audio import AlignPolicy, Waveform, align_samples, as_waveform, read_audio, write_audio
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, ContractError, InvalidInputError, NumericDomainError
from .speaker import SpeakerExtractor, is_frozen
from .training import TrainReport, iterate_minibatches, module_dtype, stack_aligned

log = logging.getLogger(__name__)

EPS = 1e-8


@dataclass(frozen=True)
class EnhancerConfig:
    encoder_filters: int = 256
    encoder_kernel: int = 16
    encoder_stride: int = 8
    bottleneck_channels: int = 128
    block_channels: int = 512
    skip_channels: int = 128
    block_kernel: int = 3
    repeats: int = 3
    blocks_per_repeat: int = 8
    lr: float = 1e-5
    epochs: int = 300
    batch: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")
        for key in ("encoder_filters", "encoder_kernel", "encoder_stride",
                    "bottleneck_channels", "block_channels", "skip_channels",
                    "block_kernel", "repeats", "blocks_per_repeat", "batch"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if self.encoder_stride > self.encoder_kernel:
            raise ConfigError("encoder_stride cannot exceed encoder_kernel")


@dataclass(frozen=True)
class SpoofPair:
    spoof: Waveform
    bonafide: Waveform
    target_speaker: str

    def __post_init__(self):
        if len(self.spoof) != len(self.bonafide):
            raise InvalidInputError("spoof and bona fide waveforms differ in length")


class GlobalLayerNorm(nn.Module):
    """Normalization over both channel and time axes (gLN)."""

    def __init__(self, channels: int):
        super().__init__()
        self.gamma = nn.Parameter(torch.ones(1, channels, 1))
        self.beta = nn.Parameter(torch.zeros(1, channels, 1))

    def forward(self, x):
        mean = x.mean(dim=(1, 2), keepdim=True)
        var = ((x - mean) ** 2).mean(dim=(1, 2), keepdim=True)
        return self.gamma * (x - mean) / torch.sqrt(var + EPS) + self.beta


class TemporalBlock(nn.Module):
    def __init__(self, bottleneck, hidden, skip, kernel, dilation):
        super().__init__()
        self.expand = nn.Conv1d(bottleneck, hidden, 1)
        self.act1 = nn.PReLU()
        self.norm1 = GlobalLayerNorm(hidden)
        self.depthwise = nn.Conv1d(hidden, hidden, kernel, dilation=dilation,
                                   padding=(kernel - 1) * dilation // 2,
                                   groups=hidden)
        self.act2 = nn.PReLU()
        self.norm2 = GlobalLayerNorm(hidden)
        self.residual = nn.Conv1d(hidden, bottleneck, 1)
        self.skip = nn.Conv1d(hidden, skip, 1)

    def forward(self, x):
        h = self.norm1(self.act1(self.expand(x)))
        h = self.norm2(self.act2(self.depthwise(h)))
        return x + self.residual(h), self.skip(h)


class ConvTasNet(nn.Module):
    def __init__(self, config: EnhancerConfig = EnhancerConfig()):
        super().__init__()
        c = config
        self.config = c
        self.encoder = nn.Conv1d(1, c.encoder_filters, c.encoder_kernel,
                                 stride=c.encoder_stride, bias=False)
        self.in_norm = GlobalLayerNorm(c.encoder_filters)
        self.bottleneck = nn.Conv1d(c.encoder_filters, c.bottleneck_channels, 1)
        self.blocks = nn.ModuleList(
            TemporalBlock(c.bottleneck_channels, c.block_channels,
                          c.skip_channels, c.block_kernel, 2 ** b)
            for _ in range(c.repeats) for b in range(c.blocks_per_repeat))
        self.mask_act = nn.PReLU()
        self.mask_conv = nn.Conv1d(c.skip_channels, c.encoder_filters, 1)
        self.decoder = nn.ConvTranspose1d(c.encoder_filters, 1, c.encoder_kernel,
                                          stride=c.encoder_stride, bias=False)
        self.force_unit_mask = False

    def _padding(self, n: int) -> tuple[int, int]:
        # Pad so that every input sample is covered by the same number of
        # encoder frames and the decoder output length matches exactly.
        k, s = self.config.encoder_kernel, self.config.encoder_stride
        front = k - s
        back = k - s + (-(n + 2 * (k - s) - k)) % s
        return front, back

    def mask(self, enc: torch.Tensor) -> torch.Tensor:
        h = self.bottleneck(self.in_norm(enc))
        skip_sum = 0
        for block in self.blocks:
            h, skip = block(h)
            skip_sum = skip_sum + skip
        return torch.sigmoid(self.mask_conv(self.mask_act(skip_sum)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 1
        if squeeze:
            x = x.unsqueeze(0)
        n = x.shape[-1]
        if n < self.config.encoder_kernel:
            raise InvalidInputError(
                f"input of {n} samples is shorter than the encoder kernel")
        front, back = self._padding(n)
        enc = F.relu(self.encoder(F.pad(x, (front, back)).unsqueeze(1)))
        masked = enc if self.force_unit_mask else enc * self.mask(enc)
        out = self.decoder(masked).squeeze(1)[:, front:front + n]
        return out[0] if squeeze else out


def build_enhancer(config: EnhancerConfig = EnhancerConfig(),
                   dtype: torch.dtype = torch.float32) -> ConvTasNet:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = ConvTasNet(config)
    return model.to(dtype)


def init_passthrough(model: ConvTasNet) -> ConvTasNet:
    """Set encoder/decoder to an exact analysis/synthesis pair and bypass the mask.

    Encoder channel pairs pick +x[k] and -x[k] for each kernel tap so the
    ReLU keeps both signs; the decoder puts them back, divided by the
    overlap factor. Requires ``encoder_filters >= 2 * kernel`` and a kernel
    divisible by the stride.
    """
    c = model.config
    k, s = c.encoder_kernel, c.encoder_stride
    if c.encoder_filters < 2 * k or k % s:
        raise ConfigError("passthrough needs encoder_filters >= 2*kernel and stride | kernel")
    overlap = k // s
    with torch.no_grad():
        model.encoder.weight.zero_()
        model.decoder.weight.zero_()
        for tap in range(k):
            model.encoder.weight[2 * tap, 0, tap] = 1.0
            model.encoder.weight[2 * tap + 1, 0, tap] = -1.0
            model.decoder.weight[2 * tap, 0, tap] = 1.0 / overlap
            model.decoder.weight[2 * tap + 1, 0, tap] = -1.0 / overlap
    model.force_unit_mask = True
    return model


def enhance(wav: Waveform, model: ConvTasNet) -> Waveform:
    wav = as_waveform(wav)
    if len(wav) < model.config.encoder_kernel:
        raise InvalidInputError("waveform shorter than the encoder kernel")
    x = torch.tensor(wav.samples, dtype=module_dtype(model))
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out = model(x)
    finally:
        model.train(was_training)
    return Waveform(out.cpu().numpy())


def enhance_many(wavs: Sequence, model: ConvTasNet, batch: int = 8) -> list[Waveform]:
    model.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(wavs), batch):
            x = stack_aligned(wavs[i:i + batch], None, None, model)
            out.extend(Waveform(row) for row in model(x).cpu().numpy())
    return out


def cosine_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """``1 - cos(a, b)`` along the last axis, in [0, 2]."""
    na = a.norm(dim=-1)
    nb = b.norm(dim=-1)
    if bool((na == 0).any()) or bool((nb == 0).any()):
        raise NumericDomainError("zero-norm embedding in cosine loss")
    cos = (a * b).sum(dim=-1) / (na * nb)
    return 1.0 - cos.clamp(-1.0, 1.0)


def enhancement_loss(enh, bonafide, extractor: nn.Module) -> float:
    """Cosine embedding loss between one enhanced and one bona fide utterance."""
    if not is_frozen(extractor):
        raise ContractError("the speaker extractor must be frozen")
    dtype = module_dtype(extractor)
    a = torch.tensor(as_waveform(enh).samples, dtype=dtype).unsqueeze(0)
    b = torch.tensor(as_waveform(bonafide).samples, dtype=dtype).unsqueeze(0)
    with torch.no_grad():
        return float(cosine_distance(extractor(a), extractor(b))[0])


def train_enhancer(model: ConvTasNet, pairs: Sequence[SpoofPair],
                   extractor: SpeakerExtractor, config: EnhancerConfig | None = None,
                   bonafide_pool: dict | None = None,
                   policy: AlignPolicy | None = None,
                   epochs: int | None = None) -> TrainReport:
    """Train the enhancer so enhanced spoofs embed close to bona fide speech.

    The extractor must be frozen (see :func:`spoofbench.speaker.freeze`);
    its parameters are never touched. When ``bonafide_pool`` maps speaker
    ids to bona fide waveforms, each pair's bona fide side is redrawn every
    epoch from the target speaker's pool; otherwise pairs are used as given.
    """
    if not is_frozen(extractor):
        raise ContractError(
            "train_enhancer requires a frozen speaker extractor; an unfrozen "
            "one lets training collapse to a constant embedding")
    if not pairs:
        raise ConfigError("no training pairs")
    config = config or model.config
    epochs = config.epochs if epochs is None else epochs
    if policy is None:
        policy = AlignPolicy(len(pairs[0].spoof), "fixed_start")
    rng = np.random.default_rng(config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr,
                           betas=(0.9, 0.999), eps=1e-8)
    report = TrainReport()
    for _ in range(epochs):
        model.train()
        total = 0.0
        targets = [p.bonafide for p in pairs]
        if bonafide_pool is not None:
            targets = [_draw(bonafide_pool, p, rng) for p in pairs]
        for idx in iterate_minibatches(len(pairs), config.batch, rng):
            x = stack_aligned([pairs[i].spoof for i in idx], policy, None, model)
            ref = stack_aligned([targets[i] for i in idx], policy, None, extractor)
            with torch.no_grad():
                ref_emb = extractor(ref)
            loss = cosine_distance(extractor(model(x)), ref_emb).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        report.epoch_losses.append(total / len(pairs))
    model.eval()
    return report


def _draw(pool: dict, pair: SpoofPair, rng: np.random.Generator):
    choices = pool.get(pair.target_speaker)
    if not choices:
        return pair.bonafide
    return choices[int(rng.integers(len(choices)))]


def batch_enhance(records: Sequence, audio_paths: dict, model: ConvTasNet,
                  out_dir, policy: AlignPolicy | None = None) -> tuple[list, list]:
    """Enhance every spoof trial to ``out_dir``; copy bona fide files verbatim.

    ``audio_paths`` maps utt_id to the source file. Returns
    ``(manifest, failures)`` where manifest rows are
    ``(utt_id, relative_path, "enhanced" | "passthrough")``. Per-file errors
    are logged and collected; the batch continues.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest, failures = [], []
    for rec in records:
        try:
            src = Path(audio_paths[rec.utt_id])
            if rec.key == "bonafide":
                rel = rec.utt_id + src.suffix
                shutil.copyfile(src, out_dir / rel)
                manifest.append((rec.utt_id, rel, "passthrough"))
            else:
                wav = read_audio(src)
                if policy is not None:
                    wav = Waveform(align_samples(wav.samples, policy))
                rel = rec.utt_id + ".wav"
                write_audio(enhance(wav, model), out_dir / rel)
                manifest.append((rec.utt_id, rel, "enhanced"))
        except Exception as exc:  # noqa: BLE001 - reported per file
            log.error("enhancing %s failed: %s", rec.utt_id, exc)
            failures.append((rec.utt_id, str(exc)))
    write_manifest(manifest, out_dir / "manifest.tsv")
    return manifest, failures


def write_manifest(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(row) + "\n")


def read_manifest(path) -> list[tuple[str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                utt, rel, kind = line.rstrip("\n").split("\t")
                rows.append((utt, rel, kind))
    return rows


def save_enhancer(model: ConvTasNet, path) -> None:
    save_checkpoint(path, "enhancer", {"enhancer": asdict(model.config)},
                    model.state_dict())


def load_enhancer(path) -> ConvTasNet:
    blob = load_checkpoint(path, kind="enhancer")
    model = ConvTasNet(EnhancerConfig(**blob["sections"]["enhancer"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model
