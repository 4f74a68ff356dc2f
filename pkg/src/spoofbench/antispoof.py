"""Two-way bona fide / spoof classifier on top of a frame frontend.

Layer stack (reference shapes for a 64600-sample input)::

    frontend                       (1, 201, 768)
    frame-wise linear -> 128       (1, 201, 128)
    3x3 max pool, stride 3         (1, 67, 42)
    BN + SELU                      (1, 67, 42)
    2 residual blocks, 32 ch       (32, 67, 42)
    4 residual blocks, 64 ch       (64, 67, 42)
    global average pool            (64,)
    linear -> 2                    (2,)

Logit index 0 is spoof, index 1 is bona fide.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .audio import AlignPolicy, Waveform, align_samples, as_waveform
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, ShapeError
from .frontend import Frontend, frontend_from_header
from .training import TrainReport, iterate_minibatches, stack_aligned

SPOOF, BONAFIDE = 0, 1


@dataclass(frozen=True)
class AntispoofConfig:
    reduce_dim: int = 128
    pool: int = 3
    stage1_channels: int = 32
    stage1_blocks: int = 2
    stage2_channels: int = 64
    stage2_blocks: int = 4
    classes: int = 2
    lr: float = 1e-6
    max_epochs: int = 100
    batch: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.classes != 2:
            raise ConfigError("the anti-spoofing model is a two-way classifier")
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")
        for key in ("reduce_dim", "pool", "stage1_channels", "stage1_blocks",
                    "stage2_channels", "stage2_blocks", "batch"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")


class Logits2(NamedTuple):
    spoof: float
    bonafide: float


class ResidualBlock(nn.Module):
    """conv3x3 -> BN -> SELU -> conv3x3, plus a shortcut.

    The shortcut is a 1x1 projection when the channel count changes and the
    identity otherwise.
    """

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.bn = nn.BatchNorm2d(out_ch)
        self.act = nn.SELU()
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.shortcut = (nn.Identity() if in_ch == out_ch
                         else nn.Conv2d(in_ch, out_ch, 1))

    def forward(self, x):
        return self.conv2(self.act(self.bn(self.conv1(x)))) + self.shortcut(x)


def _stage(in_ch, out_ch, blocks):
    layers = [ResidualBlock(in_ch, out_ch)]
    layers += [ResidualBlock(out_ch, out_ch) for _ in range(blocks - 1)]
    return nn.Sequential(*layers)


class AntispoofModel(nn.Module):
    def __init__(self, frontend: Frontend, config: AntispoofConfig = AntispoofConfig()):
        super().__init__()
        self.config = config
        self.frontend = frontend
        self.reduce = nn.Linear(frontend.embed_dim, config.reduce_dim)
        self.pool = nn.MaxPool2d(config.pool, stride=config.pool)
        self.bn = nn.BatchNorm2d(1)
        self.act = nn.SELU()
        self.stage1 = _stage(1, config.stage1_channels, config.stage1_blocks)
        self.stage2 = _stage(config.stage1_channels, config.stage2_channels,
                             config.stage2_blocks)
        self.fc = nn.Linear(config.stage2_channels, config.classes)

    def expected_shapes(self, n_samples: int) -> list[tuple[int, ...]]:
        """Per-layer output shapes (without batch axis) for an input length."""
        c = self.config
        t = self.frontend.num_frames(n_samples)
        pt, pf = t // c.pool, c.reduce_dim // c.pool
        return [
            (1, t, self.frontend.embed_dim),
            (1, t, c.reduce_dim),
            (1, pt, pf),
            (1, pt, pf),
            (c.stage1_channels, pt, pf),
            (c.stage2_channels, pt, pf),
            (c.stage2_channels,),
            (c.classes,),
        ]

    def features(self, x: torch.Tensor, trace: list | None = None) -> torch.Tensor:
        """Everything up to (and including) the second residual stage."""
        expected = iter(self.expected_shapes(x.shape[-1]))

        def check(t):
            want = next(expected)
            got = tuple(t.shape[1:])
            if got != want:
                raise ShapeError(f"layer output {got} != expected {want}")
            if trace is not None:
                trace.append(got)
            return t

        h = check(self.frontend(x).unsqueeze(1))
        h = check(self.reduce(h))
        h = check(self.pool(h))
        h = check(self.act(self.bn(h)))
        h = check(self.stage1(h))
        h = check(self.stage2(h))
        return h

    def head(self, h: torch.Tensor, trace: list | None = None) -> torch.Tensor:
        """Global average pool over the time x frequency map, then linear."""
        pooled = h.mean(dim=(2, 3))
        logits = self.fc(pooled)
        c = self.config
        got = (tuple(pooled.shape[1:]), tuple(logits.shape[1:]))
        if got != ((c.stage2_channels,), (c.classes,)):
            raise ShapeError(f"head output shapes {got}")
        if trace is not None:
            trace.extend(got)
        return logits

    def forward(self, x: torch.Tensor, trace: list | None = None) -> torch.Tensor:
        if x.dim() == 1:
            x = x.unsqueeze(0)
        return self.head(self.features(x, trace), trace)


def build_antispoof(frontend: Frontend, config: AntispoofConfig = AntispoofConfig(),
                    zero_head: bool = False) -> AntispoofModel:
    """Seeded construction of the backend; the frontend is used as given."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = AntispoofModel(frontend, config)
    model.to(next(frontend.parameters()).dtype)
    if zero_head:
        nn.init.zeros_(model.fc.weight)
        nn.init.zeros_(model.fc.bias)
    return model


def _as_batch(wavs, model) -> torch.Tensor:
    dtype = next(model.parameters()).dtype
    arr = np.stack([as_waveform(w).samples for w in wavs])
    return torch.as_tensor(arr, dtype=dtype)


def antispoof_forward(wav: Waveform, model: AntispoofModel,
                      trace: list | None = None) -> Logits2:
    """Eval-mode forward of a single waveform, returning both logits."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            logits = model(_as_batch([wav], model), trace)[0]
    finally:
        model.train(was_training)
    return Logits2(float(logits[SPOOF]), float(logits[BONAFIDE]))


def bonafide_score(wav: Waveform, model: AntispoofModel) -> float:
    """Raw bona fide logit (no softmax); higher means more bona fide."""
    return antispoof_forward(wav, model).bonafide


def bonafide_scores(wavs: Sequence, model: AntispoofModel,
                    policy: AlignPolicy | None = None, batch: int = 16) -> np.ndarray:
    """Batched :func:`bonafide_score` with optional fixed-start alignment."""
    was_training = model.training
    model.eval()
    out = []
    try:
        with torch.no_grad():
            for i in range(0, len(wavs), batch):
                chunk = [as_waveform(w).samples for w in wavs[i:i + batch]]
                if policy is not None:
                    chunk = [align_samples(c, policy) for c in chunk]
                x = _as_batch(chunk, model)
                out.append(model(x)[:, BONAFIDE].cpu().numpy())
    finally:
        model.train(was_training)
    return np.concatenate(out).astype(np.float64) if out else np.zeros(0)


def _mean_loss(model, waves, labels, policy, batch):
    model.eval()
    total = 0.0
    with torch.no_grad():
        for i in range(0, len(waves), batch):
            x = stack_aligned(waves[i:i + batch], policy, None, model)
            y = torch.as_tensor(labels[i:i + batch], dtype=torch.long)
            total += float(F.cross_entropy(model(x), y, reduction="sum"))
    return total / len(waves)


def train_antispoof(model: AntispoofModel, waves: Sequence, labels,
                    config: AntispoofConfig | None = None,
                    policy: AlignPolicy | None = None,
                    dev: tuple | None = None,
                    epochs: int | None = None) -> TrainReport:
    """Cross-entropy training with Adam at a fixed learning rate.

    ``labels`` are 1 for bona fide and 0 for spoof. The frontend is trained
    jointly with the backend. When ``dev=(waves, labels)`` is given, the
    parameters with the lowest development loss are restored at the end.
    """
    config = config or model.config
    labels = np.asarray(labels, dtype=np.int64)
    if len(waves) != len(labels):
        raise ConfigError("waves and labels differ in length")
    if set(np.unique(labels).tolist()) != {SPOOF, BONAFIDE}:
        raise ConfigError("training data must contain both bona fide and spoof")
    if policy is None:
        policy = AlignPolicy(mode="random_crop", seed=config.seed)
    eval_policy = AlignPolicy(policy.target_length, "fixed_start")
    epochs = config.max_epochs if epochs is None else epochs

    model.requires_grad_(True)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr,
                           betas=(0.9, 0.999), eps=1e-8)
    rng = np.random.default_rng(config.seed)
    report = TrainReport()
    best_state, best_dev = None, np.inf
    for epoch in range(epochs):
        model.train()
        total = 0.0
        for idx in iterate_minibatches(len(waves), config.batch, rng):
            x = stack_aligned([waves[i] for i in idx], policy, rng, model)
            y = torch.as_tensor(labels[idx])
            loss = F.cross_entropy(model(x), y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        report.epoch_losses.append(total / len(waves))
        if dev is not None:
            dev_loss = _mean_loss(model, dev[0], np.asarray(dev[1]), eval_policy,
                                  config.batch)
            report.dev_losses.append(dev_loss)
            if dev_loss < best_dev:
                best_dev = dev_loss
                report.best_epoch = epoch
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return report


def save_antispoof(model: AntispoofModel, path) -> None:
    sections = {"frontend": model.frontend.header(),
                "backend": asdict(model.config)}
    save_checkpoint(path, "antispoof", sections, model.state_dict())


def load_antispoof(path) -> AntispoofModel:
    blob = load_checkpoint(path, kind="antispoof")
    frontend = frontend_from_header(blob["sections"]["frontend"])
    model = AntispoofModel(frontend, AntispoofConfig(**blob["sections"]["backend"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model
