"""Pluggable waveform-to-frame frontends.

Every frontend maps a batch of waveforms ``(batch, samples)`` to frame
representations ``(batch, frames, embed_dim)`` with

    frames = floor((samples - window) / hop) + 1

which yields 201 frames for 64600 samples at window 400 / hop 320, the
geometry of the wav2vec 2.0 family of convolutional feature encoders.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .audio import Waveform, as_waveform
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import AdapterError, ConfigError, InvalidInputError


@dataclass(frozen=True)
class FrontendConfig:
    embed_dim: int = 768
    hop: int = 320
    window: int = 400
    hidden_layers: int = 2
    name: str = "tiny"

    def __post_init__(self):
        for key in ("embed_dim", "hop", "window"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"frontend {key} must be positive")
        if self.hidden_layers < 0:
            raise ConfigError("hidden_layers must be non-negative")

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.window:
            raise InvalidInputError(
                f"waveform of {n_samples} samples is shorter than the "
                f"frontend window ({self.window})")
        return (n_samples - self.window) // self.hop + 1


@dataclass(frozen=True)
class FrameRepresentation:
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise InvalidInputError("frame representation must be (frames, dim)")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("frame representation has non-finite values")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.values.shape[1]


class Frontend(nn.Module):
    """Base class: subclasses set ``self.config`` and implement ``_frames``."""

    config: FrontendConfig
    adapter = "tiny"

    @property
    def embed_dim(self) -> int:
        return self.config.embed_dim

    def num_frames(self, n_samples: int) -> int:
        return self.config.num_frames(n_samples)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 1:
            x = x.unsqueeze(0)
        self.num_frames(x.shape[-1])
        return self._frames(x)

    def _frames(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def header(self) -> dict:
        return {"adapter": self.adapter, **asdict(self.config)}


class TinyFrontend(Frontend):
    """Strided conv encoder followed by frame-wise GELU + linear layers."""

    def __init__(self, config: FrontendConfig):
        super().__init__()
        self.config = config
        self.conv = nn.Conv1d(1, config.embed_dim, config.window,
                              stride=config.hop)
        self.hidden = nn.ModuleList(
            nn.Linear(config.embed_dim, config.embed_dim)
            for _ in range(config.hidden_layers))
        self.act = nn.GELU()

    def _frames(self, x):
        h = self.conv(x.unsqueeze(1)).transpose(1, 2)
        for layer in self.hidden:
            h = layer(self.act(h))
        return h


def tiny_parameter_count(config: FrontendConfig) -> int:
    d = config.embed_dim
    return d * config.window + d + config.hidden_layers * (d * d + d)


def build_tiny_frontend(config: FrontendConfig, seed: int = 0) -> TinyFrontend:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return TinyFrontend(config)


def frontend_forward(wav: Waveform, frontend: Frontend) -> FrameRepresentation:
    """Run one waveform through ``frontend`` without tracking gradients."""
    wav = as_waveform(wav)
    x = torch.tensor(wav.samples, dtype=_dtype_of(frontend)).unsqueeze(0)
    with torch.no_grad():
        out = frontend(x)[0]
    return FrameRepresentation(out.cpu().numpy())


def _dtype_of(module: nn.Module) -> torch.dtype:
    for p in module.parameters():
        return p.dtype
    return torch.float32


class PretrainedFrontend(Frontend):
    """Adapter around a transformers wav2vec 2.0 / HuBERT / WavLM encoder."""

    def __init__(self, name: str, model: nn.Module):
        super().__init__()
        hf_cfg = model.config
        window, hop = _conv_geometry(hf_cfg.conv_kernel, hf_cfg.conv_stride)
        self.config = FrontendConfig(embed_dim=hf_cfg.hidden_size, hop=hop,
                                     window=window, hidden_layers=0, name=name)
        self.adapter = name
        self.model = model

    def _frames(self, x):
        return self.model(x).last_hidden_state

    def header(self) -> dict:
        return {**super().header(), "hf_config": self.model.config.to_dict()}


def _conv_geometry(kernels, strides) -> tuple[int, int]:
    window, hop = 1, 1
    for k, s in zip(kernels, strides):
        window += (k - 1) * hop
        hop *= s
    return window, hop


def _hf_classes(name: str):
    import transformers as tf

    table = {
        "wav2vec2-base": (tf.Wav2Vec2Config, tf.Wav2Vec2Model),
        "hubert-base": (tf.HubertConfig, tf.HubertModel),
        "wavlm-base": (tf.WavLMConfig, tf.WavLMModel),
        "wavlm-base-plus": (tf.WavLMConfig, tf.WavLMModel),
    }
    return table[name]


EXTERNAL_ADAPTERS = ("wav2vec2-base", "hubert-base", "wavlm-base",
                     "wavlm-base-plus")
SSL_EMBED_DIM = 768
SSL_WINDOW, SSL_HOP = 400, 320


def _check_ssl_geometry(frontend: Frontend):
    cfg = frontend.config
    if (cfg.embed_dim, cfg.window, cfg.hop) != (SSL_EMBED_DIM, SSL_WINDOW, SSL_HOP):
        raise AdapterError(
            f"adapter {cfg.name!r}: checkpoint gives embed_dim={cfg.embed_dim}, "
            f"window={cfg.window}, hop={cfg.hop}; expected "
            f"{SSL_EMBED_DIM}/{SSL_WINDOW}/{SSL_HOP}")


def frontend_from_header(header: dict) -> Frontend:
    """Rebuild an (untrained) frontend skeleton from a checkpoint header."""
    name = header.get("adapter")
    if name in EXTERNAL_ADAPTERS:
        cfg_cls, model_cls = _hf_classes(name)
        model = model_cls(cfg_cls.from_dict(header["hf_config"]))
        return PretrainedFrontend(name, model)
    if name == "tiny":
        fields = {k: header[k] for k in
                  ("embed_dim", "hop", "window", "hidden_layers", "name")}
        return TinyFrontend(FrontendConfig(**fields))
    raise AdapterError(f"unknown frontend adapter {name!r}")


def save_frontend(frontend: Frontend, path) -> None:
    save_checkpoint(path, "frontend", {"frontend": frontend.header()},
                    frontend.state_dict())


def load_external_frontend(name: str, checkpoint) -> Frontend:
    """Load a frontend by adapter name.

    ``checkpoint`` is either a spoofbench frontend checkpoint or, for the
    pretrained adapters, a transformers model directory. All parameters are
    left trainable.
    """
    if name != "tiny" and name not in EXTERNAL_ADAPTERS:
        raise AdapterError(
            f"unknown frontend adapter {name!r}; known: "
            f"{', '.join(('tiny',) + EXTERNAL_ADAPTERS)}")
    path = Path(checkpoint)
    if not path.exists():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    if path.is_dir():
        if name == "tiny":
            raise AdapterError("the tiny adapter expects a checkpoint file")
        _, model_cls = _hf_classes(name)
        try:
            model = model_cls.from_pretrained(str(path))
        except Exception as exc:
            raise AdapterError(f"{path}: cannot load {name!r}: {exc}") from exc
        frontend = PretrainedFrontend(name, model)
    else:
        blob = load_checkpoint(path)
        header = blob["sections"].get("frontend")
        if header is None:
            raise AdapterError(f"{path}: checkpoint has no frontend section")
        if header.get("adapter") != name:
            raise AdapterError(
                f"{path}: checkpoint holds adapter {header.get('adapter')!r}, "
                f"not {name!r}")
        frontend = frontend_from_header(header)
        prefix = "frontend." if blob["kind"] != "frontend" else ""
        state = {k[len(prefix):]: v for k, v in blob["state"].items()
                 if k.startswith(prefix)}
        try:
            frontend.load_state_dict(state)
        except RuntimeError as exc:
            raise AdapterError(f"{path}: shape mismatch: {exc}") from exc
    if name in EXTERNAL_ADAPTERS:
        _check_ssl_geometry(frontend)
    frontend.requires_grad_(True)
    return frontend
