"""Small pieces shared by the three training loops."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .audio import AlignPolicy, as_waveform, align_samples


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    dev_losses: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    learning_rates: list[float] = field(default_factory=list)
    iteration_losses: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()
                if v is not None and v != []}


def iterate_minibatches(n: int, batch: int, rng: np.random.Generator | None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start:start + batch]


def module_dtype(module: torch.nn.Module) -> torch.dtype:
    for p in module.parameters():
        return p.dtype
    return torch.float32


def stack_aligned(waves, policy: AlignPolicy | None,
                  rng: np.random.Generator | None,
                  module: torch.nn.Module) -> torch.Tensor:
    """Align each waveform and stack into a ``(batch, samples)`` tensor."""
    rows = []
    for w in waves:
        s = w if isinstance(w, np.ndarray) else as_waveform(w).samples
        rows.append(s if policy is None else align_samples(s, policy, rng))
    return torch.as_tensor(np.stack(rows), dtype=module_dtype(module))
