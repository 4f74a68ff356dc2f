"""Run configuration: ``section.key = value`` files layered over profile defaults.

Precedence, lowest first: reference defaults, profile overrides, config
file, the ``SPOOFBENCH_SEED`` environment variable, command-line flags.
"""

from __future__ import annotations

import copy
import os
from pathlib import Path

from .errors import ConfigError

REFERENCE = {
    "global": {"seed": 0, "profile": "reference"},
    "audio": {"target_length": 64600, "eval_mode": "fixed_start"},
    "split": {"scenario": "disjoint", "attacker_systems": "A01,A03,A05",
              "defender_systems": "A02,A04,A06"},
    "frontend": {"adapter": "tiny", "checkpoint": "", "embed_dim": 768,
                 "hop": 320, "window": 400, "hidden_layers": 2},
    "antispoof": {"reduce_dim": 128, "pool": 3, "stage1_channels": 32,
                  "stage1_blocks": 2, "stage2_channels": 64, "stage2_blocks": 4,
                  "lr": 1e-6, "max_epochs": 100, "batch": 32},
    "spkembed": {"margin": 0.3, "scale": 15.0, "peak_lr": 1e-5,
                 "warmup_frac": 0.10, "constant_frac": 0.40, "decay_frac": 0.50,
                 "total_iters": 100000, "batch": 32},
    "enhancer": {"encoder_filters": 256, "encoder_kernel": 16, "encoder_stride": 8,
                 "bottleneck_channels": 128, "block_channels": 512,
                 "skip_channels": 128, "block_kernel": 3, "repeats": 3,
                 "blocks_per_repeat": 8, "lr": 1e-5, "epochs": 300, "batch": 8,
                 "resample_pairs": True},
    "eval": {"cdf_bins": 200, "spec_frame": 512, "spec_hop": 256},
}

TOY_OVERRIDES = {
    "global": {"profile": "toy"},
    "audio": {"target_length": 8000},
    "frontend": {"embed_dim": 32},
    "antispoof": {"reduce_dim": 24, "stage1_channels": 8, "stage2_channels": 16,
                  "lr": 1e-3, "max_epochs": 15, "batch": 16},
    "spkembed": {"peak_lr": 3e-3, "total_iters": 300, "batch": 16},
    "enhancer": {"encoder_filters": 64, "encoder_kernel": 32, "encoder_stride": 16,
                 "bottleneck_channels": 32, "block_channels": 32,
                 "skip_channels": 32, "lr": 1e-3, "epochs": 15},
}

PROFILES = {"reference": {}, "toy": TOY_OVERRIDES}


def _coerce(template, raw: str, where: str):
    if isinstance(template, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    try:
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from exc
    return raw.strip()


class RunConfig:
    def __init__(self, profile: str = "reference"):
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}")
        self.data = copy.deepcopy(REFERENCE)
        for section, values in PROFILES[profile].items():
            self.data[section].update(values)

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    @property
    def seed(self) -> int:
        return self.data["global"]["seed"]

    @property
    def profile(self) -> str:
        return self.data["global"]["profile"]

    def set(self, dotted: str, raw, where: str = "override"):
        if "." not in dotted:
            raise ConfigError(f"{where}: expected section.key, got {dotted!r}")
        section, key = dotted.split(".", 1)
        if section not in self.data or key not in self.data[section]:
            raise ConfigError(f"{where}: unknown config key {dotted!r}")
        template = self.data[section][key]
        value = _coerce(template, raw, where) if isinstance(raw, str) else raw
        self.data[section][key] = value

    def update_from_text(self, text: str, source: str = "<config>"):
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            self.set(key, value, f"{source}:{lineno}")

    def to_text(self) -> str:
        lines = []
        for section, values in self.data.items():
            for key, value in values.items():
                lines.append(f"{section}.{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, profile: str = "reference", path=None, overrides=(),
             env=None, seed: int | None = None) -> "RunConfig":
        env = os.environ if env is None else env
        file_text = Path(path).read_text(encoding="utf-8") if path else ""
        if file_text:
            # a profile named in the file applies unless the caller chose one
            probe = cls("reference")
            probe.update_from_text(file_text, str(path))
            if profile is None:
                profile = probe.profile
        cfg = cls(profile or "reference")
        if file_text:
            cfg.update_from_text(file_text, str(path))
            cfg.data["global"]["profile"] = profile or cfg.profile
        if env.get("SPOOFBENCH_SEED"):
            cfg.set("global.seed", env["SPOOFBENCH_SEED"], "SPOOFBENCH_SEED")
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects section.key=value, got {item!r}")
            key, value = item.split("=", 1)
            cfg.set(key.strip(), value, "--set")
        if seed is not None:
            cfg.set("global.seed", seed, "--seed")
        return cfg
