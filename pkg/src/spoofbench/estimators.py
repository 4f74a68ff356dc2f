"""scikit-learn style wrappers around the three trainable models.

Inputs are 2-D arrays of shape ``(n_utterances, n_samples)`` holding 16 kHz
waveforms of equal length. Hyperparameters are plain constructor
arguments so ``get_params`` / ``set_params`` / ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .antispoof import BONAFIDE, AntispoofConfig, bonafide_scores, build_antispoof, train_antispoof
from .audio import AlignPolicy, Waveform
from .enhancer import EnhancerConfig, SpoofPair, build_enhancer, enhance_many, train_enhancer
from .errors import InvalidInputError
from .frontend import FrontendConfig, build_tiny_frontend
from .speaker import (AAMConfig, LrSchedule, build_extractor, extract_embeddings, freeze,
                      train_extractor)


def check_waveforms(X, min_samples: int = 400) -> np.ndarray:
    """Validate a waveform batch and return it as float32 ``(n, L)``."""
    X = check_array(X, dtype=np.float32, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] < min_samples:
        raise InvalidInputError(
            f"waveforms need at least {min_samples} samples, got {X.shape[1]}")
    return X


def check_binary_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n:
        raise InvalidInputError("labels must be 1-D and match the number of waveforms")
    if not np.isin(y, (0, 1)).all():
        raise InvalidInputError("labels must be 0 (spoof) or 1 (bona fide)")
    return y.astype(np.int64)


def _waves(X):
    return [Waveform(row) for row in X]


def _frontend(est, seed_offset=0):
    cfg = FrontendConfig(embed_dim=est.embed_dim, hidden_layers=est.hidden_layers)
    return build_tiny_frontend(cfg, est.seed + seed_offset)


class AntispoofDetector(ClassifierMixin, BaseEstimator):
    """Bona fide / spoof classifier; ``decision_function`` is the bona fide logit."""

    def __init__(self, embed_dim=768, hidden_layers=2, reduce_dim=128,
                 stage1_channels=32, stage2_channels=64, lr=1e-6, max_epochs=100,
                 batch=32, seed=0):
        self.embed_dim = embed_dim
        self.hidden_layers = hidden_layers
        self.reduce_dim = reduce_dim
        self.stage1_channels = stage1_channels
        self.stage2_channels = stage2_channels
        self.lr = lr
        self.max_epochs = max_epochs
        self.batch = batch
        self.seed = seed

    def fit(self, X, y):
        X = check_waveforms(X)
        y = check_binary_labels(y, len(X))
        cfg = AntispoofConfig(reduce_dim=self.reduce_dim,
                              stage1_channels=self.stage1_channels,
                              stage2_channels=self.stage2_channels, lr=self.lr,
                              max_epochs=self.max_epochs, batch=self.batch, seed=self.seed)
        self.model_ = build_antispoof(_frontend(self), cfg)
        self.report_ = train_antispoof(
            self.model_, _waves(X), y, cfg,
            AlignPolicy(X.shape[1], "random_crop", self.seed))
        self.classes_ = np.array([0, 1])
        self.n_samples_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return bonafide_scores(_waves(check_waveforms(X)), self.model_)

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        import torch

        logits = []
        self.model_.eval()
        with torch.no_grad():
            for row in check_waveforms(X):
                x = torch.as_tensor(row).unsqueeze(0)
                logits.append(self.model_(x)[0].numpy())
        z = np.asarray(logits, dtype=np.float64)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        return (self.predict_proba(X)[:, BONAFIDE] >= 0.5).astype(np.int64)


class SpeakerEmbedder(TransformerMixin, BaseEstimator):
    """AAM-softmax speaker extractor; ``transform`` returns mean-pooled frames."""

    def __init__(self, embed_dim=768, hidden_layers=2, margin=0.3, scale=15.0,
                 peak_lr=1e-5, total_iters=100000, batch=32, seed=0):
        self.embed_dim = embed_dim
        self.hidden_layers = hidden_layers
        self.margin = margin
        self.scale = scale
        self.peak_lr = peak_lr
        self.total_iters = total_iters
        self.batch = batch
        self.seed = seed

    def fit(self, X, y):
        X = check_waveforms(X)
        y = np.asarray(y)
        if y.ndim != 1 or len(y) != len(X):
            raise InvalidInputError("speaker labels must be 1-D and match X")
        self.extractor_ = build_extractor(_frontend(self))
        self.report_ = train_extractor(
            self.extractor_, _waves(X), y, LrSchedule(self.total_iters, peak=self.peak_lr),
            AAMConfig(self.margin, self.scale), batch=self.batch,
            policy=AlignPolicy(X.shape[1], "random_crop", self.seed), seed=self.seed)
        freeze(self.extractor_)
        self.classes_ = np.unique(y)
        return self

    def transform(self, X):
        check_is_fitted(self, "extractor_")
        return extract_embeddings(_waves(check_waveforms(X)), self.extractor_)


class SpoofEnhancer(TransformerMixin, BaseEstimator):
    """Conv-TasNet enhancer trained against a fitted :class:`SpeakerEmbedder`.

    ``fit(X, y)`` takes spoofed waveforms ``X`` and their target-speaker bona
    fide waveforms ``y`` (same shape). ``transform`` returns enhanced audio.
    """

    def __init__(self, embedder=None, encoder_filters=256, encoder_kernel=16,
                 encoder_stride=8, bottleneck_channels=128, block_channels=512,
                 skip_channels=128, repeats=3, blocks_per_repeat=8, lr=1e-5,
                 epochs=300, batch=8, seed=0):
        self.embedder = embedder
        self.encoder_filters = encoder_filters
        self.encoder_kernel = encoder_kernel
        self.encoder_stride = encoder_stride
        self.bottleneck_channels = bottleneck_channels
        self.block_channels = block_channels
        self.skip_channels = skip_channels
        self.repeats = repeats
        self.blocks_per_repeat = blocks_per_repeat
        self.lr = lr
        self.epochs = epochs
        self.batch = batch
        self.seed = seed

    def _config(self):
        return EnhancerConfig(
            encoder_filters=self.encoder_filters, encoder_kernel=self.encoder_kernel,
            encoder_stride=self.encoder_stride,
            bottleneck_channels=self.bottleneck_channels,
            block_channels=self.block_channels, skip_channels=self.skip_channels,
            repeats=self.repeats, blocks_per_repeat=self.blocks_per_repeat,
            lr=self.lr, epochs=self.epochs, batch=self.batch, seed=self.seed)

    def fit(self, X, y):
        if self.embedder is None:
            raise InvalidInputError("SpoofEnhancer needs a fitted SpeakerEmbedder")
        check_is_fitted(self.embedder, "extractor_")
        X = check_waveforms(X)
        Y = check_waveforms(y)
        if X.shape != Y.shape:
            raise InvalidInputError("spoof and bona fide arrays must have the same shape")
        pairs = [SpoofPair(Waveform(a), Waveform(b), "-") for a, b in zip(X, Y)]
        self.model_ = build_enhancer(self._config())
        self.report_ = train_enhancer(self.model_, pairs, self.embedder.extractor_)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_waveforms(X, self.encoder_kernel)
        return np.stack([w.samples for w in enhance_many(_waves(X), self.model_)])
