import numpy as np
import pytest
import torch

from spoofbench.antispoof import (BONAFIDE, SPOOF, AntispoofConfig, antispoof_forward,
                                  bonafide_score, bonafide_scores, build_antispoof,
                                  load_antispoof, save_antispoof, train_antispoof)
from spoofbench.audio import AlignPolicy, Waveform
from spoofbench.errors import ConfigError, ShapeError
from spoofbench.frontend import Frontend, FrontendConfig, build_tiny_frontend
from spoofbench.synth import make_corpus

CROP = AlignPolicy(4000, "random_crop", 0)
SMALL = AntispoofConfig(reduce_dim=12, stage1_channels=4, stage2_channels=6, lr=3e-3,
                        max_epochs=4, batch=8)


def small_model(seed=0, zero_head=False):
    front = build_tiny_frontend(FrontendConfig(embed_dim=16, hidden_layers=1), seed)
    return build_antispoof(front, SMALL, zero_head=zero_head)


def test_reference_layer_shapes():
    model = build_antispoof(build_tiny_frontend(FrontendConfig(hidden_layers=0)))
    trace = []
    antispoof_forward(Waveform(np.zeros(64600)), model, trace)
    assert trace == [(1, 201, 768), (1, 201, 128), (1, 67, 42), (1, 67, 42),
                     (32, 67, 42), (64, 67, 42), (64,), (2,)]


def test_residual_stage_depths():
    model = build_antispoof(build_tiny_frontend(FrontendConfig(embed_dim=8, hidden_layers=0)))
    assert len(model.stage1) == 2 and len(model.stage2) == 4


def test_shape_violation_raises():
    class Wrong(Frontend):
        def __init__(self):
            super().__init__()
            self.config = FrontendConfig(embed_dim=8)
            self.lin = torch.nn.Linear(1, 1)

        def _frames(self, x):
            return torch.zeros(x.shape[0], 3, 8)

    model = build_antispoof(Wrong(), SMALL)
    with pytest.raises(ShapeError):
        model(torch.zeros(1, 8000))


def test_zero_head_scores_zero():
    model = small_model(zero_head=True)
    logits = antispoof_forward(Waveform(np.random.default_rng(0).standard_normal(4000)), model)
    assert logits == (0.0, 0.0)
    assert bonafide_score(Waveform(np.ones(4000)), model) == 0.0


def test_score_is_bonafide_logit_and_batch_matches_single():
    model = small_model()
    rng = np.random.default_rng(1)
    wavs = [Waveform(rng.standard_normal(4000)) for _ in range(5)]
    single = [antispoof_forward(w, model) for w in wavs]
    batch = bonafide_scores(wavs, model, batch=2)
    np.testing.assert_allclose(batch, [s.bonafide for s in single], rtol=1e-5, atol=1e-6)
    assert (SPOOF, BONAFIDE) == (0, 1)


def test_scoring_is_deterministic_and_leaves_mode():
    model = small_model()
    model.train()
    w = Waveform(np.random.default_rng(2).standard_normal(4000))
    assert bonafide_score(w, model) == bonafide_score(w, model)
    assert model.training


@pytest.fixture(scope="module")
def toy_data():
    records, audio = make_corpus(4, 10, 2, length=4000, seed=0)
    waves = [audio[r.utt_id] for r in records]
    labels = [int(r.key == "bonafide") for r in records]
    return waves, labels


def test_training_reduces_loss(toy_data):
    waves, labels = toy_data
    model = small_model()
    report = train_antispoof(model, waves, labels, policy=CROP)
    assert len(report.epoch_losses) == SMALL.max_epochs
    assert report.epoch_losses[-1] < report.epoch_losses[0]


def test_training_is_reproducible(toy_data):
    waves, labels = toy_data
    a = train_antispoof(small_model(), waves, labels, policy=CROP, epochs=2)
    b = train_antispoof(small_model(), waves, labels, policy=CROP, epochs=2)
    np.testing.assert_allclose(a.epoch_losses, b.epoch_losses, rtol=1e-6)


def test_dev_selection_restores_best(toy_data):
    waves, labels = toy_data
    model = small_model()
    report = train_antispoof(model, waves, labels, policy=CROP, epochs=3, dev=(waves[:20], labels[:20]))
    assert report.best_epoch == int(np.argmin(report.dev_losses))
    from spoofbench.antispoof import _mean_loss

    again = _mean_loss(model, waves[:20], np.asarray(labels[:20]),
                       AlignPolicy(4000, "fixed_start"), 8)
    assert again == pytest.approx(min(report.dev_losses), rel=1e-5)


def test_single_class_rejected(toy_data):
    waves, _ = toy_data
    with pytest.raises(ConfigError, match="both"):
        train_antispoof(small_model(), waves[:4], [1, 1, 1, 1])


def test_checkpoint_round_trip(tmp_path):
    model = small_model()
    save_antispoof(model, tmp_path / "cm.pt")
    loaded = load_antispoof(tmp_path / "cm.pt")
    w = Waveform(np.random.default_rng(3).standard_normal(4000))
    assert antispoof_forward(w, loaded) == antispoof_forward(w, model)
    assert loaded.config == model.config
