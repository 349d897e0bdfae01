import numpy as np
import pytest

from glossnmt import tensor as T
from glossnmt.errors import ConfigError, ContractError, TrainingDivergedError
from glossnmt.instruction import AlphaStrategy, InstructionConfig
from glossnmt.metrics import bleu
from glossnmt.model import TranslationModel
from glossnmt.training import CSV_HEADER, TrainConfig, train, translate_corpus

FAST = TrainConfig(lr=3e-3, warmup_steps=5, max_epochs=10, batch_size=8, dropout=0.0,
                   label_smoothing=0.0, weight_decay=0.0, d_model=16, d_ff=32, n_heads=2,
                   n_layers=1, max_seq_len=40, early_stop_patience=100)


def split(c):
    return c.subset(range(18)), c.subset(range(18, 24))


def test_loss_falls_over_first_ten_epochs(tiny_corpus):
    tr, dev = split(tiny_corpus)
    _, log = train(tr, dev, None, FAST)
    losses = [r.loss for r in log.records]
    assert len(losses) == 10
    assert losses[-1] < 0.8 * losses[0]
    assert sum(b >= a for a, b in zip(losses, losses[1:])) <= 2


def test_best_checkpoint_is_dev_argmax_and_restored(tiny_corpus, small_teacher):
    tr, dev = split(tiny_corpus)
    cfg = FAST.with_(max_epochs=12, early_stop_patience=3,
                     instruction=InstructionConfig(alpha=AlphaStrategy("learned")))
    model, log = train(tr, dev, small_teacher, cfg)
    scores = [r.dev_bleu4 for r in log.records]
    assert log.best_bleu4 == max(scores)
    assert log.best_epoch == scores.index(max(scores))
    if log.stopped_early:
        assert len(scores) == log.best_epoch + 1 + cfg.early_stop_patience
    hyps = translate_corpus(model, dev.glosses, small_teacher)
    assert bleu(hyps, dev.texts)[3] == pytest.approx(log.best_bleu4, abs=1e-9)
    assert not model.training


def test_runs_are_reproducible(tiny_corpus, small_teacher):
    tr, dev = split(tiny_corpus)
    cfg = FAST.with_(max_epochs=3, instruction=InstructionConfig())
    a = train(tr, dev, small_teacher, cfg)[1].to_csv()
    b = train(tr, dev, small_teacher, cfg)[1].to_csv()
    assert a == b
    assert a.splitlines()[0] == ",".join(CSV_HEADER)


def test_teacher_untouched(tiny_corpus, small_teacher):
    before = small_teacher.weight_hash()
    _, log = train(*split(tiny_corpus), small_teacher, FAST.with_(max_epochs=2,
                                                                  instruction=InstructionConfig()))
    assert log.teacher_hash == before == small_teacher.weight_hash()


def test_learned_alpha_moves_and_is_logged(tiny_corpus, small_teacher):
    cfg = FAST.with_(max_epochs=3, instruction=InstructionConfig(fuse_decoder=False))
    _, log = train(*split(tiny_corpus), small_teacher, cfg)
    enc = [r.alpha_enc for r in log.records]
    assert all(r.alpha_dec is None for r in log.records)
    assert len(set(enc)) > 1 and all(0 < a < 1 for a in enc)


def test_plain_backbone_has_no_branch(tiny_corpus):
    model, log = train(*split(tiny_corpus), None, FAST.with_(max_epochs=1))
    assert not model.uses_instruction
    assert not any("branch" in n or "gate" in n for n, _ in model.named_parameters())
    assert log.records[0].alpha_enc is None and log.teacher_hash is None


def test_divergence_raises(tiny_corpus, monkeypatch):
    real = TranslationModel.loss

    def poisoned(self, *a, **k):
        return T.mul(real(self, *a, **k), float("nan"))

    monkeypatch.setattr(TranslationModel, "loss", poisoned)
    with pytest.raises(TrainingDivergedError) as info:
        train(*split(tiny_corpus), None, FAST)
    assert info.value.epoch == 0 and info.value.batch == 0


def test_config_and_contract_errors(tiny_corpus):
    with pytest.raises(ConfigError):
        TrainConfig(lr=0)
    with pytest.raises(ConfigError):
        TrainConfig(theta=(1, 1))
    with pytest.raises(ContractError):
        train(tiny_corpus, None, None, FAST.with_(instruction=InstructionConfig()))
    cfg = FAST.with_(instruction=InstructionConfig(), seed=4)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_no_dev_keeps_last_epoch(tiny_corpus):
    model, log = train(tiny_corpus, None, None, FAST.with_(max_epochs=2))
    assert log.best_epoch == 1 and log.best_bleu4 is None
    assert np.isfinite(log.records[-1].loss)
