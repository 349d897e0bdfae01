import pytest

from glossnmt import experiments
from glossnmt.errors import ConfigError
from glossnmt.experiments import (ABLATION_HEADER, ABLATION_ROWS, ablate, ablation_config, sweep,
                                  sweep_csv, worker_count)
from glossnmt.instruction import InstructionConfig
from glossnmt.training import TrainConfig, evaluate_model, train

BASE = TrainConfig(lr=3e-3, warmup_steps=5, max_epochs=2, batch_size=8, dropout=0.0,
                   label_smoothing=0.0, weight_decay=0.0, d_model=16, d_ff=32, n_heads=2,
                   n_layers=1, max_seq_len=40, beam_size=1)


@pytest.fixture(scope="module")
def data(tiny_corpus):
    return tiny_corpus.subset(range(18)), tiny_corpus.subset(range(18, 24))


def test_row_configs():
    cfgs = {n: ablation_config(n, BASE) for n in ABLATION_ROWS}
    assert cfgs["baseline"].instruction is None and not cfgs["baseline"].augmentation
    assert cfgs["dataaug"].instruction is None and cfgs["dataaug"].augmentation
    enc, dec, full = cfgs["encoder"].instruction, cfgs["decoder"].instruction, cfgs["full"].instruction
    assert (enc.fuse_encoder, enc.fuse_decoder) == (True, False)
    assert (dec.fuse_encoder, dec.fuse_decoder) == (False, True)
    assert (full.fuse_encoder, full.fuse_decoder, cfgs["full"].augmentation) == (True, True, True)
    with pytest.raises(ConfigError):
        ablation_config("everything", BASE)


def test_ablation_table(data, small_teacher):
    tr, dev = data
    tab = ablate(tr, dev, small_teacher, BASE, seeds=(0, 1), workers=1)
    assert [(r["config"], r["seed"]) for r in tab.rows] == [(n, s) for n in ABLATION_ROWS
                                                             for s in (0, 1)]
    assert all(set(ABLATION_HEADER) <= set(r) for r in tab.rows)
    assert tab.to_csv().splitlines()[0] == ",".join(ABLATION_HEADER)
    assert [r["config"] for r in tab.summary()] == list(ABLATION_ROWS)
    # the baseline row is exactly a direct run of the plain backbone
    model, _ = train(tr, dev, None, BASE.with_(seed=1))
    direct = evaluate_model(model, dev, None, 1).to_dict()
    got = next(r for r in tab.rows if r["config"] == "baseline" and r["seed"] == 1)
    assert {k: got[k] for k in direct} == direct


def test_parallel_matches_serial(data, small_teacher):
    tr, dev = data
    rows = ("baseline", "encoder")
    a = ablate(tr, dev, small_teacher, BASE, seeds=(0,), rows=rows, workers=1)
    b = ablate(tr, dev, small_teacher, BASE, seeds=(0,), rows=rows, workers=2)
    assert a.to_csv() == b.to_csv()


def test_beam_sweep_retrains_nothing(data, monkeypatch):
    tr, dev = data
    model, _ = train(tr, dev, None, BASE)

    def boom(*a, **k):
        raise AssertionError("retrained")

    monkeypatch.setattr(experiments, "train", boom)
    rows = sweep("beam_size", ["1", "2"], tr, dev, None, BASE, model=model)
    assert [r["value"] for r in rows] == [1, 2]
    assert rows[0]["dev_bleu4"] == evaluate_model(model, dev, None, 1).bleu4


def test_lr_sweep_in_input_order(data):
    tr, dev = data
    rows = sweep("lr", [3e-3, 1e-4], tr, dev, None, BASE, workers=1)
    assert [r["value"] for r in rows] == [3e-3, 1e-4]
    for r in rows:
        model, _ = train(tr, dev, None, BASE.with_(lr=r["value"]))
        assert r["dev_bleu4"] == evaluate_model(model, dev, None, 1).bleu4
    assert sweep_csv(rows).splitlines()[0] == "param,value,dev_bleu4"
    with pytest.raises(ConfigError):
        sweep("momentum", [1], tr, dev, None, BASE)


def test_worker_env(monkeypatch):
    monkeypatch.setenv("TINSLT_THREADS", "3")
    assert worker_count(10) == 3 and worker_count(2) == 2
    monkeypatch.setenv("TINSLT_THREADS", "zero")
    with pytest.raises(ConfigError):
        worker_count(4)
    monkeypatch.setenv("TINSLT_THREADS", "0")
    with pytest.raises(ConfigError):
        worker_count(4)


def test_instruction_settings_carry_into_rows():
    base = BASE.with_(instruction=InstructionConfig(per_layer_alpha=True))
    assert ablation_config("encoder", base).instruction.per_layer_alpha
