import numpy as np
import pytest

import reference
from glossnmt import tensor as T
from glossnmt.errors import ContractError, DimensionError
from glossnmt.gradcheck import check_gradients
from glossnmt.instruction import AlphaStrategy, InstructionConfig
from glossnmt.model import ModelConfig, TranslationModel, model_from_metadata
from glossnmt.nn import MultiHeadAttention, causal_mask, padding_mask
from glossnmt.tensor import Tensor

CFG = dict(vocab_size=11, d_model=8, d_ff=12, n_heads=2, n_enc_layers=2, n_dec_layers=2,
           dropout_rate=0.0, label_smoothing=0.1, max_seq_len=16)


def batch(rng, B=2, S=5, Tt=4, V=11, d_t=6):
    src = rng.integers(4, V, size=(B, S))
    valid = np.ones((B, S), dtype=bool)
    valid[1, 3:] = False
    src[~valid] = 0
    tgt = rng.integers(4, V, size=(B, Tt))
    feats = rng.normal(size=(B, S, d_t))
    return src, valid, tgt, feats


def constant(a):
    return InstructionConfig(alpha=AlphaStrategy("constant", value=a))


def test_vanilla_forward_matches_reference(rng):
    model = TranslationModel(ModelConfig(**CFG), seed=1, dtype=np.float64).eval()
    src, valid, tgt, _ = batch(rng)
    got = model(src, valid, tgt).data
    want = reference.forward(model.state_dict(), CFG, src, valid, tgt)
    np.testing.assert_allclose(got, want, atol=1e-10)


@pytest.mark.parametrize("fuse_enc,fuse_dec", [(True, True), (True, False), (False, True)])
def test_fused_forward_matches_reference(fuse_enc, fuse_dec, rng):
    instr = InstructionConfig(alpha=AlphaStrategy("constant", value=0.3),
                              fuse_encoder=fuse_enc, fuse_decoder=fuse_dec)
    model = TranslationModel(ModelConfig(**CFG), instr, teacher_dim=6, seed=2,
                             dtype=np.float64).eval()
    src, valid, tgt, feats = batch(rng)
    got = model(src, valid, tgt, feats).data
    want = reference.forward(model.state_dict(), CFG, src, valid, tgt, feats,
                             0.3 if fuse_enc else None, 0.3 if fuse_dec else None)
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_zero_alpha_reduces_to_backbone(rng):
    fused = TranslationModel(ModelConfig(**CFG), constant(0.0), teacher_dim=6, seed=3).eval()
    plain = TranslationModel(ModelConfig(**CFG), seed=99).eval()
    plain.load_state_dict({k: v for k, v in fused.state_dict().items()
                           if k in dict(plain.named_parameters())})
    src, valid, tgt, feats = batch(rng)
    np.testing.assert_allclose(fused(src, valid, tgt, feats).data, plain(src, valid, tgt).data,
                               atol=1e-5)


def test_use_instruction_false_is_backbone(rng):
    model = TranslationModel(ModelConfig(**CFG), constant(0.7), teacher_dim=6, seed=3).eval()
    src, valid, tgt, feats = batch(rng)
    a = model(src, valid, tgt, feats, use_instruction=False).data
    b = model(src, valid, tgt, None, use_instruction=False).data
    np.testing.assert_array_equal(a, b)


def test_padding_does_not_leak(rng):
    model = TranslationModel(ModelConfig(**CFG), seed=4, dtype=np.float64).eval()
    src, valid, tgt, _ = batch(rng)
    other = src.copy()
    other[1, 3:] = 7  # change padded positions only
    np.testing.assert_allclose(model(src, valid, tgt).data, model(other, valid, tgt).data,
                               atol=1e-12)


def test_decoder_is_causal(rng):
    model = TranslationModel(ModelConfig(**CFG), seed=5, dtype=np.float64).eval()
    src, valid, tgt, _ = batch(rng)
    changed = tgt.copy()
    changed[:, -1] = 4 if tgt[0, -1] != 4 else 5
    a, b = model(src, valid, tgt).data, model(src, valid, changed).data
    np.testing.assert_allclose(a[:, :-1], b[:, :-1], atol=1e-12)


def _f64_model(instr, seed=6, layers=1):
    cfg = dict(CFG, n_enc_layers=layers, n_dec_layers=layers)
    return TranslationModel(ModelConfig(**cfg), instr, teacher_dim=6, seed=seed, dtype=np.float64)


def test_fused_encoder_layer_gradients(rng):
    model = _f64_model(constant(0.4))
    layer = model.encoder[0]
    x = Tensor(rng.normal(size=(2, 5, 8)), requires_grad=True)
    feats = Tensor(rng.normal(size=(2, 3, 8)))
    mask = padding_mask(np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], dtype=bool))
    w = Tensor(rng.normal(size=(2, 5, 8)))
    from glossnmt.model import Instructed

    instr = Instructed(feats, None, model.enc_gate)
    loss = lambda: T.tsum(T.mul(layer(x, mask, instr, 0.4), w))  # noqa: E731
    assert check_gradients(loss, [x] + layer.parameters()) < 1e-4


def test_fused_decoder_layer_gradients(rng):
    model = _f64_model(constant(0.6))
    layer = model.decoder[0]
    s = Tensor(rng.normal(size=(2, 4, 8)), requires_grad=True)
    mem = Tensor(rng.normal(size=(2, 5, 8)), requires_grad=True)
    feats = Tensor(rng.normal(size=(2, 5, 8)))
    mm = padding_mask(np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], dtype=bool))
    w = Tensor(rng.normal(size=(2, 4, 8)))
    from glossnmt.model import Instructed

    instr = Instructed(feats, mm, model.dec_gate)
    loss = lambda: T.tsum(T.mul(layer(s, mem, causal_mask(4), mm, instr, 0.6), w))  # noqa: E731
    assert check_gradients(loss, [s, mem] + layer.parameters()) < 1e-4


def test_learned_alpha_logit_gradient(rng):
    model = _f64_model(InstructionConfig(), layers=2)
    src, valid, tgt, feats = batch(rng)
    out = np.roll(tgt, -1, axis=1)

    def loss():
        return model.loss(model(src, valid, tgt, feats), out)

    logits = model.enc_gate.logits + model.dec_gate.logits
    assert check_gradients(loss, logits) < 1e-4


def test_full_model_gradients_sampled(rng):
    model = _f64_model(InstructionConfig(per_layer_alpha=True), layers=1)
    src, valid, tgt, feats = batch(rng)
    out = np.roll(tgt, -1, axis=1)
    err = check_gradients(lambda: model.loss(model(src, valid, tgt, feats), out),
                          model.trainable_parameters(), max_coords=3)
    assert err < 1e-4


def test_schedule_alpha_follows_epoch():
    instr = InstructionConfig(alpha=AlphaStrategy("cosine_annealing"))
    model = TranslationModel(ModelConfig(**CFG), instr, teacher_dim=6)
    assert model.alphas() == {"encoder": 0.0, "decoder": 0.0}
    model.set_epoch(25)
    assert model.alphas()["encoder"] == pytest.approx(1.0, abs=1e-12)


def test_learned_alpha_starts_at_default():
    model = TranslationModel(ModelConfig(**CFG), InstructionConfig(), teacher_dim=6)
    assert model.alphas()["encoder"] == pytest.approx(0.65, abs=1e-6)
    assert len(model.enc_gate.logits) == 1


def test_missing_features_and_long_input_raise(rng):
    model = TranslationModel(ModelConfig(**CFG), InstructionConfig(), teacher_dim=6)
    src, valid, tgt, _ = batch(rng)
    with pytest.raises(ContractError):
        model(src, valid, tgt, None)
    long = np.full((1, 17), 5)
    with pytest.raises(ContractError):
        model(long, long > 0, tgt[:1], None, use_instruction=False)


def test_config_validation():
    with pytest.raises(ContractError):
        ModelConfig(vocab_size=10, d_model=10, n_heads=3)
    with pytest.raises(ContractError):
        InstructionConfig(fuse_encoder=False, fuse_decoder=False)


def test_attention_rejects_bad_mask(rng):
    mha = MultiHeadAttention(8, 2, rng)
    x = Tensor(rng.normal(size=(2, 3, 8)).astype(np.float32))
    with pytest.raises(DimensionError):
        mha(x, x, x, np.ones((3, 2), dtype=bool))
    with pytest.raises(DimensionError):
        mha(Tensor(np.ones((3, 8))), x, x)


def test_metadata_rebuilds_identical_model(rng):
    instr = InstructionConfig(alpha=AlphaStrategy("cosine_decrement", T_c=40))
    model = TranslationModel(ModelConfig(**CFG), instr, teacher_dim=6, seed=8).eval()
    model.set_epoch(7)
    clone = model_from_metadata(model.metadata()).eval()
    clone.load_state_dict(model.state_dict())
    src, valid, tgt, feats = batch(rng)
    np.testing.assert_array_equal(model(src, valid, tgt, feats).data,
                                  clone(src, valid, tgt, feats).data)
