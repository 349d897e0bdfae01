import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glossnmt import tensor as T
from glossnmt.errors import ContractError
from glossnmt.instruction import (SCHEDULES, AlphaStrategy, FusionGate, InstructionBranch,
                                  adapt_ptm_attention, alpha_learn_step, alpha_value, fuse)
from glossnmt.optim import Adam
from glossnmt.tensor import Tensor


def test_annealing_closed_form():
    s = AlphaStrategy("cosine_annealing", T_c=25, gamma=0.0)
    assert alpha_value(s, 0) == pytest.approx(0.0, abs=1e-12)
    assert alpha_value(s, 12.5) == pytest.approx(0.5, abs=1e-12)
    assert alpha_value(s, 25) == pytest.approx(1.0, abs=1e-12)


def test_increment_closed_form_endpoints():
    s = AlphaStrategy("cosine_increment", T_c=100)
    assert alpha_value(s, 0) == pytest.approx(1.0, abs=1e-12)
    assert alpha_value(s, 100) == pytest.approx(0.0, abs=1e-12)


def test_shifted_increment_starts_high():
    s = AlphaStrategy("cosine_increment_shifted")
    assert (s.cycle, s.shift) == (100.0, math.pi)
    assert alpha_value(s, 0) == pytest.approx(1.0, abs=1e-12)
    assert alpha_value(s, 50) == pytest.approx(0.5, abs=1e-12)


def test_decrement_defaults_and_monotone_variant():
    s = AlphaStrategy("cosine_decrement")
    assert s.cycle == 100.0
    assert alpha_value(s, 100) == pytest.approx(1.0, abs=1e-12)
    m = AlphaStrategy("cosine_increment_monotone", T_c=10)
    vals = [alpha_value(m, e) for e in range(15)]
    assert vals[0] == 0.0 and vals[10] == pytest.approx(1.0)
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[14] == vals[10]


def test_generic_rule_hand_value():
    # 0.2 + 0.5 * 0.6 * (1 - cos(pi/3 + 0.5))
    s = AlphaStrategy("cosine_annealing", T_c=30, gamma=0.5, alpha_min=0.2, alpha_max=0.8)
    want = 0.2 + 0.3 * (1 - math.cos(10 / 30 * math.pi + 0.5))
    assert alpha_value(s, 10) == pytest.approx(want, abs=1e-15)


@given(st.floats(0, 1), st.integers(0, 500))
def test_constant_is_constant(v, epoch):
    assert alpha_value(AlphaStrategy("constant", value=v), epoch) == v


@given(st.sampled_from([s for s in SCHEDULES if s.startswith("cosine")]),
       st.floats(0, 1000), st.floats(0, 1), st.floats(0, 1), st.floats(1, 200))
def test_cosine_schedules_stay_in_bounds(variant, epoch, a, b, tc):
    lo, hi = min(a, b), max(a, b)
    s = AlphaStrategy(variant, T_c=tc, alpha_min=lo, alpha_max=hi)
    v = alpha_value(s, epoch)
    if variant == "cosine_increment":
        lo, hi = 1 - hi, 1 - lo  # the closed form mirrors the band
    assert lo - 1e-12 <= v <= hi + 1e-12


def test_strategy_validation():
    with pytest.raises(ContractError):
        AlphaStrategy("sideways")
    with pytest.raises(ContractError):
        AlphaStrategy("constant", value=1.5)
    with pytest.raises(ContractError):
        AlphaStrategy("cosine_annealing", T_c=0)
    with pytest.raises(ContractError):
        alpha_value(AlphaStrategy("constant", value=0.1), -1)


def test_fuse_convex_combination(rng):
    a, b = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(2, 3)))
    np.testing.assert_allclose(fuse(a, b, 0.25).data, 0.75 * a.data + 0.25 * b.data)
    np.testing.assert_array_equal(fuse(a, b, 0.0).data, a.data)
    np.testing.assert_array_equal(fuse(a, b, 1.0).data, b.data)
    with pytest.raises(ContractError):
        fuse(a, b, 1.2)


def test_branch_rejects_empty_features(rng):
    br = InstructionBranch(8, 2, 8, rng)
    q = Tensor(rng.normal(size=(1, 3, 8)).astype(np.float32))
    with pytest.raises(ContractError):
        adapt_ptm_attention(q, Tensor(np.zeros((1, 0, 8), dtype=np.float32)), br)


def test_branch_output_shape_and_feature_gradient_free(rng):
    br = InstructionBranch(8, 2, 16, rng, np.float64)
    q = Tensor(rng.normal(size=(2, 3, 8)), requires_grad=True)
    feats = Tensor(rng.normal(size=(2, 5, 8)))
    out = br(q, feats)
    assert out.shape == (2, 3, 8)
    T.backward(T.tsum(out))
    assert feats.grad is None and q.grad is not None


def test_gate_per_layer_and_override():
    gate = FusionGate(AlphaStrategy(value=0.3), n_layers=3, per_layer=True)
    assert len(gate.logits) == 3
    assert float(gate.value(2).data) == pytest.approx(0.3, abs=1e-6)
    gate.override = 0.0
    assert gate.value(1) == 0.0 and gate.current() == 0.0


def test_alpha_learn_step_moves_logit():
    gate = FusionGate(AlphaStrategy(value=0.5), n_layers=1, dtype=np.float64)
    opt = Adam(gate.logits, lr=0.1)
    loss = T.mul(gate.value(), 1.0)  # minimising alpha pushes the logit down
    T.backward(loss)
    alpha_learn_step(gate, opt)
    assert gate.current() < 0.5
    with pytest.raises(ContractError):
        alpha_learn_step(gate, Adam([Tensor(np.ones(1), requires_grad=True)]))
    with pytest.raises(ContractError):
        alpha_learn_step(FusionGate(AlphaStrategy("constant", value=0.2), 1), opt)
