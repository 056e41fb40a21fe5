import numpy as np
import pytest

from crowdner.autodiff import GROUP_TAGGER, Parameter
from crowdner.optim import RmsPropState, rmsprop_step


def make_param(value, grad=None, name="p"):
    p = Parameter(name, np.atleast_2d(np.asarray(value, dtype=float)), GROUP_TAGGER)
    if grad is not None:
        p.grad[...] = np.atleast_2d(grad)
    return p


def test_zero_grad_zero_l2_bitwise_unchanged():
    p = make_param([[1.25, -0.5], [0.0, 3.0]])
    before = p.value.copy()
    rmsprop_step([p], RmsPropState(), lr=0.1, l2=0.0)
    assert np.array_equal(p.value, before)


def test_hand_derived_single_scalar_update():
    # decay 0.9, eps 1e-8, lr 1e-3, v=1, g=1, acc=0:
    #   acc <- 0.1, v <- 1 - 0.001/sqrt(0.1 + 1e-8)
    p = make_param([[1.0]], grad=[[1.0]])
    state = RmsPropState(decay=0.9, eps=1e-8)
    rmsprop_step([p], state, lr=1e-3, l2=0.0)
    assert state.acc["p"][0, 0] == pytest.approx(0.1, abs=1e-15)
    assert p.value[0, 0] == pytest.approx(0.9968377224979454, abs=1e-15)


def test_l2_decays_positive_weight_with_zero_grad():
    p = make_param([[2.0]])
    rmsprop_step([p], RmsPropState(), lr=1e-3, l2=1e-2)
    assert p.value[0, 0] < 2.0


def test_grads_zeroed_after_step():
    p = make_param([[1.0]], grad=[[0.5]])
    rmsprop_step([p], RmsPropState(), lr=1e-3)
    assert np.all(p.grad == 0.0)


def test_accumulator_stays_nonnegative_and_decays():
    p = make_param([[1.0]], grad=[[2.0]])
    state = RmsPropState()
    rmsprop_step([p], state, lr=1e-3)
    first = state.acc["p"][0, 0]
    assert first == pytest.approx(0.1 * 4.0)
    rmsprop_step([p], state, lr=1e-3)  # zero grad now
    assert 0.0 <= state.acc["p"][0, 0] < first


def test_nonfinite_update_aborts_naming_parameter_before_mutation():
    good = make_param([[1.0]], grad=[[1.0]], name="good")
    bad = make_param([[1.0]], grad=[[np.inf]], name="worker_head")
    before = good.value.copy()
    with pytest.raises(FloatingPointError, match="worker_head"):
        rmsprop_step([good, bad], RmsPropState(), lr=1e-3)
    assert np.array_equal(good.value, before)
