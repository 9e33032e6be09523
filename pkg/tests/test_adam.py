import numpy as np
import pytest
from fractal_ae import AdamState, ContractViolationError, NumericalError, adam_step


def test_zero_gradient_leaves_parameters():
    params = {"w": np.array([0.5, 1.0]), "enc": np.ones((2, 2))}
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    state = AdamState()
    updated = adam_step(params, grads, state, 0.001)
    for name in params:
        assert np.array_equal(updated[name], params[name])
    assert state.t == 1


def test_first_step_moves_by_lr_against_gradient_sign():
    params = {"x": np.array([1.0, 1.0, 1.0])}
    grads = {"x": np.array([3.0, -0.5, 1e-2])}
    updated = adam_step(params, grads, AdamState(), 0.01, nonneg=())
    step = updated["x"] - params["x"]
    assert np.allclose(step, -0.01 * np.sign(grads["x"]), rtol=1e-3)


def test_converges_on_quadratic():
    center = np.array([0.3, -0.7])
    params = {"x": np.zeros(2)}
    state = AdamState()
    for _ in range(200):
        grads = {"x": 2 * (params["x"] - center)}
        params = adam_step(params, grads, state, 0.1, nonneg=())
    assert np.allclose(params["x"], center, atol=1e-3)


def test_projection_keeps_weights_nonnegative():
    params = {"w": np.array([0.001, 0.5])}
    grads = {"w": np.array([10.0, 1.0])}
    updated = adam_step(params, grads, AdamState(), 0.1)
    assert updated["w"][0] == 0.0
    assert updated["w"][1] > 0


def test_inputs_are_not_modified():
    params = {"w": np.array([1.0, 2.0])}
    before = params["w"].copy()
    adam_step(params, {"w": np.array([1.0, 1.0])}, AdamState(), 0.5)
    assert np.array_equal(params["w"], before)


def test_moment_shapes_track_parameters():
    params = {"enc": np.ones((3, 2)), "dec": np.ones((2, 3))}
    state = AdamState()
    adam_step(params, {k: np.ones_like(v) for k, v in params.items()}, state, 0.1)
    assert state.m["enc"].shape == (3, 2)
    assert state.v["dec"].shape == (2, 3)


def test_mismatched_keys_rejected():
    with pytest.raises(ContractViolationError):
        adam_step({"w": np.ones(2)}, {"v": np.ones(2)}, AdamState(), 0.1)


def test_mismatched_shapes_rejected():
    with pytest.raises(ContractViolationError):
        adam_step({"w": np.ones(2)}, {"w": np.ones(3)}, AdamState(), 0.1)


def test_non_finite_update_leaves_state_untouched():
    state = AdamState()
    with pytest.raises(NumericalError, match="non-finite"):
        adam_step({"w": np.ones(2)}, {"w": np.array([np.nan, 1.0])}, state, 0.1)
    assert state.t == 0
    assert not state.m
