import math

import numpy as np
import pytest

from inffusion.core.optim import Adam, Parameter, adam_step, uniform_init
from inffusion.core.tensor import Tensor
from inffusion.errors import MissingGradientError


def make_param(value, name="p"):
    return Parameter(name, Tensor(np.array(value, dtype=np.float64)))


def test_zero_gradient_leaves_parameters():
    p = make_param([1.0, -2.0, 3.0])
    p.tensor.grad = np.zeros(3)
    adam_step([p], lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0, 3.0])
    assert p.step == 1


@pytest.mark.parametrize("g", [0.3, -5.0, 1e3])
def test_first_step_moves_by_lr(g):
    p = make_param([2.0])
    p.tensor.grad = np.array([g])
    adam_step([p], lr=0.01, eps=1e-8)
    # m_hat = g, v_hat = g^2
    expected = 2.0 - 0.01 * g / (abs(g) + 1e-8)
    assert p.data[0] == pytest.approx(expected, abs=1e-15)
    assert p.data[0] == pytest.approx(2.0 - 0.01 * math.copysign(1.0, g), abs=1e-9)


def test_matches_hand_stepped_adam_on_square():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p = make_param([1.0])
    x, m, v = 1.0, 0.0, 0.0
    trajectory = []
    for t in range(1, 11):
        p.tensor.grad = 2.0 * p.data.copy()
        adam_step([p], lr=lr, betas=(b1, b2), eps=eps)
        g = 2.0 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        assert p.data[0] == pytest.approx(x, abs=1e-12)
        trajectory.append(abs(x))
    assert all(a > b for a, b in zip(trajectory, trajectory[1:]))


def test_missing_gradient_lists_names():
    a, b = make_param([1.0], "a"), make_param([1.0], "b")
    a.tensor.grad = np.ones(1)
    with pytest.raises(MissingGradientError) as exc:
        adam_step([a, b], lr=0.1)
    assert exc.value.details["parameters"] == ["b"]
    assert a.step == 0


def test_optimizer_zero_grad_and_steps():
    p = make_param([[1.0, 2.0]])
    opt = Adam([p], lr=0.5)
    p.tensor.grad = np.ones((1, 2))
    opt.step()
    opt.zero_grad()
    assert p.grad is None
    assert opt.steps_taken == 1


def test_uniform_init_bounds():
    values = uniform_init(np.random.default_rng(0), (1000,), fan_in=16)
    assert np.all(np.abs(values) <= 0.25)
    assert values.min() < -0.2 and values.max() > 0.2
