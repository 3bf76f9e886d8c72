import numpy as np
import pytest

from spinebpd.errors import ContractError
from spinebpd.optim import AdamState, adam_init, adam_step


def _params():
    rng = np.random.default_rng(0)
    return {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=4)}


def test_init_defaults_and_zero_moments():
    p = _params()
    s = adam_init(p)
    assert (s.lr, s.beta1, s.beta2, s.eps_adam, s.step_count) == (1e-4, 0.9, 0.999, 1e-8, 0)
    assert all(not m.any() and m.shape == p[k].shape for k, m in s.first_moment.items())
    assert all(not v.any() for v in s.second_moment.values())
    other = adam_init({k: v * 7 + 1 for k, v in p.items()})
    assert all(np.array_equal(other.first_moment[k], s.first_moment[k]) for k in p)


def test_zero_gradient_is_noop():
    p = _params()
    s = adam_init(p)
    zero = {k: np.zeros_like(v) for k, v in p.items()}
    for _ in range(3):
        new, s = adam_step(p, zero, s)
        assert all(np.array_equal(new[k], p[k]) for k in p)
        p = new


def test_first_step_closed_form():
    p = _params()
    g = {k: np.where(np.arange(v.size).reshape(v.shape) % 2, 0.3, -2.0) for k, v in p.items()}
    new, s = adam_step(p, g, adam_init(p))
    for k in p:
        np.testing.assert_allclose(new[k] - p[k], -1e-4 * np.sign(g[k]), rtol=0, atol=1e-6 * 1e-4)
    assert s.step_count == 1


def _scalar_adam(theta, g, steps, lr=1e-4, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
    return theta


def test_two_steps_match_scalar_oracle():
    p = {"x": np.array([0.7, -1.2, 3.0])}
    g = {"x": np.array([0.5, -1e-3, 4.0])}
    s = adam_init(p)
    q, s = adam_step(p, g, s)
    q, s = adam_step(q, g, s)
    for i in range(3):
        assert abs(q["x"][i] - _scalar_adam(p["x"][i], g["x"][i], 2)) < 1e-12


def test_step_magnitude_bound_and_determinism():
    rng = np.random.default_rng(1)
    p = _params()
    s = adam_init(p)
    for _ in range(20):
        g = {k: rng.normal(scale=10.0 ** rng.uniform(-6, 3), size=v.shape) for k, v in p.items()}
        a, sa = adam_step(p, g, s)
        b, _ = adam_step(p, g, s)
        assert all(np.array_equal(a[k], b[k]) for k in p)
        assert all(np.abs(a[k] - p[k]).max() <= 10 * s.lr for k in p)
        assert all((sa.second_moment[k] >= 0).all() for k in p)
        p, s = a, sa


def test_inputs_untouched_and_buffers_pass_through():
    p = dict(_params(), buf=np.ones(2))
    s = adam_init(p, names=["w", "b"])
    snapshot = {k: v.copy() for k, v in p.items()}
    m0 = s.first_moment["w"].copy()
    new, s2 = adam_step(p, {"w": np.ones((3, 4)), "b": np.ones(4)}, s)
    assert new["buf"] is p["buf"]
    assert all(np.array_equal(snapshot[k], p[k]) for k in p)
    assert np.array_equal(s.first_moment["w"], m0) and s.step_count == 0 and s2.step_count == 1


def test_missing_or_misshaped_gradient():
    p = _params()
    s = adam_init(p)
    with pytest.raises(ContractError, match="missing"):
        adam_step(p, {"w": np.zeros((3, 4))}, s)
    with pytest.raises(ContractError, match="shape"):
        adam_step(p, {"w": np.zeros(3), "b": np.zeros(4)}, s)


def test_state_hyper():
    assert AdamState(lr=0.5).hyper() == {"lr": 0.5, "beta1": 0.9, "beta2": 0.999, "eps_adam": 1e-8}
