import numpy as np
import pytest

from hetdyn.core import (Activation, Trajectory, VectorField, finite_diff_jacobian,
                         jacobian_rel_error, make_activation)
from hetdyn.lv import build_lv

KINDS = ["tanh", "scaled_logistic"]


@pytest.mark.parametrize("kind", KINDS)
def test_normalization_at_zero(kind):
    sig = make_activation(kind)
    assert sig(0.0) == 0.0
    assert sig.deriv(0.0) == 1.0


@pytest.mark.parametrize("kind", KINDS)
def test_derivative_bounds(kind):
    sig = make_activation(kind)
    s = np.linspace(-30, 30, 4001)
    d = sig.deriv(s)
    assert np.all(d > 0)
    assert np.all(d <= 1.0)


@pytest.mark.parametrize("kind", KINDS)
def test_inverse_round_trip(kind):
    sig = make_activation(kind)
    y = np.linspace(-0.999, 0.999, 801)
    assert np.max(np.abs(sig(sig.inv(y)) - y)) < 1e-12
    s = np.linspace(-3, 3, 601)
    assert np.max(np.abs(sig.inv(sig(s)) - s)) < 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_inverse_domain_error(kind):
    sig = make_activation(kind)
    with pytest.raises(ValueError):
        sig.inv(1.0)
    with pytest.raises(ValueError):
        sig.inv(-1.5)


@pytest.mark.parametrize("kind", KINDS)
def test_concavity_side_condition(kind):
    # sigma'(s) < sigma(s)/s < 1 for s != 0
    sig = make_activation(kind)
    s = np.concatenate([np.linspace(-10, -1e-3, 500), np.linspace(1e-3, 10, 500)])
    ratio = sig(s) / s
    assert np.all(sig.deriv(s) < ratio)
    assert np.all(ratio < 1.0)


def test_tanh_closed_form_values():
    sig = make_activation("tanh")
    # frozen against the closed forms tanh(1) and 1 - tanh(1)^2
    assert sig(1.0) == pytest.approx(0.7615941559557649, abs=1e-15)
    assert sig.deriv(1.0) == pytest.approx(0.41997434161402614, abs=1e-15)


def test_kinds_agree_numerically():
    # the rescaled logistic is the same function as tanh; the two code paths
    # must agree to round-off
    a, b = make_activation("tanh"), make_activation("scaled_logistic")
    s = np.linspace(-20, 20, 2001)
    assert np.max(np.abs(a(s) - b(s))) < 1e-12
    assert np.max(np.abs(a.deriv(s) - b.deriv(s))) < 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_second_derivative_matches_differences(kind):
    sig = make_activation(kind)
    s = np.linspace(-4, 4, 101)
    h = 1e-6
    fd = (sig.deriv(s + h) - sig.deriv(s - h)) / (2 * h)
    assert np.max(np.abs(sig.second_deriv(s) - fd)) < 1e-8


def test_fd_jacobian_identity_and_decay():
    ident = VectorField(dim=3, func=lambda x: x)
    decay = VectorField(dim=3, func=lambda x: -x)
    x = np.array([0.3, -1.2, 2.0])
    assert np.allclose(finite_diff_jacobian(ident, x), np.eye(3), atol=1e-9)
    assert np.allclose(finite_diff_jacobian(decay, x), -np.eye(3), atol=1e-9)


def test_fd_jacobian_matches_lv_analytic():
    system = build_lv([1, 1, 1], [0.6, 0.6, 0.6])
    f = system.field()
    x = np.array([0.5, 0.1, 0.1])
    J_fd = finite_diff_jacobian(f, x, 1e-6)
    assert np.max(np.abs(J_fd - f.jacobian(x))) < 1e-6


def test_registered_jacobians_agree_with_differences():
    rng = np.random.default_rng(3)
    system = build_lv([1, 1, 1], [0.5, 0.7, 0.9])
    f = system.field()
    for _ in range(100):
        x = rng.uniform(0.05, 1.0, 3)
        assert jacobian_rel_error(f, x) < 1e-5


def test_vector_field_without_jacobian_uses_differences():
    f = VectorField(dim=2, func=lambda x: np.stack([x[..., 0] ** 2, x[..., 1]], axis=-1))
    J = f.jacobian(np.array([2.0, 1.0]))
    assert J[0, 0] == pytest.approx(4.0, abs=1e-6)


def test_fd_jacobian_propagates_non_finite():
    bad = VectorField(dim=1, func=lambda x: 1.0 / x)
    with pytest.raises(FloatingPointError):
        finite_diff_jacobian(bad, np.array([0.0]), h=1.0)


def _toy_trajectory():
    times = np.linspace(0.0, 1.0, 11)
    states = np.stack([np.exp(-times), np.sin(times)], axis=1)
    derivs = np.stack([-np.exp(-times), np.cos(times)], axis=1)
    return Trajectory(times, states, derivs)


def test_trajectory_dense_hits_nodes():
    traj = _toy_trajectory()
    err = np.max(np.abs(traj.at(traj.times) - traj.states))
    assert err < 1e-12


def test_trajectory_rejects_bad_input():
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [[1.0], [1.0]], [[0.0], [0.0]])
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [[np.inf], [1.0]], [[0.0], [0.0]])


def test_trajectory_dense_accuracy_between_nodes():
    traj = _toy_trajectory()
    t = np.linspace(0, 1, 301)
    exact = np.stack([np.exp(-t), np.sin(t)], axis=1)
    assert np.max(np.abs(traj.at(t) - exact)) < 1e-6


def test_trajectory_map_states():
    times = np.linspace(0.0, 1.0, 6)
    states = times[:, None] * np.array([[1.0, 2.0]])
    derivs = np.ones_like(states) * np.array([[1.0, 2.0]])
    traj = Trajectory(times, states, derivs)
    mapped = traj.map_states(np.exp, np.exp)
    assert np.allclose(mapped.states, np.exp(states))
    assert np.allclose(mapped.derivs, np.exp(states) * derivs)
