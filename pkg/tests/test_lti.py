import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oco_s2.costs import box_radius_diameter
from oco_s2.lti import (
    ConfigurationError,
    DisturbanceParams,
    SystemModel,
    default_model,
    diagonal_surrogate_state,
    disturbances_from_array,
    finite_window_state,
    generate_disturbances,
    simulate,
    state_bound,
    step,
    unrolled_state,
    window,
)
from oracles import simulate_loops


def test_step_zero(model):
    assert np.array_equal(step(model, np.zeros(10), np.zeros(10), np.zeros(10)), np.zeros(10))


def test_step_decay_of_unit_state(model):
    e1 = np.eye(10)[0]
    assert np.allclose(step(model, e1, np.zeros(10), np.zeros(10)), 0.95 * e1, atol=0, rtol=1e-15)


def test_step_input_cancels_disturbance(model):
    e1 = np.eye(10)[0]
    assert np.array_equal(step(model, np.zeros(10), e1, e1), np.zeros(10))


def test_step_dimension_mismatch(model):
    with pytest.raises(ConfigurationError):
        step(model, np.zeros(3), np.zeros(10), np.zeros(10))


def test_diagonal_fast_path_matches_dense(model, rng):
    for _ in range(20):
        x, u, d = rng.normal(size=(3, 10))
        assert np.max(np.abs(step(model, x, u, d, fast=True) - step(model, x, u, d, fast=False))) <= 1e-12


def test_certificate_rejected():
    with pytest.raises(ConfigurationError):
        SystemModel(A=np.array([[0.9, 5.0], [0.0, 0.9]]), B=np.eye(2), E=np.eye(2), C_A=1.0, rho=0.9)
    # The same matrix with an honest constant passes.
    SystemModel(A=np.array([[0.9, 5.0], [0.0, 0.9]]), B=np.eye(2), E=np.eye(2), C_A=40.0, rho=0.95)


def test_bad_dimensions():
    with pytest.raises(ConfigurationError):
        SystemModel(A=np.eye(2), B=np.eye(3), E=np.eye(2), C_A=1.0, rho=0.5)
    with pytest.raises(ConfigurationError):
        SystemModel(A=np.eye(2) * 0.5, B=np.eye(2), E=np.eye(2), C_A=0.5, rho=0.5)


def test_simulate_zero(model):
    tr = simulate(model, np.zeros((5, 10)), np.zeros((5, 10)))
    assert not tr.chi.any()


def test_simulate_scalar_by_hand():
    m = SystemModel(A=np.array([[0.5]]), B=np.array([[1.0]]), E=np.array([[0.0]]), C_A=1.0, rho=0.5)
    tr = simulate(m, np.ones((2, 1)), np.zeros((2, 1)))
    assert tr.chi[:, 0].tolist() == [0.0, 1.0, 1.5]


def test_simulate_matches_loop_oracle(rng):
    A = np.array([[0.6, 0.2], [0.0, 0.5]])
    m = SystemModel(A=A, B=np.array([[1.0], [0.5]]), E=np.array([[0.3, 0.0], [0.0, -0.2]]), C_A=2.0, rho=0.7)
    U, d = rng.uniform(size=(12, 1)), rng.normal(size=(12, 2))
    ref = np.array(simulate_loops(m.A.tolist(), m.B.tolist(), m.E.tolist(), U.tolist(), d.tolist()))
    assert np.max(np.abs(simulate(m, U, d).chi - ref)) <= 1e-14


def test_simulate_length_mismatch(model):
    with pytest.raises(ConfigurationError):
        simulate(model, np.zeros((4, 10)), np.zeros((5, 10)))


def test_forward_equals_unrolled_sum_long_horizon(model, rng):
    T = 2000
    d = generate_disturbances(T, 10, 3)
    U = rng.uniform(size=(T, 10))
    tr = simulate(model, U, d)
    for t in (1, 2, 17, 500, 1999, 2001):
        ref = unrolled_state(model, U, d, t)
        assert np.linalg.norm(tr.chi[t - 1] - ref) <= 1e-10 * max(1.0, np.linalg.norm(ref))


def test_residual_exact(model, rng, dist0):
    tr = simulate(model, rng.uniform(size=(200, 10)), dist0)
    assert tr.residual(model) <= 1e-15
    assert not tr.chi[0].any()


def test_state_bound_holds_on_feasible_runs(model, rng):
    for seed in range(3):
        d = generate_disturbances(200, 10, seed)
        R, _ = box_radius_diameter(10)
        Dchi = state_bound(model, R, d.D_d)
        tr = simulate(model, rng.uniform(size=(200, 10)), d)
        assert np.max(np.linalg.norm(tr.chi, axis=1)) <= Dchi


def test_disturbances_constant_when_all_knobs_off():
    p = DisturbanceParams(amplitude=(0.0, 0.0), n_shifts=0, noise_std=0.0)
    d = generate_disturbances(50, 3, 7, p).d
    assert np.all(d == d[0])


def test_disturbances_deterministic():
    a = generate_disturbances(200, 10, 11).d
    b = generate_disturbances(200, 10, 11).d
    assert a.tobytes() == b.tobytes()
    assert generate_disturbances(200, 10, 12).d.tobytes() != a.tobytes()


def test_disturbance_bound_is_realized_max(dist0):
    assert dist0.D_d == np.max(np.linalg.norm(dist0.d, axis=1))


def test_disturbances_have_two_level_shifts():
    # Without sinusoid or noise, the shifts are the only variation.
    p = DisturbanceParams(amplitude=(0.0, 0.0), noise_std=0.0)
    d = generate_disturbances(300, 4, 5, p).d
    jumps = np.flatnonzero(np.any(np.diff(d, axis=0) != 0, axis=1))
    assert 1 <= jumps.size <= 2
    assert np.max(np.abs(d)) <= 2 * 0.2


def test_window_padding():
    seq = np.arange(1, 6, dtype=float)[:, None]
    w = window(seq, 3, 4)
    assert w[:, 0].tolist() == [0.0, 0.0, 1.0, 2.0]


def test_finite_window_matches_simulation_when_history_fits(model, rng, dist0):
    U = rng.uniform(size=(200, 10))
    tr = simulate(model, U, dist0)
    for t in (1, 5, 30):
        H = 40
        chi_hat = finite_window_state(model, window(U, t, H), window(dist0.d, t, H))
        assert np.max(np.abs(chi_hat - tr.chi[t - 1])) <= 1e-15


def test_truncation_identity(model, rng, dist0):
    U = rng.uniform(size=(200, 10))
    tr = simulate(model, U, dist0)
    for H in (1, 5, 20):
        AH = np.linalg.matrix_power(model.A, H)
        for t in range(H + 1, 201):
            chi_hat = finite_window_state(model, window(U, t, H), window(dist0.d, t, H))
            gap = (tr.chi[t - 1] - chi_hat) - AH @ tr.chi[t - 1 - H]
            assert np.max(np.abs(gap)) <= 1e-12


def test_zero_windows(model):
    assert not finite_window_state(model, np.zeros((4, 10)), np.zeros((4, 10))).any()


def test_window_too_short(model):
    with pytest.raises(ConfigurationError):
        finite_window_state(model, np.zeros((3, 10)), np.zeros((3, 10)), H=4)


def test_diagonal_surrogate_equals_finite_window_for_constant_input(model, rng):
    u = rng.uniform(size=10)
    dw = rng.normal(size=(7, 10))
    a = diagonal_surrogate_state(model, u, dw)
    b = finite_window_state(model, np.tile(u, (7, 1)), dw)
    assert np.max(np.abs(a - b)) <= 1e-15


def test_diagonal_surrogate_by_hand(model):
    out = diagonal_surrogate_state(model, np.ones(10), np.zeros((2, 10)))
    assert np.allclose(out, 0.1 * (1 + 0.95), rtol=1e-15, atol=0)


def test_diagonal_surrogate_pure_disturbance(model, rng):
    dw = rng.normal(size=(3, 10))
    out = diagonal_surrogate_state(model, np.zeros(10), dw)
    # Rows are chronological: the last row is d_{t-1} (lag 0).
    ref = -0.1 * (dw[2] + 0.95 * dw[1] + 0.95**2 * dw[0])
    assert np.max(np.abs(out - ref)) <= 1e-16


def test_from_array_records_bound():
    d = disturbances_from_array([[3.0, 4.0], [0.0, 1.0]])
    assert d.D_d == 5.0


@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 30),
    st.integers(1, 12),
    st.integers(0, 2**31 - 1),
)
def test_truncation_bound_property(T, H, seed):
    m = default_model(3)
    rng = np.random.default_rng(seed)
    d = generate_disturbances(T, 3, seed % 1000)
    U = rng.uniform(size=(T, 3))
    tr = simulate(m, U, d)
    R, _ = box_radius_diameter(3)
    Dchi = state_bound(m, R, d.D_d)
    for t in range(1, T + 1):
        chi_hat = finite_window_state(m, window(U, t, H), window(d.d, t, H))
        assert np.linalg.norm(tr.chi[t - 1] - chi_hat) <= m.C_A * m.rho**H * Dchi * (1 + 1e-12)
