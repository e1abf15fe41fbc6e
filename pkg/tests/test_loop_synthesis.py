import cmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from indiloop.blocks import LoopConfig, desk_loop, desk_plant, make_roll
from indiloop.loop_synthesis import (
    SingularStructureError,
    closed_loop,
    compensation_variants,
    equivalent_controller,
    gamma1,
    open_loop,
    pch_ratio,
    pid_reduction,
)
from indiloop.tf_core import eval_exact, evaluate, freq_response


def test_pid_triple_for_reference_case(ideal_cfg):
    # (K_p T + 1) K_v / B, K_p K_v / B, T K_v / B with K_p 5, K_v 50, T 0.02
    assert pid_reduction(ideal_cfg) == pytest.approx((55.0, 250.0, 1.0), abs=1e-12)


def test_ideal_controller_equals_pid(ideal_cfg):
    P, I, D = pid_reduction(ideal_cfg)
    C = equivalent_controller(ideal_cfg)
    for w in np.logspace(-2, 3, 50):
        pid = P + I / (1j * w) + D * 1j * w
        assert abs(eval_exact(C, w) - pid) <= 1e-10 * abs(pid)


def test_pid_reduction_refuses_non_ideal(ideal_cfg):
    with pytest.raises(ValueError):
        pid_reduction(ideal_cfg.replace(T_sensor=0.01))


def test_conventional_law_pid():
    cfg = LoopConfig(K_p=5.0, K_v=1.0, K_r=4.0, T_act=0.02, B_hat=2.0, law="conventional")
    # K_v = 1/T: P = (K_p T + 1)/(T B), I = K_p/(T B), D = 1/B
    assert pid_reduction(cfg) == pytest.approx((27.5, 125.0, 0.5))


def test_singular_structure_detected():
    cfg = LoopConfig(K_p=5.0, K_v=50.0, K_r=4.0, T_act=0.0, B_hat=1.0)
    with pytest.raises(SingularStructureError):
        equivalent_controller(cfg)


def test_ideal_roll_open_loop(ideal_cfg, roll):
    # K_v (K_p + s) / (s (s - L_p)) for B_hat = L_da
    L = open_loop(ideal_cfg, roll)
    for w in (0.5, 5.0, 50.0):
        s = 1j * w
        hand = 50.0 * (5.0 + s) / (s * (s + 2.0))
        assert abs(eval_exact(L, w) - hand) <= 1e-12 * abs(hand)


def test_ideal_tracking_transfer_is_reference_model(ideal_cfg, roll):
    # with unity sensor and filter the loop follows K_r/(s+K_r) times
    # the complementary sensitivity
    ls = closed_loop(ideal_cfg, roll)
    for w in (0.1, 3.0, 40.0):
        s = 1j * w
        L = 50.0 * (5.0 + s) / (s * (s + 2.0))
        hand = 4.0 / (s + 4.0) * L / (1 + L)
        assert abs(eval_exact(ls.T_yc, w) - hand) <= 1e-12 * abs(hand)


def test_tracking_unity_at_dc(desk):
    m, cfg = desk
    for pch in (False, True):
        ls = closed_loop(cfg, m, pch)
        assert abs(evaluate(ls.T_yc, 1e-7j) - 1.0) < 1e-5


def test_measured_tracking_includes_sensor(desk):
    m, cfg = desk
    ls = closed_loop(cfg, m)
    w = 20.0
    ratio = eval_exact(ls.T_ymc, w) / eval_exact(ls.T_yc, w)
    assert abs(ratio - 1 / (1 + 0.005j * w)) < 1e-12


def test_pch_ratio_formula(desk):
    m, cfg = desk
    R = pch_ratio(cfg)
    w = np.logspace(-2, 3, 100)
    s = 1j * w
    hand = (s + cfg.K_r) / (s + cfg.K_r + cfg.K_v * cfg.T_act * (cfg.K_p - cfg.K_r))
    assert np.allclose(R(s), hand, rtol=1e-14)
    on = freq_response(open_loop(cfg, m, True), w).values
    off = freq_response(open_loop(cfg, m, False), w).values
    assert np.max(np.abs(on / off - hand) / np.abs(hand)) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(
    K_p=st.floats(0.5, 30),
    K_r=st.floats(0.5, 30),
    K_v=st.floats(1, 100),
    w=st.floats(1e-3, 1e4),
)
def test_pch_ratio_magnitude_ordering(K_p, K_r, K_v, w):
    cfg = LoopConfig(K_p=K_p, K_v=K_v, K_r=K_r, T_act=0.02, B_hat=1.0)
    r = abs(pch_ratio(cfg)(1j * w))
    if K_p > K_r:
        assert r <= 1 + 1e-12
    elif K_p < K_r:
        assert r >= 1 - 1e-12


def test_gamma1_equals_delayed_loop_ratio(ideal_cfg, roll):
    # the synchronized-delay loop is the ideal loop times Gamma_1
    tau = 0.03
    from indiloop.tf_core import rationalize

    base = open_loop(ideal_cfg, roll)
    delayed = rationalize(open_loop(ideal_cfg.replace(tau_a=tau), roll))
    G = gamma1(tau, ideal_cfg.T_act)
    for w in (0.2, 2.0, 20.0, 200.0):
        s = 1j * w
        assert abs(delayed(s) - eval_exact(base, w) * G(s)) <= 1e-10 * abs(delayed(s))


@pytest.mark.parametrize("ratio", [0.1, 0.5, 1.0, 5.0])
def test_gamma1_dc_attenuation(ratio):
    T = 0.02
    db = 20 * np.log10(abs(gamma1(ratio * T, T)(0.0)))
    assert db == pytest.approx(-20 * np.log10(1 + ratio), abs=1e-12)


def test_compensation_variants_differ_only_in_measurement_path():
    m = desk_plant()
    cfg = desk_loop(m)
    L1, L2, L3 = compensation_variants(cfg, m)
    w = 7.0
    s = 1j * w
    Ga = 1 / (0.02 * s + 1)
    F = 1 / (s / 30 + 1)
    H = 1 / (0.005 * s + 1)
    common = eval_exact(L1, w) * (1 - Ga)
    assert abs(eval_exact(L2, w) * (1 - Ga * F) - common) < 1e-10 * abs(common)
    assert abs(eval_exact(L3, w) * (1 - Ga * F * H) - common) < 1e-10 * abs(common)


def test_open_loop_with_all_delays_hand_composed():
    m = make_roll(-5.0, 2.0)
    cfg = LoopConfig(K_p=6.0, K_v=30.0, K_r=3.0, T_act=0.025, B_hat=1.5, T_sensor=0.004, T_diff=0.02,
                     tau_a=0.002, tau_s=0.003, tau_am=0.001, comp_filter=True, pch=True)
    w = 11.0
    s = 1j * w
    Ga = cmath.exp(-0.002 * s) / (0.025 * s + 1)
    H = cmath.exp(-0.003 * s) / (0.004 * s + 1)
    F = 1 / (0.02 * s + 1)
    Gam = cmath.exp(-0.001 * s) * F
    R = (s + 3.0) / (s + 3.0 + 30.0 * 0.025 * 3.0)
    C = 0.025 * 30.0 * (6.0 + s * F) / (1.5 * (1 - Ga * Gam)) * R
    hand = Ga * C * H * 2.0 / (s + 5.0)
    assert abs(eval_exact(open_loop(cfg, m), w) - hand) <= 1e-12 * abs(hand)
