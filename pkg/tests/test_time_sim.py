import math

import numpy as np
import pytest
from scipy import signal

from indiloop.blocks import GustSpec, NoiseSpec, desk_loop, desk_plant
from indiloop.loop_synthesis import closed_loop
from indiloop.tf_core import eval_exact, rationalize
from indiloop.time_sim import (
    Battery,
    DivergenceError,
    SimConfigError,
    SimScenario,
    default_battery,
    rms,
    robustness_mc,
    run_metrics,
    simulate,
)


def _step_oracle(cfg, m, t, amplitude):
    T = rationalize(closed_loop(cfg, m).T_yc)
    sys = signal.lti(T.numerator.descending(), T.denominator.descending())
    _, y = signal.step(sys, T=t)
    return amplitude * y


@pytest.mark.parametrize("pch", [False, True])
def test_step_matches_transfer_function(desk, pch):
    m, cfg = desk
    cfg = cfg.replace(pch=pch)
    sc = SimScenario("tracking", duration=3.0, dt=1e-4, command="step", amplitude=10.0)
    tr = simulate(cfg, m, sc)
    ref = _step_oracle(cfg, m, tr.time, 10.0)
    assert np.max(np.abs(tr.y - ref)) < 1e-3


def test_sine_steady_state_gain_with_delays():
    m = desk_plant()
    cfg = desk_loop(m, tau_a=0.002, tau_s=0.001)
    T_yc = closed_loop(cfg, m).T_yc
    for w in (1.0, 5.0):
        sc = SimScenario("tracking", duration=12.0, dt=1e-4, command="sine", amplitude=1.0, command_frequency=w)
        tr = simulate(cfg, m, sc)
        tail = tr.time > 12.0 - 2 * (2 * math.pi / w)
        gain = (tr.y[tail].max() - tr.y[tail].min()) / 2.0
        assert gain == pytest.approx(abs(eval_exact(T_yc, w)), rel=0.01)


def test_steady_state_tracks_step(desk):
    m, cfg = desk
    tr = simulate(cfg, m, SimScenario("tracking", duration=10.0, command="step", amplitude=5.0))
    assert tr.y[-1] == pytest.approx(5.0, rel=1e-3)
    assert tr.r[-1] == pytest.approx(5.0, rel=1e-3)


def test_hedge_is_zero_without_pch(desk):
    m, cfg = desk
    tr = simulate(cfg, m, SimScenario("tracking", duration=1.0, command="step"))
    assert np.all(tr.r == tr.r_ref)


def test_hedged_reference_lags_unhedged(desk):
    m, cfg = desk
    tr = simulate(cfg.replace(pch=True), m, SimScenario("tracking", duration=1.0, command="step"))
    assert np.max(np.abs(tr.v_h)) > 0
    k = np.searchsorted(tr.time, 0.1)
    assert tr.r[k] < tr.r_ref[k]


def test_gust_needs_no_command(desk):
    m, cfg = desk
    sc = SimScenario("disturbance", duration=6.0, command="none", gust=GustSpec())
    tr = simulate(cfg, m, sc)
    assert np.all(tr.y[tr.time < 3.0] == 0.0)
    assert np.max(np.abs(tr.y)) > 0.01


def test_simulation_is_deterministic(desk):
    m, cfg = desk
    sc = SimScenario("noise", duration=1.0, command="none", noise=NoiseSpec(seed=3))
    a, b = simulate(cfg, m, sc), simulate(cfg, m, sc)
    assert all(np.array_equal(x, y) for x, y in zip(a.columns().values(), b.columns().values()))


def test_noise_response_scales_with_sigma(desk):
    m, cfg = desk
    out = []
    for var in (4e-7, 1.6e-6):
        sc = SimScenario("noise", duration=3.0, command="none", noise=NoiseSpec(var, seed=1))
        out.append(rms(simulate(cfg, m, sc).y))
    assert out[1] / out[0] == pytest.approx(2.0, rel=1e-9)


def test_validation_errors(desk):
    m, cfg = desk
    with pytest.raises(SimConfigError):
        simulate(cfg.replace(tau_a=0.00015), m, SimScenario(duration=0.1))
    with pytest.raises(SimConfigError):
        simulate(cfg, m, SimScenario(duration=1.0, dt=1e-3))
    with pytest.raises(SimConfigError):
        simulate(cfg.replace(T_diff=0.0), m, SimScenario(duration=0.1, noise=NoiseSpec()))
    with pytest.raises(SimConfigError):
        SimScenario(kind="other")
    with pytest.raises(SimConfigError):
        SimScenario(command="ramp")


def test_divergence_is_reported(desk):
    m, cfg = desk
    bad = cfg.replace(tau_s=0.1)
    with pytest.raises(DivergenceError) as exc:
        simulate(bad, m, SimScenario(duration=60.0, command="step", amplitude=10.0))
    assert 0 < exc.value.time < 60.0


def test_rms():
    assert rms([3.0, -3.0]) == 3.0
    assert rms(np.zeros(4)) == 0.0


def test_robustness_samples_reproducible(desk):
    m, cfg = desk
    sc = default_battery(samples=4).robustness.replace(duration=3.0)
    s1, x1, e1 = robustness_mc(cfg, m, sc)
    s2, x2, e2 = robustness_mc(cfg, m, sc)
    assert s1 == s2 and np.array_equal(x1, x2) and e1 == e2 == 0
    assert s1 == pytest.approx(float(np.std(x1)))
    # a prefix of the sample set does not depend on the sample count
    _, x3, _ = robustness_mc(cfg, m, sc.replace(mc_samples=2))
    assert np.array_equal(x3, x1[:2])


def test_run_metrics_subset(desk):
    m, cfg = desk
    b = default_battery()
    short = Battery(tracking=b.tracking.replace(duration=3.0), disturbance=None, noise=None, robustness=None)
    rep = run_metrics(cfg, m, short)
    assert rep.RMSer > 0 and rep.RMSur > 0
    assert rep.RMSed is None and rep.sigma_RMSer is None
    assert rep.GM == pytest.approx(21.51, abs=0.01)
    assert "tracking" in rep.traces
