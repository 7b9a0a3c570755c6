import math

import numpy as np
import pytest

from pintmg import excitation as exc


# --- independent oracle -----------------------------------------------------
#
# Inside one carrier period the sawtooth rises with slope 2 pulses/period
# while the scaled reference moves with slope at most 2 pi a / period, so
# (a r - c) is strictly decreasing and the pulse train flips from +1 to -1
# exactly once.  The exact period average is 2 d - 1 with d the duty
# fraction located by bisection.  Everything here is recomputed from the
# defining formulas, not from the module under test.

def _oracle_gap(phase_shift, a, pulses, k, theta):
    # theta in (0, 1) parametrizes carrier period k; the in-period sawtooth
    # is 2 theta - 1 by construction, immune to floor() boundary rounding.
    r = math.sin(2.0 * math.pi * (k + theta) / pulses + phase_shift)
    return a * r - (2.0 * theta - 1.0)


def _oracle_period_average(phase_shift, a, pulses, k):
    lo, hi = 1e-12, 1.0 - 1e-12
    if _oracle_gap(phase_shift, a, pulses, k, lo) < 0.0:
        return -1.0
    if _oracle_gap(phase_shift, a, pulses, k, hi) >= 0.0:
        return 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _oracle_gap(phase_shift, a, pulses, k, mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    duty = 0.5 * (lo + hi)
    return 2.0 * duty - 1.0


# --- reference / carrier / ramp basics ---------------------------------------

def test_reference_quarter_period_is_one():
    T = 0.02
    assert exc.reference(1, T / 4.0, T) == pytest.approx(1.0, abs=1e-15)


def test_reference_phases_are_shifted_copies():
    T = 0.02
    t = np.linspace(0.0, 3.0 * T, 301)
    r1 = exc.reference(1, t, T)
    assert np.allclose(exc.reference(2, t, T), exc.reference(1, t - T / 3.0, T),
                       atol=1e-12)
    assert np.allclose(exc.reference(3, t, T), exc.reference(1, t - 2.0 * T / 3.0, T),
                       atol=1e-12)
    assert np.max(np.abs(r1)) <= 1.0 + 1e-15


def test_carrier_sawtooth_values():
    T = 0.02
    assert exc.carrier(2, 0.0, T) == pytest.approx(-1.0)
    # p t / T = 0.5 exactly: midpoint of the rise
    assert exc.carrier(2, T / 4.0, T) == pytest.approx(0.0, abs=1e-15)
    assert exc.carrier(1, 0.75 * T, T) == pytest.approx(0.5, abs=1e-14)


def test_carrier_is_periodic_per_pulse():
    T, p = 0.02, 40
    t = np.linspace(0.0, T, 997)[:-1]
    assert np.allclose(exc.carrier(p, t + T / p, T), exc.carrier(p, t, T),
                       atol=1e-10)


def test_pwm_is_two_level_and_ties_go_positive():
    T = 0.02
    t = np.linspace(0.0, 2.0 * T, 4001)
    v = exc.pwm(1, t, T, 400, 0.8)
    assert set(np.unique(v)) <= {-1.0, 1.0}
    # modulation 0 makes the comparison hit exactly zero where the carrier
    # crosses zero: 0.01/0.02 = 0.5 is exact in binary
    assert exc.pwm(1, 0.01, T, 1, 0.0) == 1.0


def test_ramp_rises_from_zero_to_one_over_two_periods():
    T = 0.02
    assert exc.ramp(0.0, T) == pytest.approx(0.0)
    assert exc.ramp(T, T) == pytest.approx(0.5)
    assert exc.ramp(2.0 * T, T) == pytest.approx(1.0)
    assert exc.ramp(5.0 * T, T) == 1.0
    t = np.linspace(0.0, 2.0 * T, 200)
    vals = exc.ramp(t, T)
    assert np.all(np.diff(vals) >= 0.0)


def test_invalid_inputs_rejected():
    with pytest.raises(ValueError):
        exc.reference(4, 0.0)
    with pytest.raises(ValueError):
        exc.carrier(0, 0.0)
    with pytest.raises(ValueError):
        exc.PwmSource(modulation=1.5)
    with pytest.raises(ValueError):
        exc.PwmSource(period=-1.0)


# --- carrier-period averaging ------------------------------------------------

@pytest.mark.parametrize("pulses", [40, 400])
def test_period_average_tracks_scaled_reference(pulses):
    T, a = 0.02, 0.8
    bound = (2.0 * math.pi * a + 2.0) / pulses
    worst = 0.0
    for k in range(pulses):
        avg = _oracle_period_average(0.0, a, pulses, k)
        for frac in (0.0, 0.5, 1.0):
            t = (k + frac) * T / pulses
            worst = max(worst, abs(avg - a * math.sin(2.0 * math.pi * t / T)))
    assert worst <= bound


@pytest.mark.parametrize("pulses", [40, 400])
def test_pwm_module_matches_duty_cycle_oracle(pulses):
    # Riemann average of the module's pulse train vs the exact bisection
    # oracle; the only discrepancy is edge misclassification ~ 2/nsamp.
    T, a = 0.02, 0.8
    nsamp = 4096
    rng = np.random.default_rng(7)
    for k in rng.choice(pulses, size=min(12, pulses), replace=False):
        t0 = k * T / pulses
        ts = t0 + (np.arange(nsamp) + 0.5) * (T / pulses / nsamp)
        avg = float(np.mean(exc.pwm(1, ts, T, pulses, a)))
        exact = _oracle_period_average(0.0, a, pulses, int(k))
        assert abs(avg - exact) <= 3.0 / nsamp


def test_source_smooth_value_is_period_average_surrogate():
    src = exc.PwmSource(period=0.02, pulses=400, modulation=0.8, phase=1)
    t = 0.0123
    assert src.smooth_value(t) == pytest.approx(
        0.8 * math.sin(2.0 * math.pi * t / 0.02), abs=1e-14)
    ramped = exc.PwmSource(ramp_enabled=True)
    assert ramped.value(0.0) == 0.0
    assert abs(exc.PwmSource().value(0.0)) == 1.0
