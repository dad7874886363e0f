"""Therapy forcing: pulse model, washout model, bounds."""

import math

import numpy as np
import pytest

from rdqmc.treatment import (
    ChemotherapySchedule,
    RadiotherapySchedule,
    default_week_protocol,
    eval_f,
    f_max_bound,
)

POINTS = np.array([[10.0, 20.0], [50.0, 50.0], [90.0, 5.0]])
DT = 0.125
# linear-quadratic effect of a 2 Gy dose with alpha=0.025 / Gy, beta=0.0025 / Gy^2,
# scaled by 1/dt = 8 per day
PULSE_VALUE = 8.0 * (1.0 - math.exp(-(0.025 * 2.0 + 0.0025 * 4.0)))


def single_rt(times=(0.0,)):
    return RadiotherapySchedule(
        times=np.asarray(times),
        dose=2.0,
        alpha=0.025,
        beta=0.0025,
        gamma_scale=1.0 / DT,
        window=DT,
    )


def single_ct(times=(0.0,)):
    return ChemotherapySchedule(
        times=np.asarray(times), concentration=1.0, alpha=0.9, beta=24.0 / 1.8
    )


class TestRadiotherapy:
    def test_pulse_value_inside_window(self):
        f = eval_f(POINTS, DT, radiotherapy=single_rt())
        assert np.allclose(f, PULSE_VALUE, rtol=1e-12)
        assert PULSE_VALUE == pytest.approx(0.465884, abs=1e-6)

    def test_zero_before_all_times(self):
        f = eval_f(POINTS, -0.5, radiotherapy=single_rt(), chemotherapy=single_ct())
        assert np.abs(f).max() == 0.0

    def test_window_is_open_left_closed_right(self):
        # a dose at tau acts on (tau, tau + window]: the end-of-step
        # sampling convention delivers it during exactly one step
        rt = single_rt()
        assert np.abs(eval_f(POINTS, 0.0, radiotherapy=rt)).max() == 0.0
        assert eval_f(POINTS, DT, radiotherapy=rt)[0] > 0.0
        assert np.abs(eval_f(POINTS, DT + 1e-9, radiotherapy=rt)).max() == 0.0

    def test_pulse_mass_equals_effect(self):
        # backward-Euler quadrature of the pulse over the step grid:
        # dt * sum_n f(t_{n+1}) = window * gamma * (1 - SF) = 1 - SF
        rt = single_rt()
        levels = np.arange(1, 17) * DT
        total = DT * sum(eval_f(POINTS[:1], t, radiotherapy=rt)[0] for t in levels)
        sf = math.exp(-(0.025 * 2.0 + 0.0025 * 4.0))
        assert total == pytest.approx(1.0 - sf, rel=1e-12)

    def test_spatial_dose_field(self):
        rt = RadiotherapySchedule(
            times=np.array([0.0]),
            dose=lambda p: np.where(p[:, 0] < 40.0, 2.0, 0.0),
            alpha=0.025,
            beta=0.0025,
            gamma_scale=8.0,
            window=DT,
            dose_max=2.0,
        )
        f = eval_f(POINTS, DT, radiotherapy=rt)
        assert f[0] == pytest.approx(PULSE_VALUE, rel=1e-12)
        assert f[1] == 0.0 and f[2] == 0.0

    def test_unsorted_times_rejected(self):
        with pytest.raises(ValueError):
            single_rt(times=(1.0, 0.5))


class TestChemotherapy:
    def test_value_at_injection_time(self):
        f = eval_f(POINTS, 0.0, chemotherapy=single_ct())
        assert np.allclose(f, 0.9, rtol=1e-14)

    def test_exponential_washout(self):
        beta = 24.0 / 1.8
        f = eval_f(POINTS, 0.5, chemotherapy=single_ct())
        assert np.allclose(f, 0.9 * math.exp(-beta * 0.5), rtol=1e-12)

    def test_superposition(self):
        t = 1.25
        both = eval_f(POINTS, t, chemotherapy=single_ct(times=(0.0, 1.0)))
        one = eval_f(POINTS, t, chemotherapy=single_ct(times=(0.0,)))
        two = eval_f(POINTS, t, chemotherapy=single_ct(times=(1.0,)))
        assert np.allclose(both, one + two, rtol=1e-14)


class TestCombined:
    def test_sum_of_contributions(self):
        rt, ct = single_rt(), single_ct()
        t = DT
        total = eval_f(POINTS, t, radiotherapy=rt, chemotherapy=ct)
        assert np.allclose(
            total,
            eval_f(POINTS, t, radiotherapy=rt) + eval_f(POINTS, t, chemotherapy=ct),
            rtol=1e-14,
        )

    def test_nonnegative_everywhere(self):
        rt, ct = default_week_protocol(DT)
        rng = np.random.default_rng(7)
        pts = rng.uniform(0.0, 100.0, size=(50, 2))
        for t in rng.uniform(-1.0, 9.0, size=40):
            assert eval_f(pts, float(t), rt, ct).min() >= 0.0


class TestFMaxBound:
    def test_empty_schedules(self):
        assert f_max_bound() == 0.0

    def test_single_rt_dose(self):
        assert f_max_bound(radiotherapy=single_rt()) == pytest.approx(
            0.465884, abs=1e-6
        )

    def test_dominates_pointwise_eval(self):
        rt, ct = default_week_protocol(DT)
        bound = f_max_bound(rt, ct)
        rng = np.random.default_rng(11)
        pts = rng.uniform(0.0, 100.0, size=(100, 2))
        times = rng.uniform(0.0, 8.0, size=100)
        worst = max(eval_f(pts, float(t), rt, ct).max() for t in times)
        assert bound >= worst


class TestWeekProtocol:
    def test_schedule_shape(self):
        rt, ct = default_week_protocol(DT)
        assert np.array_equal(rt.times, np.arange(5.0))
        assert np.array_equal(ct.times, np.arange(7.0))
        assert rt.alpha == 0.025
        assert rt.beta == pytest.approx(0.0025)
        assert rt.gamma_scale == pytest.approx(1.0 / DT)
        assert rt.window == DT
        assert ct.alpha == 0.9
        assert ct.beta == pytest.approx(24.0 / 1.8)

    def test_day_zero_dose_delivered_with_implicit_sampling(self):
        # integrating with end-of-step sampling over the first day picks
        # up the day-0 pulse exactly once
        rt, _ = default_week_protocol(DT)
        levels = np.arange(1, 9) * DT
        active = [t for t in levels if eval_f(POINTS[:1], t, radiotherapy=rt)[0] > 0]
        assert len(active) == 1
        assert active[0] == DT
