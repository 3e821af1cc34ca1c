"""Tests for the exponential rate fitter."""

import math

import numpy as np
import pytest

from kacbath.ratefit import RateFit, fit_rate


class TestFitRate:
    def test_exact_exponential_is_recovered(self):
        t = np.linspace(0.0, 5.0, 40)
        fit = fit_rate(t, 5.0 * np.exp(-2.0 * t))
        assert fit.rate == pytest.approx(2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(5.0), abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.n_points == 40
        assert fit.window == (0.0, 5.0)

    def test_asymptote_is_subtracted(self):
        t = np.linspace(0.0, 4.0, 30)
        fit = fit_rate(t, 3.0 + 4.0 * np.exp(-t), asymptote=3.0)
        assert fit.rate == pytest.approx(1.0, abs=1e-10)

    def test_negative_signal_uses_magnitude(self):
        t = np.linspace(0.0, 4.0, 30)
        fit = fit_rate(t, -2.0 * np.exp(-0.7 * t))
        assert fit.rate == pytest.approx(0.7, abs=1e-10)

    def test_growth_comes_back_negative(self):
        t = np.linspace(0.0, 3.0, 20)
        fit = fit_rate(t, np.exp(1.5 * t))
        assert fit.rate == pytest.approx(-1.5, abs=1e-10)

    def test_window_opens_after_relaxation_time(self):
        t = np.linspace(0.0, 6.0, 25)
        # early transient: a second fast mode that is gone by t=2
        y = np.exp(-t) + 5.0 * np.exp(-8.0 * t)
        fit = fit_rate(t, y, relaxation_time=2.0)
        assert fit.window[0] >= 2.0
        assert fit.rate == pytest.approx(1.0, abs=1e-3)

    def test_noise_floor_closes_the_window(self):
        rng = np.random.default_rng(0)
        t = np.linspace(0.0, 10.0, 80)
        y = np.exp(-t) + rng.normal(0.0, 1e-3, t.size)
        fit = fit_rate(t, y, stderrs=np.full(t.size, 1e-3))
        # signal crosses 3e-3 around t = -ln(3e-3) = 5.8
        assert fit.window[1] < 7.0
        assert abs(fit.rate - 1.0) < 0.05

    def test_too_few_points_raises(self):
        t = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([1.0, 0.5, 1e-9, 1e-9])
        with pytest.raises(ValueError, match="noise floor"):
            fit_rate(t, y, stderrs=np.full(4, 1e-3))

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            fit_rate(np.zeros((2, 2)), np.zeros(4))
        with pytest.raises(ValueError):
            fit_rate(np.arange(4.0), np.ones(4), stderrs=np.ones(3))

    def test_str_reports_window_and_quality(self):
        t = np.linspace(0.0, 5.0, 40)
        text = str(fit_rate(t, np.exp(-t)))
        assert "rate" in text and "R^2" in text

    def test_constant_signal_has_zero_rate(self):
        t = np.linspace(0.0, 5.0, 10)
        fit = fit_rate(t, np.full(10, 2.0))
        assert fit.rate == pytest.approx(0.0, abs=1e-14)
        assert fit.r_squared == 1.0


class TestRateFitRecord:
    def test_fields_are_frozen(self):
        fit = RateFit(1.0, 0.0, 1.0, (0.0, 1.0), 5)
        with pytest.raises(AttributeError):
            fit.rate = 2.0
