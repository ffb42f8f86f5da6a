import math

import numpy as np
import pytest
import torch

import rgbdiff as rd
from rgbdiff.exceptions import ConfigError, DataError


class TestMakeSchedule:
    def test_single_step(self):
        s = rd.make_schedule(1, 0.1, 0.1)
        assert s.alpha_bars.tolist() == pytest.approx([0.9])

    def test_two_steps_hand_product(self):
        s = rd.make_schedule(2, 0.1, 0.2)
        assert s.alpha_bars.tolist() == pytest.approx([0.9, 0.9 * 0.8])

    def test_default_schedule_terminal_alpha_bar(self):
        s = rd.make_schedule(1000, 1e-4, 0.02)
        # independent evaluation through log-space summation
        log_ab = np.sum(np.log1p(-np.linspace(1e-4, 0.02, 1000)))
        assert s.alpha_bars[-1] == pytest.approx(math.exp(log_ab), rel=1e-10)
        assert s.alpha_bars[-1] < 1e-4

    def test_strictly_decreasing_and_bounded(self):
        s = rd.make_schedule(100)
        assert np.all(np.diff(s.alpha_bars) < 0)
        assert np.all((s.betas > 0) & (s.betas < 1))
        assert s.alpha_bars[0] == pytest.approx(1 - s.betas[0])

    @pytest.mark.parametrize("T,bmin,bmax", [(0, 0.1, 0.2), (10, 0.0, 0.2),
                                             (10, 0.3, 0.2), (10, 0.1, 1.0)])
    def test_invalid_bounds(self, T, bmin, bmax):
        with pytest.raises(ConfigError):
            rd.make_schedule(T, bmin, bmax)


class TestAddNoise:
    def test_t_zero_identity(self):
        s = rd.make_schedule(10)
        z0 = np.random.default_rng(0).normal(size=(4, 2, 2))
        out = rd.add_noise(z0, 0, np.zeros_like(z0), s)
        assert np.allclose(out, z0)

    def test_zero_signal_linearity(self):
        s = rd.make_schedule(10, 0.05, 0.3)
        eps = np.random.default_rng(1).normal(size=(4, 3, 3))
        out = rd.add_noise(np.zeros_like(eps), 5, eps, s)
        assert np.allclose(out, math.sqrt(1 - s.alpha_bar(5)) * eps)

    def test_t_out_of_range(self):
        s = rd.make_schedule(10)
        z = np.zeros((4, 2, 2))
        with pytest.raises(DataError):
            rd.add_noise(z, 11, z, s)

    def test_torch_and_numpy_agree(self):
        s = rd.make_schedule(20)
        rng = np.random.default_rng(2)
        z0 = rng.normal(size=(4, 4, 4))
        eps = rng.normal(size=(4, 4, 4))
        a = rd.add_noise(z0, 7, eps, s)
        b = rd.add_noise(torch.from_numpy(z0), 7, torch.from_numpy(eps), s)
        assert np.allclose(a, b.numpy())

    def test_closed_form_matches_iterated_simulation(self):
        # brute-force oracle: compound the one-step kernel
        # z_s = sqrt(1-beta_s) z_{s-1} + sqrt(beta_s) eps_s over s = 1..t and
        # compare the Monte-Carlo mean/variance against the closed form
        s = rd.make_schedule(20, 0.01, 0.3)
        t = 13
        z0 = 0.7
        n = 10_000
        rng = np.random.default_rng(3)
        z = np.full(n, z0)
        for step in range(1, t + 1):
            beta = s.betas[step - 1]
            z = math.sqrt(1 - beta) * z + math.sqrt(beta) * rng.normal(size=n)
        ab = s.alpha_bar(t)
        expected_mean = math.sqrt(ab) * z0
        expected_var = 1 - ab
        # 3 sigma Monte-Carlo bounds
        assert abs(z.mean() - expected_mean) < 3 * math.sqrt(expected_var / n)
        assert abs(z.var() - expected_var) < 3 * expected_var * math.sqrt(2 / (n - 1))
        # and the closed form lands on the same distribution
        eps = rng.normal(size=n)
        closed = rd.add_noise(np.full(n, z0), t, eps, s)
        assert abs(closed.mean() - expected_mean) < 3 * math.sqrt(expected_var / n)
        assert abs(closed.var() - expected_var) < 3 * expected_var * math.sqrt(2 / (n - 1))

    @pytest.mark.parametrize("t_frac", [0.001, 0.5, 1.0])
    def test_variance_preservation(self, t_frac):
        # z0 and eps standard normal keeps var(z_t) at 1 for every t
        s = rd.make_schedule(1000, 1e-4, 0.02)
        t = max(1, int(t_frac * 1000))
        rng = np.random.default_rng(4)
        z0 = rng.normal(size=100_000)
        eps = rng.normal(size=100_000)
        zt = rd.add_noise(z0, t, eps, s)
        assert abs(zt.var() - 1.0) < 0.05

    def test_shape_mismatch(self):
        s = rd.make_schedule(10)
        with pytest.raises(DataError):
            rd.add_noise(np.zeros((4, 2, 2)), 5, np.zeros((4, 3, 3)), s)
