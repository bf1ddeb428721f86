"""Grids, fields, fractional operators, observables."""

import numpy as np
import pytest
from scipy.integrate import quad

from fracgs import ModelParams, apply_fractional_power, gaussian, make_grid, observables
from fracgs.core import (
    Field,
    FieldError,
    GridError,
    check_state_candidate,
    fractional_multiplier,
    resample,
    spectral_tail_fraction,
    window_fractional_apply,
    window_kernel_1d,
    window_kinetic,
)

RNG = np.random.default_rng(20240811)


def band_limited(grid, rng, frac=0.25):
    """Random real field supported on the lowest frac of frequencies."""
    spec = np.zeros(grid.shape, dtype=complex)
    cut = np.abs(grid.xi_sq) <= (frac * np.max(np.abs(grid.axis_freqs))) ** 2
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    spec[cut] = noise[cut]
    return Field(grid, grid.ifft(spec).real)


class TestMakeGrid:
    def test_pi_grid_nodes_and_freqs(self):
        g = make_grid(1, np.pi, 8)
        assert np.allclose(g.axis_nodes, -np.pi + np.pi / 4 * np.arange(8))
        assert np.array_equal(g.axis_freqs, [0, 1, 2, 3, -4, -3, -2, -1])

    def test_spacing(self):
        g = make_grid(1, 12, 512)
        assert g.h == pytest.approx(0.046875, abs=0)
        assert g.h * g.M == 2 * g.L

    def test_tensor_grid(self):
        g = make_grid(2, 12, 128)
        assert g.size == 16384
        assert g.weight == pytest.approx(g.h**2)
        assert g.xsq.shape == (128, 128)

    @pytest.mark.parametrize(
        "args,msg",
        [
            ((3, 12, 64), "invalid-dimension"),
            ((1, 12, 65), "odd-M"),
            ((1, 12, 8192), "size-limit"),
            ((2, 12, 1024), "size-limit"),
            ((1, -1.0, 64), "half-width"),
        ],
    )
    def test_rejections(self, args, msg):
        with pytest.raises(GridError, match=msg):
            make_grid(*args)

    def test_frequency_table_symmetry(self):
        g = make_grid(1, 7.0, 64)
        xi = g.axis_freqs
        assert len(xi) == 64
        pos, neg = xi[1:32], xi[33:]
        # every nonzero frequency has its negative, except the Nyquist entry
        assert np.allclose(np.sort(neg), -pos[::-1])
        assert xi[32] == pytest.approx(-np.pi * 32 / 7.0)


class TestField:
    def test_length_mismatch(self, grid512):
        with pytest.raises(FieldError, match="length-mismatch"):
            Field(grid512, np.zeros(100))

    def test_kind_and_immutability(self, grid512):
        f = gaussian(grid512)
        assert f.kind == "real"
        with pytest.raises(ValueError):
            f.values[0] = 1.0
        c = Field(grid512, f.values + 0j)
        assert c.kind == "complex"

    def test_boundary_ratio_gaussian(self, grid512):
        # e^(-144/2) is far below any floating noise floor
        assert gaussian(grid512).boundary_ratio() < 1e-16


class TestPeriodizedMultiplier:
    def test_single_mode_exact(self):
        g = make_grid(1, np.pi, 64)
        f = Field(g, np.cos(3 * g.axis_nodes))
        out = apply_fractional_power(f, 0.5)
        assert np.max(np.abs(out.values - 3 * np.cos(3 * g.axis_nodes))) < 1e-12

    def test_gaussian_laplacian(self, grid512):
        x = grid512.axis_nodes
        u = Field(grid512, np.exp(-(x**2) / 2))
        out = apply_fractional_power(u, 1.0)
        assert np.max(np.abs(out.values - (1 - x**2) * np.exp(-(x**2) / 2))) < 1e-10

    def test_half_power_at_origin_vs_quadrature(self, grid512):
        # oracle: (2 pi)^(-1/2) * int |xi| e^(-xi^2/2) dxi = sqrt(2/pi)
        oracle = 2.0 * quad(lambda t: t * np.exp(-(t**2) / 2), 0, 20)[0] / np.sqrt(2 * np.pi)
        assert oracle == pytest.approx(np.sqrt(2 / np.pi), abs=1e-12)
        u = Field(grid512, np.exp(-(grid512.axis_nodes**2) / 2))
        i0 = np.argmin(np.abs(grid512.axis_nodes))
        # the periodized operator carries an O(L^-(1+2s)) long-range bias
        assert apply_fractional_power(u, 0.5).values[i0] == pytest.approx(oracle, abs=1e-2)
        # the window-exact operator reproduces the whole-line value
        wout = window_fractional_apply(grid512, 0.5, u.values)
        assert wout[i0] == pytest.approx(oracle, abs=1e-12)

    def test_parseval(self, grid512):
        f = band_limited(grid512, RNG)
        phys = np.sum(f.values**2) * grid512.weight
        spec = np.sum(np.abs(grid512.fft(f.values)) ** 2) * grid512.weight / grid512.size
        assert abs(phys - spec) <= 1e-12 * abs(phys)

    def test_multiplier_composition(self, grid512):
        f = band_limited(grid512, RNG)
        once = apply_fractional_power(f, 0.8)
        twice = apply_fractional_power(apply_fractional_power(f, 0.4), 0.4)
        scale = np.max(np.abs(once.values))
        assert np.max(np.abs(once.values - twice.values)) <= 1e-12 * scale

    def test_self_adjoint(self, grid512):
        u = band_limited(grid512, RNG)
        v = band_limited(grid512, RNG)
        au = apply_fractional_power(u, 0.6).values
        av = apply_fractional_power(v, 0.6).values
        left = np.sum(au * v.values) * grid512.weight
        right = np.sum(u.values * av) * grid512.weight
        assert abs(left - right) <= 1e-12 * max(abs(left), 1e-30)

    def test_s1_matches_exact_second_derivative_multiplier(self, grid512):
        f = band_limited(grid512, RNG)
        out = apply_fractional_power(f, 1.0)
        ref = grid512.ifft(grid512.xi_sq * grid512.fft(f.values)).real
        assert np.max(np.abs(out.values - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))

    def test_zero_frequency_maps_to_zero(self):
        g = make_grid(1, 5.0, 32)
        const = Field(g, np.ones(32))
        out = apply_fractional_power(const, 0.5)
        assert np.max(np.abs(out.values)) < 1e-14

    def test_sigma_validation(self, grid512):
        with pytest.raises(ValueError):
            apply_fractional_power(gaussian(grid512), 1.5)


class TestWindowOperator:
    def test_kernel_s1_closed_form(self):
        c = window_kernel_1d(64, 1.0)
        assert c[0] == pytest.approx(np.pi**2 / 3, rel=1e-14)
        d = np.arange(1, 65)
        assert np.allclose(c[1:], 2.0 * (-1.0) ** d / d**2, rtol=1e-13)

    def test_kernel_shalf_closed_form(self):
        # c_d = ((-1)^d - 1)/(pi d^2): zero for even d, -2/(pi d^2) for odd
        c = window_kernel_1d(64, 0.5)
        d = np.arange(1, 65)
        assert np.allclose(c[1:], ((-1.0) ** d - 1.0) / (np.pi * d**2), atol=1e-15)

    def test_gaussian_second_derivative(self, grid512):
        x = grid512.axis_nodes
        u = np.exp(-(x**2) / 2)
        out = window_fractional_apply(grid512, 1.0, u)
        assert np.max(np.abs(out - (1 - x**2) * u)) < 1e-10

    def test_kinetic_spectral_equals_physical(self, grid512):
        u = gaussian(grid512, width=0.7).values
        spec = window_kinetic(grid512, 0.5, u)
        phys = np.sum(u * window_fractional_apply(grid512, 0.5, u)) * grid512.h
        assert abs(spec - phys) <= 1e-12 * abs(spec)

    def test_self_adjoint_and_psd(self, grid512):
        u = gaussian(grid512, width=0.5, center=1.0).values
        v = gaussian(grid512, width=1.5, center=-2.0).values
        left = np.sum(window_fractional_apply(grid512, 0.7, u) * v)
        right = np.sum(u * window_fractional_apply(grid512, 0.7, v))
        assert abs(left - right) <= 1e-12 * abs(left)
        assert window_kinetic(grid512, 0.7, u) > 0

    def test_2d_separable_s1(self):
        g = make_grid(2, 8.0, 64)
        r2 = g.xsq
        u = np.exp(-r2 / 2)
        out = window_fractional_apply(g, 1.0, u)
        assert np.max(np.abs(out - (2 - r2) * u)) < 1e-9


class TestObservables:
    def test_normalized_gaussian(self, grid512):
        x = grid512.axis_nodes
        u = Field(grid512, np.pi**-0.25 * np.exp(-(x**2) / 2))
        o = observables(u, ModelParams(1, 1.0, 4.0, 0.0))
        assert o.mass == pytest.approx(1.0, abs=1e-12)
        assert o.potential == pytest.approx(0.5, abs=1e-12)
        assert o.kinetic_s == pytest.approx(0.5, abs=1e-10)
        assert o.power_q == pytest.approx((2 * np.pi) ** -0.5, abs=1e-12)

    def test_zero_field(self, grid512):
        o = observables(Field(grid512, np.zeros(512)), ModelParams(1, 0.5, 6.0, 0.0))
        assert (o.mass, o.kinetic_s, o.potential, o.power_q) == (0.0, 0.0, 0.0, 0.0)

    def test_complex_rejected(self, grid512):
        with pytest.raises(FieldError):
            observables(Field(grid512, np.ones(512) + 0j), ModelParams(1, 0.5, 6.0, 0.0))


class TestDiagnostics:
    def test_tail_fraction_smooth_vs_rough(self, grid512):
        assert spectral_tail_fraction(gaussian(grid512)) < 1e-12
        rough = gaussian(grid512).values * (1 + 0.01 * (-1.0) ** np.arange(512))
        assert spectral_tail_fraction(Field(grid512, rough)) > 1e-6

    def test_state_candidate_warning(self, grid512):
        rough = gaussian(grid512).values * (1 + 0.01 * (-1.0) ** np.arange(512))
        with pytest.warns(UserWarning, match="spectral tail"):
            check_state_candidate(Field(grid512, rough))

    def test_resample_accuracy(self, grid512):
        fine = make_grid(1, 12.0, 1024)
        f = gaussian(grid512, width=0.8)
        r = resample(f, fine)
        exact = gaussian(fine, width=0.8)
        assert np.max(np.abs(r.values - exact.values)) < 1e-6
