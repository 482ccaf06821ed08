import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holderscores import (GridDensity, DomainError, StructuralError,
                          cross_moment, holder_cross_bound, integrate,
                          l1_distance, power_moment, read_grid, write_grid)


def gaussian_1d(mean=0.0, scale=1.0, lo=-8.0, hi=8.0, n=2001):
    def pdf(pts):
        u = (pts[:, 0] - mean) / scale
        return np.exp(-0.5 * u * u) / (scale * np.sqrt(2 * np.pi))
    return GridDensity.from_callable(pdf, [lo], [hi], n)


class TestIntegrate:
    def test_uniform_density(self):
        u = GridDensity([0.0], [1.0], np.ones(1001))
        assert integrate(u) == pytest.approx(1.0, abs=1e-10)

    def test_truncated_gaussian_against_refined_quadrature(self):
        # oracle: the same integrand at double resolution
        coarse = gaussian_1d(n=2001)
        fine = gaussian_1d(n=4001)
        assert integrate(coarse) == pytest.approx(1.0, abs=1e-8)
        assert abs(integrate(coarse) - integrate(fine)) < 1e-10

    def test_single_spike(self):
        # a lone interior node of height h contributes h * cell_width
        vals = np.zeros(101)
        vals[50] = 3.0
        f = GridDensity([0.0], [1.0], vals)
        assert integrate(f) == pytest.approx(3.0 * 0.01, rel=1e-12)

    def test_weights_sum_to_volume(self):
        f = GridDensity([-1.0, 0.0], [2.0, 5.0], np.ones((31, 41)))
        assert f.weights.sum() == pytest.approx(15.0, rel=1e-12)
        assert integrate(f) == pytest.approx(15.0, rel=1e-12)


class TestPowerMoment:
    def test_uniform_any_gamma(self):
        u = GridDensity([0.0], [1.0], np.ones(501))
        for gamma in (0.1, 0.5, 1.0, 2.0):
            assert power_moment(u, 1 + gamma) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_closed_form(self):
        # closed form (2 pi s^2)^(-gamma/2) (1+gamma)^(-1/2), itself verified
        # against brute-force quadrature while freezing this test
        s, gamma = 0.7, 0.3
        f = gaussian_1d(scale=s, lo=-8 * s, hi=8 * s)
        expect = (2 * np.pi * s * s) ** (-gamma / 2) * (1 + gamma) ** (-0.5)
        assert power_moment(f, 1 + gamma) == pytest.approx(expect, rel=1e-10)
        assert expect == pytest.approx(0.7409210467088607, rel=1e-12)

    def test_scaled_uniform(self):
        vals = np.full(2001, 2.0)
        f = GridDensity([0.0], [0.5], vals)
        assert power_moment(f, 2.0) == pytest.approx(2.0, rel=1e-12)

    def test_exponent_below_one_rejected(self):
        u = GridDensity([0.0], [1.0], np.ones(11))
        with pytest.raises(DomainError):
            power_moment(u, 0.5)


class TestCrossMoment:
    def test_equal_uniforms(self):
        u = GridDensity([0.0], [1.0], np.ones(101))
        for a in (0.0, 0.5, 1.0, 2.0):
            assert cross_moment(u, u, a) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_supports(self):
        left = np.where(np.linspace(0, 1, 201) < 0.5, 2.0, 0.0)
        right = np.where(np.linspace(0, 1, 201) >= 0.5, 2.0, 0.0)
        f = GridDensity([0.0], [1.0], left)
        g = GridDensity([0.0], [1.0], right)
        assert cross_moment(f, g, 0.7) == pytest.approx(0.0, abs=1e-15)

    def test_gaussian_pair_frozen_oracle(self):
        # frozen from brute-force quadrature at double resolution (and the
        # analytic value (2 pi)^(-3/4) e^(-1/6) sqrt(4 pi / 3))
        f = gaussian_1d(0.0, lo=-9, hi=10, n=4001)
        g = gaussian_1d(1.0, lo=-9, hi=10, n=4001)
        assert cross_moment(f, g, 0.5) == pytest.approx(0.4365429608635976, rel=1e-9)

    def test_mismatched_grids_rejected(self):
        f = GridDensity([0.0], [1.0], np.ones(101))
        g = GridDensity([0.0], [1.0], np.ones(102))
        with pytest.raises(StructuralError):
            cross_moment(f, g, 1.0)
        g2 = GridDensity([0.0], [1.1], np.ones(101))
        with pytest.raises(StructuralError):
            cross_moment(f, g2, 1.0)


class TestHolderInequality:
    def test_random_battery(self):
        rng = np.random.default_rng(42)
        x = np.linspace(-10, 10, 1201)
        for _ in range(40):
            m1, m2 = rng.uniform(-2, 2, size=2)
            s1, s2 = rng.uniform(0.5, 2.0, size=2)
            f = GridDensity([-10.0], [10.0], np.exp(-0.5 * ((x - m1) / s1) ** 2))
            g = GridDensity([-10.0], [10.0], np.exp(-0.5 * ((x - m2) / s2) ** 2))
            for gamma in (0.1, 0.5, 1.0, 2.0):
                lhs = cross_moment(f, g, gamma)
                rhs = holder_cross_bound(f, g, gamma)
                assert lhs <= rhs + 1e-12 * max(1.0, rhs)

    def test_equality_for_proportional_inputs(self):
        f = gaussian_1d()
        for c in (0.5, 1.0, 3.0):
            g = f.with_values(c * f.values)
            for gamma in (0.1, 0.5, 1.0, 2.0):
                lhs = cross_moment(f, g, gamma)
                rhs = holder_cross_bound(f, g, gamma)
                assert lhs == pytest.approx(rhs, rel=1e-12)


class TestQuadratureConvergence:
    def test_refinement_stays_within_declared_tolerance(self):
        # doubling the grid moves smooth built-in integrals by < 10x tolerance
        for n in (1001, 2001):
            a = gaussian_1d(n=n)
            b = gaussian_1d(n=2 * n - 1)
            assert abs(integrate(a) - integrate(b)) < 10 * 1e-8

    def test_refinement_across_builtin_families(self):
        from holderscores import make_parametric, render_density
        cases = [
            ("gaussian-mean", {}, [0.3], 1e-8),
            ("gaussian-mean-scale", {}, [0.1, 1.2], 1e-8),
            ("gaussian-full-d", {"dim": 2}, [0.2, -0.1, 1.1, 0.3, 0.8], 1e-6),
            ("gaussian-mixture-fixed-weights", {}, [-1.2, 0.8, 1.2, 1.0], 1e-8),
            ("exponential-rate", {}, [1.3], 1e-8),
        ]
        for kind, hyper, theta, tol in cases:
            model = make_parametric(kind, **hyper)
            coarse = render_density(model, theta)
            fine = render_density(model, theta,
                                  points_per_axis=2 * model.quad_points - 1)
            assert abs(integrate(coarse) - integrate(fine)) < 10 * tol, kind


class TestGridDensityValidation:
    def test_negative_values_rejected(self):
        with pytest.raises(DomainError):
            GridDensity([0.0], [1.0], np.linspace(-0.1, 1, 11))

    def test_zero_function_rejected(self):
        with pytest.raises(DomainError):
            GridDensity([0.0], [1.0], np.zeros(11))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(StructuralError):
            GridDensity([0.0, 0.0], [1.0, 1.0], np.ones(11))

    def test_values_are_immutable(self):
        f = GridDensity([0.0], [1.0], np.ones(11))
        with pytest.raises(ValueError):
            f.values[0] = 2.0

    def test_normalize(self):
        f = gaussian_1d().with_values(3.7 * gaussian_1d().values)
        assert integrate(f.normalize()) == pytest.approx(1.0, abs=1e-14)

    def test_l1_distance(self):
        u = GridDensity([0.0], [1.0], np.ones(101))
        v = GridDensity([0.0], [1.0], np.full(101, 2.0))
        assert l1_distance(u, v) == pytest.approx(1.0, rel=1e-12)


class TestGridFile:
    def test_round_trip_bit_exact(self, tmp_path):
        f = gaussian_1d(n=257)
        path = tmp_path / "g.grid"
        write_grid(f, path)
        g = read_grid(path)
        assert np.array_equal(f.values, g.values)
        assert np.array_equal(f.domain_lo, g.domain_lo)
        assert np.array_equal(f.domain_hi, g.domain_hi)
        assert f.points_per_axis == g.points_per_axis

    def test_round_trip_2d(self, tmp_path):
        vals = np.abs(np.random.default_rng(0).standard_normal((17, 23))) + 0.1
        f = GridDensity([-1.0, 2.0], [1.5, 3.0], vals)
        path = tmp_path / "g2.grid"
        write_grid(f, path)
        g = read_grid(path)
        assert np.array_equal(f.values, g.values)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(min_value=1e-300, max_value=1e300,
                              allow_nan=False, allow_infinity=False),
                    min_size=2, max_size=40))
    def test_round_trip_arbitrary_finite_values(self, values):
        import tempfile
        f = GridDensity([0.0], [1.0], np.asarray(values))
        with tempfile.TemporaryDirectory() as tmp:
            path = f"{tmp}/h.grid"
            write_grid(f, path)
            g = read_grid(path)
        assert np.array_equal(f.values, g.values)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.grid"
        path.write_text("not a grid\n1.0\n")
        with pytest.raises(StructuralError):
            read_grid(path)
