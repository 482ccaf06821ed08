import numpy as np
import pytest

from holderscores import (ConfigError, DomainError, Sample, StructuralError,
                          contaminate, draw_sample, integrate, make_parametric,
                          read_samples, render_density, write_samples)

ALL_KINDS = [
    ("gaussian-mean", {}, np.array([0.3])),
    ("gaussian-mean-scale", {}, np.array([-0.4, 1.3])),
    ("gaussian-full-d", {"dim": 2}, np.array([0.2, -0.1, 1.1, 0.3, 0.8])),
    ("gaussian-mixture-fixed-weights", {}, np.array([-1.5, 0.8, 1.2, 1.1])),
    ("exponential-rate", {}, np.array([1.4])),
]


def fd_score(model, theta, x, h=1e-6):
    theta = np.asarray(theta, dtype=float)
    out = np.empty((np.atleast_2d(x).shape[0] if model.dim > 1 else np.atleast_1d(x).size,
                    model.param_dim))
    for i in range(model.param_dim):
        step = h * max(1.0, abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = step
        out[:, i] = (model.log_density(theta + e, x)
                     - model.log_density(theta - e, x)) / (2 * step)
    return out


@pytest.mark.parametrize("kind,hyper,theta", ALL_KINDS)
def test_score_matches_finite_differences(kind, hyper, theta):
    model = make_parametric(kind, **hyper)
    rng = np.random.default_rng(3)
    x = model.sampler(theta, 40, rng)
    analytic = model.score(theta, x)
    numeric = fd_score(model, theta, x)
    scale = np.maximum(np.abs(analytic), 1.0)
    assert np.max(np.abs(analytic - numeric) / scale) < 1e-5


@pytest.mark.parametrize("kind,hyper,theta", ALL_KINDS)
def test_density_integrates_to_one(kind, hyper, theta):
    model = make_parametric(kind, **hyper)
    g = render_density(model, theta)
    tol = 1e-8 if model.dim == 1 else 1e-6
    assert abs(integrate(g) - 1.0) < tol


@pytest.mark.parametrize("kind,hyper,theta", ALL_KINDS)
def test_sampler_reproducible(kind, hyper, theta):
    model = make_parametric(kind, **hyper)
    a = draw_sample(model, theta, 50, seed=11).points
    b = draw_sample(model, theta, 50, seed=11).points
    c = draw_sample(model, theta, 50, seed=12).points
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


class TestFamilyFormulas:
    def test_gaussian_mean_scale_score(self):
        model = make_parametric("gaussian-mean-scale")
        m, s = 0.5, 2.0
        x = np.array([1.7])
        vec = model.score(np.array([m, s]), x)[0]
        assert vec[0] == pytest.approx((1.7 - m) / s ** 2, rel=1e-12)
        assert vec[1] == pytest.approx((1.7 - m) ** 2 / s ** 3 - 1 / s, rel=1e-12)

    def test_exponential_score(self):
        model = make_parametric("exponential-rate")
        lam = 0.7
        x = np.array([2.0])
        assert model.score(np.array([lam]), x)[0, 0] == pytest.approx(1 / lam - 2.0, rel=1e-12)
        with pytest.raises(DomainError):
            model.score(np.array([lam]), np.array([-1.0]))

    def test_gaussian_full_2d_has_five_parameters(self):
        model = make_parametric("gaussian-full-d", dim=2)
        assert model.param_dim == 5
        assert model.dim == 2

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            make_parametric("lognormal")

    def test_full_push_params_round_trip(self):
        model = make_parametric("gaussian-full-d", dim=2)
        theta = np.array([0.2, -0.1, 1.1, 0.3, 0.8])
        sigma = np.array([[2.0, 0.3], [0.0, 1.5]])
        mu = np.array([1.0, -1.0])
        pushed = model.push_params(theta, sigma, mu)
        # push with the inverse map undoes the first push
        inv = np.linalg.inv(sigma)
        back = model.push_params(pushed, inv, -inv @ mu)
        assert np.allclose(back, theta, atol=1e-12)


class TestContaminate:
    def test_eps_zero_is_plain_rendering(self):
        model = make_parametric("gaussian-mean-scale")
        theta = np.array([0.0, 1.0])
        base = contaminate(model, theta, 0.0, z=1.0)
        direct = render_density(model, theta, lo=base.domain_lo,
                                hi=base.domain_hi,
                                points_per_axis=base.points_per_axis)
        assert np.array_equal(base.values, direct.values)

    def test_mixture_mass_near_far_point(self):
        model = make_parametric("gaussian-mean-scale")
        theta = np.array([0.0, 1.0])
        eps = 0.1
        f = contaminate(model, theta, eps, z=10.0)
        assert abs(integrate(f) - 1.0) < 1e-7
        # the bump carries eps of the mass, concentrated next to z
        x = f.points()[:, 0]
        near = np.abs(x - 10.0) < 0.5
        mass_near = float(np.sum((f.values * f.weights)[near.reshape(f.values.shape)]))
        assert mass_near == pytest.approx(eps, abs=1e-6)

    def test_eps_range_validated(self):
        model = make_parametric("gaussian-mean-scale")
        for bad in (-0.1, 1.0, 1.5):
            with pytest.raises(DomainError):
                contaminate(model, np.array([0.0, 1.0]), bad, z=1.0)

    def test_z_outside_hard_support_rejected(self):
        model = make_parametric("exponential-rate")
        with pytest.raises(DomainError):
            contaminate(model, np.array([1.0]), 0.1, z=-2.0)


class TestSample:
    def test_requires_points(self):
        with pytest.raises(StructuralError):
            Sample(points=np.empty((0, 1)))

    def test_domain_check(self):
        with pytest.raises(DomainError):
            Sample(points=np.array([0.5, 2.5]), domain=([0.0], [1.0]))

    def test_csv_round_trip_plain(self, tmp_path):
        s = Sample(points=np.array([0.25, -1.5, 3.125]))
        path = tmp_path / "s.csv"
        write_samples(s, path)
        assert path.read_text().splitlines()[0] == "y"
        t = read_samples(path)
        assert np.array_equal(s.points, t.points)
        assert t.covariates is None

    def test_csv_round_trip_covariates(self, tmp_path):
        s = Sample(points=np.array([1.0, 2.0]),
                   covariates=np.array([[0.5, 1.5], [-0.25, 0.75]]))
        path = tmp_path / "sx.csv"
        write_samples(s, path)
        assert path.read_text().splitlines()[0] == "x1,x2,y"
        t = read_samples(path)
        assert np.array_equal(s.points, t.points)
        assert np.array_equal(s.covariates, t.covariates)
