import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from ssmp.kernel import LevySpec
from ssmp.maps import MapSpec
from ssmp.processes import Bes3, BrownianAbs1D, FreeBessel, IsotropicStable, PowerCoord, PowerNorm
from ssmp.rng import RngStream
from ssmp.veritas import (CoordinatePower, CoordinateProduct, GaussianBump, IndicatorAnnulus, InversionSampler,
                          LevySampler, MeasureSpec, ProcessSampler, VerificationReport, check_duality,
                          check_h_transform, check_isotropy, check_moment_identity, check_self_duality, ks_critical,
                          ks_one_sample, ks_two_sample, rotation_2d, weighted_ecdf_comparison)

BM = LevySampler(LevySpec(sigma=1.0))
DRIFT = LevySampler(LevySpec(sigma=1.0, drift=1.0))
LEB = MeasureSpec(1, 0.0, 1e-3, 2.0)
F = GaussianBump((0.5,), 0.3)
G = GaussianBump((-0.5,), 0.3)


def _in_region(x):
    return (abs(x) >= 1e-3) & (abs(x) <= 2.0)


def _brownian_pairing(outer, inner, t):
    """``int int outer(x) phi_t(y - x) inner(y) dx dy`` over the region by quadrature."""
    def pt(x):
        return integrate.quad(lambda y: inner(np.array([[y]]))[0] * _in_region(y)
                              * stats.norm.pdf(y - x, scale=math.sqrt(t)), -2, 2, points=[0])[0]

    return integrate.quad(lambda x: outer(np.array([[x]]))[0] * pt(x), -2, 2, points=[0])[0]


class TestKs:
    def test_identical(self):
        a = np.array([0.3, 0.1, 0.7])
        assert ks_two_sample(a, a)[0] == 0.0

    def test_disjoint(self):
        assert ks_two_sample([0.1, 0.5, 0.9], [2.1, 2.5])[0] == 1.0

    def test_enumerated(self):
        assert ks_two_sample([1.0, 2.0], [1.5, 2.5])[0] == pytest.approx(0.5)

    def test_critical_values(self):
        _, c05, c01 = ks_two_sample(np.zeros(100), np.ones(100))
        assert c05 == pytest.approx(1.3581 * math.sqrt(0.02), rel=1e-3)
        assert c01 == pytest.approx(1.6276 * math.sqrt(0.02), rel=1e-3)
        assert ks_critical(100, 100, 0.01) == c01

    def test_empty(self):
        with pytest.raises(ValueError):
            ks_two_sample([], [1.0])

    def test_one_sample_matches_scipy(self):
        x = RngStream(1).gen.standard_normal(500)
        assert ks_one_sample(x, stats.norm.cdf) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-12)


class TestMeasure:
    @pytest.mark.parametrize("d,p,cone", [(1, 0.0, "full"), (2, -1.0, "full"), (3, 0.5, "full"),
                                          (2, 0.0, "positive")])
    def test_weights_integrate_to_mass(self, d, p, cone):
        m = MeasureSpec.power_norm(d, p, 0.5, 2.0, cone)
        _, w = m.sample(10**5, RngStream(2).gen)
        mass = m.sphere_area * integrate.quad(lambda r: r ** (p + d - 1), 0.5, 2.0)[0]
        assert abs(w.mean() - mass) <= 4 * w.std() / math.sqrt(w.size)

    def test_positive_cone_samples(self):
        m = MeasureSpec(2, 0.0, 0.5, 2.0, CoordinateProduct(2.0), "positive")
        x, _ = m.sample(1000, RngStream(3).gen)
        assert np.all(x > 0) and np.all(m.in_region(x))

    @pytest.mark.parametrize("kw", [dict(d=0, radial_exponent=0, r_lo=1, r_hi=2),
                                    dict(d=1, radial_exponent=0, r_lo=0, r_hi=2),
                                    dict(d=1, radial_exponent=0, r_lo=1, r_hi=math.inf),
                                    dict(d=1, radial_exponent=0, r_lo=1, r_hi=2, cone="left")])
    def test_degenerate_region(self, kw):
        with pytest.raises(ValueError):
            MeasureSpec(**kw)

    def test_test_functions(self):
        x = np.array([[3.0, 4.0], [0.5, 0.0]])
        np.testing.assert_allclose(GaussianBump((3.0, 4.0), 1.0)(x)[0], 1.0)
        np.testing.assert_array_equal(IndicatorAnnulus(1.0, 5.0)(x), [1.0, 0.0])
        np.testing.assert_array_equal(CoordinatePower(2.0, 4.0)(x), [4.0, 0.25])


class TestDuality:
    def test_same_bump_passes(self):
        m = MeasureSpec(1, 0.0, 1e-3, 2.0)
        assert check_duality(BM, BM, m, 0.5, F, F, 10**4, RngStream(4)).passed

    def test_brownian_distinct_bumps(self):
        rep = check_duality(BM, BM, LEB, 0.5, F, G, 10**5, RngStream(5))
        assert rep.passed
        oracle = _brownian_pairing(G, F, 0.5)
        assert oracle == pytest.approx(_brownian_pairing(F, G, 0.5), rel=1e-8)
        assert abs(rep.lhs_estimate - oracle) <= 4 * rep.se_lhs
        assert abs(rep.rhs_estimate - oracle) <= 4 * rep.se_rhs

    def test_drift_is_not_self_dual(self):
        rep = check_duality(DRIFT, DRIFT, LEB, 1.0, F, G, 10**5, RngStream(6))
        assert not rep.passed
        shifted = LevySampler(LevySpec(sigma=1.0, drift=-1.0))
        assert check_duality(DRIFT, shifted, LEB, 1.0, F, G, 10**5, RngStream(6)).passed

    def test_zero_effective_sample(self):
        far = GaussianBump((100.0,), 0.1)
        with pytest.raises(ValueError):
            check_duality(BM, BM, LEB, 0.5, IndicatorAnnulus(5.0, 6.0), far, 100, RngStream(0))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            check_duality(BM, BM, MeasureSpec(2, 0.0, 1.0, 2.0), 0.5, F, G, 100, RngStream(0))

    def test_calibration(self):
        passes = sum(check_duality(BM, BM, LEB, 0.5, F, F, 2000, RngStream(100 + k)).passed for k in range(100))
        assert passes >= 99

    def test_se_shrinks_by_root_two_when_n_doubles(self):
        a = check_self_duality(BM, LEB, 0.5, F, G, 20000, RngStream(7))
        b = check_self_duality(BM, LEB, 0.5, F, G, 40000, RngStream(7))
        ratio = b.se_lhs / a.se_lhs
        assert 1 / math.sqrt(2) - 0.1 <= ratio <= 1 / math.sqrt(2) + 0.1

    def test_inverted_brownian_is_bes3(self):
        # Brownian motion from 1/x, inverted and time changed, is BES(3) from x
        inv = InversionSampler(BrownianAbs1D(horizon=1.0, step=0.01, x0=1.0), clock=1e-3)
        gen = RngStream(8).gen
        y, alive = inv.sample(np.full((4000, 1), 1.0), 0.5, gen)
        z, _ = ProcessSampler(Bes3(horizon=0.5, step=0.5, x0=1.0)).sample(np.full((4000, 1), 1.0), 0.5, gen)
        assert alive.all()
        stat, _, crit01 = ks_two_sample(y[:, 0], z[:, 0])
        assert stat < crit01


class TestSelfDuality:
    def test_free_bessel_product_density(self):
        delta = 3.0
        fb = ProcessSampler(FreeBessel(horizon=0.5, step=0.5, d=2, delta=delta, x0=(1.0, 1.0)))
        # prod x_i^(delta-1) = prod (x_i/|x|)^(delta-1) |x|^(d (delta-1))
        m = MeasureSpec(2, 2 * (delta - 1), 0.5, 3.0, CoordinateProduct(delta - 1), "positive")
        f, g = GaussianBump((1.2, 0.8), 0.4), GaussianBump((0.7, 1.6), 0.4)
        assert check_self_duality(fb, m, 0.5, f, g, 10**5, RngStream(9)).passed

    def test_free_bessel_lebesgue_fails(self):
        fb = ProcessSampler(FreeBessel(horizon=0.5, step=0.5, d=2, delta=3.0, x0=(1.0, 1.0)))
        m = MeasureSpec(2, 0.0, 0.5, 3.0, cone="positive")
        f, g = GaussianBump((1.2, 0.8), 0.4), GaussianBump((0.7, 1.6), 0.4)
        assert not check_self_duality(fb, m, 0.5, f, g, 10**5, RngStream(9)).passed

    def test_brownian(self):
        assert check_self_duality(BM, LEB, 0.5, F, G, 10**5, RngStream(10)).passed

    def test_drifted_brownian(self):
        assert not check_self_duality(DRIFT, LEB, 1.0, F, G, 10**5, RngStream(10)).passed


class TestHTransform:
    BASE = ProcessSampler(BrownianAbs1D(horizon=0.5, step=0.5, x0=1.0))
    CAND = ProcessSampler(Bes3(horizon=0.5, step=0.5, x0=1.0))
    BUMP = GaussianBump((1.5,), 0.3)

    def _oracle(self, power):
        def q(y):
            s = math.sqrt(0.5)
            return stats.norm.pdf(y - 1, scale=s) - stats.norm.pdf(y + 1, scale=s)

        return integrate.quad(lambda y: y**power * self.BUMP(np.array([[y]]))[0] * q(y), 0, np.inf)[0]

    def test_identity_transform(self):
        rep = check_h_transform(self.BASE, self.BASE, PowerCoord(0.0), (1.0,), 0.5, self.BUMP, 10**4,
                                RngStream(11))
        assert rep.passed

    def test_doob_transform_to_bes3(self):
        rep = check_h_transform(self.BASE, self.CAND, PowerCoord(1.0), (1.0,), 0.5, self.BUMP, 10**5,
                                RngStream(12))
        assert rep.passed
        assert abs(rep.rhs_estimate - self._oracle(1)) <= 4 * rep.se_rhs

    def test_wrong_h_fails(self):
        rep = check_h_transform(self.BASE, self.CAND, PowerCoord(2.0), (1.0,), 0.5, self.BUMP, 10**5,
                                RngStream(12))
        assert not rep.passed
        assert abs(rep.rhs_estimate - self._oracle(2)) <= 4 * rep.se_rhs

    def test_h_must_be_positive(self):
        with pytest.raises(ValueError):
            check_h_transform(self.BASE, self.CAND, PowerCoord(1.0), (0.0,), 0.5, self.BUMP, 10, RngStream(0))

    def test_weighted_ecdf(self):
        gen = RngStream(13).gen
        start = np.full((20000, 1), 1.0)
        y, alive = self.BASE.sample(start, 1.0, gen)
        z, _ = ProcessSampler(Bes3(horizon=1.0, step=1.0, x0=1.0)).sample(start, 1.0, gen)
        w = np.where(alive, y[:, 0], 0.0)
        assert weighted_ecdf_comparison(z[:, 0], y[:, 0], w, gen).passed
        assert not weighted_ecdf_comparison(z[:, 0], y[:, 0], w**2, gen).passed


class TestMoment:
    TWO = dict(states=[[1.0], [-1.0]], Q=[[-1.0, 1.0], [1.0, -1.0]])

    def test_zero_exponent(self):
        spec = MapSpec(levy=[LevySpec(), LevySpec()], **self.TWO)
        assert check_moment_identity(spec, 1.0, 1.0, 10**4, RngStream(14)).passed

    def test_lambda_zero(self):
        spec = MapSpec(levy=[LevySpec(drift=1.0, sigma=1.0), LevySpec(drift=-1.0, sigma=1.0)], **self.TWO)
        assert check_moment_identity(spec, 0.0, 1.0, 10**4, RngStream(15)).passed

    def test_brownian_drifts(self):
        spec = MapSpec(levy=[LevySpec(drift=1.0, sigma=1.0), LevySpec(drift=-1.0, sigma=1.0)], **self.TWO)
        rep = check_moment_identity(spec, 1.0, 1.0, 10**5, RngStream(16))
        assert rep.passed
        assert np.asarray(rep.details["estimate"]).shape == (2, 2)

    def test_wrong_exponent_fails(self):
        spec = MapSpec(levy=[LevySpec(drift=1.0, sigma=1.0), LevySpec(drift=-1.0, sigma=1.0)], **self.TWO)
        other = MapSpec(levy=[LevySpec(drift=1.5, sigma=1.0), LevySpec(drift=-1.0, sigma=1.0)], **self.TWO)
        rep = check_moment_identity(spec, 1.0, 1.0, 10**5, RngStream(16))
        rep_other = check_moment_identity(other, 1.0, 1.0, 10**5, RngStream(16))
        est = np.asarray(rep.details["estimate"])
        exact_other = np.asarray(rep_other.details["exact"])
        assert np.max(np.abs(est - exact_other)) > 10 * abs(rep.se_lhs)


class TestIsotropy:
    STABLE = ProcessSampler(IsotropicStable(horizon=1.0, step=1.0, d=2, stable_alpha=1.0, x0=(1.0, 0.5)))

    def test_identity(self):
        assert check_isotropy(self.STABLE, (1.0, 0.5), 1.0, [np.eye(2)], 10**4, RngStream(17)).passed

    def test_stable_rotation(self):
        assert check_isotropy(self.STABLE, (1.0, 0.5), 1.0, [rotation_2d(math.pi / 3)], 10**4,
                              RngStream(18)).passed

    def test_free_bessel_is_anisotropic(self):
        fb = ProcessSampler(FreeBessel(horizon=1.0, step=1.0, d=2, delta=3.0, x0=(0.5, 2.0)))
        # the rotated start (2.5, 1.5)/sqrt 2 stays inside the positive quadrant
        rep = check_isotropy(fb, (0.5, 2.0), 1.0, [rotation_2d(math.pi / 4)], 10**4, RngStream(19))
        assert not rep.passed

    def test_rejects_non_orthogonal(self):
        with pytest.raises(ValueError):
            check_isotropy(self.STABLE, (1.0, 0.5), 1.0, [np.eye(2) * (1 + 1e-9)], 10, RngStream(0))

    def test_rejects_one_dimension(self):
        with pytest.raises(ValueError):
            check_isotropy(BM, (1.0,), 1.0, [np.eye(1)], 10, RngStream(0))


class TestReports:
    def test_pass_iff_within_threshold(self):
        assert VerificationReport("x", 1.0, 1.0, 0.1, 0.1, 0.3, 0.3, False, 10, 0).passed
        assert not VerificationReport("x", 1.0, 1.0, 0.1, 0.1, 0.31, 0.3, True, 10, 0).passed

    def test_json_field_order(self):
        rep = check_duality(BM, BM, LEB, 0.5, F, G, 1000, RngStream(20))
        d = json.loads(rep.to_json())
        assert list(d) == ["name", "lhs_estimate", "rhs_estimate", "se_lhs", "se_rhs", "statistic", "threshold",
                           "pass", "n_samples", "seed", "details"]
        assert d["seed"] == 20
        assert rep.summary().startswith("PASS duality:")

    def test_complex_estimates_encoded(self):
        spec = MapSpec(states=[[1.0]], Q=[[0.0]], levy=[LevySpec(drift=1.0)])
        d = json.loads(check_moment_identity(spec, 1.0, 1.0, 100, RngStream(21)).to_json())
        assert set(d["lhs_estimate"]) == {"re", "im"}

    def test_reproducible(self):
        a = check_duality(BM, BM, LEB, 0.5, F, G, 40000, RngStream(22))
        b = check_duality(BM, BM, LEB, 0.5, F, G, 40000, RngStream(22))
        assert a.to_json() == b.to_json()

    def test_thread_count_invariant(self):
        serial = check_duality(BM, BM, LEB, 0.5, F, G, 50000, RngStream(23), threads=1)
        parallel = check_duality(BM, BM, LEB, 0.5, F, G, 50000, RngStream(23), threads=4)
        assert serial.to_json() == parallel.to_json()

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv("SSMP_THREADS", "3")
        a = check_duality(BM, BM, LEB, 0.5, F, G, 40000, RngStream(24))
        monkeypatch.setenv("SSMP_THREADS", "1")
        b = check_duality(BM, BM, LEB, 0.5, F, G, 40000, RngStream(24))
        assert a.to_json() == b.to_json()

    def test_integer_seed_accepted(self):
        a = check_duality(BM, BM, LEB, 0.5, F, G, 1000, 5)
        assert a.to_json() == check_duality(BM, BM, LEB, 0.5, F, G, 1000, RngStream(5)).to_json()


def test_inversion_sampler_stable_lands_in_state_space():
    inv = InversionSampler(IsotropicStable(horizon=1.0, step=1.0, d=2, stable_alpha=1.0, x0=(1.0, 0.0)), clock=1e-2)
    y, alive = inv.sample(np.tile([1.0, 0.5], (200, 1)), 0.3, RngStream(25).gen)
    assert alive.any()
    assert np.all(np.linalg.norm(y[alive], axis=1) > 0)
    assert np.all(y[~alive] == 0)


def test_power_norm_h_for_inverted_stable():
    stable = IsotropicStable(horizon=0.5, step=0.5, d=2, stable_alpha=1.0, x0=(1.0, 0.5))
    rep = check_h_transform(ProcessSampler(stable), InversionSampler(stable, clock=1e-2), PowerNorm(-1.0),
                            (1.0, 0.5), 0.5, GaussianBump((1.2, 0.8), 0.5), 2 * 10**4, RngStream(26))
    assert rep.passed
