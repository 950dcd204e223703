import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats as sps

from tonalrnn.stats import kl_divergence, kolmogorov_sf, ks_two_sample, pearson, to_distribution


def brute_force_d(a, b):
    """Sup of |ECDF_a - ECDF_b| evaluated by counting at every observed point."""
    best = 0.0
    for x in list(a) + list(b):
        fa = sum(1 for v in a if v <= x) / len(a)
        fb = sum(1 for v in b if v <= x) / len(b)
        best = max(best, abs(fa - fb))
    return best


class TestDistribution:
    def test_examples(self):
        np.testing.assert_allclose(to_distribution([1, 1, 2]), [0.25, 0.25, 0.5])
        p = np.array([0.2, 0.8])
        np.testing.assert_array_equal(to_distribution(p), p)

    @given(st.lists(st.floats(0.01, 100), min_size=2, max_size=12), st.floats(0.1, 1000))
    def test_scale_invariance(self, v, c):
        np.testing.assert_allclose(to_distribution(np.array(v) * c), to_distribution(v), rtol=1e-12)
        assert to_distribution(v).sum() == pytest.approx(1.0, abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            to_distribution([0, 0])
        with pytest.raises(ValueError):
            to_distribution([1, -1, 2])


class TestKL:
    def test_closed_forms(self):
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0
        assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2))

    def test_random_pairs(self, rng):
        for _ in range(1000):
            p = to_distribution(rng.random(12))
            q = to_distribution(rng.random(12) + 1e-3)
            assert kl_divergence(p, q) >= 0
            assert kl_divergence(p, q) == pytest.approx(float(sps.entropy(p, q)), abs=1e-12)

    def test_infinite(self):
        with pytest.raises(ValueError):
            kl_divergence([0.5, 0.5], [1.0, 0.0])
        with pytest.raises(ValueError):
            kl_divergence([1.0], [0.5, 0.5])


class TestPearson:
    def test_examples(self):
        x = np.array([1.0, 2.0, 4.0, 7.0])
        assert pearson(x, x) == pytest.approx(1.0)
        assert pearson(x, -2 * x + 7) == pytest.approx(-1.0)
        a, b = [1, 2, 3, 5], [2, 3, 5, 8]
        ma, mb = sum(a) / 4, sum(b) / 4
        num = sum((u - ma) * (v - mb) for u, v in zip(a, b))
        den = math.sqrt(sum((u - ma) ** 2 for u in a) * sum((v - mb) ** 2 for v in b))
        assert pearson(a, b) == pytest.approx(num / den, rel=1e-14)

    @settings(max_examples=100)
    @given(st.integers(0, 10 ** 6), st.floats(0.01, 100), st.floats(-100, 100))
    def test_affine_invariance(self, seed, c, d):
        rng = np.random.default_rng(seed)
        a, b = rng.random(12), rng.random(12)
        assert abs(pearson(a, c * b + d) - pearson(a, b)) < 1e-12

    def test_errors(self):
        with pytest.raises(ValueError):
            pearson([1, 1, 1], [1, 2, 3])
        with pytest.raises(ValueError):
            pearson([1], [2])
        with pytest.raises(ValueError):
            pearson([1, 2], [1, 2, 3])


class TestKS:
    def test_examples(self):
        assert ks_two_sample([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]) == (0.0, 1.0)
        assert ks_two_sample([0, 0], [1, 1])[0] == 1.0
        with pytest.raises(ValueError):
            ks_two_sample([], [1.0])

    def test_brute_force(self, rng):
        for _ in range(100):
            a = rng.normal(size=rng.integers(1, 20))
            b = rng.normal(0.3, 1.0, size=rng.integers(1, 20))
            assert ks_two_sample(a, b)[0] == pytest.approx(brute_force_d(a, b), abs=1e-15)

    def test_ties(self):
        a, b = [1, 1, 2, 2, 3], [1, 2, 2, 2, 5, 5]
        assert ks_two_sample(a, b)[0] == pytest.approx(brute_force_d(a, b))

    def test_against_scipy(self, rng):
        a, b = rng.normal(size=60), rng.normal(0.5, 1, size=45)
        d, p = ks_two_sample(a, b)
        ref = sps.ks_2samp(a, b, method="asymp")
        assert d == pytest.approx(ref.statistic, abs=1e-15)
        ne = 60 * 45 / 105
        assert p == pytest.approx(special.kolmogorov(math.sqrt(ne) * d), rel=1e-9)

    @pytest.mark.parametrize("x", [0.05, 0.3, 0.7, 1.0, 1.17, 1.19, 1.5, 2.5, 4.0])
    def test_kolmogorov_sf(self, x):
        assert kolmogorov_sf(x) == pytest.approx(special.kolmogorov(x), rel=1e-9, abs=1e-15)

    def test_symmetric(self, rng):
        a, b = rng.random(8), rng.random(13)
        assert ks_two_sample(a, b) == ks_two_sample(b, a)
