import math
import numpy as np
import pytest
import dislocation
from dislocation import DiscreteDislocation, NonIntegrable, catalog, discrete, truncate, uniform_binary, power_binary
from massPartition import normalize_partition

TOL = 1e-12


class TestDiscrete:
    def test_integrate_single_atom(self):
        nu = discrete([(1.0, (0.5, 0.5))])
        assert nu.integrate(lambda s: 1.0 - s.terms[0]) == pytest.approx(0.5, abs=TOL)

    def test_integrate_dust(self):
        nu = discrete([(1.0, (0.5, 0.25))])
        assert nu.integrate(lambda s: 1.0 - s.total()) == pytest.approx(0.25, abs=TOL)
        assert nu.dust_integral() == pytest.approx(0.25, abs=TOL)
        assert not nu.is_conservative()

    def test_integrate_two_atoms(self):
        nu = discrete([(2.0, (0.5, 0.5)), (1.0, (0.25, 0.25, 0.25, 0.25))])
        assert nu.integrate(lambda s: s.power_sum(2.0)) == pytest.approx(1.25, abs=TOL)
        assert nu.total_rate == pytest.approx(3.0)

    def test_single_atom_sample_is_that_atom(self):
        nu = discrete([(1.0, (0.7, 0.3))])
        assert nu.sample(np.random.default_rng(0)).terms == (0.7, 0.3)

    def test_sample_frequencies(self):
        nu = discrete([(3.0, (0.5, 0.5)), (1.0, (0.6, 0.2))])
        rng = np.random.default_rng(3)
        n = 20000
        halves = sum(1 for _ in range(n) if nu.sample(rng).terms == (0.5, 0.5))
        assert abs(halves / n - 0.75) < 4.0 * math.sqrt(0.75 * 0.25 / n)

    @pytest.mark.parametrize("atoms", [[], [(0.0, (0.5, 0.5))], [(1.0, (1.0,))]])
    def test_rejects_bad_atoms(self, atoms):
        with pytest.raises(ValueError):
            DiscreteDislocation([(r, normalize_partition(t)) for r, t in atoms])

    def test_describe(self):
        assert discrete([(1.0, (0.5, 0.25))]).describe() == {"type": "discrete", "atoms": [[1.0, [0.5, 0.25]]]}


class TestBinaryDensity:
    def test_uniform_is_conservative_with_finite_rate(self):
        nu = uniform_binary()
        assert nu.total_rate == pytest.approx(0.5)
        assert nu.is_conservative()
        assert nu.integrate(lambda s: 1.0) == pytest.approx(0.5, rel=1e-9)

    def test_uniform_sample_in_support(self):
        nu = uniform_binary()
        rng = np.random.default_rng(11)
        for _ in range(200):
            s = nu.sample(rng)
            assert 0.5 <= s.terms[0] < 1.0
            assert s.total() == pytest.approx(1.0, abs=TOL)

    def test_child_fraction_makes_it_dissipative(self):
        nu = uniform_binary(child_fraction=0.5)
        # dust of (a, (1 - a) / 2) is (1 - a) / 2, integrated over [1/2, 1)
        assert nu.dust_integral() == pytest.approx(1.0 / 16.0, rel=1e-9)

    def test_power_density_has_infinite_rate(self):
        nu = power_binary(0.5)
        assert math.isinf(nu.total_rate)
        assert not nu.is_finite_rate()
        with pytest.raises(NonIntegrable):
            nu.sample(np.random.default_rng(0))

    def test_power_density_lower_index(self):
        assert power_binary(0.25).p_lower == pytest.approx(-0.75)

    def test_power_density_beta_range(self):
        with pytest.raises(ValueError):
            power_binary(1.5)


class TestTruncate:
    def test_uniform_rate(self):
        assert truncate(uniform_binary(), 0.1).total_rate == pytest.approx(0.4)

    def test_rate_vanishes_near_one_half(self):
        assert truncate(uniform_binary(), 0.5 - 1e-9).total_rate == pytest.approx(0.0, abs=1e-8)

    def test_discrete_passes_through(self):
        nu = discrete([(1.0, (0.5, 0.5))])
        assert truncate(nu, 0.1) is nu

    @pytest.mark.parametrize("eps", [0.0, 0.5, -0.1])
    def test_epsilon_range(self, eps):
        with pytest.raises(ValueError):
            truncate(uniform_binary(), eps)

    def test_power_density_becomes_simulable(self):
        nu = truncate(power_binary(0.5, scale=0.1), 0.01)
        assert math.isfinite(nu.total_rate)
        assert nu.discarded_rate_bound > 0.0
        s = nu.sample(np.random.default_rng(5))
        assert 0.5 <= s.terms[0] <= 0.99


def test_catalog():
    measures = catalog()
    assert set(measures) == {"dyadic", "binary_0.7", "dissipative", "uniform"}
    assert all(nu.is_finite_rate() for nu in measures.values())
    assert isinstance(measures["dyadic"], dislocation.DiscreteDislocation)
