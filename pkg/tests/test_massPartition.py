import numpy as np
import pytest
from massPartition import MassPartition, SumExceedsOne, normalize_partition, size_biased_pick

TOL = 1e-12
Z_LIMIT = 4.0


class TestNormalizePartition:
    def test_sorts_and_reports_dust(self):
        s = normalize_partition([0.25, 0.5])
        assert s.terms == (0.5, 0.25)
        assert s.dust == pytest.approx(0.25, abs=TOL)
        assert not s.is_conservative()

    def test_unit_block(self):
        s = normalize_partition([1.0])
        assert s.terms == (1.0,)
        assert s.dust == 0.0
        assert s.is_trivial()

    def test_sum_above_one(self):
        with pytest.raises(SumExceedsOne) as e:
            normalize_partition([0.6, 0.5])
        assert e.value.total == pytest.approx(1.1)

    def test_rounding_inside_tolerance_is_accepted(self):
        s = normalize_partition([0.7, 0.3])
        assert s.is_conservative()

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            normalize_partition([0.5, -0.1])

    def test_zeros_dropped(self):
        assert normalize_partition([0.0, 0.5, 0.0, 0.5]).terms == (0.5, 0.5)

    def test_unsorted_terms_rejected_by_constructor(self):
        with pytest.raises(ValueError):
            MassPartition((0.25, 0.5))

    def test_power_sum(self):
        assert normalize_partition([0.5, 0.5]).power_sum(2.0) == pytest.approx(0.5, abs=TOL)


class TestSizeBiasedPick:
    def test_unit_block_always_first(self):
        s = normalize_partition([1.0])
        assert all(size_biased_pick(s, u) == 0 for u in (0.0, 0.5, 0.999999))

    def test_dust_band(self):
        assert size_biased_pick(normalize_partition([0.5, 0.25]), 0.9) is None

    def test_bands(self):
        s = normalize_partition([0.5, 0.25])
        assert size_biased_pick(s, 0.1) == 0
        assert size_biased_pick(s, 0.6) == 1

    def test_conservative_partition_never_hits_dust(self):
        s = normalize_partition([0.7, 0.3])
        assert size_biased_pick(s, np.nextafter(1.0, 0.0)) == 1

    def test_frequencies(self):
        s = normalize_partition([0.5, 0.25])
        rng = np.random.default_rng(7)
        n = 10**5
        picks = [size_biased_pick(s, u) for u in rng.random(n)]
        for outcome, p in ((0, 0.5), (1, 0.25), (None, 0.25)):
            freq = sum(1 for x in picks if x == outcome) / n
            assert abs(freq - p) < Z_LIMIT * np.sqrt(p * (1 - p) / n)
