import pytest
from common import MASK64, RangeList, fmt_float, make_rng, mix64, replica_rng, str_to_list, stream_seed


class TestRanges:
    def test_str_to_list(self):
        assert str_to_list("0-3,7") == [0, 1, 2, 3, 7]
        assert str_to_list("5,1-2") == [1, 2, 5]

    def test_bad_range(self):
        with pytest.raises(ValueError):
            str_to_list("a-b")

    def test_replica_ids_all_by_default(self):
        assert RangeList().replica_ids(4) == [0, 1, 2, 3]

    def test_replica_ids_filtered(self):
        r = RangeList([1, 3, 9])
        r.exclude([3])
        assert r.replica_ids(5) == [1]

    def test_instances_do_not_share_state(self):
        a = RangeList()
        a.exclude([0])
        assert RangeList().replica_ids(2) == [0, 1]


class TestSeeds:
    def test_mix64_is_64_bit(self):
        for words in ((0,), (1, 2), (2**64 - 1, 5, 9)):
            assert 0 <= mix64(*words) <= MASK64

    def test_mix64_is_order_sensitive(self):
        assert mix64(1, 2) != mix64(2, 1)

    def test_stream_tags_separate_streams(self):
        assert stream_seed(1, 0, "fragment") != stream_seed(1, 0, "overshoot")

    def test_unknown_tag(self):
        with pytest.raises(KeyError):
            stream_seed(1, 0, "nope")

    def test_no_collisions_small(self):
        seeds = {stream_seed(20240101, r, "fragment") for r in range(10**4)}
        assert len(seeds) == 10**4

    @pytest.mark.slow
    def test_no_collisions(self):
        seeds = {stream_seed(20240101, r, "fragment") for r in range(10**6)}
        assert len(seeds) == 10**6

    def test_generators_reproduce(self):
        assert (make_rng(42).random(5) == make_rng(42).random(5)).all()
        assert (replica_rng(1, 3, "tagged").random(3) == replica_rng(1, 3, "tagged").random(3)).all()


class TestFormatting:
    def test_seventeen_digits(self):
        assert fmt_float(0.1) == "0.10000000000000001"
        assert float(fmt_float(1.0 / 3.0)) == 1.0 / 3.0

    def test_integers_stay_short(self):
        assert fmt_float(0.25) == "0.25"
