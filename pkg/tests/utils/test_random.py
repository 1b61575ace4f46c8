"""Tests for seeded random streams."""

import numpy as np
import pytest

from splinelens.utils.random import make_rng


class TestMakeRng:
    """Test stream keying."""

    def test_same_key_same_stream(self):
        a = make_rng(3, "verify", "tls-minimizer", 7).standard_normal(5)
        b = make_rng(3, "verify", "tls-minimizer", 7).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize(
        "other",
        [(4, "network"), (3, "dataset"), (3, "network", 0), (3,)],
    )
    def test_different_keys_differ(self, other):
        base = make_rng(3, "network").standard_normal(5)
        assert not np.array_equal(base, make_rng(*other).standard_normal(5))

    def test_philox_backed(self):
        assert isinstance(make_rng(0).bit_generator, np.random.Philox)

    def test_negative_keys(self):
        with pytest.raises(ValueError, match="non-negative"):
            make_rng(-1)
        with pytest.raises(ValueError, match="non-negative"):
            make_rng(0, -2)
