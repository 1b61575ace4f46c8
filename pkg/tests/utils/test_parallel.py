"""Tests for the ordered thread pool."""

import threading
import time

import pytest

from splinelens.utils.parallel import ordered_map


class TestOrderedMap:
    """Test result order and worker handling."""

    @pytest.mark.parametrize("threads", [1, 2, 8])
    def test_results_keep_item_order(self, threads):
        def slow_square(i):
            time.sleep(0.001 * (10 - i))
            return i * i

        expected = [i * i for i in range(10)]
        assert ordered_map(slow_square, range(10), threads) == expected

    def test_uses_worker_threads(self):
        names = ordered_map(
            lambda _: threading.current_thread().name, range(4), threads=2
        )
        assert all(name != threading.main_thread().name for name in names)

    def test_single_thread_runs_inline(self):
        names = ordered_map(lambda _: threading.current_thread().name, range(3))
        assert names == [threading.main_thread().name] * 3

    def test_empty(self):
        assert ordered_map(str, [], threads=4) == []

    def test_invalid_thread_count(self):
        with pytest.raises(ValueError, match="threads must be >= 1"):
            ordered_map(str, [1], threads=0)

    def test_errors_propagate(self):
        def fail(i):
            if i == 2:
                raise RuntimeError("instance 2")
            return i

        with pytest.raises(RuntimeError, match="instance 2"):
            ordered_map(fail, range(4), threads=2)
