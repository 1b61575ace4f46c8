"""Tests for CSV report writing."""

import math

import numpy as np
import pytest

from splinelens.utils.reports import format_value, write_csv


class TestFormatValue:
    """Test how cells are rendered."""

    @pytest.mark.parametrize(
        ("value", "text"),
        [
            (True, "true"),
            (np.bool_(False), "false"),
            (3, "3"),
            (np.int64(-4), "-4"),
            (0.1, "0.10000000000000001"),
            (np.float32(0.5), "0.5"),
            (math.nan, "nan"),
            (math.inf, "inf"),
            (-math.inf, "-inf"),
            (None, ""),
            ("bn_warmup", "bn_warmup"),
        ],
    )
    def test_cells(self, value, text):
        assert format_value(value) == text

    def test_floats_round_trip(self):
        value = 1.0 / 3.0
        assert float(format_value(value)) == value


class TestWriteCsv:
    """Test report files."""

    def test_mappings_and_sequences(self, tmp_path):
        path = write_csv(
            tmp_path / "nested" / "report.csv",
            ("layer", "unit", "mu"),
            [{"layer": 1, "unit": 2, "mu": 0.5}, (2, 1, None), {"layer": 3}],
        )
        assert path.read_text(encoding="utf-8") == (
            "layer,unit,mu\n1,2,0.5\n2,1,\n3,,\n"
        )

    def test_header_only(self, tmp_path):
        path = write_csv(tmp_path / "empty.csv", ["epsilon", "mean_count"], [])
        assert path.read_text(encoding="utf-8") == "epsilon,mean_count\n"

    def test_quoting(self, tmp_path):
        path = write_csv(tmp_path / "summary.csv", ["summary"], [("5 nets, ok",)])
        assert path.read_text(encoding="utf-8").splitlines()[1] == '"5 nets, ok"'
