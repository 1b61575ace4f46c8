"""Tests for console output formatting."""

import numpy as np
import pytest
from rich.console import Console

from splinelens.utils.output import MessageType, OutputFormatter, get_formatter


@pytest.fixture
def formatter():
    return OutputFormatter(Console(record=True, width=100, color_system=None))


class TestOutputFormatter:
    """Test cases for OutputFormatter."""

    @pytest.mark.parametrize(
        ("message_type", "title"),
        [
            (MessageType.INFO, "Info"),
            (MessageType.SUCCESS, "Success"),
            (MessageType.WARNING, "Warning"),
            (MessageType.ERROR, "Error"),
            (MessageType.HINT, "Hint"),
        ],
    )
    def test_print_box_default_titles(self, formatter, message_type, title):
        formatter.print_box("traced 12 regions", message_type)
        text = formatter.console.export_text()
        assert title in text
        assert "traced 12 regions" in text

    def test_custom_title(self, formatter):
        formatter.print_box("done", MessageType.SUCCESS, title="Partition")
        assert "Partition" in formatter.console.export_text()

    def test_error_box_with_hint(self, formatter):
        formatter.print_error_box("Unknown key run.sede", hint="Check --set")
        text = formatter.console.export_text()
        assert "Unknown key run.sede" in text
        assert "Check --set" in text

    def test_table_cells(self, formatter):
        formatter.print_table(
            "Checks",
            ["check", "passed", "worst"],
            [
                ("tls-minimizer", True, np.float64(1.234567891e-12)),
                ("gamma", False, None),
            ],
        )
        text = formatter.console.export_text()
        assert "tls-minimizer" in text
        assert "1.23457e-12" in text
        assert "yes" in text
        assert "no" in text

    def test_outputs_box(self, formatter, tmp_path):
        formatter.print_outputs([tmp_path / "summary.csv"])
        formatter.print_outputs([])
        text = formatter.console.export_text()
        assert "summary.csv" in text
        assert "(nothing written)" in text

    def test_global_formatter_is_shared(self):
        assert get_formatter() is get_formatter()
