"""Tests for splinelens."""
