"""Pytest configuration: isolated user directories, shared fixtures and
performance monitoring."""

import time

import appdirs
import numpy as np
import pytest

from splinelens.core.datasets import star2d, two_class_2d
from splinelens.core.network import Activation, NetworkSpec, glorot_network
from splinelens.utils.random import make_rng


@pytest.fixture(autouse=True)
def isolated_user_dirs(tmp_path_factory, monkeypatch):
    """Point the per-user config and log directories at temporary paths."""
    base = tmp_path_factory.mktemp("user")
    monkeypatch.setattr(
        appdirs, "user_config_dir", lambda *args, **kwargs: str(base / "config")
    )
    monkeypatch.setattr(
        appdirs, "user_log_dir", lambda *args, **kwargs: str(base / "logs")
    )
    monkeypatch.delenv("SPLINELENS_OUTPUT_ROOT", raising=False)
    return base


@pytest.fixture
def cross_net():
    """Two-layer leaky network whose first layer cuts along both axes."""
    return NetworkSpec.build(
        [np.eye(2), np.array([[1.0, -1.0]])],
        activation=Activation.LEAKY,
        alpha=0.1,
    )


@pytest.fixture
def leaky_net():
    """Seeded 2-6-6-1 leaky network with random biases."""
    return glorot_network(
        [2, 6, 6, 1],
        Activation.LEAKY,
        make_rng(7, "network"),
        alpha=0.1,
        random_bias=True,
    )


@pytest.fixture
def star_points():
    return star2d(n=50, seed=0).inputs


@pytest.fixture
def clusters():
    return two_class_2d("clusters", n=128, noise=0.3, seed=0)


def pytest_configure(config):
    """Configure pytest with custom timeout behavior."""
    config.addinivalue_line(
        "markers", "timeout(seconds): set a custom timeout for a test"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    """Monitor test execution time and collect performance data."""
    start_time = time.time()
    outcome = yield
    duration = time.time() - start_time
    item._test_duration = duration

    if duration > 5.0 and not outcome.excinfo:
        print(f"\nSLOW TEST WARNING: '{item.name}' took {duration:.2f}s")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """List tests that took longer than five seconds."""
    slow_tests = []
    for phase in ["passed", "failed", "error"]:
        for report in terminalreporter.stats.get(phase, []):
            if getattr(report, "duration", 0.0) > 5.0:
                slow_tests.append((report.nodeid, report.duration, phase))

    if slow_tests:
        terminalreporter.write_sep("=", "PERFORMANCE WARNINGS", yellow=True)
        for nodeid, duration, phase in sorted(
            slow_tests, key=lambda x: x[1], reverse=True
        ):
            terminalreporter.write_line(f"  [{phase}] {nodeid}: {duration:.2f}s")
        terminalreporter.write_line("")
        terminalreporter.write_line(
            "Consider marking long-running tests with @pytest.mark.slow"
        )


def pytest_collection_modifyitems(config, items):
    """Give slow and integration tests a longer timeout."""
    for item in items:
        if any(mark.name == "timeout" for mark in item.iter_markers()):
            continue
        if any(mark.name == "slow" for mark in item.iter_markers()):
            item.add_marker(pytest.mark.timeout(300))
        elif any(mark.name == "integration" for mark in item.iter_markers()):
            item.add_marker(pytest.mark.timeout(120))
