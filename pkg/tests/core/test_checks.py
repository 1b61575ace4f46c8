"""Tests for the verification battery."""

import math

import pytest

from splinelens.core.checks import (
    CHECKS,
    CheckSelectionError,
    VerifySettings,
    identity_dihedral_case,
    run_checks,
    write_results,
)

SMALL = VerifySettings(tls_instances=5, central_nets=3, gamma_nets=3, gamma_inputs=20)


class TestSettings:
    """Test building battery settings."""

    def test_defaults(self):
        settings = VerifySettings()
        assert settings.variance_batch_sizes == (16, 64, 256)
        assert settings.facet_min_fraction == 0.95

    def test_from_mapping(self):
        settings = VerifySettings.from_mapping(
            {"tls_instances": 7, "variance_batch_sizes": [8, 32]}, seed=3
        )
        assert settings.tls_instances == 7
        assert settings.variance_batch_sizes == (8, 32)
        assert settings.seed == 3

    def test_unknown_keys_are_rejected(self):
        with pytest.raises(CheckSelectionError, match="tls_count"):
            VerifySettings.from_mapping({"tls_count": 7})


class TestIdentityCase:
    """Test the closed-form dihedral case."""

    def test_angles(self):
        theta_F_H, theta_Fp_H, theta_F_Fp = identity_dihedral_case()
        assert theta_F_H == pytest.approx(math.pi / 4, abs=1e-12)
        assert theta_Fp_H == pytest.approx(math.pi / 4, abs=1e-12)
        assert theta_F_Fp == pytest.approx(math.pi / 2, abs=1e-12)


class TestRunChecks:
    """Test selecting, running and writing checks."""

    def test_registry_order(self):
        assert list(CHECKS) == [
            "tls-minimizer",
            "central-arrangement",
            "gamma-absorption",
            "partition-exactness",
            "dihedral-angles",
            "folded-translation",
            "facet-distance",
            "bn-variance",
            "each-side",
            "gradients",
        ]

    def test_unknown_check(self):
        with pytest.raises(CheckSelectionError, match="Unknown check"):
            run_checks(SMALL, only=["tls-minimizer", "no-such-check"])

    def test_cheap_checks_pass(self):
        only = ["gamma-absorption", "tls-minimizer", "central-arrangement"]
        results = run_checks(SMALL, only=only)

        assert [r.name for r in results] == [
            "tls-minimizer",
            "central-arrangement",
            "gamma-absorption",
        ]
        for result in results:
            assert result.passed, result.summary
        assert len(results[0].rows) == 5
        assert len(results[2].rows) == 3

    def test_injected_offset_fails_the_minimizer_check(self):
        settings = VerifySettings(tls_instances=5, inject_mu_offset=1e-3)
        (result,) = run_checks(settings, only=["tls-minimizer"])
        assert not result.passed
        assert all(row["gap"] > settings.tls_tol for row in result.rows)

    def test_thread_count_does_not_matter(self):
        serial = run_checks(SMALL, only=["tls-minimizer"])[0]
        threaded = run_checks(
            VerifySettings(tls_instances=5, threads=3), only=["tls-minimizer"]
        )[0]
        assert serial.rows == threaded.rows

    def test_results_on_disk(self, tmp_path):
        results = run_checks(SMALL, only=["tls-minimizer"], directory=tmp_path)
        assert (tmp_path / "tls-minimizer.csv").exists()
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert summary[0] == "check,passed,instances,summary"
        assert summary[1].startswith("tls-minimizer,true,5,")
        assert write_results(tmp_path, results) == tmp_path / "summary.csv"


REDUCED = {
    "partition-exactness": VerifySettings(partition_nets=4),
    "dihedral-angles": VerifySettings(dihedral_instances=5),
    "folded-translation": VerifySettings(translation_instances=8),
    "facet-distance": VerifySettings(facet_pairs=40, facet_min_fraction=0.5),
    "bn-variance": VerifySettings(
        variance_batches=100_000, variance_mu_rtol=0.05, variance_sigma2_rtol=0.1
    ),
    "each-side": VerifySettings(each_side_trials=20),
    "gradients": VerifySettings(gradient_points=5),
}


class TestGeometricAndStatisticalChecks:
    """Test each remaining check on a few instances."""

    @pytest.mark.timeout(300)
    @pytest.mark.parametrize("name", list(REDUCED))
    def test_passes_at_reduced_size(self, name):
        (result,) = run_checks(REDUCED[name], only=[name])
        assert result.passed, result.summary
        assert result.rows

    def test_translation_reports_independent_thresholds(self):
        name = "folded-translation"
        (result,) = run_checks(REDUCED[name], only=[name])
        draws = [row["draw"] for row in result.rows]
        assert draws.count("ray") == 8
        assert set(draws) <= {"ray", "independent"}
        ray_instances = {row["instance"] for row in result.rows if row["draw"] == "ray"}
        assert all(
            row["instance"] in ray_instances
            for row in result.rows
            if row["draw"] == "independent"
        )

    @pytest.mark.slow
    @pytest.mark.timeout(1800)
    def test_full_battery_passes(self):
        for result in run_checks(VerifySettings()):
            assert result.passed, f"{result.name}: {result.summary}"
