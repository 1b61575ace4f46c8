"""Jitter command: decision boundaries and BN statistics across mini-batches."""

from pathlib import Path

from ...core.batchnorm import sample_realizations, write_ensemble_csv
from ...core.jitter import (
    analytic_predictions,
    boundary_ensemble,
    distribution_report,
    mean_pairwise_hausdorff,
    noise_controlled_ensemble,
    write_report_csv,
)
from ...core.render import boundary_overlay_svg
from ...core.training import InitMode, Loss, TrainConfig, train
from ...utils.output import get_formatter
from ...utils.reports import write_csv
from ..error_handler import handles_errors
from ..runner import (
    ConfigFileOption,
    OutOption,
    SeedOption,
    SetOption,
    ThreadsOption,
    initialized,
    load_inputs,
    start_run,
)


@handles_errors
def jitter_command(
    config: Path = ConfigFileOption,
    overrides: list[str] = SetOption,
    seed: int = SeedOption,
    threads: int = ThreadsOption,
    out: Path = OutOption,
) -> None:
    """Overlay decision boundaries from resampled mini-batch statistics.

    Per batch size: boundaries_b<size>.svg, the realized statistics and a
    report comparing their spread with the analytic variances. A network
    can first be trained with frozen BN (jitter.train_epochs).
    """
    output = get_formatter()
    run = start_run("jitter", config, overrides, seed, threads, out)
    settings = run.experiment.section("jitter")
    dataset = load_inputs(run)
    net, bn = initialized(run, InitMode.BN_WARMUP, dataset)
    if settings["train_epochs"] > 0:
        history = train(
            net,
            bn,
            dataset,
            TrainConfig(
                learning_rate=settings["learning_rate"],
                epochs=settings["train_epochs"],
                loss=Loss.SOFTMAX_CROSS_ENTROPY,
                seed=run.seed,
                eps_bn=run.eps_bn,
            ),
        )
        net, bn = history.net, history.bn

    written: list[Path] = []
    rows = []
    for batch_size in settings["batch_sizes"]:
        ensemble = boundary_ensemble(
            net,
            dataset,
            batch_size,
            settings["draws"],
            run.box,
            run.seed,
            bn=bn,
            eps_bn=run.eps_bn,
            threads=run.threads,
            region_budget=run.region_budget,
        )
        written.append(
            boundary_overlay_svg(
                ensemble.boundaries,
                run.box,
                run.out / f"boundaries_b{batch_size}.svg",
                points=dataset.inputs,
                labels=dataset.labels,
                title=f"batch size {batch_size}, {len(ensemble)} draws",
            )
        )
        written.append(
            write_ensemble_csv(
                run.out / f"stats_b{batch_size}.csv", ensemble.realizations
            )
        )
        spread = mean_pairwise_hausdorff(ensemble.boundaries)
        rows.append((batch_size, settings["draws"], len(ensemble), spread))

        if settings["report_draws"] > 0:
            sampled = sample_realizations(
                net,
                dataset.inputs,
                batch_size,
                settings["report_draws"],
                run.seed,
                bn=bn,
                eps_bn=run.eps_bn,
                threads=run.threads,
                skip_degenerate=True,
            )
            analytic = analytic_predictions(net, dataset, batch_size, bn, run.eps_bn)
            written.append(
                write_report_csv(
                    run.out / f"report_b{batch_size}.csv",
                    distribution_report(sampled, analytic),
                )
            )

        # Only virtual batches smaller than the actual one add noise.
        virtual = settings["virtual_size"]
        if 0 < virtual < batch_size:
            noisy = noise_controlled_ensemble(
                net,
                dataset,
                batch_size,
                virtual,
                settings["draws"],
                run.seed,
                bn=bn,
                eps_bn=run.eps_bn,
                threads=run.threads,
            )
            written.append(
                write_ensemble_csv(
                    run.out / f"stats_b{batch_size}_virtual{virtual}.csv",
                    noisy.realizations,
                )
            )

    written.append(
        write_csv(
            run.out / "jitter_summary.csv",
            ("batch_size", "draws", "kept", "mean_hausdorff"),
            rows,
        )
    )
    output.print_table(
        "Boundary jitter", ("batch size", "draws", "kept", "mean Hausdorff"), rows
    )
    output.print_outputs([run.out / "config.resolved", *written])
