"""Stats command: full-set BN statistics and predicted batch variances."""

from pathlib import Path

from ...core.batchnorm import StatsSource, compute_stats
from ...core.jitter import analytic_predictions
from ...core.netfile import save_network
from ...core.training import InitMode
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


PREDICTION_COLUMNS = (
    "batch_size",
    "layer",
    "unit",
    "var_mu",
    "var_sigma2",
    "input_var",
    "phi4",
)


@handles_errors
def stats_command(
    config: Path = ConfigFileOption,
    overrides: list[str] = SetOption,
    seed: int = SeedOption,
    threads: int = ThreadsOption,
    out: Path = OutOption,
) -> None:
    """Write BN statistics over the dataset and their predicted batch variances.

    stats.csv holds mu and sigma per (layer, unit); predictions.csv the
    predicted var(mu) and var(sigma^2) for every stats.batch_sizes entry.
    """
    output = get_formatter()
    run = start_run("stats", config, overrides, seed, threads, out)
    dataset = load_inputs(run)
    net, bn = initialized(run, InitMode.BN_WARMUP, dataset)
    if not net.bn_layers:
        raise ValueError("stats needs a network with at least one hidden layer")
    stats = compute_stats(
        net,
        dataset.inputs,
        bn=bn,
        eps_bn=run.eps_bn,
        source=StatsSource.FULL_TRAINING_SET,
    )
    written = [
        save_network(run.out / "network.net", net, bn),
        write_csv(
            run.out / "stats.csv",
            ("layer", "unit", "mu", "sigma"),
            (
                (layer, unit, mu, sigma)
                for layer, layer_stats in sorted(stats.layers.items())
                for unit, (mu, sigma) in enumerate(
                    zip(layer_stats.mu, layer_stats.sigma, strict=True), start=1
                )
            ),
        ),
    ]

    rows = []
    for batch_size in run.experiment.get("stats", "batch_sizes"):
        predictions = analytic_predictions(net, dataset, batch_size, bn, run.eps_bn)
        for layer, prediction in sorted(predictions.items()):
            for unit in range(prediction.var_mu.shape[0]):
                rows.append(
                    (
                        batch_size,
                        layer,
                        unit + 1,
                        prediction.var_mu[unit],
                        prediction.var_sigma2[unit],
                        prediction.input_var[unit],
                        prediction.phi4[unit],
                    )
                )
    written.append(
        write_csv(
            run.out / "predictions.csv",
            PREDICTION_COLUMNS,
            rows,
        )
    )
    units = sum(layer_stats.mu.size for layer_stats in stats.layers.values())
    output.print_table(
        "Full-set statistics",
        ("layers", "units", "points"),
        [(len(stats.layers), units, len(dataset))],
    )
    output.print_outputs([run.out / "config.resolved", *written])
