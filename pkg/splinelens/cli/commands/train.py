"""Train command: plain SGD from a chosen initialization."""

import logging
from pathlib import Path

from ...core.datasets import LabeledDataset, make_dataset
from ...core.netfile import save_network
from ...core.training import (
    TrainConfig,
    compare_initializations,
    comparison_means,
    train,
    write_history_csv,
)
from ...utils.output import get_formatter
from ...utils.reports import write_csv
from ..error_handler import handles_errors
from ..runner import (
    ConfigFileOption,
    OutOption,
    Run,
    SeedOption,
    SetOption,
    ThreadsOption,
    initialized,
    load_inputs,
    network_template,
    start_run,
)

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ("mode", "seed", "learning_rate", "final_loss", "final_accuracy")


def _holdout(run: Run) -> LabeledDataset | None:
    size = run.experiment.get("train", "holdout_n")
    dataset = run.experiment.section("dataset")
    if size <= 0:
        return None
    if dataset["file"]:
        logger.warning("train.holdout_n is ignored for file datasets")
        return None
    # Next generator seed; the training set keeps dataset.seed.
    return make_dataset(
        dataset["kind"], size, dataset["seed"] + 1, noise=dataset["noise"]
    )


@handles_errors
def train_command(
    config: Path = ConfigFileOption,
    overrides: list[str] = SetOption,
    seed: int = SeedOption,
    threads: int = ThreadsOption,
    out: Path = OutOption,
) -> None:
    """Train a network and write its history and snapshots.

    With train.compare the initialization modes are compared instead: paired
    seeds, best learning rate per (mode, seed), results in init_comparison.csv.
    """
    output = get_formatter()
    run = start_run("train", config, overrides, seed, threads, out)
    settings = run.experiment.section("train")
    dataset = load_inputs(run)

    if settings["compare"]:
        template, _ = network_template(run)
        rows = compare_initializations(
            template,
            dataset,
            range(run.seed, run.seed + settings["compare_seeds"]),
            settings["learning_rates"],
            epochs=settings["epochs"],
            batch_size=settings["batch_size"],
            loss=settings["loss"],
            modes=settings["compare_modes"],
            threads=run.threads,
        )
        path = write_csv(
            run.out / "init_comparison.csv",
            COMPARISON_COLUMNS,
            ([getattr(row, column) for column in COMPARISON_COLUMNS] for row in rows),
        )
        output.print_table(
            "Mean final loss",
            ("mode", "loss"),
            ((str(mode), value) for mode, value in comparison_means(rows).items()),
        )
        output.print_outputs([run.out / "config.resolved", path])
        return

    net, bn = initialized(run, settings["init"], dataset)
    train_config = TrainConfig(
        init_mode=settings["init"],
        learning_rate=settings["learning_rate"],
        epochs=settings["epochs"],
        batch_size=settings["batch_size"],
        loss=settings["loss"],
        seed=run.seed,
        bn_frozen=settings["bn_frozen"],
        eps_bn=run.eps_bn,
        snapshot_every=settings["snapshot_every"],
    )
    history = train(net, bn, dataset, train_config, holdout=_holdout(run))

    written = [
        save_network(run.out / "network_init.net", net, bn),
        write_history_csv(run.out / "history.csv", history),
    ]
    for epoch, (snap_net, snap_bn) in sorted(history.snapshots.items()):
        if epoch > 0:
            path = run.out / f"network_epoch{epoch}.net"
            written.append(save_network(path, snap_net, snap_bn))
    if len(history):
        final = run.out / "network_final.net"
        written.append(save_network(final, history.net, history.bn))
        output.print_table(
            "Training",
            ("epochs", "final loss", "final accuracy"),
            [(len(history), history.loss[-1], history.accuracy[-1])],
        )
    output.print_outputs([run.out / "config.resolved", *written])
