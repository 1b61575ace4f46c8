"""Concentration command: facet density maps and epsilon curves."""

from pathlib import Path

import numpy as np

from ...core.concentration import (
    compare_initializations,
    concentration_curve,
    concentration_map,
    normalized_at,
    write_curve_csv,
    write_map_csv,
)
from ...core.datasets import matched_gaussian
from ...core.render import heatmap_svg
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
    network_template,
    start_run,
)


@handles_errors
def concentration_command(
    config: Path = ConfigFileOption,
    overrides: list[str] = SetOption,
    seed: int = SeedOption,
    threads: int = ThreadsOption,
    out: Path = OutOption,
) -> None:
    """Map how many folded hyperplanes pass near each point of the box.

    One map, heat map and epsilon curve per initialization mode. Under
    bn_warmup the curve is repeated on Gaussian points matched to the data.
    With concentration.seeds > 1 the modes are compared over that many seeds.
    """
    output = get_formatter()
    run = start_run("concentration", config, overrides, seed, threads, out)
    settings = run.experiment.section("concentration")
    layers = settings["layers"] or None
    epsilons = sorted(float(eps) for eps in settings["epsilons"])
    dataset = load_inputs(run)
    points = dataset.inputs

    written: list[Path] = []
    rows = []
    for mode in settings["modes"]:
        mode = InitMode(mode)
        net, bn = initialized(run, mode, dataset)
        cmap = concentration_map(
            net,
            bn,
            run.box,
            settings["resolution"],
            settings["epsilon"],
            layers,
            run.threads,
        )
        written.append(write_map_csv(run.out / f"concentration_{mode}.csv", cmap))
        written.append(
            heatmap_svg(
                cmap.normalized,
                run.box,
                run.out / f"concentration_{mode}.svg",
                points=points,
                title=f"{mode}, epsilon {settings['epsilon']:g}",
            )
        )
        curve = concentration_curve(net, bn, points, epsilons, layers)
        written.append(write_curve_csv(run.out / f"curve_{mode}.csv", curve))
        at_data = float(np.mean(normalized_at(cmap, net, bn, points)))
        rows.append((str(mode), cmap.max_count, at_data))

        if mode is InitMode.BN_WARMUP and settings["matched_gaussian"]:
            gaussian = matched_gaussian(dataset, run.seed)
            curve = concentration_curve(net, bn, gaussian.inputs, epsilons, layers)
            written.append(
                write_curve_csv(run.out / f"curve_{mode}_gaussian.csv", curve)
            )

    written.append(
        write_csv(
            run.out / "concentration_summary.csv",
            ("mode", "max_count", "mean_normalized_at_data"),
            rows,
        )
    )
    if settings["seeds"] > 1:
        template, _ = network_template(run)
        comparison = compare_initializations(
            template,
            points,
            range(run.seed, run.seed + settings["seeds"]),
            run.box,
            settings["resolution"],
            settings["epsilon"],
            layers,
            settings["modes"],
            run.threads,
        )
        written.append(
            write_csv(
                run.out / "init_comparison.csv",
                ("mode", "seed", "mean_normalized", "max_count"),
                (
                    (row.mode, row.seed, row.mean_normalized, row.max_count)
                    for row in comparison
                ),
            )
        )

    output.print_table(
        "Concentration", ("mode", "max count", "mean normalized at data"), rows
    )
    output.print_outputs([run.out / "config.resolved", *written])
