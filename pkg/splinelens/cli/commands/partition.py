"""Partition command: per-layer SVGs of the input-space partition."""

from pathlib import Path

from ...core.geometry import tls_fit_quality
from ...core.netfile import save_network
from ...core.partition import trace, write_partition_csv
from ...core.render import partition_svg
from ...core.training import InitMode
from ...utils.output import get_formatter
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

VARIANTS = ("no_bn", "bn")


@handles_errors
def partition_command(
    config: Path = ConfigFileOption,
    overrides: list[str] = SetOption,
    seed: int = SeedOption,
    threads: int = ThreadsOption,
    out: Path = OutOption,
) -> None:
    """Trace the partition layer by layer, with and without BN.

    Writes partition_layer<l>_<variant>.svg per layer and variant, the
    region and segment CSVs of the deepest layer and the network files.
    The BN variant takes its statistics from the configured dataset.
    """
    output = get_formatter()
    run = start_run("partition", config, overrides, seed, threads, out)
    settings = run.experiment.section("partition")
    unknown = sorted(set(settings["variants"]) - set(VARIANTS))
    if unknown:
        raise ValueError(f"Unknown partition variants {unknown}; use {VARIANTS}")

    dataset = load_inputs(run)
    points = dataset.inputs if dataset.dim == 2 else None
    written: list[Path] = []
    rows = []
    for variant in settings["variants"]:
        mode = InitMode.BN_WARMUP if variant == "bn" else settings["no_bn_init"]
        net, bn = initialized(run, mode, dataset)
        written.append(save_network(run.out / f"network_{variant}.net", net, bn))
        layers = settings["layers"] or list(range(1, net.depth + 1))
        quality = tls_fit_quality(net, bn, 1, dataset.inputs)
        partition = None
        for layer in layers:
            partition = trace(net, bn, int(layer), run.box, run.region_budget)
            written.append(
                partition_svg(
                    partition,
                    run.out / f"partition_layer{layer}_{variant}.svg",
                    points=points,
                    labels=dataset.labels if points is not None else None,
                    hyperplane_quality=quality,
                    title=f"layer {layer}, {variant.replace('_', ' ')}",
                )
            )
            rows.append(
                (variant, layer, len(partition.regions), len(partition.segments))
            )
        if settings["csv"] and partition is not None:
            written.extend(
                write_partition_csv(partition, run.out, f"partition_{variant}")
            )

    output.print_table("Partition", ("variant", "layer", "regions", "segments"), rows)
    output.print_outputs([run.out / "config.resolved", *written])
