"""Shared plumbing of the experiment commands.

Resolves the experiment configuration, prepares the output directory and
builds the network and dataset the configuration describes.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import typer

from ..config import ConfigError, ExperimentConfig, get_config
from ..core.batchnorm import StatsSource, apply_stats, compute_stats
from ..core.datasets import LabeledDataset, load_dataset, make_dataset
from ..core.netfile import load_network
from ..core.network import Activation, BNState, NetworkSpec, glorot_network
from ..core.training import InitMode, initial_biases, initialize
from ..logging import log_config_info, log_experiment, setup_logging
from ..utils.random import make_rng

logger = logging.getLogger(__name__)

ConfigFileOption = typer.Option(
    None, "--config", "-c", help="Experiment TOML file (may use include = [...])"
)
SetOption = typer.Option(
    None, "--set", "-s", help="Override a setting: section.key=value (repeatable)"
)
SeedOption = typer.Option(None, "--seed", help="Master seed (run.seed)")
ThreadsOption = typer.Option(
    None, "--threads", "-t", min=1, help="Worker threads; outputs do not depend on it"
)
OutOption = typer.Option(None, "--out", "-o", help="Output directory (run.out)")


@dataclass(frozen=True)
class Run:
    experiment: ExperimentConfig
    out: Path

    @property
    def seed(self) -> int:
        return self.experiment.seed

    @property
    def threads(self) -> int:
        return self.experiment.threads

    @property
    def eps_bn(self) -> float:
        return float(self.experiment.get("run", "eps_bn"))

    @property
    def region_budget(self) -> int:
        return int(self.experiment.get("run", "region_budget"))

    @property
    def box(self) -> tuple[float, ...]:
        box = self.experiment.get("geometry", "box")
        if len(box) != 4:
            raise ConfigError(f"geometry.box needs 4 numbers, got {box}")
        return tuple(float(v) for v in box)


def start_run(
    command: str,
    config_file: Path | None,
    overrides: list[str] | None,
    seed: int | None,
    threads: int | None,
    out: Path | None,
) -> Run:
    """Resolve the configuration, set up logging and write ``config.resolved``."""
    settings = get_config()
    try:
        log = setup_logging(settings)
        log_config_info(log, settings)
    except Exception as e:
        # Logging is best-effort; the run goes on without a log file.
        logger.debug("Logging setup failed: %s", e)
    experiment = ExperimentConfig.resolve(
        command,
        config_file,
        overrides or (),
        flags={
            "run.seed": seed,
            "run.threads": threads,
            "run.out": str(out) if out is not None else None,
        },
        settings=settings,
    )
    directory = experiment.output_dir()
    directory.mkdir(parents=True, exist_ok=True)
    experiment.write_resolved(directory)
    log_experiment(logging.getLogger("splinelens"), experiment)
    return Run(experiment, directory)


def network_widths(run: Run) -> list[int]:
    network = run.experiment.section("network")
    if network["depth"] < 1 or network["width"] < 1:
        raise ConfigError("network.depth and network.width must be >= 1")
    hidden = [network["width"]] * (network["depth"] - 1)
    return [network["input_dim"], *hidden, network["output_dim"]]


def _alpha(network: dict) -> float | None:
    return network["alpha"] if network["activation"] == Activation.LEAKY else None


def network_template(run: Run) -> tuple[NetworkSpec, BNState | None]:
    """The configured network file, or a Glorot net drawn from ``run.seed``."""
    network = run.experiment.section("network")
    if network["file"]:
        return load_network(Path(network["file"]))
    rng = make_rng(run.seed, "network")
    net = glorot_network(
        network_widths(run), network["activation"], rng, alpha=_alpha(network)
    )
    return net, None


def load_inputs(run: Run) -> LabeledDataset:
    dataset = run.experiment.section("dataset")
    if dataset["file"]:
        return load_dataset(Path(dataset["file"]))
    input_dim = run.experiment.get("network", "input_dim")
    return make_dataset(
        dataset["kind"],
        dataset["n"],
        dataset["seed"],
        noise=dataset["noise"],
        dim=input_dim,
    )


def with_warmup_bn(
    net: NetworkSpec, bn: BNState | None, dataset: LabeledDataset, eps_bn: float
) -> tuple[NetworkSpec, BNState | None]:
    """BN on every hidden layer with full-set statistics of ``dataset``.

    A network that already carries BN parameters is returned unchanged.
    """
    if net.bn_layers and bn is not None:
        return net, bn
    if net.depth < 2:
        return net, None
    net = replace(net, bn_layers=frozenset(range(1, net.depth)))
    stats = compute_stats(
        net, dataset.inputs, eps_bn=eps_bn, source=StatsSource.FULL_TRAINING_SET
    )
    return net, apply_stats(net, stats)


def initialized(
    run: Run, mode: InitMode | str, dataset: LabeledDataset
) -> tuple[NetworkSpec, BNState | None]:
    """Network in initialization ``mode``.

    Generated networks go through :func:`initialize` so every mode shares the
    same weights. A network file keeps its weights: ``bn_warmup`` adds BN
    with warm-up statistics, and the other modes drop BN and replace the
    biases as :func:`initial_biases` draws them for ``run.seed``.
    """
    template, bn = network_template(run)
    mode = InitMode(mode)
    if run.experiment.get("network", "file"):
        if mode is InitMode.BN_WARMUP:
            return with_warmup_bn(template, bn, dataset, run.eps_bn)
        biases = initial_biases(template.widths, mode, run.seed)
        return replace(template, biases=tuple(biases), bn_layers=frozenset()), None
    return initialize(template, mode, dataset, run.seed, eps_bn=run.eps_bn)
