from pathlib import Path
from typing import Callable, List, Optional

import typer
from pydantic import BaseModel

from bido.models.enums import FusionMethodEnum
from bido.schemas.config import CliConfig
from bido.schemas.corpus import parse_transforms
from bido.services.experiments import DEFAULT_FUSIONS, ROBUSTNESS_SCENARIOS, ExperimentServices
from bido.utils.config import load_config
from bido.utils.errors import ConfigError, IoFailure, exit_on_error

router = typer.Typer()

SeedsOption = typer.Option(None, "--seeds", help="Comma-separated run seeds.")
ConfigOption = typer.Option(None, "--config", help="key=value configuration file.")
OutputOption = typer.Option(None, "--output", "-o", help="Also write the report here.")


def _settings(config: Optional[Path], seeds: Optional[str], **overrides) -> CliConfig:
    return load_config(config, experiment_seeds=seeds, **overrides)


def _parse_list(text: str, cast: Callable, name: str) -> list:
    try:
        return [cast(item.strip()) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid {name} list {text!r}: {exc}")


def _emit(report: BaseModel, output: Optional[Path]) -> None:
    text = report.model_dump_json(indent=2)
    if output is not None:
        try:
            output.write_text(text)
        except OSError as exc:
            raise IoFailure(f"cannot write report {output}: {exc}")
    typer.echo(text)


@router.command("compare-fusion", help="Compare fusion methods under one configuration.")
@exit_on_error
def compare_fusion(
    methods: Optional[str] = typer.Option(
        None, "--methods", help="Comma-separated fusions (default ops,summation,concatenation)."
    ),
    n: Optional[int] = typer.Option(None, "--n", help="Corpus size per seed."),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    seeds: Optional[str] = SeedsOption,
    config: Optional[Path] = ConfigOption,
    output: Optional[Path] = OutputOption,
):
    settings = _settings(config, seeds, corpus_n=n, epochs=epochs)
    fusions: List[FusionMethodEnum] = (
        _parse_list(methods, FusionMethodEnum, "fusion") if methods else list(DEFAULT_FUSIONS)
    )
    report = ExperimentServices.compare_fusion(settings, settings.experiment_seeds, fusions)
    _emit(report, output)


@router.command("sweep-k", help="Sweep the number of local feature maps K.")
@exit_on_error
def sweep_k(
    ks: Optional[str] = typer.Option(None, "--ks", help="Comma-separated K values."),
    n: Optional[int] = typer.Option(None, "--n"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    seeds: Optional[str] = SeedsOption,
    config: Optional[Path] = ConfigOption,
    output: Optional[Path] = OutputOption,
):
    settings = _settings(config, seeds, k_sweep=ks, corpus_n=n, epochs=epochs)
    report = ExperimentServices.sweep_k(settings, settings.k_sweep, settings.experiment_seeds)
    _emit(report, output)


@router.command(help="Full detector against its DEX-only and XML-only variants.")
@exit_on_error
def ablation(
    n: Optional[int] = typer.Option(None, "--n"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    seeds: Optional[str] = SeedsOption,
    config: Optional[Path] = ConfigOption,
    output: Optional[Path] = OutputOption,
):
    settings = _settings(config, seeds, corpus_n=n, epochs=epochs)
    _emit(ExperimentServices.ablation(settings, settings.experiment_seeds), output)


@router.command(help="F1 drop from clean to obfuscated test samples.")
@exit_on_error
def robustness(
    transforms: str = typer.Option(
        "junk:0.5,rename,encrypt,align", "--transforms", help="Obfuscations of the test twins."
    ),
    scenarios: str = typer.Option(
        ",".join(ROBUSTNESS_SCENARIOS),
        "--scenarios",
        help="Training scenarios: clean, lab, practical_80_10, practical_45_45.",
    ),
    n: Optional[int] = typer.Option(None, "--n"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    seeds: Optional[str] = SeedsOption,
    config: Optional[Path] = ConfigOption,
    output: Optional[Path] = OutputOption,
):
    settings = _settings(config, seeds, corpus_n=n, epochs=epochs)
    report = ExperimentServices.robustness(
        settings,
        settings.experiment_seeds,
        parse_transforms(transforms),
        [name.strip() for name in scenarios.split(",") if name.strip()],
    )
    _emit(report, output)


@router.command(help="F1 on test corpora generated at increasing drift.")
@exit_on_error
def drift(
    levels: str = typer.Option("0,0.5,1,2,4", "--levels", help="Comma-separated drift levels."),
    n: Optional[int] = typer.Option(None, "--n"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    seeds: Optional[str] = SeedsOption,
    config: Optional[Path] = ConfigOption,
    output: Optional[Path] = OutputOption,
):
    settings = _settings(config, seeds, corpus_n=n, epochs=epochs)
    drifts = _parse_list(levels, float, "drift")
    _emit(ExperimentServices.drift(settings, settings.experiment_seeds, drifts), output)
