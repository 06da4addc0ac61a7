from pathlib import Path
from typing import Optional

import typer

from bido.models.enums import FusionMethodEnum, ModelVariantEnum
from bido.services.analytics import AnalyticsServices
from bido.services.checkpoint import CheckpointServices
from bido.services.corpus import CorpusServices
from bido.services.training import TrainingServices
from bido.utils.config import load_config
from bido.utils.dataset import CorpusDataset
from bido.utils.errors import IoFailure, exit_on_error

router = typer.Typer()


@router.command(help="Train a detector on a generated corpus.")
@exit_on_error
def train(
    corpus: Path = typer.Option(..., "--corpus", help="Corpus directory (from gen-corpus)."),
    out: Path = typer.Option(..., "--out", help="Directory for checkpoint and history."),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    k: Optional[int] = typer.Option(None, "--k", help="Number of local feature maps."),
    fusion: Optional[FusionMethodEnum] = typer.Option(None, "--fusion"),
    variant: Optional[ModelVariantEnum] = typer.Option(None, "--variant"),
    lr: Optional[float] = typer.Option(None, "--lr"),
    batch_size: Optional[int] = typer.Option(None, "--batch-size"),
    config: Optional[Path] = typer.Option(None, "--config"),
):
    """
    Train with SGD momentum and step decay and write model.bido, its JSON
    sidecar and history.jsonl; the run summary is printed as JSON.
    """
    settings = load_config(
        config,
        epochs=epochs,
        seed=seed,
        k=k,
        fusion=fusion,
        variant=variant,
        lr=lr,
        batch_size=batch_size,
    )
    dataset = CorpusDataset.from_manifest(CorpusServices.load_manifest(corpus))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}")
    result = TrainingServices.train(dataset, settings.train_config(), out_dir=out)
    typer.echo(result.summary.model_dump_json(indent=2))


@router.command("eval", help="Evaluate a trained detector on a corpus.")
@exit_on_error
def evaluate(
    model: Path = typer.Option(..., "--model", help="Checkpoint written by train."),
    corpus: Path = typer.Option(..., "--corpus", help="Corpus directory to score."),
    plot: Optional[Path] = typer.Option(None, "--plot", help="Write a confusion-matrix PNG."),
):
    detector, _ = CheckpointServices.load(model)
    dataset = CorpusDataset.from_manifest(CorpusServices.load_manifest(corpus))
    y_true, y_pred = AnalyticsServices.predict(detector, dataset)
    report = AnalyticsServices.report(y_true, y_pred)
    if plot is not None:
        AnalyticsServices.plot_confusion(y_true, y_pred, plot)
    typer.echo(report.model_dump_json(indent=2))
