from pathlib import Path
from typing import Optional

import typer

from bido.schemas.corpus import parse_transforms
from bido.services.corpus import CorpusServices
from bido.utils.config import load_config
from bido.utils.errors import exit_on_error

router = typer.Typer()


@router.command("gen-corpus", help="Generate a labeled synthetic DEX/XML corpus with images.")
@exit_on_error
def gen_corpus(
    out: Path = typer.Option(..., "--out", help="Corpus directory."),
    n: Optional[int] = typer.Option(None, "--n", help="Number of samples."),
    mix: Optional[float] = typer.Option(None, "--mix", help="Malicious fraction."),
    transforms: Optional[str] = typer.Option(
        None, "--transforms", help="Obfuscations, e.g. junk:0.5,rename:7,encrypt."
    ),
    drift: Optional[float] = typer.Option(None, "--drift", help="Drift level t."),
    seed: Optional[int] = typer.Option(None, "--seed"),
    jobs: Optional[int] = typer.Option(None, "--jobs"),
    config: Optional[Path] = typer.Option(None, "--config"),
):
    settings = load_config(
        config, corpus_n=n, malicious_fraction=mix, drift=drift, seed=seed, jobs=jobs
    )
    manifest = CorpusServices.gen_corpus(
        settings.corpus_config(), out, parse_transforms(transforms)
    )
    typer.echo(f"{len(manifest)} samples written to {manifest.root}")
