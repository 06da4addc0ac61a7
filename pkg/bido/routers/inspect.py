from pathlib import Path
from typing import Optional

import torch
import typer

from bido.models.enums import ModelVariantEnum
from bido.models.fusion import ops_matrix, svd_analysis
from bido.schemas.report import InspectReportSchema, SpectrumReportSchema
from bido.services.checkpoint import CheckpointServices
from bido.services.dex import DexServices
from bido.services.image import ImageServices
from bido.utils.config import load_config
from bido.utils.errors import ConfigError, IoFailure, exit_on_error

router = typer.Typer()


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}")


def _spectrum(model_path: Path, raw_dex: bytes, xml_path: Path) -> SpectrumReportSchema:
    """Singular spectrum of the normalized OPS matrix of one sample under a trained model."""
    model, config = CheckpointServices.load(model_path)
    if config.variant is not ModelVariantEnum.FULL:
        raise ConfigError(f"spectrum needs a full model, checkpoint is {config.variant.value}")

    dex_image = ImageServices.dex_to_image(raw_dex, config.backbone.dex_input)
    xml_image = ImageServices.xml_to_image(_read(xml_path), config.backbone.xml_input)
    with torch.no_grad():
        output = model(
            ImageServices.to_tensor(dex_image)[None], ImageServices.to_tensor(xml_image)[None]
        )
        matrix = ops_matrix(output.z_xml, output.z_dex).matrix[0]
    return svd_analysis(matrix, min(config.rank, *matrix.shape))


@router.command(help="Dump a DEX header, its index spans and optionally an OPS spectrum.")
@exit_on_error
def inspect(
    input_path: Path = typer.Argument(..., metavar="INPUT", help="DEX file."),
    as_json: bool = typer.Option(False, "--json", help="Print the report as JSON."),
    model: Optional[Path] = typer.Option(None, "--model", help="Checkpoint for the spectrum."),
    xml: Optional[Path] = typer.Option(None, "--xml", help="Manifest paired with INPUT."),
    config: Optional[Path] = typer.Option(None, "--config"),
):
    settings = load_config(config)
    raw = _read(input_path)
    header = DexServices.parse_header(raw)
    index_bytes = DexServices.extract_index_bytes(raw, header)
    geometry = settings.dex_geometry()

    spectrum = None
    if model is not None:
        if xml is None:
            raise ConfigError("--model needs the paired manifest given with --xml")
        spectrum = _spectrum(model, raw, xml)

    report = InspectReportSchema(
        path=str(input_path),
        header=header,
        spans=index_bytes.spans,
        index_length=len(index_bytes.data),
        pixels_used=min(-(-len(index_bytes.data) // 3), geometry.width * geometry.height),
        truncated=len(index_bytes.data) > geometry.capacity,
        spectrum=spectrum,
    )
    if as_json:
        typer.echo(report.model_dump_json(indent=2))
        return

    typer.echo(f"{report.path}: {header.magic!r}, {header.file_size} bytes")
    for span in report.spans:
        typer.echo(f"  {span.section.value:<11} offset {span.offset:>8}  length {span.length:>8}")
    typer.echo(
        f"  index bytes {report.index_length}, pixels used {report.pixels_used}"
        + (" (truncated)" if report.truncated else "")
    )
    if spectrum is not None:
        values = ", ".join(f"{value:.3g}" for value in spectrum.singular_values)
        typer.echo(f"  OPS spectrum [{values}], numerical rank {spectrum.numerical_rank}")
