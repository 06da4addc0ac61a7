from multiprocessing import Pool
from pathlib import Path
from typing import Optional

import typer

from bido.models.enums import ImageFormatEnum, InputKindEnum
from bido.services.image import ImageServices
from bido.utils.config import load_config
from bido.utils.errors import IoFailure, exit_on_error
from bido.utils.logger import get_logger

logger = get_logger(__name__)

router = typer.Typer()

EXTENSIONS = {ImageFormatEnum.PNG: "png", ImageFormatEnum.JPEG: "jpg"}


def _target(source: Path, out_dir: Path, image_format: ImageFormatEnum) -> Path:
    return out_dir / f"{source.name}.{EXTENSIONS[image_format]}"


@router.command(help="Convert a DEX or XML file, or a directory of them, into an RGB image.")
@exit_on_error
def convert(
    input_path: Path = typer.Argument(..., metavar="INPUT", help="File or directory to convert."),
    kind: InputKindEnum = typer.Option(InputKindEnum.DEX, "--kind", help="Input kind."),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Image file or directory."),
    width: Optional[int] = typer.Option(None, "--width"),
    height: Optional[int] = typer.Option(None, "--height"),
    image_format: Optional[ImageFormatEnum] = typer.Option(None, "--format"),
    strict: bool = typer.Option(False, "--strict", help="Verify DEX checksum and signature."),
    jobs: Optional[int] = typer.Option(None, "--jobs", help="Worker processes for directories."),
    config: Optional[Path] = typer.Option(None, "--config", help="key=value configuration file."),
):
    """
    Convert DEX or XML input into images.

    Args:
        - input_path (Path): A file, or a directory whose *.dex / *.xml files are converted.
        - kind (InputKindEnum): dex or xml.
        - output (Optional[Path]): Target file (file input) or directory (directory input).
        - width, height (Optional[int]): Image geometry overrides.
        - image_format (Optional[ImageFormatEnum]): png or jpeg.
        - strict (bool): Verify integrity before imaging.
        - jobs (Optional[int]): Worker count for directory input.
        - config (Optional[Path]): Configuration file.
    """
    settings = load_config(
        config, width=width, height=height, image_format=image_format, jobs=jobs
    )
    geometry = settings.dex_geometry() if kind is InputKindEnum.DEX else settings.xml_geometry()

    if input_path.is_dir():
        sources = sorted(input_path.glob(f"*.{kind.value}"))
        out_dir = output or input_path
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(f"cannot create {out_dir}: {exc}")
        tasks = [
            (
                source,
                _target(source, out_dir, settings.image_format),
                kind,
                geometry,
                settings.image_format,
                strict,
            )
            for source in sources
        ]
        if settings.jobs > 1:
            with Pool(settings.jobs) as pool:
                images = pool.starmap(ImageServices.convert_file, tasks)
        else:
            images = [ImageServices.convert_file(*task) for task in tasks]
        truncated = sum(image.truncated for image in images)
        logger.info(f"converted {len(images)} files into {out_dir} ({truncated} truncated)")
        return

    if not input_path.exists():
        raise IoFailure(f"input not found: {input_path}")
    target = output or _target(input_path, input_path.parent, settings.image_format)
    image = ImageServices.convert_file(
        input_path, target, kind, geometry, settings.image_format, strict
    )
    logger.info(
        f"{input_path} -> {target} ({geometry.width}x{geometry.height}"
        + (", truncated)" if image.truncated else ")")
    )
