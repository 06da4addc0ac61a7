import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from bido.schemas.config import CliConfig
from bido.utils.errors import ConfigError, IoFailure
from bido.utils.logger import get_logger

load_dotenv()
logger = get_logger(__name__)


def load_config(path: Optional[Path] = None, **overrides: Any) -> CliConfig:
    """
    Build the effective configuration: file values, then flag overrides, then
    the BIDO_SEED environment fallback for the seed.

    Args:
        path (Optional[Path]): A key=value configuration file.
        **overrides: Flag values; None means "not given".

    Returns:
        CliConfig: The validated configuration.
    """
    values: Dict[str, Any] = {}
    if path is not None:
        if not Path(path).is_file():
            raise IoFailure(f"config file not found: {path}")
        values.update(
            {key: value for key, value in dotenv_values(path).items() if value is not None}
        )

    values.update({key: value for key, value in overrides.items() if value is not None})

    if values.get("seed") is None and os.getenv("BIDO_SEED"):
        values["seed"] = os.getenv("BIDO_SEED")

    try:
        config = CliConfig(**values)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}")

    logger.debug(f"configuration loaded (seed={config.resolved_seed})")
    return config
