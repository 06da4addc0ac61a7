import functools
from typing import Callable, Optional

import typer
from pydantic import ValidationError

from bido.models.enums import ExitStatusEnum
from bido.utils.logger import get_logger

logger = get_logger(__name__)


class BidoException(Exception):
    """Base error. `exit_code` is what the CLI returns when it surfaces."""

    exit_code: ExitStatusEnum = ExitStatusEnum.INPUT_ERROR

    def __init__(self, detail: str, exit_code: Optional[ExitStatusEnum] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


# --- input / validation (exit 2) ---


class DexFormatError(BidoException):
    pass


class TooShort(DexFormatError):
    pass


class BadMagic(DexFormatError):
    pass


class BadHeaderSize(DexFormatError):
    pass


class UnsupportedEndian(DexFormatError):
    pass


class OutOfBounds(DexFormatError):
    pass


class Overlap(DexFormatError):
    pass


class ChecksumMismatch(DexFormatError):
    pass


class MalformedContainer(BidoException):
    pass


class ShapeMismatch(BidoException):
    pass


class DegenerateBatch(BidoException):
    pass


class DegenerateCorpus(BidoException):
    pass


class EmptyEvalSet(BidoException):
    pass


class SpecOverflow(BidoException):
    pass


class ConfigError(BidoException):
    pass


# --- i/o (exit 3) ---


class IoFailure(BidoException):
    exit_code = ExitStatusEnum.IO_ERROR


class EncodeFailure(BidoException):
    exit_code = ExitStatusEnum.IO_ERROR


# --- numerical (exit 4) ---


class NonFinite(BidoException):
    exit_code = ExitStatusEnum.DIVERGENCE


class NoConvergence(BidoException):
    exit_code = ExitStatusEnum.DIVERGENCE


class NumericalDivergence(BidoException):
    exit_code = ExitStatusEnum.DIVERGENCE

    def __init__(self, detail: str, epoch: int):
        super().__init__(detail)
        self.epoch = epoch


def exit_on_error(command: Callable) -> Callable:
    """
    Wrap a CLI command so library errors end the process with their exit code.

    Args:
        command (Callable): The typer command function.

    Returns:
        Callable: The wrapped command, signature preserved for typer.
    """

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except BidoException as exc:
            logger.error(f"{type(exc).__name__}: {exc.detail}")
            raise typer.Exit(code=int(exc.exit_code))
        except ValidationError as exc:
            logger.error(f"invalid input: {exc}")
            raise typer.Exit(code=int(ExitStatusEnum.INPUT_ERROR))
        except OSError as exc:
            logger.error(f"i/o failure: {exc}")
            raise typer.Exit(code=int(ExitStatusEnum.IO_ERROR))

    return wrapper
