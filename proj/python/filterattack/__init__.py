"""Universal filter-chain attacks against a feature-squeezing detector."""

from ._core import *  # noqa: F401,F403
from ._core import (
    ArgumentError,
    DatasetError,
    Error,
    IoError,
    ModelFormatError,
    ParseError,
)

__all__ = [name for name in dir() if not name.startswith("_")]
