# -*- coding: utf-8 -*-
"""
The core objects of the library: `EegDgSession`, `EegDgConfig`, `EegDgError` and other.

Base objects:
    - `EegDgObject`
    - `RecordDict`
    - `RecordList`
    - `ConfigSection`

"""

from .errors import (
    EegDgError,
    DimensionError,
    ConfigurationError,
    ContractError,
    FormatError,
    IngestionError,
    NumericError,
    DivergenceError,
)
from .config import EegDgConfig, ConfigSection, load_json_config, apply_dotted
from .session import EegDgSession
from .types import EegDgObject, RecordDict, RecordList
