# -*- coding: utf-8 -*-
"""
Exceptions raised by the library. Define `EegDgError` and its subclasses.
"""


class EegDgError(Exception):
    """
    Base eegdg exception.
    Every error the library raises on purpose derives from it, the CLI turns it into a one-line report.
    """

    pass


class DimensionError(EegDgError):
    """Shape or axis mismatch between tensors."""

    pass


class ConfigurationError(EegDgError):
    """
    Invalid parameter value or unknown configuration key.

    :ivar key: Offending configuration key, if any.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ContractError(EegDgError):
    """API misuse, like calling backward on a non-scalar tensor."""

    pass


class FormatError(EegDgError):
    """
    Malformed EDG1/EDGM/raw file.

    :ivar offset: Byte offset where the violation was detected, `None` when not applicable.
    """

    def __init__(self, message, offset=None, path=None):
        if offset is not None:
            message = "{} (at byte offset {})".format(message, offset)
        if path is not None:
            message = "{}: {}".format(path, message)
        super().__init__(message)
        self.offset = offset
        self.path = path


class IngestionError(EegDgError):
    """
    A trial window does not fit inside its recording.

    :ivar trial_index: Index of the offending trial marker.
    """

    def __init__(self, message, trial_index=None):
        super().__init__(message)
        self.trial_index = trial_index


class NumericError(EegDgError):
    """
    Numerical failure: unstable filter, singular covariance, non-finite gradient.

    :ivar diagnostics: `dict` of values useful to understand the failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DivergenceError(NumericError):
    """
    Training produced a non-finite total loss.

    :ivar checkpoint: Path of the last good checkpoint, `None` if none was written.
    :ivar state: `dict` of name -> `numpy.ndarray` copy of the parameters and buffers (prefixed ``buffer:``)
        at the end of the last completed epoch, the initial weights if none completed.
    """

    def __init__(self, message, checkpoint=None, diagnostics=None, state=None):
        super().__init__(message, diagnostics=diagnostics)
        self.checkpoint = checkpoint
        self.state = state
