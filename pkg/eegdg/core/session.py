# -*- coding: utf-8 -*-
"""
Process level runtime state: logging setup, worker cap and determinism mode. Define `EegDgSession`.
"""
import logging

from .config import EegDgConfig

log = logging.getLogger("eegdg")


class EegDgSession:
    """
    Single runtime state handler. Every object sharing the session sees the same config and logger settings.

    :ivar config: `EegDgConfig` object.
    """

    def __init__(self, config=None):
        """
        Create or get the session

        Arguments:
            - `config` (`eegdg.core.config.EegDgConfig`): Config object. Find default config if `None`.
              Ignored once the session is initiated, use `EegDgSession.reset` to start over.
        """

        self.__dict__ = EegDgSession.__unique_state__

        # Init properties only once
        if EegDgSession.__initiated__ == False:
            EegDgSession.__initiated__ = True

            if config is None:
                self.config = EegDgConfig()
            elif isinstance(config, EegDgConfig):
                self.config = config
            else:
                raise TypeError(
                    "config must be a EegDgConfig or None. Not {}".format(config)
                )

            self._init_log(
                verbose=self.config.verbose,
                quiet=self.config.quiet,
                logfile=self.config.logfile,
            )

    __initiated__ = False
    """
    Weither the session has been intaciated. It's supposed to be a singleton.
    """
    __unique_state__ = {}
    """
    The singleton unique state.
    """

    @classmethod
    def reset(cls, config=None):
        """
        Drop the current state and create a new session, typically from the CLI after parsing flags.
        """
        cls.__unique_state__.clear()
        cls.__initiated__ = False
        return cls(config)

    @property
    def workers(self):
        """Number of parallel workers allowed, 1 in strict determinism mode."""
        if self.config.strict_determinism:
            return 1
        return self.config.threads

    @property
    def strict(self):
        """Strict determinism mode: every parallel section runs serially."""
        return self.config.strict_determinism

    @property
    def quiet(self):
        """Progress bars are hidden in quiet mode."""
        return self.config.quiet

    @staticmethod
    def _init_log(verbose=False, quiet=False, logfile=None):
        """
        Private method. Inits the session's logger settings based on params
        All objects should be able to log stuff, so the logger is globaly accessible
        """

        log = logging.getLogger("eegdg")

        log.setLevel(logging.DEBUG)

        std = logging.StreamHandler()
        std.setFormatter(logging.Formatter("%(levelname)s - %(message)s"))

        if verbose:
            std.setLevel(logging.DEBUG)
        elif quiet:
            std.setLevel(logging.CRITICAL)
        else:
            std.setLevel(logging.INFO)

        log.handlers = []

        log.addHandler(std)

        if logfile:
            fh = logging.FileHandler(logfile)
            fh.setLevel(logging.DEBUG)
            fh.setFormatter(
                logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
            )
            log.addHandler(fh)

        if verbose and quiet:
            log.warning(
                "Verbose and quiet values are both set to True. By default, output will be verbose."
            )

        return log
