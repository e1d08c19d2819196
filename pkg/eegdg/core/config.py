# -*- coding: utf-8 -*-
"""
Provide the runtime configuration object and the experiment config loader. Define `EegDgConfig`, `load_json_config` and `apply_dotted`.
"""
import configparser
import dataclasses
import json
import logging
import os
import typing

from .errors import ConfigurationError
from .utils import flatten_dict

log = logging.getLogger("eegdg")


class EegDgConfig(configparser.ConfigParser):
    """
    `configparser.ConfigParser` parser object.

    Handles the runtime settings. Reads the config file `.eegdg/conf.ini` and make accessible it's values throught object properties.

    Default configuration file should look like this::

        [general]
        verbose = False
        quiet = False
        logfile =
        threads = 0
        strict_determinism = False

    It automatically look for the configuration file in the following places:
        - If `.eegdg` folder exists in your current directory : `./.eegdg/conf.ini`
        - For Windows: `%APPDATA%\\.eegdg\\conf.ini`
        - For Linux : `$XDG_CONFIG_HOME/.eegdg/conf.ini` or : `$HOME/.eegdg/conf.ini`

    The environment variable ``EEGDG_THREADS`` overrides the ``threads`` option.

    Experiment parameters (learning rate, kernel sizes...) are not stored here, they come from
    the flat JSON file passed with ``--config``, see `load_json_config`.
    """

    def __init__(self, path=None, config=None, *arg, **kwarg):
        """
        Create the configuration parser

        Arguments:
            - `path`: Config file special path, if path is left `None`, will automatically look for it.
            - `config`: Manual config dict. ex: `{'general':{'verbose':True}}`.
            - `*args, **kwargs` : Passed to `configparser.ConfigParser.__init__()` method.
        """
        super().__init__(*arg, **kwarg)
        self._path = path if path else self.find_ini_location()
        self.read_dict(self.DEFAULT_CONF_DICT)
        files = self.read(self._path)
        if len(files) == 0:
            log.debug("Config file {} not found, applying defaults".format(self._path))
        else:
            log.debug("Successfuly read config file {}".format(files[0]))
        if config is not None:
            self.read_dict(config)

    CONFIG_FILE_NAME = ".eegdg/conf.ini"
    """`.eegdg/conf.ini`"""

    CONF_DIR = ".eegdg/"
    """`.eegdg/`"""

    DEFAULT_CONF_DICT = {
        "general": {
            "verbose": False,
            "quiet": False,
            "logfile": "",
            "threads": 0,
            "strict_determinism": False,
        },
    }
    """
    Default configuration values.
    """

    def __str__(self):
        """
        Custom str() method that lists all config fields.
        """
        return (
            "Configuration file : "
            + self._path
            + "\n"
            + str({section: dict(self[section]) for section in self.sections()})
        )

    def write(self):
        """Write the config file to the predetermined `path`."""
        directory = os.path.dirname(self._path)
        if directory and not os.path.exists(directory):
            os.makedirs(directory)
        with open(self._path, "w") as conf:
            super().write(conf)
            log.info("Config file has been written at " + self._path)

    @property
    def verbose(self):
        """
        Config value section "general" option "verbose"
        """
        return self.getboolean("general", "verbose")

    @property
    def quiet(self):
        """
        Config value section "general" option "quiet"
        """
        return self.getboolean("general", "quiet")

    @property
    def logfile(self):
        """
        Config value section "general" option "logfile"
        """
        return self.get("general", "logfile")

    @property
    def threads(self):
        """
        Worker cap for parallel evaluation. ``EEGDG_THREADS`` wins over the file value, 0 means one worker per CPU.
        """
        env = os.environ.get("EEGDG_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ConfigurationError(
                    "EEGDG_THREADS must be an integer, not {!r}".format(env),
                    key="EEGDG_THREADS",
                )
        else:
            value = self.getint("general", "threads")
        if value < 0:
            raise ConfigurationError("threads must be >= 0", key="threads")
        return value or (os.cpu_count() or 1)

    @property
    def strict_determinism(self):
        """
        Config value section "general" option "strict_determinism"
        """
        return self.getboolean("general", "strict_determinism")

    @staticmethod
    def find_ini_location():
        """
        Returns the location of a supposed `conf.ini` file.
        If `.eegdg` folder exists in you local directory, assume the `conf.ini` file is in there.
        If the file doesn't exist, will still return the location.
        """
        if os.path.isdir("./" + EegDgConfig.CONF_DIR):
            conf_path_dir = "./"
        elif "APPDATA" in os.environ:
            conf_path_dir = os.environ["APPDATA"]
        elif "XDG_CONFIG_HOME" in os.environ:
            conf_path_dir = os.environ["XDG_CONFIG_HOME"]
        elif "HOME" in os.environ:
            conf_path_dir = os.environ["HOME"]
        else:
            conf_path_dir = "./"
        return os.path.join(conf_path_dir, EegDgConfig.CONFIG_FILE_NAME)


def load_json_config(path):
    """
    Read an experiment config file.

    The file is a JSON object with dotted keys mirroring the config dataclasses field names::

        {
            "train.lr": 0.0005,
            "train.kernel.kind": "rbf",
            "model.temporal_kernel_lengths": [16, 32, 64, 128],
            "sim.seed": 3
        }

    Nested objects are accepted and flattened.

    Returns:
        `dict` of dotted keys
    """
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError("{}: not valid JSON: {}".format(path, e)) from e
    if not isinstance(data, dict):
        raise ConfigurationError("{}: config must be a JSON object".format(path))
    return flatten_dict(data)


def _type_name(hint):
    return getattr(hint, "__name__", None) or str(hint).replace("typing.", "")


def _coerce(key, hint, value):
    """Check `value` against the field type `hint`: scalars, ``List[T]`` and ``Optional[T]``."""
    origin = getattr(hint, "__origin__", None)
    args = getattr(hint, "__args__", None) or ()
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if value is None and len(inner) < len(args):
            return None
        if len(inner) == 1:
            return _coerce(key, inner[0], value)
        return value
    if origin in (list, tuple):
        if isinstance(value, list):
            item = args[0] if args else None
            values = [_coerce(key, item, v) for v in value] if item is not None else value
            return origin(values)
    elif hint is bool:
        if isinstance(value, bool):
            return value
    elif hint is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif hint is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif hint is str:
        if isinstance(value, str):
            return value
    else:
        return value
    raise ConfigurationError(
        "Config key {} expects a {} value, not {!r}".format(key, _type_name(hint), value),
        key=key,
    )


def apply_dotted(targets, flat):
    """
    Set the dotted keys of `flat` on the config dataclasses.

    Arguments:
        - `targets` (`dict[str, dataclass]`): Objects addressed by the first key component, ex: ``{'train': TrainConfig(), 'sim': SimConfig()}``.
        - `flat` (`dict`): Dotted keys and values, as returned by `load_json_config`.

    Raises:
        `ConfigurationError` naming the key when it's unknown or when the value has the wrong type.
    """
    for key, value in flat.items():
        parts = key.split(".")
        if parts[0] not in targets or len(parts) < 2:
            raise ConfigurationError("Unknown config key: {}".format(key), key=key)
        obj = targets[parts[0]]
        for part in parts[1:-1]:
            obj = getattr(obj, part, None)
            if not dataclasses.is_dataclass(obj):
                raise ConfigurationError(
                    "Unknown config key: {}".format(key), key=key
                )
        names = {f.name for f in dataclasses.fields(obj)}
        if parts[-1] not in names:
            raise ConfigurationError("Unknown config key: {}".format(key), key=key)
        current = getattr(obj, parts[-1])
        if dataclasses.is_dataclass(current):
            raise ConfigurationError(
                "Config key {} names a section, set its fields instead".format(key),
                key=key,
            )
        hint = typing.get_type_hints(type(obj)).get(parts[-1], type(current))
        setattr(obj, parts[-1], _coerce(key, hint, value))
        log.debug("Config {} = {!r}".format(key, value))
    return targets


class ConfigSection:
    """
    Mixin for the experiment config dataclasses.
    Subclasses implement `validate` to check their invariants.
    """

    def to_dict(self):
        """Dotted keys echo of the fields, nested sections included."""
        return flatten_dict(dataclasses.asdict(self))

    def validate(self):
        """Raise `ConfigurationError` naming the first invalid field."""
        return self

    @staticmethod
    def _require(condition, key, message):
        if not condition:
            raise ConfigurationError("{}: {}".format(key, message), key=key)
