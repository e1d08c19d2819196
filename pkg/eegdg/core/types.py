# -*- coding: utf-8 -*-
"""
Base classes for report objects. Define `EegDgObject`, `RecordDict` and `RecordList`.
"""

import abc
import collections
import concurrent.futures
import csv
import functools
import json
import logging
import textwrap
from io import StringIO

import numpy as np
import prettytable
import tqdm
from prettytable import MSWORD_FRIENDLY

from .session import EegDgSession

log = logging.getLogger("eegdg")


class EegDgObject(abc.ABC):
    """
    Base class for report objects. All objects have a reference to the single `eegdg.core.session.EegDgSession`.
    """

    class JSONEncoder(json.JSONEncoder):
        """
        Custom JSON encoder that unwraps report objects and numpy scalars/arrays.
        """

        def default(self, obj):  # pylint: disable=E0202
            if isinstance(obj, EegDgObject):
                return obj.data
            if isinstance(obj, np.integer):
                return int(obj)
            if isinstance(obj, np.floating):
                return float(obj)
            if isinstance(obj, np.bool_):
                return bool(obj)
            if isinstance(obj, np.ndarray):
                return obj.tolist()
            return json.JSONEncoder.default(self, obj)

    def __init__(self):
        self.session = EegDgSession()
        """
        `eegdg.core.session.EegDgSession` object.
        """

    @abc.abstractproperty
    def text(self):
        """
        Returns printable string.
        Abstract declaration.
        """
        pass

    @abc.abstractproperty
    def json(self):
        """
        Returns json string representation.
        Abstract declaration.
        """


class RecordDict(collections.UserDict, EegDgObject):
    """
    Dict-Like object (Base class) to represent one record: a metrics report, a manifest, an epoch.

    :ivar data: Underlying `dict` object
    """

    def __init__(self, adict=None):
        """
        Create a new record

        Arguments:
            - `adict`: dict object to wrap.
        """
        EegDgObject.__init__(self)
        collections.UserDict.__init__(self, adict)

    def __str__(self):
        """str(obj) -> return text string."""
        return self.text

    def __repr__(self):
        """repr(obj) -> return json string."""
        return self.json

    @property
    def json(self):
        """JSON representation of a record"""
        return json.dumps(dict(self), indent=4, cls=EegDgObject.JSONEncoder)

    @property
    def text(self):
        """Text list of record's ``key=value``"""
        return ", ".join(["{}={}".format(k, v) for k, v in self.items()])


class RecordList(collections.UserList, EegDgObject):
    """
    Base class for list of records.

    This classe and subclasses fully implements `list` interface.

    :ivar data: Underlying `list` object
    """

    def __init__(self, alist=None):
        """
        Create a new list

        Arguments:
            - `alist`: list object to wrap.
        """
        EegDgObject.__init__(self)
        collections.UserList.__init__(self, alist if alist else [])

    def __str__(self):
        """str(obj) -> return text string."""
        return "<{} containing {} elements, keys={}>".format(
            type(self).__name__, len(list(self)), sorted(self.keys())
        )

    def keys(self):
        """List items keys, in first-seen order."""
        keys = list()
        for item in list(self):
            for k in getattr(item, "keys", list)():
                if k not in keys:
                    keys.append(k)
        return keys

    def get_text(self, format="prettytable", fields=None, max_column_width=80, float_digits=4):
        """
        Return a csv or table string representation of the list

        Arguments:
            - `format` (`str`):
                - ``prettytable``: Returns a table generated by prettytable use ``MSWORD_FRIENDLY`` format.
                - ``csv``: Returns data with header and comma separated values.
            - `fields` (`list[str]`): list of fields you want in the table. If `None` : all keys in first-seen order.
            - `max_column_width` (`int`): when using prettytable only
            - `float_digits` (`int`): when using prettytable only, rounding of float values
        """

        if not fields:
            fields = self.keys()

        if format == "csv":
            file = StringIO()
            dw = csv.DictWriter(file, fields, extrasaction="ignore")
            dw.writeheader()
            dw.writerows([dict(item) for item in list(self)])
            return file.getvalue()

        elif format == "prettytable":
            table = prettytable.PrettyTable()
            table.set_style(MSWORD_FRIENDLY)
            table.field_names = fields

            for item in list(self):
                values = list()
                for field in fields:
                    obj = item.get(field) if hasattr(item, "get") else None
                    if isinstance(obj, float):
                        obj = round(obj, float_digits)
                    values.append(
                        "\n".join(textwrap.wrap(str(obj), width=max_column_width))
                    )
                table.add_row(values)

            return table.get_string()

        else:
            raise AttributeError(
                "Unknown `RecordList.get_text` format : {}. Accepted values are 'prettytable' or 'csv'.".format(
                    format
                )
            )

    @property
    def text(self):
        """Defaut table string, a shorcut to `get_text()` with no arguments."""
        return self.get_text()

    @property
    def json(self):
        """JSON list of dicts representing the list."""
        return json.dumps(
            [dict(item) for item in list(self)],
            indent=4,
            cls=EegDgObject.JSONEncoder,
        )

    def perform(
        self,
        func,
        data=None,
        func_args=None,
        asynch=False,
        workers=None,
        progress=False,
        message=None,
    ):
        """
        Wrapper to execute a function on the list of elements

        Arguments:
            - `func` (`callable`): Function. `func` is going to be called like `func(item, **func_args)` on all items in data.
            - `data` (`list`): Choose a custom list to execute the function on (Default value = `list(self)`)
            - `func_args` (`dict`): arguments that will be passed by default to `func` in all calls.
            - `asynch` (`bool`): execute the task asynchronously with `concurrent.futures.ThreadPoolExecutor`.
            - `workers` (`int`): number of parrallel tasks, defaults to the session worker cap.
            - `progress` (`bool`): to show progress bar with ETA (`tqdm`).
            - `message` (`str`): To show to the user.

        Results come back in the order of the elements whatever the execution mode,
        and strict determinism mode always executes serially.

        Returns:
            `list` of returned results.
        """

        log.debug(
            "Calling perform func={} data={} func_args={} asynch={} workers={} progress={}".format(
                func, str(data)[:100], func_args, asynch, workers, progress
            )
        )

        if not callable(func):
            raise ValueError("func must be callable")

        func = functools.partial(func, **(func_args if func_args != None else {}))

        elements = list(self)
        if data is not None:
            if isinstance(data, list):
                elements = data
            else:
                raise TypeError(
                    "data argument must be a list not {}".format(type(data))
                )

        tqdm_args = dict(desc=message or "Working...", total=len(elements))
        show = progress and not self.session.quiet
        if message is not None and not show:
            log.info(message)

        if workers is None:
            workers = self.session.workers
        if self.session.strict:
            asynch = False

        if asynch and workers > 1 and len(elements) > 1:
            if workers > len(elements):
                log.debug(
                    "Only {} tasks for {} workers".format(len(elements), workers)
                )
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
                results = ex.map(func, elements)
                if show:
                    results = tqdm.tqdm(results, **tqdm_args)
                return list(results)

        if show:
            elements = tqdm.tqdm(elements, **tqdm_args)
        return [func(item) for item in elements]
