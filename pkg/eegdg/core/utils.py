# -*- coding: utf-8 -*-
"""A few quick static util methods.
"""

import hashlib
import math
from datetime import datetime

import dateutil.parser
import dateutil.tz


def file_digest(path, chunk_size=1 << 16):
    """
    Compute the sha256 hex digest of a file, like `sha256sum` would do.
    """
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            sha.update(chunk)
    return sha.hexdigest()


def now_iso():
    """
    Returns:
        `str`: Current time in ISO-8601 format with the local timezone offset.
    """
    return datetime.now(tz=dateutil.tz.tzlocal()).isoformat()


def convert_to_time_obj(time_str):
    """
    Converts given timestamp string to datetime object

    Arguments:
        - `time_str` (`str`): timestamp, typically an ISO-8601 string written by `now_iso`

    Returns:
        datetime object
    """
    return dateutil.parser.parse(time_str)


def elapsed_seconds(start, end):
    """
    Seconds between two timestamps strings (or datetime objects).
    """
    if isinstance(start, str):
        start = convert_to_time_obj(start)
    if isinstance(end, str):
        end = convert_to_time_obj(end)
    return (end - start).total_seconds()


def mean_std(values):
    """
    Mean and population standard deviation of a sequence of numbers.

    Returns:
        `tuple(float, float)`, ``(nan, nan)`` for an empty sequence.
    """
    values = [float(v) for v in values]
    if not values:
        return (float("nan"), float("nan"))
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return (mean, math.sqrt(var))


def format_mean_std(values, scale=100.0, digits=2):
    """
    Format a sequence as ``"MEAN±STD"``. Accuracies are shown in percent by default (`scale=100`).
    """
    mean, std = mean_std(values)
    return "{:.{d}f}±{:.{d}f}".format(mean * scale, std * scale, d=digits)


def flatten_dict(nested, prefix=""):
    """
    Flatten a nested `dict` into dotted keys.

    Exemple::

        {'train': {'lr': 0.1, 'kernel': {'kind': 'rbf'}}}
        -> {'train.lr': 0.1, 'train.kernel.kind': 'rbf'}
    """
    flat = dict()
    for key, value in nested.items():
        name = prefix + "." + key if prefix else key
        if isinstance(value, dict):
            flat.update(flatten_dict(value, name))
        else:
            flat[name] = value
    return flat
