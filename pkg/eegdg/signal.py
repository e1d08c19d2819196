# -*- coding: utf-8 -*-
"""
EEG preprocessing and source domain construction. Define `RawRecording`, `DomainDataset`, `SignalConfig`
and the pipeline operations.

The pipeline order is fixed: band-pass filter the continuous recording, crop one window per trial marker,
then min-max scale every channel of every window to [0, 1].

Domain datasets are stored in the EDG1 binary format, little-endian::

    offset  type     content
    0       4 bytes  magic "EDG1"
    4       u32      version (1)
    8       u32      domain_id
    12      u32      class_count
    16      u32      n_samples
    20      u32      n_channels
    24      u32      n_timesteps
    28      u32[n]   labels
    ...     f64[...] values, row-major (sample, channel, time)

Exemple::

    rec = load_raw_recording("subject01_T.npz")
    ds = preprocess(rec, SignalConfig())
    for domain in split_into_domains(ds, 3, seed=0):
        save_domain_file(domain, "domain_{:02d}.edg1".format(domain.domain_id))
"""

import dataclasses
import logging
import struct
from typing import List, Optional

import numpy as np
import scipy.signal

from .core.config import ConfigSection
from .core.errors import (
    ConfigurationError,
    ContractError,
    FormatError,
    IngestionError,
    NumericError,
)
from .tensor import Tensor

log = logging.getLogger("eegdg")

EDG1_MAGIC = b"EDG1"
EDG1_VERSION = 1
_EDG1_HEADER = struct.Struct("<4s6I")


@dataclasses.dataclass
class RawRecording:
    """
    Continuous multi-channel recording with its trial markers.

    :ivar samples: ``[C x T]`` array.
    :ivar sample_rate_hz: Sampling rate.
    :ivar trial_markers: `list` of ``(onset_sample, class_label)``.
    :ivar channel_names: `list[str]`, may be empty.
    :ivar sessions: Optional session index per trial marker.
    """

    samples: np.ndarray
    sample_rate_hz: float
    trial_markers: List[tuple]
    channel_names: List[str] = dataclasses.field(default_factory=list)
    sessions: Optional[np.ndarray] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ContractError(
                "samples must be a [channels x time] matrix, got shape {}".format(
                    list(self.samples.shape)
                )
            )
        if not self.sample_rate_hz > 0:
            raise ConfigurationError("sample_rate_hz must be > 0")
        self.trial_markers = [(int(o), int(l)) for o, l in self.trial_markers]

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_times(self):
        return self.samples.shape[1]


@dataclasses.dataclass
class DomainDataset:
    """
    One source or target domain.

    :ivar x: ``[N x C x T]`` float64 array of samples.
    :ivar y: ``[N]`` integer labels in ``0..class_count-1``.
    :ivar domain_id: Domain identifier.
    :ivar class_count: Number of classes of the experiment.
    """

    x: np.ndarray
    y: np.ndarray
    domain_id: int
    class_count: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 3 or self.x.shape[0] < 1:
            raise ContractError(
                "x must be a non empty [samples x channels x time] array, got shape {}".format(
                    list(self.x.shape)
                )
            )
        if self.y.shape != (self.x.shape[0],):
            raise ContractError(
                "{} labels for {} samples".format(self.y.size, self.x.shape[0])
            )
        if self.class_count < 1:
            raise ContractError("class_count must be >= 1")
        if self.y.min() < 0 or self.y.max() >= self.class_count:
            raise ContractError(
                "labels must be in 0..{}".format(self.class_count - 1)
            )

    def __len__(self):
        return self.x.shape[0]

    @property
    def n_samples(self):
        return self.x.shape[0]

    @property
    def n_channels(self):
        return self.x.shape[1]

    @property
    def n_timesteps(self):
        return self.x.shape[2]

    @property
    def tensor(self):
        """Samples as a constant `Tensor`."""
        return Tensor(self.x)

    def subset(self, indices, domain_id=None):
        """New dataset made of the samples at `indices`."""
        indices = np.asarray(indices, dtype=np.int64)
        return DomainDataset(
            self.x[indices],
            self.y[indices],
            self.domain_id if domain_id is None else domain_id,
            self.class_count,
        )


@dataclasses.dataclass
class SignalConfig(ConfigSection):
    """
    Preprocessing parameters.

    ``protocol`` is ``"split"`` to split one labeled session into `n_domains` random parts,
    or ``"sessions"`` to use every recorded session as its own domain.
    ``n_classes`` is the label alphabet size of every produced domain, whatever labels a session holds.
    """

    lo_hz: float = 8.0
    hi_hz: float = 35.0
    order: int = 4
    start_offset_s: float = 0.0
    length_s: float = 4.0
    n_domains: int = 3
    seed: int = 0
    protocol: str = "split"
    n_classes: int = 4

    def validate(self):
        self._require(0 < self.lo_hz < self.hi_hz, "signal.lo_hz", "need 0 < lo_hz < hi_hz")
        self._require(self.order >= 1, "signal.order", "must be >= 1")
        self._require(self.length_s > 0, "signal.length_s", "must be > 0")
        self._require(self.n_domains >= 2, "signal.n_domains", "must be >= 2")
        self._require(self.n_classes >= 2, "signal.n_classes", "must be >= 2")
        self._require(
            self.protocol in ("split", "sessions"),
            "signal.protocol",
            "must be 'split' or 'sessions'",
        )
        return self


def bandpass(rec, lo_hz, hi_hz, order=4):
    """
    Zero-phase Butterworth band-pass filter applied to every channel (forward then backward pass).

    Raises:
        `ConfigurationError` for an invalid band or order, `NumericError` if the designed filter is unstable.
    """
    nyquist = rec.sample_rate_hz / 2.0
    if not 0 < lo_hz < hi_hz < nyquist:
        raise ConfigurationError(
            "Invalid band {}-{} Hz for a {} Hz sampling rate".format(
                lo_hz, hi_hz, rec.sample_rate_hz
            )
        )
    if order < 1:
        raise ConfigurationError("Filter order must be >= 1, not {}".format(order))

    sos = scipy.signal.butter(
        order, [lo_hz, hi_hz], btype="bandpass", fs=rec.sample_rate_hz, output="sos"
    )
    _, poles, _ = scipy.signal.sos2zpk(sos)
    if poles.size and np.max(np.abs(poles)) >= 1.0:
        raise NumericError(
            "Unstable band-pass filter design",
            diagnostics={"max_pole_magnitude": float(np.max(np.abs(poles)))},
        )
    try:
        filtered = scipy.signal.sosfiltfilt(sos, rec.samples, axis=-1)
    except ValueError as e:
        raise IngestionError(
            "Recording of {} samples is too short for the filter: {}".format(
                rec.n_times, e
            )
        ) from e
    log.debug("Band-pass {}-{} Hz order {} applied".format(lo_hz, hi_hz, order))
    return dataclasses.replace(rec, samples=filtered)


def minmax_scale(x):
    """
    Map every channel of every trial (last axis) to [0, 1]. Constant channels map to zeros.

    Arguments:
        - `x` (`Tensor` or array): ``[..., T]`` values.

    Returns:
        Same kind as the input.
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    low = data.min(axis=-1, keepdims=True)
    span = data.max(axis=-1, keepdims=True) - low
    scaled = np.where(span > 0, (data - low) / np.where(span > 0, span, 1.0), 0.0)
    return Tensor(scaled) if isinstance(x, Tensor) else scaled


def crop_windows(rec, start_offset_s, length_s, class_count=None, domain_id=0):
    """
    Cut one window per trial marker.

    The window of a trial starts ``round(start_offset_s * rate)`` samples after its onset
    and lasts ``round(length_s * rate)`` samples.

    Arguments:
        - `class_count` (`int`): Label alphabet size. Defaults to the highest label + 1.

    Raises:
        `IngestionError` naming the trial index when a window overruns the recording
        or a label is outside ``0..class_count-1``.
    """
    if not rec.trial_markers:
        raise IngestionError("Recording has no trial markers")
    width = int(round(length_s * rec.sample_rate_hz))
    offset = int(round(start_offset_s * rec.sample_rate_hz))
    if width < 1:
        raise ConfigurationError("Window length must cover at least one sample")

    windows = list()
    labels = list()
    for i, (onset, label) in enumerate(rec.trial_markers):
        if label < 0 or (class_count is not None and label >= class_count):
            raise IngestionError(
                "Trial {} label {} is not a class index below {}".format(i, label, class_count),
                trial_index=i,
            )
        start = onset + offset
        if start < 0 or start + width > rec.n_times:
            raise IngestionError(
                "Trial {} window [{}, {}) overruns the recording of {} samples".format(
                    i, start, start + width, rec.n_times
                ),
                trial_index=i,
            )
        windows.append(rec.samples[:, start : start + width])
        labels.append(label)

    if class_count is None:
        class_count = max(labels) + 1
    return DomainDataset(np.stack(windows), np.array(labels), domain_id, class_count)


def split_into_domains(ds, n, seed):
    """
    Randomly partition a dataset into `n` class-stratified domains.

    Each class is shuffled and dealt round-robin, so the domain sizes and the per-class counts
    differ by at most one between domains. Domain ids are ``0..n-1``, samples keep their
    original order inside each part.
    """
    if n < 2:
        raise ConfigurationError(
            "At least 2 source domains are needed, not {}".format(n), key="signal.n_domains"
        )
    if n > len(ds):
        raise ConfigurationError(
            "Cannot split {} samples into {} domains".format(len(ds), n),
            key="signal.n_domains",
        )
    rng = np.random.default_rng(seed)
    order = np.concatenate(
        [rng.permutation(np.flatnonzero(ds.y == c)) for c in np.unique(ds.y)]
    )
    return [ds.subset(np.sort(order[i::n]), domain_id=i) for i in range(n)]


def sessions_as_domains(ds, sessions):
    """
    One domain per recorded session, domain ids follow the ascending session order.
    """
    sessions = np.asarray(sessions)
    if sessions.shape != (len(ds),):
        raise ContractError(
            "{} session indexes for {} samples".format(sessions.size, len(ds))
        )
    unique = np.unique(sessions)
    if unique.size < 2:
        raise ConfigurationError(
            "At least 2 sessions are needed to build source domains",
            key="signal.protocol",
        )
    return [
        ds.subset(np.flatnonzero(sessions == s), domain_id=i)
        for i, s in enumerate(unique)
    ]


def preprocess(rec, cfg):
    """Band-pass, crop and scale a recording. Returns one `DomainDataset`."""
    cfg.validate()
    filtered = bandpass(rec, cfg.lo_hz, cfg.hi_hz, cfg.order)
    ds = crop_windows(filtered, cfg.start_offset_s, cfg.length_s, class_count=cfg.n_classes)
    ds.x = minmax_scale(ds.x)
    log.info(
        "Preprocessed {} trials, {} channels, {} samples per window".format(
            ds.n_samples, ds.n_channels, ds.n_timesteps
        )
    )
    return ds


def build_domains(rec, cfg):
    """Preprocess `rec` and split it according to ``cfg.protocol``."""
    ds = preprocess(rec, cfg)
    if cfg.protocol == "sessions":
        if rec.sessions is None:
            raise ConfigurationError(
                "The 'sessions' protocol needs a recording with session indexes",
                key="signal.protocol",
            )
        return sessions_as_domains(ds, rec.sessions)
    return split_into_domains(ds, cfg.n_domains, cfg.seed)


def load_raw_recording(path):
    """
    Load a recording converted to a NumPy ``.npz`` archive.

    Expected arrays: ``samples`` [C x T], ``sample_rate_hz`` (scalar), ``onsets`` [K], ``labels`` [K],
    optional ``channel_names`` [C] and ``sessions`` [K].
    """
    try:
        archive = np.load(path, allow_pickle=False)
    except (ValueError, OSError) as e:
        if isinstance(e, FileNotFoundError):
            raise
        raise FormatError("not a readable .npz archive: {}".format(e), path=path) from e
    with archive:
        missing = [
            k for k in ("samples", "sample_rate_hz", "onsets", "labels") if k not in archive
        ]
        if missing:
            raise FormatError("missing arrays {}".format(missing), path=path)
        onsets = archive["onsets"].astype(np.int64)
        labels = archive["labels"].astype(np.int64)
        if onsets.shape != labels.shape or onsets.ndim != 1:
            raise FormatError("onsets and labels must be 1-D arrays of equal length", path=path)
        sessions = archive["sessions"] if "sessions" in archive else None
        if sessions is not None and sessions.shape != onsets.shape:
            raise FormatError("one session index per trial is expected", path=path)
        names = [str(n) for n in archive["channel_names"]] if "channel_names" in archive else []
        return RawRecording(
            samples=archive["samples"],
            sample_rate_hz=float(archive["sample_rate_hz"]),
            trial_markers=list(zip(onsets.tolist(), labels.tolist())),
            channel_names=names,
            sessions=sessions,
        )


def save_domain_file(ds, path):
    """Write `ds` to `path` in EDG1 format."""
    header = _EDG1_HEADER.pack(
        EDG1_MAGIC,
        EDG1_VERSION,
        ds.domain_id,
        ds.class_count,
        ds.n_samples,
        ds.n_channels,
        ds.n_timesteps,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(ds.y.astype("<u4").tobytes())
        f.write(np.ascontiguousarray(ds.x, dtype="<f8").tobytes())
    log.debug("Domain {} written to {}".format(ds.domain_id, path))


def load_domain_file(path):
    """
    Read an EDG1 file.

    Raises:
        `FormatError` with the byte offset of the violation.
    """
    with open(path, "rb") as f:
        raw = f.read()

    if raw[:4] != EDG1_MAGIC:
        raise FormatError("bad magic {!r}, expected 'EDG1'".format(raw[:4]), offset=0, path=path)
    if len(raw) < _EDG1_HEADER.size:
        raise FormatError("truncated header", offset=len(raw), path=path)
    _, version, domain_id, class_count, n, c, t = _EDG1_HEADER.unpack_from(raw)
    if version != EDG1_VERSION:
        raise FormatError("unsupported version {}".format(version), offset=4, path=path)
    if min(n, c, t) < 1 or class_count < 1:
        raise FormatError("zero dimension in header", offset=12, path=path)

    labels_end = _EDG1_HEADER.size + 4 * n
    expected = labels_end + 8 * n * c * t
    if len(raw) < labels_end:
        raise FormatError(
            "truncated labels: expected {} labels".format(n), offset=len(raw), path=path
        )
    if len(raw) != expected:
        found = (len(raw) - labels_end) / 8.0
        raise FormatError(
            "{} payload: expected {} values, found {:g}".format(
                "truncated" if len(raw) < expected else "oversized", n * c * t, found
            ),
            offset=min(len(raw), expected),
            path=path,
        )

    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=_EDG1_HEADER.size)
    bad = np.flatnonzero(labels >= class_count)
    if bad.size:
        raise FormatError(
            "label {} out of range for {} classes".format(labels[bad[0]], class_count),
            offset=_EDG1_HEADER.size + 4 * int(bad[0]),
            path=path,
        )
    values = np.frombuffer(raw, dtype="<f8", count=n * c * t, offset=labels_end)
    return DomainDataset(
        values.reshape(n, c, t).astype(np.float64),
        labels.astype(np.int64),
        domain_id,
        class_count,
    )
