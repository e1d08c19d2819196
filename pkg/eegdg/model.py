# -*- coding: utf-8 -*-
"""
The domain generalization network: shared feature extractor ``g``, one branch head per source domain,
domain classifier ``f_d`` producing fusion weights and motion classifier ``f_c``.

The extractor is either a multi-scale EEGNet-style convolutional network for ``[C x T]`` EEG windows,
or a small dense network for vector-valued domains (``T == 1``).

Checkpoints are stored in the EDGM binary format, little-endian::

    4 bytes   magic "EDGM"
    u32       version (1)
    u32       length of the JSON config echo, then the UTF-8 JSON bytes
    u32       number of tensors, then for each tensor:
              u32 name length, name bytes, u32 rank, rank x u32 dims, f64 payload
"""

import collections
import dataclasses
import json
import logging
import struct
from typing import List

import numpy as np

from .core.config import ConfigSection
from .core.errors import ConfigurationError, ContractError, DimensionError, FormatError
from .tensor import (
    Tensor,
    add,
    as_tensor,
    avg_pool2d,
    batch_norm,
    concat,
    conv2d,
    div,
    dropout,
    elu,
    matmul,
    mul,
    no_grad,
    reshape,
    scale,
    softmax,
    square,
    stable_sqrt,
    sum as reduce_sum,
    take,
)

log = logging.getLogger("eegdg")

EDGM_MAGIC = b"EDGM"
EDGM_VERSION = 1

BRANCH_NORMS = ("l2", "none")
"""Branch output normalizations: ``l2`` puts every branch feature vector on the sphere of radius ``sqrt(branch_dim)``."""
INIT_STD = 0.02


@dataclasses.dataclass
class ExtractorConfig(ConfigSection):
    """
    Feature extractor architecture.

    ``kind`` is ``"eegnet"``, ``"dense"`` or ``"auto"`` (dense when the samples have a single time step).
    """

    kind: str = "auto"
    temporal_kernel_lengths: List[int] = dataclasses.field(
        default_factory=lambda: [16, 32, 64, 128]
    )
    filters_per_branch: int = 4
    spatial_depth_multiplier: int = 2
    block2_kernel_lengths: List[int] = dataclasses.field(
        default_factory=lambda: [4, 8, 16, 32]
    )
    pool1: int = 4
    pool2: int = 8
    dropout_p: float = 0.25
    embedding_dim: int = 64
    dense_hidden: int = 64

    def resolve_kind(self, n_timesteps):
        if self.kind == "auto":
            return "dense" if n_timesteps == 1 else "eegnet"
        return self.kind

    def validate(self, n_timesteps=None):
        self._require(
            self.kind in ("auto", "eegnet", "dense"),
            "model.kind",
            "must be 'auto', 'eegnet' or 'dense'",
        )
        self._require(
            0.0 <= self.dropout_p < 1.0, "model.dropout_p", "must be in [0, 1)"
        )
        for name in (
            "filters_per_branch",
            "spatial_depth_multiplier",
            "pool1",
            "pool2",
            "embedding_dim",
            "dense_hidden",
        ):
            self._require(getattr(self, name) >= 1, "model." + name, "must be >= 1")
        for name in ("temporal_kernel_lengths", "block2_kernel_lengths"):
            lengths = getattr(self, name)
            self._require(
                len(lengths) >= 1 and min(lengths) >= 1,
                "model." + name,
                "needs at least one kernel length >= 1",
            )
        if n_timesteps is not None and self.resolve_kind(n_timesteps) == "eegnet":
            self._require(
                max(self.temporal_kernel_lengths) <= n_timesteps,
                "model.temporal_kernel_lengths",
                "kernel longer than the {} time steps".format(n_timesteps),
            )
            pooled = n_timesteps // self.pool1
            self._require(
                pooled >= 1, "model.pool1", "larger than the {} time steps".format(n_timesteps)
            )
            self._require(
                max(self.block2_kernel_lengths) <= pooled,
                "model.block2_kernel_lengths",
                "kernel longer than the {} pooled time steps".format(pooled),
            )
            self._require(
                pooled // self.pool2 >= 1,
                "model.pool2",
                "larger than the {} pooled time steps".format(pooled),
            )
        return self


@dataclasses.dataclass
class ForwardResult:
    """
    Every intermediate of a forward pass.

    :ivar z: Extracted features ``[B x embedding_dim]``.
    :ivar branch_outs: `list` of N branch outputs ``[B x branch_dim]``.
    :ivar weight_logits: Domain classifier logits ``[B x N]``.
    :ivar weights: Fusion weights, softmax of `weight_logits`.
    :ivar fused: Fused features ``[B x branch_dim]``.
    :ivar logits: Motion classifier logits ``[B x n_classes]``.
    """

    z: Tensor
    branch_outs: list
    weight_logits: Tensor
    weights: Tensor
    fused: Tensor
    logits: Tensor


def _trunc_normal(rng, shape, std=INIT_STD):
    """Normal draws re-sampled until they fall within two standard deviations."""
    values = rng.normal(0.0, std, size=shape)
    outside = np.abs(values) > 2 * std
    while outside.any():
        values[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(values) > 2 * std
    return values


class EegDgModel:
    """
    Parameters and buffers of the network.

    Use `EegDgModel.build` to create a randomly initialized model, and the module functions
    `forward`, `extract`, `branch_features`, `domain_weights`, `fuse`, `classify` and `predict` to run it.

    :ivar params: `collections.OrderedDict` of name -> `Tensor`, in creation order.
    :ivar buffers: `collections.OrderedDict` of name -> `numpy.ndarray` (batch-norm running statistics).
    """

    def __init__(
        self,
        n_channels,
        n_timesteps,
        n_classes,
        n_domains,
        cfg=None,
        branch_depth=2,
        branch_dim=32,
        branch_norm="l2",
    ):
        self.cfg = cfg or ExtractorConfig()
        self.cfg.validate(n_timesteps)
        if n_domains < 1 or n_classes < 1 or branch_depth < 1 or branch_dim < 1:
            raise ConfigurationError(
                "n_domains, n_classes, branch_depth and branch_dim must be >= 1"
            )
        if branch_norm not in BRANCH_NORMS:
            raise ConfigurationError(
                "branch_norm must be one of {}, not {!r}".format(BRANCH_NORMS, branch_norm),
                key="train.branch_norm",
            )
        self.n_channels = n_channels
        self.n_timesteps = n_timesteps
        self.n_classes = n_classes
        self.n_domains = n_domains
        self.branch_depth = branch_depth
        self.branch_dim = branch_dim
        self.branch_norm = branch_norm
        self.kind = self.cfg.resolve_kind(n_timesteps)
        self.training = False
        self.params = collections.OrderedDict()
        self.buffers = collections.OrderedDict()

    @classmethod
    def build(
        cls,
        n_channels,
        n_timesteps,
        n_classes,
        n_domains,
        cfg=None,
        seed=0,
        branch_depth=2,
        branch_dim=32,
        branch_norm="l2",
    ):
        """
        Build a randomly initialized model: truncated normal weights, zero biases,
        batch-norm scale 1 and shift 0.
        """
        model = cls(
            n_channels,
            n_timesteps,
            n_classes,
            n_domains,
            cfg=cfg,
            branch_depth=branch_depth,
            branch_dim=branch_dim,
            branch_norm=branch_norm,
        )
        model._init_params(np.random.default_rng(seed))
        log.debug(
            "Built {} model with {} parameters".format(
                model.kind, sum(p.size for p in model.params.values())
            )
        )
        return model

    def _weight(self, rng, name, shape):
        self.params[name] = Tensor(_trunc_normal(rng, shape), requires_grad=True, name=name)

    def _const(self, name, shape, value):
        self.params[name] = Tensor(np.full(shape, value), requires_grad=True, name=name)

    def _linear(self, rng, name, n_in, n_out):
        self._weight(rng, name + ".weight", (n_in, n_out))
        self._const(name + ".bias", (n_out,), 0.0)

    def _batch_norm(self, name, channels):
        self._const(name + ".gamma", (channels,), 1.0)
        self._const(name + ".beta", (channels,), 0.0)
        self.buffers[name + ".running_mean"] = np.zeros(channels)
        self.buffers[name + ".running_var"] = np.ones(channels)

    def _init_params(self, rng):
        cfg = self.cfg
        if self.kind == "dense":
            self._linear(rng, "g.fc1", self.n_channels * self.n_timesteps, cfg.dense_hidden)
            self._linear(rng, "g.fc2", cfg.dense_hidden, cfg.embedding_dim)
        else:
            f1 = cfg.filters_per_branch
            for i, length in enumerate(cfg.temporal_kernel_lengths):
                self._weight(rng, "g.temporal.{}".format(i), (f1, 1, 1, length))
            f2 = self.block1_channels
            self._weight(rng, "g.spatial", (f2, 1, self.n_channels, 1))
            self._batch_norm("g.bn1", f2)
            for i, length in enumerate(cfg.block2_kernel_lengths):
                self._weight(rng, "g.depthwise.{}".format(i), (f2, 1, 1, length))
                self._weight(rng, "g.pointwise.{}".format(i), (self.scale_channels, f2, 1, 1))
            self._batch_norm("g.bn2", self.block2_channels)
            self._linear(rng, "g.embed", self.flat_dim, cfg.embedding_dim)

        for n in range(self.n_domains):
            for k in range(self.branch_depth):
                n_in = self.cfg.embedding_dim if k == 0 else self.branch_dim
                self._linear(rng, "f.{}.{}".format(n, k), n_in, self.branch_dim)
        self._linear(rng, "f_d", self.cfg.embedding_dim, self.n_domains)
        self._linear(rng, "f_c", self.branch_dim, self.n_classes)

    @property
    def block1_channels(self):
        return (
            len(self.cfg.temporal_kernel_lengths)
            * self.cfg.filters_per_branch
            * self.cfg.spatial_depth_multiplier
        )

    @property
    def scale_channels(self):
        """Pointwise output channels of each block 2 scale."""
        return self.cfg.filters_per_branch * self.cfg.spatial_depth_multiplier

    @property
    def block2_channels(self):
        return len(self.cfg.block2_kernel_lengths) * self.scale_channels

    @property
    def flat_dim(self):
        return self.block2_channels * (self.n_timesteps // self.cfg.pool1 // self.cfg.pool2)

    def named_parameters(self):
        """`list` of ``(name, Tensor)`` in a deterministic order."""
        return list(self.params.items())

    def parameters(self):
        return list(self.params.values())

    def train_mode(self):
        self.training = True
        return self

    def eval_mode(self):
        self.training = False
        return self

    def build_args(self):
        """Arguments needed to rebuild the same architecture."""
        return dict(
            n_channels=self.n_channels,
            n_timesteps=self.n_timesteps,
            n_classes=self.n_classes,
            n_domains=self.n_domains,
            branch_depth=self.branch_depth,
            branch_dim=self.branch_dim,
            branch_norm=self.branch_norm,
            extractor=dataclasses.asdict(self.cfg),
        )


def _linear(model, name, x):
    return add(matmul(x, model.params[name + ".weight"]), model.params[name + ".bias"])


def _bn(model, name, x, train):
    return batch_norm(
        x,
        model.params[name + ".gamma"],
        model.params[name + ".beta"],
        model.buffers[name + ".running_mean"],
        model.buffers[name + ".running_var"],
        train,
    )


def _as_input(model, x):
    """Accept ``[B x C x T]`` or ``[B x 1 x C x T]`` samples."""
    x = as_tensor(x)
    if x.ndim == 3:
        x = reshape(x, (x.shape[0], 1, x.shape[1], x.shape[2]))
    if x.ndim != 4 or x.shape[1:] != (1, model.n_channels, model.n_timesteps):
        raise DimensionError(
            "Model expects samples of shape [{} x {}], got {}".format(
                model.n_channels, model.n_timesteps, list(x.shape)
            )
        )
    return x


def extract(model, x, train=False, rng=None):
    """
    Shared feature extractor ``g``.

    Arguments:
        - `x`: ``[B x C x T]`` or ``[B x 1 x C x T]`` samples.
        - `train` (`bool`): batch statistics and dropout.
        - `rng` (`numpy.random.Generator`): dropout draws, needed in train mode.

    Returns:
        `Tensor` ``[B x embedding_dim]``
    """
    x = _as_input(model, x)
    batch = x.shape[0]
    cfg = model.cfg

    if model.kind == "dense":
        flat = reshape(x, (batch, model.n_channels * model.n_timesteps))
        return _linear(model, "g.fc2", elu(_linear(model, "g.fc1", flat)))

    # Block 1: parallel temporal convolutions, depthwise spatial convolution
    temporal = [
        conv2d(x, model.params["g.temporal.{}".format(i)], padding="same")
        for i in range(len(cfg.temporal_kernel_lengths))
    ]
    h = concat(temporal, axis=1)
    h = conv2d(h, model.params["g.spatial"], groups=h.shape[1])
    h = elu(_bn(model, "g.bn1", h, train))
    h = avg_pool2d(h, (1, cfg.pool1))
    h = dropout(h, cfg.dropout_p, train, rng)

    # Block 2: parallel separable convolutions
    scales = list()
    for i in range(len(cfg.block2_kernel_lengths)):
        d = conv2d(
            h, model.params["g.depthwise.{}".format(i)], groups=h.shape[1], padding="same"
        )
        scales.append(conv2d(d, model.params["g.pointwise.{}".format(i)]))
    h = concat(scales, axis=1)
    h = elu(_bn(model, "g.bn2", h, train))
    h = avg_pool2d(h, (1, cfg.pool2))
    h = dropout(h, cfg.dropout_p, train, rng)

    return _linear(model, "g.embed", reshape(h, (batch, model.flat_dim)))


def _sphere(h, dim):
    """Rescale each row of `h` to the norm ``sqrt(dim)``."""
    norm = stable_sqrt(add(reduce_sum(square(h), axis=1, keepdims=True), 1e-12))
    return scale(div(h, norm), np.sqrt(dim))


def branch_features(model, z):
    """
    Apply every branch head ``f_n`` to all the samples.
    With ``branch_norm == "l2"`` each output row has the norm ``sqrt(branch_dim)``.

    Returns:
        `list` of N `Tensor` ``[B x branch_dim]``.
    """
    outs = list()
    for n in range(model.n_domains):
        h = z
        for k in range(model.branch_depth):
            if k > 0:
                h = elu(h)
            h = _linear(model, "f.{}.{}".format(n, k), h)
        if model.branch_norm == "l2":
            h = _sphere(h, model.branch_dim)
        outs.append(h)
    return outs


def domain_logits(model, z):
    """Domain classifier logits ``[B x N]``."""
    return _linear(model, "f_d", z)


def domain_weights(model, z):
    """Per-sample fusion weights ``[B x N]``, rows on the probability simplex."""
    return softmax(domain_logits(model, z), axis=1)


def fuse(weights, branch_outs):
    """Convex combination ``sum_n w_n * out_n`` per sample."""
    if weights.ndim != 2 or len(branch_outs) != weights.shape[1]:
        raise ContractError(
            "{} branch outputs for {} fusion weights".format(
                len(branch_outs), weights.shape[-1]
            )
        )
    fused = None
    for n, out in enumerate(branch_outs):
        term = mul(take(weights, (slice(None), slice(n, n + 1))), out)
        fused = term if fused is None else add(fused, term)
    return fused


def classify(model, fused):
    """Motion classifier logits ``[B x n_classes]``."""
    return _linear(model, "f_c", fused)


def forward(model, x, train=None, rng=None):
    """
    Full forward pass.

    Arguments:
        - `train` (`bool`): defaults to the model mode.

    Returns:
        `ForwardResult`
    """
    if train is None:
        train = model.training
    z = extract(model, x, train, rng)
    outs = branch_features(model, z)
    logits_d = domain_logits(model, z)
    weights = softmax(logits_d, axis=1)
    fused = fuse(weights, outs)
    return ForwardResult(z, outs, logits_d, weights, fused, classify(model, fused))


def predict(model, x):
    """
    Eval-mode class predictions. Ties go to the lowest class index.

    Returns:
        `numpy.ndarray` of labels.
    """
    with no_grad():
        result = forward(model, x, train=False)
    return np.argmax(result.logits.data, axis=1)


def save_checkpoint(model, path, config_echo=None):
    """
    Write parameters and buffers to `path` in EDGM format.

    Arguments:
        - `config_echo` (`dict`): Resolved experiment config stored alongside the architecture.
    """
    meta = json.dumps(
        {"model": model.build_args(), "config": config_echo or {}}, sort_keys=True
    ).encode("utf-8")
    tensors = [(name, p.data) for name, p in model.params.items()]
    tensors += [("buffer:" + name, b) for name, b in model.buffers.items()]

    with open(path, "wb") as f:
        f.write(EDGM_MAGIC)
        f.write(struct.pack("<II", EDGM_VERSION, len(meta)))
        f.write(meta)
        f.write(struct.pack("<I", len(tensors)))
        for name, data in tensors:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack("<{}I".format(data.ndim), *data.shape))
            f.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    log.debug("Checkpoint written to {}".format(path))


class _Reader:
    """Bounds-checked cursor over the checkpoint bytes."""

    def __init__(self, raw, path):
        self.raw = raw
        self.path = path
        self.offset = 0

    def take(self, size, what):
        if self.offset + size > len(self.raw):
            raise FormatError("truncated " + what, offset=len(self.raw), path=self.path)
        chunk = self.raw[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what, count=1):
        values = struct.unpack("<{}I".format(count), self.take(4 * count, what))
        return values if count != 1 else values[0]


def load_checkpoint(path):
    """
    Read an EDGM checkpoint.

    Returns:
        `tuple(EegDgModel, dict)`: the model in eval mode and the stored config echo.
    """
    with open(path, "rb") as f:
        reader = _Reader(f.read(), path)

    magic = reader.take(4, "magic")
    if magic != EDGM_MAGIC:
        raise FormatError("bad magic {!r}, expected 'EDGM'".format(magic), offset=0, path=path)
    version = reader.u32("version")
    if version != EDGM_VERSION:
        raise FormatError("unsupported version {}".format(version), offset=4, path=path)
    meta_offset = reader.offset
    try:
        meta = json.loads(reader.take(reader.u32("config length"), "config").decode("utf-8"))
        args = dict(meta["model"])
        args.setdefault("branch_norm", "none")
        extractor = ExtractorConfig(**args.pop("extractor"))
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError("invalid config echo: {}".format(e), offset=meta_offset, path=path)

    model = EegDgModel.build(cfg=extractor, **args)
    expected = {name for name in model.params} | {"buffer:" + n for n in model.buffers}
    seen = set()
    for _ in range(reader.u32("tensor count")):
        start = reader.offset
        name = reader.take(reader.u32("name length"), "name").decode("utf-8")
        rank = reader.u32("rank")
        dims = tuple(reader.u32("dims", rank)) if rank != 1 else (reader.u32("dims"),)
        count = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(reader.take(8 * count, "payload of " + name), dtype="<f8")
        data = data.reshape(dims).astype(np.float64)
        if name not in expected:
            raise FormatError("unexpected tensor {}".format(name), offset=start, path=path)
        if name.startswith("buffer:"):
            target = model.buffers[name[len("buffer:") :]]
        else:
            target = model.params[name].data
        if target.shape != data.shape:
            raise FormatError(
                "tensor {} has shape {}, expected {}".format(
                    name, list(data.shape), list(target.shape)
                ),
                offset=start,
                path=path,
            )
        target[...] = data
        seen.add(name)
    missing = sorted(expected - seen)
    if missing:
        raise FormatError("missing tensors {}".format(missing), offset=reader.offset, path=path)
    return model.eval_mode(), meta.get("config", {})
