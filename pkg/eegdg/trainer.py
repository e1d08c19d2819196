# -*- coding: utf-8 -*-
"""
Multi-source training. Define `TrainConfig`, `BatchSampler`, `Adam`, `MetricsLog`, `train` and `evaluate_on_target`.

Every iteration draws one mini-batch per source domain, runs a forward pass over their concatenation,
combines the loss terms and applies one Adam update. Target domains are never given to `train`:
per-epoch target scores, when wanted, are computed by the caller through ``epoch_callback``.

Exemple::

    from eegdg import generate, train, evaluate_on_target, TrainConfig
    sources, targets = generate()
    result = train(sources, TrainConfig(epochs=100))
    for target in targets:
        print(evaluate_on_target(result.model, target))
"""

import dataclasses
import json
import logging
import math
import os
import time
from typing import Optional

import numpy as np
import tqdm

from .core.config import ConfigSection
from .core.errors import ConfigurationError, ContractError, DivergenceError, NumericError
from .core.session import EegDgSession
from .core.types import RecordDict, RecordList
from .evaluation import metrics_report
from .losses import KernelSpec, compute_losses, margin_invariant_loss
from .model import (
    BRANCH_NORMS,
    EegDgModel,
    ExtractorConfig,
    branch_features,
    extract,
    forward,
    predict,
    save_checkpoint,
)
from .tensor import no_grad, zero_grad

log = logging.getLogger("eegdg")

CHECKPOINT_NAME = "checkpoint.edgm"


@dataclasses.dataclass
class TrainConfig(ConfigSection):
    """
    Training hyper-parameters.

    ``batch_per_domain`` samples are drawn from every source domain at each iteration.
    ``beta_d`` weights the domain classifier supervision, 0 disables it.
    ``checkpoint_every`` is in epochs, 0 writes only the final checkpoint.
    """

    lr: float = 0.0005
    batch_per_domain: int = 8
    epochs: int = 500
    alpha: float = 0.1
    beta1: float = 0.1
    beta2: float = 0.1
    beta_d: float = 1.0
    adam_beta_m: float = 0.9
    adam_beta_v: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    kernel: KernelSpec = dataclasses.field(default_factory=KernelSpec)
    model: ExtractorConfig = dataclasses.field(default_factory=ExtractorConfig)
    branch_depth: int = 2
    branch_dim: int = 32
    branch_norm: str = "l2"
    checkpoint_every: int = 0
    early_metrics: bool = False
    clip_norm: Optional[float] = None
    loss_floor: Optional[float] = None
    replacement: bool = False

    def validate(self):
        self._require(self.lr > 0, "train.lr", "must be > 0")
        self._require(self.epochs >= 1, "train.epochs", "must be >= 1")
        self._require(self.batch_per_domain >= 1, "train.batch_per_domain", "must be >= 1")
        for name in ("alpha", "beta1", "beta2", "beta_d"):
            self._require(getattr(self, name) >= 0, "train." + name, "must be >= 0")
        self._require(0 <= self.adam_beta_m < 1, "train.adam_beta_m", "must be in [0, 1)")
        self._require(0 <= self.adam_beta_v < 1, "train.adam_beta_v", "must be in [0, 1)")
        self._require(self.adam_eps > 0, "train.adam_eps", "must be > 0")
        self._require(self.branch_depth >= 1, "train.branch_depth", "must be >= 1")
        self._require(self.branch_dim >= 1, "train.branch_dim", "must be >= 1")
        self._require(
            self.branch_norm in BRANCH_NORMS,
            "train.branch_norm",
            "must be one of {}".format(", ".join(BRANCH_NORMS)),
        )
        self._require(self.checkpoint_every >= 0, "train.checkpoint_every", "must be >= 0")
        self._require(
            self.clip_norm is None or self.clip_norm > 0, "train.clip_norm", "must be > 0"
        )
        self.kernel.validate()
        self.model.validate()
        return self


class BatchSampler:
    """
    Epoch-shuffled cursor over every domain.

    Each domain is drawn without replacement until its permutation is exhausted, then reshuffled.
    With ``replacement=True`` domains smaller than the batch are drawn with replacement.
    """

    def __init__(self, domains, batch_per_domain, seed, replacement=False):
        self.domains = domains
        self.batch = batch_per_domain
        self.replacement = replacement
        self.rng = np.random.default_rng(seed)
        for i, ds in enumerate(domains):
            if len(ds) < batch_per_domain and not replacement:
                raise ConfigurationError(
                    "Domain {} has {} samples, fewer than the batch of {}".format(
                        i, len(ds), batch_per_domain
                    ),
                    key="train.batch_per_domain",
                )
        self._order = [self.rng.permutation(len(ds)) for ds in domains]
        self._cursor = [0] * len(domains)

    @property
    def iterations_per_epoch(self):
        """One pass over the smallest domain."""
        return max(1, min(len(ds) for ds in self.domains) // self.batch)

    def _next(self, i):
        ds = self.domains[i]
        if len(ds) < self.batch:
            return self.rng.integers(0, len(ds), size=self.batch)
        if self._cursor[i] + self.batch > len(ds):
            self._order[i] = self.rng.permutation(len(ds))
            self._cursor[i] = 0
        rows = self._order[i][self._cursor[i] : self._cursor[i] + self.batch]
        self._cursor[i] += self.batch
        return rows

    def sample_batch(self):
        """
        Returns:
            `list` of ``(x, y, d)`` per domain, ``d`` being the domain position in the list.
        """
        batches = list()
        for i, ds in enumerate(self.domains):
            rows = self._next(i)
            batches.append((ds.x[rows], ds.y[rows], np.full(rows.size, i, dtype=np.int64)))
        return batches


@dataclasses.dataclass
class AdamState:
    """First and second moments per parameter name, and the step counter."""

    m: dict = dataclasses.field(default_factory=dict)
    v: dict = dataclasses.field(default_factory=dict)
    step: int = 0


def adam_step(params, grads, state, cfg):
    """
    One bias-corrected Adam update, in place.

    Arguments:
        - `params` (`list[Tensor]`): named parameters.
        - `grads` (`list[numpy.ndarray]`): gradients, `None` counts as zero.
        - `state` (`AdamState`)
        - `cfg` (`TrainConfig`)

    Raises:
        `NumericError` if a gradient is not finite, parameters are left untouched.
    """
    if len(params) != len(grads):
        raise ContractError("{} gradients for {} parameters".format(len(grads), len(params)))
    grads = [np.zeros_like(p.data) if g is None else g for p, g in zip(params, grads)]
    for p, g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ContractError("gradient of {} has the wrong shape".format(p.name))
        if not np.all(np.isfinite(g)):
            raise NumericError(
                "Non-finite gradient for {}".format(p.name),
                diagnostics={"parameter": p.name, "step": state.step},
            )

    state.step += 1
    b1, b2 = cfg.adam_beta_m, cfg.adam_beta_v
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for p, g in zip(params, grads):
        key = p.name if p.name is not None else id(p)
        m = state.m.setdefault(key, np.zeros_like(p.data))
        v = state.v.setdefault(key, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= cfg.lr * (m / correction1) / (np.sqrt(v / correction2) + cfg.adam_eps)
    return params, state


class Adam:
    """Adam optimizer over a list of named parameters."""

    def __init__(self, params, cfg):
        self.params = list(params)
        self.cfg = cfg
        self.state = AdamState()

    def zero_grad(self):
        zero_grad(self.params)

    def grad_norm(self):
        return math.sqrt(
            sum(float((p.grad * p.grad).sum()) for p in self.params if p.grad is not None)
        )

    def clip(self, max_norm):
        """Rescale the gradients so their global norm is at most `max_norm`."""
        norm = self.grad_norm()
        if norm > max_norm:
            for p in self.params:
                if p.grad is not None:
                    p.grad *= max_norm / norm
        return norm

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state, self.cfg)


class MetricsLog(RecordList):
    """
    Per-epoch training records: epoch, l_clc, l_mir, l_cir, l_dom, total, avg_mmd, wall_ms
    and target_acc when a callback reports it.
    """

    FIELDS = ["epoch", "l_clc", "l_mir", "l_cir", "l_dom", "total", "avg_mmd", "wall_ms"]

    def write_jsonl(self, path):
        """One JSON object per line."""
        with open(path, "w") as f:
            for record in self:
                f.write(json.dumps(dict(record), sort_keys=True, cls=RecordDict.JSONEncoder))
                f.write("\n")
        log.info("Metrics log written to {}".format(path))

    @classmethod
    def read_jsonl(cls, path):
        with open(path, "r") as f:
            return cls([RecordDict(json.loads(line)) for line in f if line.strip()])

    def column(self, field):
        return [record.get(field) for record in self]


@dataclasses.dataclass
class TrainResult:
    """
    :ivar model: Trained `EegDgModel`, in eval mode.
    :ivar log: `MetricsLog`
    :ivar checkpoint: Path of the final checkpoint, `None` without output directory.
    :ivar final_target_acc: Last value reported by the epoch callback.
    :ivar max_target_acc: Highest value reported by the epoch callback (report only).
    """

    model: EegDgModel
    log: MetricsLog
    checkpoint: Optional[str] = None
    final_target_acc: Optional[float] = None
    max_target_acc: Optional[float] = None


def _check_domains(domains):
    if len(domains) < 2:
        raise ConfigurationError(
            "Training needs at least 2 source domains, got {}".format(len(domains))
        )
    first = domains[0]
    for ds in domains[1:]:
        if (ds.n_channels, ds.n_timesteps, ds.class_count) != (
            first.n_channels,
            first.n_timesteps,
            first.class_count,
        ):
            raise ContractError(
                "Domain {} has shape [{} x {}] and {} classes, domain {} has [{} x {}] and {}".format(
                    ds.domain_id,
                    ds.n_channels,
                    ds.n_timesteps,
                    ds.class_count,
                    first.domain_id,
                    first.n_channels,
                    first.n_timesteps,
                    first.class_count,
                )
            )


def alignment_diagnostic(model, domains, kernel):
    """
    Eval-mode margin-invariant loss over the full source domains, each through its own branch.
    """
    with no_grad():
        own = list()
        for n, ds in enumerate(domains):
            outs = branch_features(model, extract(model, ds.x, train=False))
            own.append(outs[n])
        return margin_invariant_loss(own, kernel).item()


def _snapshot(model):
    state = {name: p.data.copy() for name, p in model.named_parameters()}
    state.update(("buffer:" + name, b.copy()) for name, b in model.buffers.items())
    return state


def train(domains, cfg=None, out_dir=None, epoch_callback=None):
    """
    Train a model on the source domains.

    Arguments:
        - `domains` (`list[DomainDataset]`): at least 2 source domains of identical shape.
        - `cfg` (`TrainConfig`)
        - `out_dir` (`str`): where checkpoints go, nothing written if `None`.
        - `epoch_callback` (`callable`): ``epoch_callback(epoch, model)`` called after every epoch with the
          model in eval mode, may return a target accuracy to log.

    Returns:
        `TrainResult`

    Raises:
        `DivergenceError` when the total loss stops being finite.
    """
    cfg = (cfg or TrainConfig()).validate()
    _check_domains(domains)
    session = EegDgSession()

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    sampler = BatchSampler(
        domains, cfg.batch_per_domain, seeds[0], replacement=cfg.replacement
    )
    dropout_rng = np.random.default_rng(seeds[1])

    first = domains[0]
    model = EegDgModel.build(
        first.n_channels,
        first.n_timesteps,
        first.class_count,
        len(domains),
        cfg=cfg.model,
        seed=cfg.seed,
        branch_depth=cfg.branch_depth,
        branch_dim=cfg.branch_dim,
        branch_norm=cfg.branch_norm,
    )
    optimizer = Adam(model.parameters(), cfg)
    metrics = MetricsLog()
    checkpoint = os.path.join(out_dir, CHECKPOINT_NAME) if out_dir else None
    last_good = None
    last_state = _snapshot(model)
    accuracies = list()

    log.info(
        "Training on {} domains ({} samples), {} epochs of {} iterations".format(
            len(domains),
            sum(len(ds) for ds in domains),
            cfg.epochs,
            sampler.iterations_per_epoch,
        )
    )

    epochs = range(1, cfg.epochs + 1)
    if not session.quiet:
        epochs = tqdm.tqdm(epochs, desc="Training", unit="epoch")

    for epoch in epochs:
        started = time.perf_counter()
        model.train_mode()
        sums = dict(l_clc=0.0, l_mir=0.0, l_cir=0.0, l_dom=0.0, total=0.0)

        for iteration in range(sampler.iterations_per_epoch):
            batches = sampler.sample_batch()
            x = np.concatenate([b[0] for b in batches])
            y = np.concatenate([b[1] for b in batches])
            d = np.concatenate([b[2] for b in batches])

            optimizer.zero_grad()
            result = forward(model, x, train=True, rng=dropout_rng)
            total, breakdown = compute_losses(result, y, d, cfg)
            if not math.isfinite(breakdown.total):
                raise DivergenceError(
                    "Total loss is {} at epoch {} iteration {}".format(
                        breakdown.total, epoch, iteration
                    ),
                    checkpoint=last_good,
                    diagnostics=dict(breakdown.to_record(), epoch=epoch, iteration=iteration),
                    state=last_state,
                )
            total.backward()
            if cfg.clip_norm is not None:
                optimizer.clip(cfg.clip_norm)
            try:
                optimizer.step()
            except NumericError as e:
                e.diagnostics.update(breakdown.to_record(), epoch=epoch, iteration=iteration)
                raise
            for key in sums:
                sums[key] += getattr(breakdown, key)
            log.debug(
                "epoch={} iteration={} total={:.6g} l_clc={:.6g} l_mir={:.6g} l_cir={:.6g} l_dom={:.6g}".format(
                    epoch,
                    iteration,
                    breakdown.total,
                    breakdown.l_clc,
                    breakdown.l_mir,
                    breakdown.l_cir,
                    breakdown.l_dom,
                )
            )

        model.eval_mode()
        record = RecordDict({"epoch": epoch})
        for key, value in sums.items():
            record[key] = value / sampler.iterations_per_epoch
        if cfg.early_metrics:
            record["avg_mmd"] = alignment_diagnostic(model, domains, cfg.kernel)
        else:
            record["avg_mmd"] = record["l_mir"] if cfg.beta1 > 0 else None
        # Timings are not reproducible
        record["wall_ms"] = (
            0.0 if session.strict else round((time.perf_counter() - started) * 1000, 3)
        )

        if epoch_callback is not None:
            acc = epoch_callback(epoch, model)
            if acc is not None:
                record["target_acc"] = float(acc)
                accuracies.append(float(acc))
        metrics.append(record)
        last_state = _snapshot(model)

        if epoch == 1 or epoch % 50 == 0 or epoch == cfg.epochs:
            log.info(
                "Epoch {}/{}: total={:.4f} l_clc={:.4f} avg_mmd={}".format(
                    epoch, cfg.epochs, record["total"], record["l_clc"], record["avg_mmd"]
                )
            )
        if checkpoint and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_checkpoint(model, checkpoint, cfg.to_dict())
            last_good = checkpoint

    if checkpoint:
        save_checkpoint(model, checkpoint, cfg.to_dict())
    return TrainResult(
        model=model.eval_mode(),
        log=metrics,
        checkpoint=checkpoint,
        final_target_acc=accuracies[-1] if accuracies else None,
        max_target_acc=max(accuracies) if accuracies else None,
    )


def evaluate_on_target(model, target):
    """
    Score the frozen model on a target domain. Labels are only used for scoring.

    Returns:
        `eegdg.evaluation.MetricsReport`
    """
    if (target.n_channels, target.n_timesteps) != (model.n_channels, model.n_timesteps):
        raise ContractError(
            "Target samples are [{} x {}], the model expects [{} x {}]".format(
                target.n_channels, target.n_timesteps, model.n_channels, model.n_timesteps
            )
        )
    if target.class_count != model.n_classes:
        raise ContractError(
            "Target has {} classes, the model {}".format(target.class_count, model.n_classes)
        )
    report = metrics_report(predict(model, target.x), target.y, model.n_classes)
    report["domain_id"] = target.domain_id
    return report
