# -*- coding: utf-8 -*-
"""
Training objectives: margin-invariant MMD loss, condition-invariant class geometry loss, classification
and domain classification cross-entropies, and their weighted total.
"""

import collections
import dataclasses
import logging
from typing import Dict, List, Optional

import numpy as np

from .core.config import ConfigSection
from .core.errors import ConfigurationError, ContractError
from .tensor import (
    Tensor,
    concat,
    exp,
    log_softmax,
    matmul,
    maximum_scalar,
    mean,
    mul,
    no_grad,
    pairwise_sq_dist,
    scale,
    square,
    stable_sqrt,
    sub,
    sum,
    take,
    transpose,
)

log = logging.getLogger("eegdg")

CALL_COUNTS = collections.Counter()
"""Number of calls of `mmd_to_mean` and `class_centers` since the last reset."""


@dataclasses.dataclass
class KernelSpec(ConfigSection):
    """
    Kernel of the MMD feature map.

    ``kind`` is ``"rbf"`` or ``"linear"``. For RBF, ``bandwidth_policy`` is ``"median_heuristic"``
    (median pooled pairwise distance of the batch) or ``"fixed"`` (use ``sigma``).
    """

    kind: str = "rbf"
    bandwidth_policy: str = "median_heuristic"
    sigma: float = 1.0

    def validate(self):
        self._require(self.kind in ("rbf", "linear"), "train.kernel.kind", "must be 'rbf' or 'linear'")
        self._require(
            self.bandwidth_policy in ("median_heuristic", "fixed"),
            "train.kernel.bandwidth_policy",
            "must be 'median_heuristic' or 'fixed'",
        )
        self._require(self.sigma > 0, "train.kernel.sigma", "must be > 0")
        return self


@dataclasses.dataclass
class LossBreakdown:
    """
    Values of every loss term of one batch (or averaged over an epoch).

    ``total == l_clc + beta1 * l_mir + beta2 * l_cir + beta_d * l_dom`` unless a loss floor clamps it.
    """

    l_clc: float = 0.0
    l_mir: float = 0.0
    l_cir: float = 0.0
    l_dom: float = 0.0
    total: float = 0.0
    delta_c: List[float] = dataclasses.field(default_factory=list)
    delta_s: List[float] = dataclasses.field(default_factory=list)
    pair_d: Dict[str, float] = dataclasses.field(default_factory=dict)
    avg_mmd: Optional[float] = None

    def to_record(self):
        return dataclasses.asdict(self)


def median_bandwidth(pooled):
    """
    RBF bandwidth: median Euclidean distance over distinct pairs of pooled rows. Falls back to 1.
    """
    data = pooled.data if isinstance(pooled, Tensor) else np.asarray(pooled, dtype=np.float64)
    if data.shape[0] < 2:
        return 1.0
    diff = data[:, None, :] - data[None, :, :]
    upper = np.triu_indices(data.shape[0], k=1)
    sigma = float(np.median(np.sqrt((diff * diff).sum(axis=-1))[upper]))
    if not sigma > 0:
        log.warning("Median pairwise distance is 0, using bandwidth 1")
        return 1.0
    return sigma


def kernel_matrix(a, b, kernel, sigma=1.0):
    """Gram matrix ``k(a_i, b_j)``: ``a . b`` for linear, ``exp(-|a-b|^2 / 2 sigma^2)`` for RBF."""
    if kernel.kind == "linear":
        return matmul(a, transpose(b))
    return exp(scale(pairwise_sq_dist(a, b), -1.0 / (2.0 * sigma * sigma)))


def _bandwidth(pooled, kernel):
    if kernel.kind != "rbf":
        return 1.0
    if kernel.bandwidth_policy == "fixed":
        return kernel.sigma
    return median_bandwidth(pooled)


def mmd_to_mean(features_n, pooled, kernel, sigma=None):
    """
    Squared MMD between a domain's features and the pooled features, biased V-statistic::

        mean k(x, x') - 2 mean k(x, z) + mean k(z, z')

    Arguments:
        - `sigma` (`float`): RBF bandwidth, computed from `pooled` by `kernel` policy when `None`.
    """
    CALL_COUNTS["mmd_to_mean"] += 1
    if features_n.shape[0] < 1 or pooled.shape[0] < 1:
        raise ContractError("MMD needs at least one sample on each side")
    if sigma is None:
        sigma = _bandwidth(pooled, kernel)
    k_xx = mean(kernel_matrix(features_n, features_n, kernel, sigma))
    k_xz = mean(kernel_matrix(features_n, pooled, kernel, sigma))
    k_zz = mean(kernel_matrix(pooled, pooled, kernel, sigma))
    return k_xx - scale(k_xz, 2.0) + k_zz


def margin_invariant_loss(features, kernel):
    """
    Average MMD of every domain's features to the pooled features of all domains.
    The RBF bandwidth is shared by all the terms.
    """
    if len(features) < 2:
        raise ConfigurationError(
            "The margin-invariant loss needs at least 2 domains, got {}".format(len(features))
        )
    pooled = concat(features, axis=0)
    sigma = _bandwidth(pooled, kernel)
    terms = [mmd_to_mean(f, pooled, kernel, sigma) for f in features]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return scale(total, 1.0 / len(terms))


def _labels(y):
    return np.asarray(y, dtype=np.int64).reshape(-1)


def _pair_sum(x, y, same):
    y = _labels(y)
    if x.shape[0] != y.size:
        raise ContractError("{} labels for {} samples".format(y.size, x.shape[0]))
    mask = (y[:, None] == y[None, :]) if same else (y[:, None] != y[None, :])
    np.fill_diagonal(mask, False)
    dist = stable_sqrt(pairwise_sq_dist(x, x))
    return scale(sum(mul(dist, Tensor(mask.astype(np.float64)))), 1.0 / x.shape[0])


def intra_class_compactness(x, y):
    """Sum of Euclidean distances over ordered same-class pairs, divided by the sample count."""
    return _pair_sum(x, y, same=True)


def inter_class_separability(x, y):
    """Sum of Euclidean distances over ordered different-class pairs, divided by the sample count."""
    return _pair_sum(x, y, same=False)


def class_centers(x, y, n_classes):
    """
    Mean feature of every class.

    Returns:
        `tuple(Tensor, numpy.ndarray)`: centers ``[n_classes x d]`` (zero rows for absent classes)
        and the boolean mask of present classes.
    """
    CALL_COUNTS["class_centers"] += 1
    y = _labels(y)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ContractError("labels must be in 0..{}".format(n_classes - 1))
    counts = np.bincount(y, minlength=n_classes)
    membership = (np.arange(n_classes)[:, None] == y[None, :]).astype(np.float64)
    membership /= np.maximum(counts, 1)[:, None]
    return matmul(Tensor(membership), x), counts > 0


def cross_domain_center_distance(centers_1, present_1, centers_2, present_2):
    """
    Mean Euclidean distance between same-class centers of two domains, over the classes present in both.
    0 when no class is common.
    """
    common = np.flatnonzero(np.asarray(present_1) & np.asarray(present_2))
    if common.size == 0:
        log.warning("No class present in both domains, center distance set to 0")
        return Tensor(0.0)
    diff = sub(take(centers_1, common), take(centers_2, common))
    return mean(stable_sqrt(sum(square(diff), axis=1)))


def _condition_terms(features, labels, alpha, n_classes):
    if len(features) < 2:
        raise ConfigurationError(
            "The condition-invariant loss needs at least 2 domains, got {}".format(len(features))
        )
    if alpha < 0:
        raise ConfigurationError("alpha must be >= 0", key="train.alpha")
    compact = [intra_class_compactness(f, y) for f, y in zip(features, labels)]
    separate = [inter_class_separability(f, y) for f, y in zip(features, labels)]
    centers = [class_centers(f, y, n_classes) for f, y in zip(features, labels)]

    total = None
    for dc, ds in zip(compact, separate):
        term = sub(dc, scale(ds, alpha))
        total = term if total is None else total + term

    # Each unordered pair appears twice with a 1/2 factor
    pairs = collections.OrderedDict()
    for i in range(len(features)):
        for j in range(i + 1, len(features)):
            d = cross_domain_center_distance(*centers[i], *centers[j])
            pairs["{}-{}".format(i, j)] = d
            total = total + d
    return total, compact, separate, pairs


def condition_invariant_loss(features, labels, alpha, n_classes):
    """
    Sum over domains of ``delta_c - alpha * delta_s + 1/2 * sum_{other domains} D``.

    Arguments:
        - `features` (`list[Tensor]`): per-domain features.
        - `labels` (`list`): per-domain label arrays.
    """
    return _condition_terms(features, labels, alpha, n_classes)[0]


def _cross_entropy(logits, y, n):
    y = _labels(y)
    if logits.ndim != 2 or logits.shape[0] < 1 or logits.shape[0] != y.size:
        raise ContractError(
            "{} targets for logits of shape {}".format(y.size, list(logits.shape))
        )
    onehot = np.zeros((y.size, n))
    onehot[np.arange(y.size), y] = 1.0
    picked = sum(mul(log_softmax(logits, axis=1), Tensor(onehot)), axis=1)
    return scale(mean(picked), -1.0)


def classification_loss(logits, y):
    """Mean negative log-likelihood of the true classes."""
    return _cross_entropy(logits, y, logits.shape[-1])


def domain_classification_loss(weight_logits, d):
    """Cross-entropy of the domain classifier against the domain labels."""
    return _cross_entropy(weight_logits, d, weight_logits.shape[-1])


def compute_losses(result, y, d, cfg):
    """
    Weighted training objective of one multi-domain batch.

    The alignment terms use, for the samples of domain n, the output of branch n. The classification term
    uses the fused features. Terms whose weight is 0 are not computed.

    Arguments:
        - `result` (`eegdg.model.ForwardResult`): forward pass over the concatenated batch.
        - `y`, `d`: class and domain index of every row.
        - `cfg` (`eegdg.trainer.TrainConfig`)

    Returns:
        `tuple(Tensor, LossBreakdown)`
    """
    y = _labels(y)
    d = _labels(d)
    n_domains = len(result.branch_outs)
    n_classes = result.logits.shape[1]
    breakdown = LossBreakdown()

    l_clc = classification_loss(result.logits, y)
    total = l_clc
    breakdown.l_clc = l_clc.item()

    if cfg.beta_d > 0:
        l_dom = domain_classification_loss(result.weight_logits, d)
        total = total + scale(l_dom, cfg.beta_d)
        breakdown.l_dom = l_dom.item()
    else:
        with no_grad():
            breakdown.l_dom = domain_classification_loss(result.weight_logits, d).item()

    if cfg.beta1 > 0 or cfg.beta2 > 0:
        rows = [np.flatnonzero(d == n) for n in range(n_domains)]
        own = [take(result.branch_outs[n], r) for n, r in enumerate(rows)]

        if cfg.beta1 > 0:
            l_mir = margin_invariant_loss(own, cfg.kernel)
            total = total + scale(l_mir, cfg.beta1)
            breakdown.l_mir = breakdown.avg_mmd = l_mir.item()

        if cfg.beta2 > 0:
            l_cir, compact, separate, pairs = _condition_terms(
                own, [y[r] for r in rows], cfg.alpha, n_classes
            )
            total = total + scale(l_cir, cfg.beta2)
            breakdown.l_cir = l_cir.item()
            breakdown.delta_c = [t.item() for t in compact]
            breakdown.delta_s = [t.item() for t in separate]
            breakdown.pair_d = {k: v.item() for k, v in pairs.items()}

    if cfg.loss_floor is not None and total.item() < cfg.loss_floor:
        log.warning(
            "Total loss {:.6g} clamped to the floor {}".format(total.item(), cfg.loss_floor)
        )
        total = maximum_scalar(total, cfg.loss_floor)
    breakdown.total = total.item()
    return total, breakdown
