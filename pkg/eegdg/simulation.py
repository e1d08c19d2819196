# -*- coding: utf-8 -*-
"""
Simulated multi-source experiment: Gaussian class clusters seen through per-domain distribution shifts.

Class centers are drawn once and shared by every domain. Each domain then maps all its samples with
its own anisotropic scaling, rotation and translation, which moves both the marginal and the
class-conditional distributions while keeping the class structure.
"""

import dataclasses
import logging

import numpy as np

from .core.config import ConfigSection
from .signal import DomainDataset

log = logging.getLogger("eegdg")


@dataclasses.dataclass
class SimConfig(ConfigSection):
    """
    Generator parameters.

    The axis scale factors of a domain are drawn log-uniform in ``[1/a, a]`` with
    ``log(a) = log(anisotropy) * domain_shift_scale``, so a zero shift scale disables scaling too.
    """

    n_source_domains: int = 3
    n_target_domains: int = 5
    n_classes: int = 4
    samples_per_class: int = 25
    feature_dim: int = 2
    class_center_scale: float = 4.0
    domain_shift_scale: float = 1.0
    domain_rotation_max_rad: float = 0.5
    per_class_std: float = 0.6
    anisotropy: float = 1.25
    seed: int = 0

    def validate(self):
        for name in (
            "n_source_domains",
            "n_target_domains",
            "n_classes",
            "samples_per_class",
            "feature_dim",
        ):
            self._require(getattr(self, name) >= 1, "sim." + name, "must be >= 1")
        for name in (
            "class_center_scale",
            "domain_shift_scale",
            "domain_rotation_max_rad",
            "per_class_std",
        ):
            self._require(getattr(self, name) >= 0, "sim." + name, "must be >= 0")
        self._require(self.anisotropy >= 1, "sim.anisotropy", "must be >= 1")
        return self


def _rotation(rng, dim, max_rad):
    """Product of plane rotations over consecutive axis pairs, angles uniform in [-max_rad, max_rad]."""
    rot = np.eye(dim)
    for i in range(dim - 1):
        theta = rng.uniform(-max_rad, max_rad)
        plane = np.eye(dim)
        plane[i, i] = plane[i + 1, i + 1] = np.cos(theta)
        plane[i, i + 1] = -np.sin(theta)
        plane[i + 1, i] = np.sin(theta)
        rot = plane @ rot
    return rot


def _domain(rng, centers, cfg, domain_id):
    dim = cfg.feature_dim
    log_a = np.log(cfg.anisotropy) * cfg.domain_shift_scale
    scales = np.exp(rng.uniform(-log_a, log_a, size=dim))
    rot = _rotation(rng, dim, cfg.domain_rotation_max_rad)
    shift = rng.normal(0.0, cfg.domain_shift_scale, size=dim)

    labels = np.repeat(np.arange(cfg.n_classes), cfg.samples_per_class)
    points = centers[labels] + cfg.per_class_std * rng.normal(size=(labels.size, dim))
    mapped = (points * scales) @ rot.T + shift
    return DomainDataset(mapped[:, :, None], labels, domain_id, cfg.n_classes)


def generate(cfg=None):
    """
    Generate the source and target domains.

    Returns:
        `tuple(list[DomainDataset], list[DomainDataset])`: sources with ids ``0..S-1``,
        targets with ids ``S..S+T-1``. Samples have shape ``[feature_dim x 1]``.
    """
    cfg = (cfg or SimConfig()).validate()
    log.info("Simulating domains with {}".format(cfg.to_dict()))
    rng = np.random.default_rng(cfg.seed)
    centers = rng.normal(0.0, cfg.class_center_scale, size=(cfg.n_classes, cfg.feature_dim))

    sources = [_domain(rng, centers, cfg, i) for i in range(cfg.n_source_domains)]
    targets = [
        _domain(rng, centers, cfg, cfg.n_source_domains + i)
        for i in range(cfg.n_target_domains)
    ]
    return sources, targets
