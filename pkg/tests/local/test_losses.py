import math
import unittest

import numpy as np

from eegdg.core.errors import ConfigurationError, ContractError
from eegdg.losses import (
    CALL_COUNTS,
    KernelSpec,
    class_centers,
    classification_loss,
    compute_losses,
    condition_invariant_loss,
    cross_domain_center_distance,
    domain_classification_loss,
    inter_class_separability,
    intra_class_compactness,
    margin_invariant_loss,
    median_bandwidth,
    mmd_to_mean,
)
from eegdg.model import EegDgModel, ExtractorConfig, forward
from eegdg.tensor import Tensor, gradcheck
from eegdg.trainer import TrainConfig

LINEAR = KernelSpec(kind="linear")
FIXED = KernelSpec(kind="rbf", bandwidth_policy="fixed", sigma=1.5)


def explicit_mmd(x, z, kernel, sigma):
    """Double sum over every pair of rows."""

    def k(a, b):
        if kernel.kind == "linear":
            return float(np.dot(a, b))
        return math.exp(-float(np.sum((a - b) ** 2)) / (2 * sigma * sigma))

    xx = sum(k(a, b) for a in x for b in x) / (len(x) * len(x))
    xz = sum(k(a, b) for a in x for b in z) / (len(x) * len(z))
    zz = sum(k(a, b) for a in z for b in z) / (len(z) * len(z))
    return xx - 2 * xz + zz


def toy_batch(seed, n_domains=2, per_domain=4, n_classes=3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n_domains * per_domain, 2, 1))
    y = np.tile(np.arange(per_domain) % n_classes, n_domains)
    d = np.repeat(np.arange(n_domains), per_domain)
    return x, y, d


class T(unittest.TestCase):
    def test_mmd_hand_values(self):
        features = Tensor([[0.0, 0.0]])
        pooled = Tensor([[0.0, 0.0], [2.0, 0.0]])
        self.assertAlmostEqual(mmd_to_mean(features, pooled, LINEAR).item(), 1.0, places=12)

        a, b = Tensor([[0.0, 0.0]]), Tensor([[2.0, 0.0]])
        self.assertAlmostEqual(margin_invariant_loss([a, b], LINEAR).item(), 1.0, places=12)

    def test_mmd_oracle(self):
        rng = np.random.default_rng(0)
        for i in range(50):
            m, big_m, dim = rng.integers(1, 65), rng.integers(1, 65), rng.integers(1, 17)
            x = rng.normal(size=(m, dim))
            z = rng.normal(size=(big_m, dim)) + 0.3
            kernel = LINEAR if i % 2 else KernelSpec()
            sigma = median_bandwidth(z) if kernel.kind == "rbf" else 1.0
            got = mmd_to_mean(Tensor(x), Tensor(z), kernel).item()
            self.assertAlmostEqual(got, explicit_mmd(x, z, kernel, sigma), delta=1e-10)

    def test_mmd_identical_domains(self):
        x = Tensor(np.random.default_rng(1).normal(size=(6, 3)))
        for kernel in (LINEAR, KernelSpec(), FIXED):
            loss = margin_invariant_loss([x, x, x], kernel).item()
            self.assertAlmostEqual(loss, 0.0, delta=1e-10)
            self.assertGreaterEqual(loss, -1e-10)

    def test_mmd_errors(self):
        with self.assertRaises(ConfigurationError):
            margin_invariant_loss([Tensor(np.ones((2, 2)))], LINEAR)
        with self.assertRaises(ContractError):
            mmd_to_mean(Tensor(np.ones((0, 2))), Tensor(np.ones((2, 2))), LINEAR)
        with self.assertRaises(ConfigurationError):
            KernelSpec(kind="poly").validate()

    def test_median_bandwidth(self):
        self.assertEqual(median_bandwidth(np.zeros((4, 2))), 1.0)
        self.assertEqual(median_bandwidth(np.zeros((1, 2))), 1.0)
        pts = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]])
        self.assertAlmostEqual(median_bandwidth(pts), 5.0)

    def test_class_geometry_hand_values(self):
        x = Tensor([[0.0, 0.0], [3.0, 4.0]])
        self.assertEqual(intra_class_compactness(x, [0, 0]).item(), 5.0)
        self.assertEqual(inter_class_separability(x, [0, 0]).item(), 0.0)
        self.assertEqual(intra_class_compactness(x, [0, 1]).item(), 0.0)
        self.assertEqual(inter_class_separability(x, [0, 1]).item(), 5.0)

    def test_center_distance(self):
        c1 = Tensor([[0.0, 0.0], [0.0, 0.0]])
        c2 = Tensor([[3.0, 4.0], [0.0, 0.0]])
        present = np.array([True, True])
        self.assertEqual(cross_domain_center_distance(c1, present, c2, present).item(), 2.5)
        d = cross_domain_center_distance(c1, np.array([True, False]), c2, np.array([False, True]))
        self.assertEqual(d.item(), 0.0)

        centers, present = class_centers(Tensor([[1.0, 1.0], [3.0, 5.0], [7.0, 7.0]]), [0, 0, 2], 3)
        np.testing.assert_array_equal(centers.data, [[2.0, 3.0], [0.0, 0.0], [7.0, 7.0]])
        np.testing.assert_array_equal(present, [True, False, True])

    def test_condition_invariant_hand_value(self):
        x = Tensor([[0.0, 0.0], [3.0, 4.0]])
        loss = condition_invariant_loss([x, x], [[0, 0], [0, 0]], alpha=0.1, n_classes=1)
        self.assertEqual(loss.item(), 10.0)

        shifted = Tensor([[3.0, 4.0], [6.0, 8.0]])
        loss = condition_invariant_loss([x, shifted], [[0, 0], [0, 0]], alpha=0.1, n_classes=1)
        self.assertAlmostEqual(loss.item(), 15.0, delta=1e-12)

        with self.assertRaises(ConfigurationError):
            condition_invariant_loss([x], [[0, 0]], alpha=0.1, n_classes=1)
        with self.assertRaises(ConfigurationError):
            condition_invariant_loss([x, x], [[0, 0], [0, 0]], alpha=-1.0, n_classes=1)

    def test_cross_entropy(self):
        self.assertAlmostEqual(
            classification_loss(Tensor(np.zeros((5, 4))), [0, 1, 2, 3, 0]).item(), math.log(4), places=12
        )
        self.assertAlmostEqual(
            domain_classification_loss(Tensor(np.zeros((3, 3))), [0, 1, 2]).item(), math.log(3), places=12
        )
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(7, 4)) * 3
        y = rng.integers(0, 4, size=7)
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        expected = -np.mean(np.log(p[np.arange(7), y]))
        self.assertAlmostEqual(classification_loss(Tensor(logits), y).item(), expected, delta=1e-12)
        with self.assertRaises(ContractError):
            classification_loss(Tensor(logits), y[:3])

    def test_loss_gradients(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
            b = Tensor(rng.normal(size=(5, 3)) + 1.0, requires_grad=True)
            ya, yb = [0, 1, 0, 1], [1, 0, 1, 1, 0]
            for kernel in (LINEAR, FIXED):
                err = gradcheck(lambda a, b: margin_invariant_loss([a, b], kernel), [a, b])
                self.assertLess(err, 1e-4, msg="seed {} kernel {}".format(seed, kernel.kind))
            err = gradcheck(
                lambda a, b: condition_invariant_loss([a, b], [ya, yb], 0.1, 2), [a, b]
            )
            self.assertLess(err, 1e-4, msg="seed {}".format(seed))
            logits = Tensor(rng.normal(size=(6, 4)), requires_grad=True)
            err = gradcheck(lambda l: classification_loss(l, [0, 1, 2, 3, 0, 1]), [logits])
            self.assertLess(err, 1e-4)

    def test_composite_gradient(self):
        cfg = TrainConfig(kernel=FIXED)
        extractor = ExtractorConfig(kind="dense", dense_hidden=4, embedding_dim=3)
        for seed in range(5):
            model = EegDgModel.build(2, 1, 3, 2, cfg=extractor, seed=seed, branch_dim=3)
            # weights of order 1, branch features on the sphere of radius sqrt(3)
            for p in model.parameters():
                p.data *= 25.0
            x, y, d = toy_batch(seed)

            def loss(*_):
                return compute_losses(forward(model, x, train=False), y, d, cfg)[0]

            self.assertLess(gradcheck(loss, model.parameters()), 1e-4, msg="seed {}".format(seed))

    def test_composite_gradient_eegnet(self):
        cfg = TrainConfig(kernel=FIXED)
        extractor = ExtractorConfig(
            kind="eegnet",
            temporal_kernel_lengths=[3],
            filters_per_branch=2,
            spatial_depth_multiplier=1,
            block2_kernel_lengths=[2],
            pool1=4,
            pool2=2,
            embedding_dim=4,
            dropout_p=0.0,
        )
        model = EegDgModel.build(2, 32, 3, 2, cfg=extractor, seed=4, branch_dim=3)
        for name, p in model.named_parameters():
            if ".bn" not in name:
                p.data *= 25.0
        rng = np.random.default_rng(4)
        x = rng.normal(size=(8, 2, 32))
        _, y, d = toy_batch(4)

        def loss(*_):
            return compute_losses(forward(model, x, train=True), y, d, cfg)[0]

        self.assertLess(gradcheck(loss, model.parameters()), 1e-4)
        for name, p in model.named_parameters():
            self.assertTrue(np.any(p.grad != 0), msg=name)

    def test_breakdown_identity(self):
        cfg = TrainConfig(alpha=0.3, beta1=0.2, beta2=0.5, beta_d=0.7)
        model = EegDgModel.build(2, 1, 3, 2, seed=0, branch_dim=8)
        x, y, d = toy_batch(0, per_domain=6)
        total, b = compute_losses(forward(model, x, train=False), y, d, cfg)
        expected = b.l_clc + cfg.beta1 * b.l_mir + cfg.beta2 * b.l_cir + cfg.beta_d * b.l_dom
        self.assertAlmostEqual(total.item(), expected, delta=1e-12)
        self.assertEqual(b.total, total.item())
        self.assertEqual(len(b.delta_c), 2)
        self.assertEqual(list(b.pair_d), ["0-1"])
        self.assertEqual(b.avg_mmd, b.l_mir)
        self.assertGreaterEqual(b.l_mir, -1e-12)
        self.assertIn("l_clc", b.to_record())

    def test_ablation_skips_terms(self):
        model = EegDgModel.build(2, 1, 3, 2, seed=0, branch_dim=8)
        x, y, d = toy_batch(1)
        result = forward(model, x, train=False)

        CALL_COUNTS.clear()
        _, b = compute_losses(result, y, d, TrainConfig(beta1=0.0, beta2=0.0))
        self.assertEqual(CALL_COUNTS["mmd_to_mean"], 0)
        self.assertEqual(CALL_COUNTS["class_centers"], 0)
        self.assertEqual((b.l_mir, b.l_cir), (0.0, 0.0))
        self.assertIsNone(b.avg_mmd)

        CALL_COUNTS.clear()
        compute_losses(result, y, d, TrainConfig(beta1=0.1, beta2=0.0))
        self.assertEqual(CALL_COUNTS["mmd_to_mean"], 2)
        self.assertEqual(CALL_COUNTS["class_centers"], 0)

        CALL_COUNTS.clear()
        _, b = compute_losses(result, y, d, TrainConfig(beta_d=0.0))
        self.assertEqual(CALL_COUNTS["class_centers"], 2)
        self.assertGreater(b.l_dom, 0.0)
        self.assertAlmostEqual(b.total, b.l_clc + 0.1 * b.l_mir + 0.1 * b.l_cir, delta=1e-12)

    def test_loss_floor(self):
        model = EegDgModel.build(2, 1, 3, 2, seed=0, branch_dim=8)
        x, y, d = toy_batch(2)
        total, b = compute_losses(forward(model, x, train=False), y, d, TrainConfig(loss_floor=100.0))
        self.assertEqual(total.item(), 100.0)
        self.assertEqual(b.total, 100.0)
