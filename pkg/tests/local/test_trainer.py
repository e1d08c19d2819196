import math
import os
import tempfile
import unittest
from unittest import mock

import numpy as np

from eegdg.core.config import EegDgConfig
from eegdg.core.errors import ConfigurationError, ContractError, DivergenceError, NumericError
from eegdg.core.session import EegDgSession
from eegdg.model import load_checkpoint, predict
from eegdg.simulation import SimConfig, generate
from eegdg.signal import DomainDataset
from eegdg.tensor import Tensor, mul
from eegdg import losses
from eegdg.trainer import (
    CHECKPOINT_NAME,
    Adam,
    AdamState,
    BatchSampler,
    MetricsLog,
    TrainConfig,
    adam_step,
    evaluate_on_target,
    train,
)


def session(strict=False):
    return EegDgSession.reset(
        EegDgConfig(config={"general": {"quiet": True, "strict_determinism": strict}})
    )


def small_domains():
    return generate(SimConfig(samples_per_class=4, n_target_domains=2))


class T(unittest.TestCase):
    def setUp(self):
        session()

    def test_sampler(self):
        sources, _ = small_domains()
        sampler = BatchSampler(sources, 8, seed=0)
        self.assertEqual(sampler.iterations_per_epoch, 2)

        # One pass without replacement sees every sample once
        seen = [list() for _ in sources]
        for _ in range(sampler.iterations_per_epoch):
            for i, (x, y, d) in enumerate(sampler.sample_batch()):
                self.assertEqual(x.shape, (8, 2, 1))
                np.testing.assert_array_equal(d, np.full(8, i))
                seen[i].extend(x[:, 0, 0].tolist())
        for i, ds in enumerate(sources):
            self.assertEqual(sorted(seen[i]), sorted(ds.x[:, 0, 0].tolist()))

        a = BatchSampler(sources, 8, seed=3).sample_batch()
        b = BatchSampler(sources, 8, seed=3).sample_batch()
        np.testing.assert_array_equal(a[1][0], b[1][0])

    def test_sampler_small_domain(self):
        tiny = DomainDataset(np.zeros((3, 2, 1)), [0, 1, 0], 0, 2)
        big = DomainDataset(np.zeros((10, 2, 1)), [0, 1] * 5, 1, 2)
        with self.assertRaises(ConfigurationError):
            BatchSampler([tiny, big], 8, seed=0)
        batches = BatchSampler([tiny, big], 8, seed=0, replacement=True).sample_batch()
        self.assertEqual(batches[0][0].shape, (8, 2, 1))

    def test_adam_first_step(self):
        cfg = TrainConfig(lr=0.01)
        p = Tensor([1.0, -2.0, 3.0], requires_grad=True, name="p")
        adam_step([p], [np.array([0.5, -4.0, 0.0])], AdamState(), cfg)
        np.testing.assert_allclose(p.data, [0.99, -1.99, 3.0], atol=1e-8)

    def test_adam_rejects_non_finite(self):
        p = Tensor([1.0, 2.0], requires_grad=True, name="p")
        state = AdamState()
        with self.assertRaises(NumericError) as ctx:
            adam_step([p], [np.array([np.nan, 1.0])], state, TrainConfig())
        self.assertEqual(ctx.exception.diagnostics["parameter"], "p")
        np.testing.assert_array_equal(p.data, [1.0, 2.0])
        self.assertEqual(state.step, 0)
        with self.assertRaises(ContractError):
            adam_step([p], [], state, TrainConfig())

    def test_adam_deterministic(self):
        def run():
            rng = np.random.default_rng(0)
            p = Tensor(rng.normal(size=(3, 2)), requires_grad=True, name="w")
            opt = Adam([p], TrainConfig())
            for _ in range(10):
                opt.zero_grad()
                (p * p).sum().backward()
                opt.step()
            return p.data

        self.assertEqual(run().tobytes(), run().tobytes())

    def test_clip(self):
        p = Tensor([0.0, 0.0], requires_grad=True, name="p")
        p.grad = np.array([3.0, 4.0])
        opt = Adam([p], TrainConfig())
        self.assertEqual(opt.clip(1.0), 5.0)
        self.assertAlmostEqual(opt.grad_norm(), 1.0)

    def test_train_smoke(self):
        sources, targets = small_domains()
        cfg = TrainConfig(epochs=2, checkpoint_every=1)
        with tempfile.TemporaryDirectory() as tmp:
            result = train(sources, cfg, out_dir=tmp)
            self.assertEqual(result.checkpoint, os.path.join(tmp, CHECKPOINT_NAME))
            loaded, echo = load_checkpoint(result.checkpoint)
            self.assertEqual(echo["lr"], 0.0005)
        np.testing.assert_array_equal(predict(loaded, targets[0].x), predict(result.model, targets[0].x))

        self.assertEqual(len(result.log), 2)
        self.assertEqual(result.log.column("epoch"), [1, 2])
        for record in result.log:
            for field in MetricsLog.FIELDS:
                self.assertIn(field, record)
            self.assertTrue(math.isfinite(record["total"]))
            self.assertEqual(record["avg_mmd"], record["l_mir"])
        self.assertFalse(result.model.training)
        self.assertIsNone(result.final_target_acc)

        report = evaluate_on_target(result.model, targets[0])
        self.assertEqual(report["domain_id"], 3)
        self.assertEqual(report["n_samples"], 16)

    def test_train_errors(self):
        sources, targets = small_domains()
        with self.assertRaises(ConfigurationError):
            train(sources[:1], TrainConfig(epochs=1))
        other = DomainDataset(np.zeros((16, 3, 1)), [0, 1, 2, 3] * 4, 9, 4)
        with self.assertRaises(ContractError):
            train([sources[0], other], TrainConfig(epochs=1))
        with self.assertRaises(ConfigurationError) as ctx:
            train(sources, TrainConfig(lr=0.0))
        self.assertEqual(ctx.exception.key, "train.lr")

    def test_epoch_callback(self):
        sources, targets = small_domains()
        calls = list()

        def callback(epoch, model):
            self.assertFalse(model.training)
            calls.append(epoch)
            return evaluate_on_target(model, targets[0])["accuracy"]

        result = train(sources, TrainConfig(epochs=3), epoch_callback=callback)
        self.assertEqual(calls, [1, 2, 3])
        accs = result.log.column("target_acc")
        self.assertEqual(result.final_target_acc, accs[-1])
        self.assertEqual(result.max_target_acc, max(accs))

    def test_early_metrics(self):
        sources, _ = small_domains()
        result = train(sources, TrainConfig(epochs=1, early_metrics=True))
        self.assertGreaterEqual(result.log[0]["avg_mmd"], -1e-12)
        result = train(sources, TrainConfig(epochs=1, beta1=0.0))
        self.assertIsNone(result.log[0]["avg_mmd"])

    def test_divergence(self):
        sources, _ = small_domains()
        real = losses.compute_losses
        calls = {"n": 0}

        def diverging(*args, **kwargs):
            total, breakdown = real(*args, **kwargs)
            calls["n"] += 1
            if calls["n"] > 2:
                breakdown.total = float("nan")
            return total, breakdown

        with tempfile.TemporaryDirectory() as tmp:
            with mock.patch("eegdg.trainer.compute_losses", side_effect=diverging):
                with self.assertRaises(DivergenceError) as ctx:
                    train(sources, TrainConfig(epochs=3, checkpoint_every=1), out_dir=tmp)
            self.assertEqual(ctx.exception.checkpoint, os.path.join(tmp, CHECKPOINT_NAME))
            self.assertTrue(os.path.isfile(ctx.exception.checkpoint))

    def test_divergence_keeps_last_epoch_in_memory(self):
        sources, _ = small_domains()
        real = losses.compute_losses
        calls = {"n": 0}

        # two iterations per epoch, the third call is the first of epoch 2
        def diverging(*args, **kwargs):
            total, breakdown = real(*args, **kwargs)
            calls["n"] += 1
            if calls["n"] > 2:
                breakdown.total = float("inf")
            return total, breakdown

        with mock.patch("eegdg.trainer.compute_losses", side_effect=diverging):
            with self.assertRaises(DivergenceError) as ctx:
                train(sources, TrainConfig(epochs=3))
        self.assertIsNone(ctx.exception.checkpoint)
        self.assertEqual(ctx.exception.diagnostics["epoch"], 2)
        self.assertEqual(ctx.exception.diagnostics["iteration"], 0)

        reference = train(sources, TrainConfig(epochs=1)).model
        state = ctx.exception.state
        for name, p in reference.named_parameters():
            np.testing.assert_array_equal(state[name], p.data)
        for name, b in reference.buffers.items():
            np.testing.assert_array_equal(state["buffer:" + name], b)

    def test_nan_gradient_diagnostics(self):
        sources, _ = small_domains()
        real = losses.compute_losses
        calls = {"n": 0}

        def poisoned(*args, **kwargs):
            total, breakdown = real(*args, **kwargs)
            calls["n"] += 1
            if calls["n"] == 3:
                breakdown.l_clc = 123.0
                total = mul(total, float("nan"))
            return total, breakdown

        with mock.patch("eegdg.trainer.compute_losses", side_effect=poisoned):
            with self.assertRaises(NumericError) as ctx:
                train(sources, TrainConfig(epochs=3))
        self.assertNotIsInstance(ctx.exception, DivergenceError)
        diagnostics = ctx.exception.diagnostics
        self.assertEqual(diagnostics["l_clc"], 123.0)
        self.assertEqual((diagnostics["epoch"], diagnostics["iteration"]), (2, 0))
        self.assertIn("parameter", diagnostics)

    def test_strict_determinism(self):
        session(strict=True)
        sources, _ = small_domains()
        cfg = TrainConfig(epochs=2)
        with tempfile.TemporaryDirectory() as tmp:
            paths = list()
            for i in range(2):
                path = os.path.join(tmp, "metrics_{}.jsonl".format(i))
                train(sources, cfg).log.write_jsonl(path)
                paths.append(path)
            with open(paths[0], "rb") as a, open(paths[1], "rb") as b:
                self.assertEqual(a.read(), b.read())
            reread = MetricsLog.read_jsonl(paths[0])
        self.assertEqual(reread.column("wall_ms"), [0.0, 0.0])

    def test_evaluate_errors(self):
        sources, _ = small_domains()
        model = train(sources, TrainConfig(epochs=1)).model
        with self.assertRaises(ContractError):
            evaluate_on_target(model, DomainDataset(np.zeros((4, 3, 1)), [0] * 4, 5, 4))
        with self.assertRaises(ContractError):
            evaluate_on_target(model, DomainDataset(np.zeros((4, 2, 1)), [0] * 4, 5, 2))
