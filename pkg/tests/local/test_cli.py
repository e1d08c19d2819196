import glob
import json
import os
import shutil
import tempfile
import unittest

import numpy as np

from eegdg.cli import ablation_configs, load_experiment, main
from eegdg.core.config import EegDgConfig
from eegdg.core.session import EegDgSession
from eegdg.trainer import TrainConfig

SMALL = {
    "sim.samples_per_class": 4,
    "sim.n_target_domains": 2,
    "train.epochs": 1,
    "model.dense_hidden": 8,
    "model.embedding_dim": 8,
    "train.branch_dim": 4,
}


class T(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.config = os.path.join(self.tmp, "small.json")
        with open(self.config, "w") as f:
            json.dump(SMALL, f)
        self.sim = os.path.join(self.tmp, "sim")

    def tearDown(self):
        shutil.rmtree(self.tmp)
        EegDgSession.reset(EegDgConfig(config={"general": {"quiet": True}}))

    def run_cli(self, *argv):
        return main(list(argv) + ["--config", self.config, "-q"])

    def simulate(self):
        self.assertEqual(self.run_cli("simulate", "--out", self.sim, "--seed", "1"), 0)

    def manifest(self, directory):
        with open(os.path.join(directory, "manifest.json")) as f:
            return json.load(f)

    def test_simulate(self):
        self.simulate()
        self.assertEqual(len(glob.glob(os.path.join(self.sim, "source_*.edg1"))), 3)
        self.assertEqual(len(glob.glob(os.path.join(self.sim, "target_*.edg1"))), 2)
        manifest = self.manifest(self.sim)
        self.assertEqual(manifest["command"], "simulate")
        self.assertEqual(manifest["seed"], 1)
        self.assertEqual(manifest["config"]["sim.seed"], 1)
        self.assertEqual(manifest["config"]["train.epochs"], 1)
        self.assertGreaterEqual(manifest["duration_s"], 0.0)

    def test_train_evaluate_export(self):
        self.simulate()
        sources = os.path.join(self.sim, "source_*.edg1")
        targets = sorted(glob.glob(os.path.join(self.sim, "target_*.edg1")))
        run = os.path.join(self.tmp, "run")

        self.assertEqual(self.run_cli("train", "--domains", sources, "--targets", *targets, "--out", run), 0)
        checkpoint = os.path.join(run, "checkpoint.edgm")
        self.assertTrue(os.path.isfile(checkpoint))
        with open(os.path.join(run, "metrics.jsonl")) as f:
            record = json.loads(f.readline())
        self.assertIn("target_acc", record)
        manifest = self.manifest(run)
        self.assertEqual(len(manifest["inputs"]), 5)
        self.assertIn("final_target_acc", manifest)

        evaluation = os.path.join(self.tmp, "eval")
        self.assertEqual(self.run_cli("evaluate", checkpoint, "--targets", *targets, "--out", evaluation), 0)
        with open(os.path.join(evaluation, "evaluation.json")) as f:
            result = json.load(f)
        self.assertEqual([t["domain_id"] for t in result["targets"]], [3, 4])
        self.assertEqual(result["summary"]["n_reports"], 2)

        features = os.path.join(self.tmp, "features")
        self.assertEqual(
            self.run_cli("export", checkpoint, "--domains", sources, "--targets", *targets,
                         "--stage", "fused", "--out", features),
            0,
        )
        with open(os.path.join(features, "features_fused.csv")) as f:
            self.assertEqual(len(f.read().splitlines()), 1 + 5 * 16)

    def test_baselines(self):
        self.simulate()
        out = os.path.join(self.tmp, "baselines")
        targets = sorted(glob.glob(os.path.join(self.sim, "target_*.edg1")))
        code = self.run_cli("baselines", "--domains", os.path.join(self.sim, "source_*.edg1"),
                            "--targets", *targets, "-k", "1", "--out", out)
        self.assertEqual(code, 0)
        with open(os.path.join(out, "baselines.json")) as f:
            rows = json.load(f)
        self.assertEqual([r["method"] for r in rows], ["1nn", "lda", "linear"])

    def test_ablate(self):
        self.simulate()
        out = os.path.join(self.tmp, "ablation")
        targets = sorted(glob.glob(os.path.join(self.sim, "target_*.edg1")))
        code = self.run_cli("ablate", "--domains", os.path.join(self.sim, "source_*.edg1"),
                            "--targets", *targets, "--out", out)
        self.assertEqual(code, 0)
        with open(os.path.join(out, "ablation.json")) as f:
            rows = json.load(f)
        self.assertEqual([r["variant"] for r in rows], ["none", "mir", "cir", "full"])
        self.assertTrue(all("target_acc" in r for r in rows))
        for name in ("none", "full"):
            self.assertEqual(self.manifest(os.path.join(out, name))["command"], "ablate:" + name)

    def test_preprocess(self):
        rng = np.random.default_rng(0)
        raw = os.path.join(self.tmp, "raw.npz")
        np.savez(
            raw,
            samples=rng.normal(size=(2, 12000)),
            sample_rate_hz=250.0,
            onsets=np.arange(9) * 1200 + 200,
            labels=np.arange(9) % 2,
        )
        out = os.path.join(self.tmp, "domains")
        self.assertEqual(self.run_cli("preprocess", raw, "--out", out), 0)
        self.assertEqual(len(glob.glob(os.path.join(out, "domain_*.edg1"))), 3)
        self.assertIn(raw, self.manifest(out)["inputs"])

        self.assertEqual(self.run_cli("preprocess", raw, "--as-target", "--domain-id", "7", "--out", out), 0)
        self.assertTrue(os.path.isfile(os.path.join(out, "target_07.edg1")))

        self.assertEqual(self.run_cli("preprocess", raw, "--as-target", "--out", out), 0)
        self.assertTrue(os.path.isfile(os.path.join(out, "target_03.edg1")))

        with open(self.config, "w") as f:
            json.dump(dict(SMALL, **{"signal.protocol": "sessions"}), f)
        self.assertEqual(self.run_cli("preprocess", raw, "--as-target", "--out", out), 2)
        self.assertEqual(
            self.run_cli("preprocess", raw, "--as-target", "--domain-id", "5", "--out", out), 0
        )
        self.assertTrue(os.path.isfile(os.path.join(out, "target_05.edg1")))

    def test_exit_codes(self):
        with open(self.config, "w") as f:
            json.dump({"train.learning_rate": 0.1}, f)
        self.assertEqual(self.run_cli("simulate", "--out", self.sim), 2)

        with open(self.config, "w") as f:
            json.dump({"sim.n_classes": 0}, f)
        self.assertEqual(self.run_cli("simulate", "--out", self.sim), 2)

        for bad_value in (
            {"train.clip_norm": "five"},
            {"train.loss_floor": "low"},
            {"model.temporal_kernel_lengths": ["a"]},
            {"model.temporal_kernel_lengths": 16},
        ):
            with open(self.config, "w") as f:
                json.dump(bad_value, f)
            self.assertEqual(self.run_cli("simulate", "--out", self.sim), 2, bad_value)

        with open(self.config, "w") as f:
            json.dump(SMALL, f)
        missing = os.path.join(self.tmp, "nothing_*.edg1")
        self.assertEqual(self.run_cli("baselines", "--domains", missing, "--targets", missing), 1)

        bad = os.path.join(self.tmp, "bad.edg1")
        with open(bad, "wb") as f:
            f.write(b"XXXX" + b"\0" * 40)
        self.assertEqual(self.run_cli("evaluate", bad, "--targets", bad, "--out", self.tmp), 1)

        with self.assertRaises(SystemExit) as ctx:
            main(["train", "--out", self.tmp])
        self.assertEqual(ctx.exception.code, 2)

    def test_load_experiment(self):
        experiment = load_experiment(self.config, seed=9)
        self.assertEqual(experiment["train"].epochs, 1)
        self.assertEqual(experiment["train"].model.dense_hidden, 8)
        self.assertEqual({cfg.seed for cfg in experiment.values()}, {9})

    def test_ablation_configs(self):
        variants = ablation_configs(TrainConfig(), single_scale=True)
        self.assertEqual(list(variants), ["none", "mir", "cir", "full", "single_scale"])
        self.assertEqual((variants["none"].beta1, variants["none"].beta2), (0.0, 0.0))
        self.assertEqual((variants["mir"].beta1, variants["mir"].beta2), (0.1, 0.0))
        self.assertEqual((variants["cir"].beta1, variants["cir"].beta2), (0.0, 0.1))
        self.assertEqual(variants["single_scale"].model.temporal_kernel_lengths, [16])
        self.assertEqual(TrainConfig().model.temporal_kernel_lengths, [16, 32, 64, 128])
