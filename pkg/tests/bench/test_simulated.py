"""
Full length runs on the simulated experiment. Minutes of CPU each, enabled with ``EEGDG_BENCH=1``.
"""

import os
import unittest

from eegdg.cli import ablation_configs
from eegdg.core.config import EegDgConfig
from eegdg.core.session import EegDgSession
from eegdg.evaluation import run_baselines, summarize
from eegdg.simulation import SimConfig, generate
from eegdg.trainer import TrainConfig, alignment_diagnostic, evaluate_on_target, train

BENCH = os.environ.get("EEGDG_BENCH", "") not in ("", "0")


def mean_target_accuracy(model, targets):
    return summarize([evaluate_on_target(model, t) for t in targets])["accuracy_mean"]


@unittest.skipUnless(BENCH, "set EEGDG_BENCH=1 to run the simulated benchmark")
class T(unittest.TestCase):
    def setUp(self):
        EegDgSession.reset(EegDgConfig(config={"general": {"quiet": True}}))

    def test_beats_baselines(self):
        sources, targets = generate(SimConfig())
        result = train(sources, TrainConfig())
        ours = mean_target_accuracy(result.model, targets)

        rows = {row["method"]: row for row in run_baselines(sources, targets)}
        baseline = {
            method: sum(row["target_{}".format(t.domain_id)] for t in targets) / len(targets)
            for method, row in rows.items()
        }
        print("eegdg={:.4f} baselines={}".format(ours, baseline))
        self.assertGreaterEqual(ours, baseline["lda"] + 0.10)
        self.assertGreater(ours, baseline["3nn"])
        self.assertGreater(ours, baseline["linear"])

    def test_alignment_shrinks(self):
        sources, _ = generate(SimConfig())
        cfg = TrainConfig(early_metrics=True)
        result = train(sources, cfg)
        mmd = result.log.column("avg_mmd")
        self.assertLess(mmd[-1], 0.5 * mmd[0])
        self.assertAlmostEqual(alignment_diagnostic(result.model, sources, cfg.kernel), mmd[-1])

    def test_ablation_ordering(self):
        passed = 0
        for seed in range(3):
            sources, targets = generate(SimConfig(seed=seed))
            acc = {
                name: mean_target_accuracy(train(sources, cfg).model, targets)
                for name, cfg in ablation_configs(TrainConfig(seed=seed)).items()
            }
            print("seed={} {}".format(seed, acc))
            if (
                acc["full"] >= max(acc["mir"], acc["cir"])
                and min(acc["mir"], acc["cir"]) >= acc["none"] - 0.02
            ):
                passed += 1
        self.assertGreaterEqual(passed, 2)
