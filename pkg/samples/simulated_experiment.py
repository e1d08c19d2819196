"""
Simulated multi-source experiment from Python: generate the domains, train, score the targets
and compare with the classical baselines.

Usage:
    $ python3 samples/simulated_experiment.py --epochs 100 --seed 0
"""

import argparse

from eegdg import EegDgSession, SimConfig, TrainConfig, evaluate_on_target, generate, train
from eegdg.evaluation import run_baselines, summarize
from eegdg.core.types import RecordList


def parse_args():
    parser = argparse.ArgumentParser(description="Train on simulated source domains, score the targets.")
    parser.add_argument("--epochs", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--beta",
        type=float,
        nargs=2,
        metavar=("BETA1", "BETA2"),
        default=(0.1, 0.1),
        help="Weights of the marginal and conditional alignment losses.",
    )
    return parser.parse_args()


def main():
    args = parse_args()
    EegDgSession()
    sources, targets = generate(SimConfig(seed=args.seed))
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed, beta1=args.beta[0], beta2=args.beta[1])

    result = train(sources, cfg)
    reports = RecordList([evaluate_on_target(result.model, t) for t in targets])
    print(reports.get_text(fields=["domain_id", "accuracy", "kappa"]))
    print("eegdg: {}".format(summarize(reports)["accuracy"]))
    print(run_baselines(sources, targets, seed=args.seed).get_text())


if __name__ == "__main__":
    main()
