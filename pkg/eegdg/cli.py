# -*- coding: utf-8 -*-
"""
Command line interface. Entry point `main`, installed as the ``eegdg`` console script.

Sub-commands::

    eegdg simulate   --out sim/
    eegdg preprocess subject01_T.npz --out domains/
    eegdg train      --domains 'sim/source_*.edg1' --targets sim/target_*.edg1 --out run/
    eegdg evaluate   run/checkpoint.edgm --targets sim/target_*.edg1 --out eval/
    eegdg baselines  --domains 'sim/source_*.edg1' --targets sim/target_*.edg1 --out baselines/
    eegdg export     run/checkpoint.edgm --domains 'sim/source_*.edg1' --targets sim/target_*.edg1 --out features/
    eegdg ablate     --domains 'sim/source_*.edg1' --targets sim/target_*.edg1 --out ablation/

Every command writes a ``manifest.json`` in its output directory. Errors are reported on a single
line ``error=<ClassName> message=<text>``; the exit code is 2 for configuration and argument errors,
1 for other failures.
"""

import argparse
import copy
import glob
import json
import logging
import os
import sys

from .__version__ import __version__
from .core.config import EegDgConfig, apply_dotted, load_json_config
from .core.errors import ConfigurationError, EegDgError
from .core.session import EegDgSession
from .core.types import RecordDict, RecordList
from .core.utils import elapsed_seconds, file_digest, now_iso
from .evaluation import export_features, run_baselines, summarize, STAGES
from .model import load_checkpoint
from .signal import (
    SignalConfig,
    build_domains,
    load_domain_file,
    load_raw_recording,
    preprocess,
    save_domain_file,
)
from .simulation import SimConfig, generate
from .trainer import TrainConfig, evaluate_on_target, train

log = logging.getLogger("eegdg")

MANIFEST_NAME = "manifest.json"
METRICS_NAME = "metrics.jsonl"


class RunManifest(RecordDict):
    """
    Self description of an output directory: command, resolved config echo, seed,
    sha256 digests of the inputs, tool version, start and end timestamps.
    """

    def __init__(self, command, config, seed):
        super().__init__(
            {
                "command": command,
                "config": config,
                "seed": seed,
                "inputs": {},
                "version": __version__,
                "started": now_iso(),
                "finished": None,
            }
        )

    def add_inputs(self, paths):
        for path in paths:
            self["inputs"][path] = file_digest(path)

    def write(self, out_dir):
        self["finished"] = now_iso()
        self["duration_s"] = elapsed_seconds(self["started"], self["finished"])
        path = os.path.join(out_dir, MANIFEST_NAME)
        with open(path, "w") as f:
            f.write(self.json)
        log.info("Manifest written to {}".format(path))
        return path


class _ArgumentParser(argparse.ArgumentParser):
    """Argument errors reported like every other error."""

    def error(self, message):
        sys.stderr.write("error=ArgumentError message={}\n".format(message))
        sys.exit(2)


def _common_options():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment config, JSON object with dotted keys.")
    common.add_argument("--seed", type=int, help="Seed of the generator, the split and the training.")
    common.add_argument("--out", default=".", help="Output directory. Default: current directory.")
    common.add_argument(
        "--strict-determinism",
        action="store_true",
        help="Run every parallel section serially and record zero timings.",
    )
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging.")
    common.add_argument("--quiet", "-q", action="store_true", help="Errors only, no progress bars.")
    common.add_argument("--logfile", help="Also log to this file.")
    return common


def build_parser():
    common = _common_options()
    parser = _ArgumentParser(
        prog="eegdg",
        description="Multi-source domain generalization for motor-imagery EEG.",
    )
    parser.add_argument("--version", action="version", version="eegdg " + __version__)
    commands = parser.add_subparsers(dest="command", metavar="command", parser_class=_ArgumentParser)
    commands.required = True

    p = commands.add_parser("simulate", parents=[common], help="Generate simulated source and target domains.")
    p.set_defaults(func=cmd_simulate)

    p = commands.add_parser("preprocess", parents=[common], help="Filter, crop, scale and split a raw recording.")
    p.add_argument("raw", help="Recording converted to .npz.")
    p.add_argument(
        "--as-target",
        action="store_true",
        help="Write the whole recording as one target domain instead of splitting it.",
    )
    p.add_argument(
        "--domain-id",
        type=int,
        default=None,
        help="Domain id of the target file. Defaults to signal.n_domains with the split protocol, "
        "mandatory with the sessions protocol.",
    )
    p.set_defaults(func=cmd_preprocess)

    p = commands.add_parser("train", parents=[common], help="Train on source domains.")
    p.add_argument("--domains", required=True, help="Glob of the source EDG1 files.")
    p.add_argument(
        "--targets",
        nargs="*",
        default=[],
        help="Target EDG1 files scored after every epoch, for reporting only.",
    )
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("evaluate", parents=[common], help="Score a checkpoint on target domains.")
    p.add_argument("checkpoint")
    p.add_argument("--targets", nargs="+", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("baselines", parents=[common], help="kNN, LDA and linear SVM baselines.")
    p.add_argument("--domains", required=True, help="Glob of the source EDG1 files.")
    p.add_argument("--targets", nargs="+", required=True)
    p.add_argument("-k", type=int, default=3, help="Neighbours of the kNN baseline. Default: 3.")
    p.set_defaults(func=cmd_baselines)

    p = commands.add_parser("export", parents=[common], help="Export features and their PCA projection as CSV.")
    p.add_argument("checkpoint")
    p.add_argument("--domains", required=True, help="Glob of the source EDG1 files.")
    p.add_argument("--targets", nargs="*", default=[])
    p.add_argument("--stage", choices=STAGES, default="branch")
    p.set_defaults(func=cmd_export)

    p = commands.add_parser("ablate", parents=[common], help="Train the none/mir/cir/full variants.")
    p.add_argument("--domains", required=True, help="Glob of the source EDG1 files.")
    p.add_argument("--targets", nargs="*", default=[])
    p.add_argument(
        "--single-scale",
        action="store_true",
        help="Add a variant with a single temporal kernel length and no alignment loss.",
    )
    p.set_defaults(func=cmd_ablate)
    return parser


def load_experiment(config_path=None, seed=None):
    """
    Default experiment configs updated with the JSON file and the seed flag.

    Returns:
        `dict` with ``train``, ``sim`` and ``signal`` config objects.
    """
    train_cfg = TrainConfig()
    experiment = {"train": train_cfg, "sim": SimConfig(), "signal": SignalConfig()}
    if config_path:
        flat = load_json_config(config_path)
        apply_dotted(dict(experiment, model=train_cfg.model), flat)
        log.info("Config {} applied: {} keys".format(config_path, len(flat)))
    if seed is not None:
        for cfg in experiment.values():
            cfg.seed = seed
    return experiment


def config_echo(experiment):
    echo = dict()
    for prefix, cfg in experiment.items():
        for key, value in cfg.to_dict().items():
            echo["{}.{}".format(prefix, key)] = value
    return echo


def _resolve(pattern):
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise FileNotFoundError("No file matches {}".format(pattern))
    return paths


def _load(paths):
    return [load_domain_file(p) for p in paths]


def _start(args, command, experiment, inputs=()):
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(command, config_echo(experiment), experiment["train"].seed)
    manifest["strict_determinism"] = EegDgSession().strict
    manifest.add_inputs(inputs)
    return manifest


def cmd_simulate(args, experiment):
    cfg = experiment["sim"].validate()
    manifest = _start(args, "simulate", experiment)
    sources, targets = generate(cfg)
    written = list()
    for kind, domains in (("source", sources), ("target", targets)):
        for i, ds in enumerate(domains):
            path = os.path.join(args.out, "{}_{:02d}.edg1".format(kind, i))
            save_domain_file(ds, path)
            written.append(path)
    manifest["outputs"] = written
    manifest.write(args.out)
    log.info("{} source and {} target domains written to {}".format(len(sources), len(targets), args.out))


def _target_domain_id(args, cfg):
    if args.domain_id is not None:
        return args.domain_id
    if cfg.protocol == "sessions":
        # source ids follow the sessions of another recording
        raise ConfigurationError(
            "--domain-id is required for a target with the sessions protocol",
            key="domain_id",
        )
    return cfg.n_domains


def cmd_preprocess(args, experiment):
    cfg = experiment["signal"].validate()
    manifest = _start(args, "preprocess", experiment, [args.raw])
    rec = load_raw_recording(args.raw)
    written = list()
    if args.as_target:
        ds = preprocess(rec, cfg)
        ds.domain_id = _target_domain_id(args, cfg)
        domains = [("target", ds)]
    else:
        domains = [("domain", ds) for ds in build_domains(rec, cfg)]
    for kind, ds in domains:
        path = os.path.join(args.out, "{}_{:02d}.edg1".format(kind, ds.domain_id))
        save_domain_file(ds, path)
        written.append(path)
    manifest["outputs"] = written
    manifest.write(args.out)


def _mean_accuracy(model, targets):
    reports = RecordList(targets).perform(
        lambda target: evaluate_on_target(model, target), asynch=True
    )
    return summarize(reports)["accuracy_mean"]


def _target_callback(targets):
    if not targets:
        return None
    return lambda epoch, model: _mean_accuracy(model, targets)


def _fit(domains, cfg, out_dir, targets):
    """Train in `out_dir`, write the metrics log. Returns the `TrainResult`."""
    result = train(domains, cfg, out_dir=out_dir, epoch_callback=_target_callback(targets))
    result.log.write_jsonl(os.path.join(out_dir, METRICS_NAME))
    return result


def cmd_train(args, experiment):
    paths = _resolve(args.domains)
    manifest = _start(args, "train", experiment, paths + list(args.targets))
    domains = _load(paths)
    targets = _load(args.targets)
    result = _fit(domains, experiment["train"], args.out, targets)
    manifest["outputs"] = [result.checkpoint, os.path.join(args.out, METRICS_NAME)]
    if targets:
        # Reported, never used to pick the model
        manifest["final_target_acc"] = result.final_target_acc
        manifest["max_target_acc"] = result.max_target_acc
    manifest.write(args.out)


def cmd_evaluate(args, experiment):
    manifest = _start(args, "evaluate", experiment, [args.checkpoint] + list(args.targets))
    model, trained_with = load_checkpoint(args.checkpoint)
    manifest["trained_with"] = trained_with
    reports = RecordList(_load(args.targets)).perform(
        lambda target: evaluate_on_target(model, target), asynch=True
    )
    reports = RecordList(reports)
    summary = summarize(reports)
    path = os.path.join(args.out, "evaluation.json")
    with open(path, "w") as f:
        json.dump(
            {"targets": [dict(r) for r in reports], "summary": dict(summary)},
            f,
            indent=4,
            cls=RecordDict.JSONEncoder,
        )
    print(reports.get_text(fields=["domain_id", "accuracy", "kappa", "n_samples"]))
    print("Mean: accuracy={} kappa={}".format(summary["accuracy"], summary["kappa"]))
    manifest["outputs"] = [path]
    manifest.write(args.out)


def cmd_baselines(args, experiment):
    paths = _resolve(args.domains)
    manifest = _start(args, "baselines", experiment, paths + list(args.targets))
    table = run_baselines(
        _load(paths), _load(args.targets), k=args.k, seed=experiment["train"].seed
    )
    path = os.path.join(args.out, "baselines.json")
    with open(path, "w") as f:
        f.write(table.json)
    print(table.get_text())
    manifest["outputs"] = [path]
    manifest.write(args.out)


def cmd_export(args, experiment):
    paths = _resolve(args.domains)
    manifest = _start(args, "export", experiment, [args.checkpoint] + paths + list(args.targets))
    model, _ = load_checkpoint(args.checkpoint)
    path = os.path.join(args.out, "features_{}.csv".format(args.stage))
    export_features(model, _load(paths), _load(args.targets), path, stage=args.stage)
    manifest["outputs"] = [path]
    manifest.write(args.out)


ABLATIONS = {
    "none": dict(beta1=0.0, beta2=0.0),
    "mir": dict(beta2=0.0),
    "cir": dict(beta1=0.0),
    "full": dict(),
}


def ablation_configs(base, single_scale=False):
    """`dict` of variant name -> `TrainConfig`."""
    variants = dict()
    for name, changes in ABLATIONS.items():
        cfg = copy.deepcopy(base)
        for key, value in changes.items():
            setattr(cfg, key, value)
        variants[name] = cfg
    if single_scale:
        cfg = copy.deepcopy(base)
        cfg.beta1 = cfg.beta2 = 0.0
        cfg.model.temporal_kernel_lengths = cfg.model.temporal_kernel_lengths[:1]
        cfg.model.block2_kernel_lengths = cfg.model.block2_kernel_lengths[:1]
        variants["single_scale"] = cfg
    return variants


def cmd_ablate(args, experiment):
    paths = _resolve(args.domains)
    manifest = _start(args, "ablate", experiment, paths + list(args.targets))
    domains = _load(paths)
    targets = _load(args.targets)

    summary = RecordList()
    for name, cfg in ablation_configs(experiment["train"], args.single_scale).items():
        out_dir = os.path.join(args.out, name)
        os.makedirs(out_dir, exist_ok=True)
        variant = RunManifest("ablate:" + name, config_echo(dict(experiment, train=cfg)), cfg.seed)
        variant.add_inputs(paths + list(args.targets))
        log.info("Ablation variant {}: beta1={} beta2={}".format(name, cfg.beta1, cfg.beta2))
        result = train(domains, cfg, out_dir=out_dir)
        result.log.write_jsonl(os.path.join(out_dir, METRICS_NAME))
        row = RecordDict({"variant": name, "beta1": cfg.beta1, "beta2": cfg.beta2})
        if targets:
            row["target_acc"] = _mean_accuracy(result.model, targets)
            variant["target_acc"] = row["target_acc"]
        variant.write(out_dir)
        summary.append(row)

    path = os.path.join(args.out, "ablation.json")
    with open(path, "w") as f:
        f.write(summary.json)
    print(summary.get_text())
    manifest["outputs"] = [path] + [os.path.join(args.out, r["variant"]) for r in summary]
    manifest.write(args.out)


def _report(error, key=None):
    message = " ".join(str(error).split())
    line = "error={} message={}".format(type(error).__name__, message)
    if key:
        line += " key={}".format(key)
    sys.stderr.write(line + "\n")


def main(argv=None):
    """
    Run the command line.

    Returns:
        `int` exit code
    """
    args = build_parser().parse_args(argv)

    overrides = dict()
    if args.verbose:
        overrides["verbose"] = True
    if args.quiet:
        overrides["quiet"] = True
    if args.logfile:
        overrides["logfile"] = args.logfile
    if args.strict_determinism:
        overrides["strict_determinism"] = True

    try:
        EegDgSession.reset(EegDgConfig(config={"general": overrides}))
        experiment = load_experiment(args.config, args.seed)
        args.func(args, experiment)
    except ConfigurationError as e:
        _report(e, e.key)
        return 2
    except EegDgError as e:
        _report(e)
        return 1
    except OSError as e:
        sys.stderr.write("error=OSError message={}\n".format(" ".join(str(e).split())))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
