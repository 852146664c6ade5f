"""Command line entry point: ``eigenba {train,attack,ablate,report}``."""

import argparse
import json
import sys
from pathlib import Path

from . import scenarios
from .attacks import AttackConfig
from .campaign import (
    METHODS,
    Campaign,
    emit_ablation,
    emit_report,
    reaggregate,
    run_ablation,
    run_campaign,
    select_attack_set,
)
from .data import load_csv_dataset, load_idx_dataset, make_blob_dataset, make_pattern_dataset
from .errors import ArgumentError
from .net import TrainConfig, build_mlp, load_model, save_model, sgd_train

SPLITS = {"a": 0, "b": 1, "test": 2}
SPLIT_FRACTIONS = [0.4, 0.4, 0.2]


def load_dataset(spec, split="all", split_seed=1):
    """``patterns[:seed]``, ``blobs[:seed]``, a CSV file or ``images.idx,labels.idx``."""
    name, _, seed = spec.partition(":")
    if name in ("patterns", "blobs"):
        seed = int(seed or 0)
        if name == "patterns":
            data = make_pattern_dataset(scenarios.CLASSES, scenarios.SIDE, 300, seed=seed)
        else:
            data = make_blob_dataset(3, 16, 200, seed=seed)
    elif "," in spec:
        images, labels = spec.split(",", 1)
        data = load_idx_dataset(images, labels)
    else:
        data = load_csv_dataset(spec)
    if split == "all":
        return data
    return data.split(SPLIT_FRACTIONS, seed=split_seed)[SPLITS[split]]


def _numbers(value, kind):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return [kind(v) for v in value]
    except (TypeError, ValueError):
        raise ArgumentError(f"expected a comma separated list, got {value!r}") from None


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise ArgumentError(f"--{name.replace('_', '-')} is required")


def _dataset_options(p):
    p.add_argument("--dataset", help="patterns[:seed], blobs[:seed], a CSV file or images.idx,labels.idx")
    p.add_argument("--split", choices=["all", *SPLITS], default="all")
    p.add_argument("--split-seed", type=int, default=1)


def _attack_options(p):
    p.add_argument("--model", help="attacked model file")
    _dataset_options(p)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--l2-cap", type=float)
    p.add_argument("--targeted", action="store_true", default=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--initial-check", action="store_true", default=False)
    p.add_argument("--out", help="report directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="eigenba")
    parser.add_argument("--config", help="JSON file of option defaults; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit and save a model")
    _dataset_options(p)
    p.add_argument("--hidden", default="128,64", help="hidden layer sizes")
    p.add_argument("--representation", type=int, help="layer index of h (default: last hidden relu)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="model file to write")

    p = sub.add_parser("attack", help="run one campaign")
    _attack_options(p)
    p.add_argument("--method", choices=METHODS, default="eigenba")
    p.add_argument("--surrogate", help="surrogate model file")
    p.add_argument("--dct-fraction", type=float, default=0.125)

    p = sub.add_parser("ablate", help="reserve-rate sweep of EigenBA")
    _attack_options(p)
    p.add_argument("--rates", default="1.0,0.5,0.3,0.1")
    p.add_argument("--zero-seed", type=int, default=0)

    p = sub.add_parser("report", help="re-aggregate stored outcomes")
    p.add_argument("outcomes", nargs="?", help="outcomes.jsonl file")
    p.add_argument("--out", help="directory for the re-aggregated report")
    return parser, sub.choices


def parse(argv):
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(config, dict):
            raise ArgumentError(f"{args.config}: expected a JSON object")
        config = {k.replace("-", "_"): v for k, v in config.items()}
        known = {a.dest for a in commands[args.command]._actions}
        unknown = sorted(set(config) - known - {"help"})
        if unknown:
            raise ArgumentError(f"{args.config}: unknown option(s) {', '.join(unknown)}")
        commands[args.command].set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def cmd_train(args):
    _need(args, "dataset", "out")
    data = load_dataset(args.dataset, args.split, args.split_seed)
    hidden = _numbers(args.hidden, int)
    sizes = [data.X.shape[1]] + hidden + [data.class_count]
    flat = 1 if len(data.input_shape) > 1 else 0
    rep = args.representation if args.representation is not None else flat + 2 * len(hidden)
    model = build_mlp(sizes, rep, seed=args.seed, input_shape=data.input_shape)
    model, report = sgd_train(model, data.X, data.y, TrainConfig(args.lr, args.epochs, args.batch, args.seed))
    model.metadata.update(dataset=args.dataset, split=args.split, train_accuracy=report.train_accuracy)
    save_model(model, args.out)
    print(json.dumps({"model": str(args.out), "train_accuracy": report.train_accuracy}))


def _campaign_inputs(args):
    _need(args, "model", "dataset")
    model = load_model(args.model)
    data = load_dataset(args.dataset, args.split, args.split_seed)
    config = AttackConfig(args.alpha, args.k, args.budget, args.l2_cap, args.seed)
    items = select_attack_set(model, data, args.count, seed=args.seed, targeted=args.targeted)
    return model, config, items


def cmd_attack(args):
    model, config, items = _campaign_inputs(args)
    surrogate = load_model(args.surrogate) if args.surrogate else None
    campaign = Campaign(
        model, args.method, config, items, surrogate=surrogate,
        dct_fraction=args.dct_fraction, initial_check=args.initial_check, workers=args.workers,
    )
    report = run_campaign(campaign)
    if args.out:
        emit_report(report, args.out, items, campaign.outcomes, config)
    print(json.dumps(report.to_dict(), sort_keys=True))


def cmd_ablate(args):
    model, config, items = _campaign_inputs(args)
    rates = _numbers(args.rates, float)
    rows = run_ablation(
        model, rates, config, items, zero_seed=args.zero_seed,
        initial_check=args.initial_check, workers=args.workers,
    )
    if args.out:
        emit_ablation(rows, args.out)
    for rate, report, _ in rows:
        print(json.dumps({"reserve_rate": rate, **report.to_dict()}, sort_keys=True))


def cmd_report(args):
    _need(args, "outcomes")
    report, config = reaggregate(args.outcomes)
    if args.out:
        emit_report(report, args.out, config=config)
    print(json.dumps(report.to_dict(), sort_keys=True))


COMMANDS = {"train": cmd_train, "attack": cmd_attack, "ablate": cmd_ablate, "report": cmd_report}


def main(argv=None):
    try:
        args = parse(argv)
        COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"eigenba: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
