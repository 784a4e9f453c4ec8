"""Command-line front end.

Commands: transform, evaluate, train, calibrate, mitigate, pbsmt, report.
Every run writes its resolved configuration into the output directory so it
can be reproduced exactly. Exit codes: 0 success, 1 usage/config error,
2 data error, 3 provider/contract error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import corpus, gradient, lexical, metrics, mitigate, pbsmt, providers, toyclf
from .errors import (ConfigError, DataError, ProviderError, SaladBenchError)

log = logging.getLogger("saladbench")

SHUFFLE_SEEDS = (0, 1, 2, 3, 4)


def _add_dataset_args(p):
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--format", default="tsv", choices=["tsv", "jsonl"])
    p.add_argument("--task", required=True, choices=["single", "pair"])
    p.add_argument("--labels", required=True,
                   help="comma-separated label names, dataset order")
    p.add_argument("--default-label", default=None,
                   help="default label name for copy-based agreement")


def _add_provider_args(p):
    p.add_argument("--model", help="embedded toy model params file")
    p.add_argument("--replay", help="replay predictions JSONL (append ,saliency.jsonl)")
    p.add_argument("--url", help="HTTP provider base URL")


def _label_set(args) -> corpus.LabelSet:
    names = tuple(s.strip() for s in args.labels.split(","))
    default = names.index(args.default_label) if args.default_label else None
    return corpus.LabelSet(names, default)


def _load(args) -> corpus.Dataset:
    return corpus.load_dataset(args.data, args.format, _label_set(args), args.task)


def _provider(args, ds=None):
    if args.model:
        return providers.EmbeddedProvider(toyclf.load_params(args.model))
    if args.replay:
        parts = args.replay.split(",", 1)
        return providers.ReplayProvider(parts[0], parts[1] if len(parts) > 1 else None)
    if args.url:
        return providers.HttpProvider(args.url, supports_saliency=True)
    raise ConfigError("one of --model / --replay / --url is required")


def _write_resolved_config(args, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(resolved, f, indent=2, sort_keys=True, default=str)


def _transform_once(ds, kind, seed, args, provider, generators):
    """Transform every example of ds with one kind; returns (examples, meta)."""
    spec_kwargs = dict(kind=kind, seed=seed, r=args.r)
    examples, meta = [], {}
    vocab = None
    scores = None
    if kind in lexical.GRADIENT_KINDS:
        if provider is None or not provider.supports_saliency:
            raise ConfigError(f"{kind} requires a saliency-capable provider")
        if kind == "copyone" and hasattr(provider, "saliency_side"):
            old = provider.saliency_side
            provider.saliency_side = "a"
            scores = provider.saliency_batch(ds.examples)
            provider.saliency_side = old
        else:
            scores = provider.saliency_batch(ds.examples)
        vocab = sorted({t.surface for ex in ds.examples
                        for t in corpus.tokenize(ex.input.text_a)} |
                       {t.surface for ex in ds.examples if ex.input.text_b
                        for t in corpus.tokenize(ex.input.text_b)})
    for i, ex in enumerate(ds.examples):
        spec = lexical.TransformSpec(**spec_kwargs)
        if kind in lexical.LEXICAL_KINDS:
            tx = lexical.apply_lexical(ex, spec)
        elif kind in lexical.GRADIENT_KINDS:
            tx = gradient.apply_gradient(ex, spec, scores[i], vocab=vocab)
        else:
            tx = pbsmt.generate_invalid(ex, generators, ds.task_kind, spec)
        examples.append(tx.example)
        meta[ex.id] = (tx.source_id, tx.transform.tag())
    return examples, meta


def cmd_transform(args) -> int:
    ds = _load(args)
    _write_resolved_config(args, args.out)
    kinds = [k.strip() for k in args.transforms.split(",")]
    if "all" in kinds:
        kinds = list(lexical.ALL_KINDS)
    provider = None
    if any(k in lexical.GRADIENT_KINDS for k in kinds) and \
            (args.model or args.replay or args.url):
        provider = _provider(args)
    generators = {}
    if "pbsmt" in kinds and args.pbsmt_dir:
        for name in sorted(os.listdir(args.pbsmt_dir)):
            sub = os.path.join(args.pbsmt_dir, name)
            if os.path.isdir(sub):
                gen = pbsmt.load_generator(sub)
                generators[gen.label] = gen
    skipped = []
    for kind in kinds:
        if kind in lexical.PAIR_ONLY_KINDS and ds.task_kind != "pair":
            skipped.append((kind, "pair-only transform"))
            continue
        if kind in lexical.GRADIENT_KINDS and provider is None:
            skipped.append((kind, "no saliency provider"))
            continue
        if kind == "pbsmt" and not generators:
            skipped.append((kind, "no trained generators (--pbsmt-dir)"))
            continue
        seeds = SHUFFLE_SEEDS if kind == "shuffle" else (args.seed,)
        for seed in seeds:
            examples, meta = _transform_once(ds, kind, seed, args, provider, generators)
            out_ds = corpus.Dataset(tuple(examples), ds.labels, ds.task_kind)
            suffix = f"_{seed}" if kind == "shuffle" else ""
            path = os.path.join(args.out, f"{kind}{suffix}.tsv")
            corpus.save_dataset(out_ds, path, "tsv", transform_meta=meta)
            print(f"wrote {path} ({len(examples)} rows)")
    for kind, why in skipped:
        print(f"skipped {kind}: {why}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    ds = _load(args)
    _write_resolved_config(args, args.out)
    provider = _provider(args)
    labels = ds.labels
    preds_orig = provider.predict_batch(ds.examples)
    kinds = [k.strip() for k in args.transforms.split(",")]
    if "all" in kinds:
        kinds = list(lexical.ALL_KINDS)
    generators = {}
    if "pbsmt" in kinds and args.pbsmt_dir:
        for name in sorted(os.listdir(args.pbsmt_dir)):
            sub = os.path.join(args.pbsmt_dir, name)
            if os.path.isdir(sub):
                gen = pbsmt.load_generator(sub)
                generators[gen.label] = gen
    rows = []
    for kind in kinds:
        if kind in lexical.PAIR_ONLY_KINDS and ds.task_kind != "pair":
            print(f"{kind}: -- (not defined for single-input tasks)")
            continue
        if kind in lexical.GRADIENT_KINDS and not provider.supports_saliency:
            print(f"skipped {kind}: provider lacks saliency", file=sys.stderr)
            continue
        if kind == "pbsmt" and not generators:
            print("skipped pbsmt: no trained generators", file=sys.stderr)
            continue
        seeds = SHUFFLE_SEEDS if kind == "shuffle" else (args.seed,)
        per_seed = []
        confs = []
        n = 0
        for seed in seeds:
            examples, _ = _transform_once(ds, kind, seed, args, provider, generators)
            preds = provider.predict_batch(examples)
            if kind in lexical.PAIR_ONLY_KINDS:
                agr = metrics.default_agreement(preds, labels.default_label)
            else:
                agr = metrics.agreement(preds_orig, preds)
            per_seed.append(agr)
            confs.append(metrics.mean_confidence(preds))
            n = len(preds)
        rows.append(metrics.MetricsRow(
            kind, sum(per_seed) / len(per_seed), sum(confs) / len(confs), n,
            per_seed=tuple(per_seed) if kind == "shuffle" else ()))
    ece_value = None
    if all(ex.gold_label is not None for ex in ds.examples):
        ece_value = metrics.ece(preds_orig,
                                [ex.gold_label for ex in ds.examples])
    report = metrics.build_report(rows, labels.n_classes, ece_value,
                                  provenance={"provider": vars(provider.describe()),
                                              "seed": args.seed,
                                              "data": args.data})
    for name, text in (("report.json", report.to_json()),
                       ("report.csv", report.to_csv()),
                       ("report.md", report.to_markdown())):
        with open(os.path.join(args.out, name), "w", encoding="utf-8") as f:
            f.write(text)
    print(report.to_markdown())
    return 0


def cmd_train(args) -> int:
    ds = _load(args)
    _write_resolved_config(args, args.out)
    loss_cfg = toyclf.LossConfig(args.loss, lambda_ls=args.lambda_ls,
                                 gamma=args.gamma)
    train_cfg = toyclf.TrainConfig(args.epochs, args.batch_size, args.lr,
                                   args.seed, args.dim)
    params = toyclf.train(ds, loss_cfg, train_cfg)
    path = os.path.join(args.out, "params.bin")
    toyclf.save_params(params, path, meta={"loss": args.loss, "seed": args.seed,
                                           "epochs": args.epochs, "data": args.data})
    acc = toyclf.accuracy(params, ds)
    print(f"trained {path}; train accuracy {100 * acc:.2f}%")
    return 0


def cmd_calibrate(args) -> int:
    ds = _load(args)
    _write_resolved_config(args, args.out)
    params = toyclf.load_params(args.model)
    provider = providers.EmbeddedProvider(params)
    gold = [ex.gold_label for ex in ds.examples]
    pre = metrics.ece(provider.predict_batch(ds.examples), gold)
    t = toyclf.fit_temperature(params, ds)
    scaled = toyclf.with_temperature(params, t)
    post = metrics.ece(providers.EmbeddedProvider(scaled).predict_batch(ds.examples), gold)
    path = os.path.join(args.out, "params_scaled.bin")
    toyclf.save_params(scaled, path, meta={"temperature": t, "data": args.data})
    print(f"fitted T = {t:.2f}; ECE {pre:.4f} -> {post:.4f}; wrote {path}")
    return 0


def cmd_mitigate(args) -> int:
    ds = _load(args)
    _write_resolved_config(args, args.out)
    kinds = tuple(k.strip() for k in args.transforms.split(","))
    if "all" in kinds:
        kinds = lexical.ALL_KINDS
    cfg = mitigate.MitigationConfig(
        strategy=args.strategy.replace("-", "_"), lambda_ent=args.lambda_ent,
        augment_fraction=args.augment_fraction, transforms=kinds,
        accuracy_tolerance=args.tolerance, seed=args.seed)
    train_cfg = toyclf.TrainConfig(args.epochs, args.batch_size, args.lr,
                                   args.seed, args.dim)

    train_ds, val_ds = corpus.split_holdout(ds, args.holdout, args.seed)
    baseline = toyclf.train(train_ds, toyclf.LossConfig(), train_cfg)
    baseline_acc = toyclf.accuracy(baseline, val_ds)
    provider = providers.EmbeddedProvider(baseline)
    vocab = list(baseline.vocab[1:])

    generators = {}
    if "pbsmt" in cfg.transforms:
        try:
            for label in range(ds.labels.n_classes):
                generators[label] = pbsmt.train_generator(train_ds, label)
        except SaladBenchError as e:
            print(f"pbsmt generators unavailable: {e}", file=sys.stderr)
            generators = {}

    usable = tuple(k for k in mitigate.applicable_kinds(cfg.transforms, ds.task_kind)
                   if k != "pbsmt" or generators)
    cfg = mitigate.MitigationConfig(**{**vars(cfg), "transforms": usable})

    invalid_val = {
        kind: mitigate.make_invalid_examples(
            val_ds.examples, [kind], ds.task_kind, provider,
            generators, vocab, cfg.r, cfg.seed)
        for kind in usable}

    if cfg.strategy == "invalid_class":
        augmented, flags = mitigate.augment(train_ds, cfg, provider, generators,
                                            vocab)
        balanced = mitigate.balance_clean(augmented, flags)
        finetune_cfg = toyclf.TrainConfig(args.finetune_epochs, args.batch_size,
                                          args.finetune_lr, args.seed, args.dim)
        params = mitigate.train_invalid_class(balanced, finetune_cfg,
                                              warm=baseline)
        report = mitigate.evaluate_mitigation(
            "invalid_class", params, val_ds, invalid_val,
            baseline_accuracy=100 * baseline_acc,
            n_task_classes=ds.labels.n_classes)
        toyclf.save_params(params, os.path.join(args.out, "params_mitigated.bin"))
    else:
        if cfg.strategy == "entropic_threshold":
            aug_cfg = mitigate.MitigationConfig(**{**vars(cfg), "strategy": "entropic_threshold"})
            augmented, flags = mitigate.augment(train_ds, aug_cfg, provider,
                                                generators, vocab)
            invalid_train = corpus.Dataset(
                tuple(ex for ex, f in zip(augmented.examples, flags) if f),
                ds.labels, ds.task_kind)
            finetune_cfg = toyclf.TrainConfig(
                args.finetune_epochs, args.batch_size, args.finetune_lr,
                args.seed, args.dim)
            params = mitigate.train_entropic(baseline, train_ds, invalid_train,
                                             cfg.lambda_ent, finetune_cfg)
        else:
            params = baseline
        t = toyclf.fit_temperature(params, val_ds)
        params = toyclf.with_temperature(params, t)
        eprov = providers.EmbeddedProvider(params)
        preds_clean = eprov.predict_batch(val_ds.examples)
        gold = [ex.gold_label for ex in val_ds.examples]
        all_invalid = [e for v in invalid_val.values() for e in v]
        preds_invalid = eprov.predict_batch(all_invalid)
        scaled_acc = sum(1 for p, y in zip(preds_clean, gold)
                         if p.predicted == y) / len(gold)
        theta = mitigate.threshold_search(preds_clean, gold, preds_invalid,
                                          scaled_acc, cfg)
        report = mitigate.evaluate_mitigation(
            cfg.strategy, params, val_ds, invalid_val, theta=theta,
            lambda_ent=cfg.lambda_ent if cfg.strategy == "entropic_threshold" else None,
            baseline_accuracy=100 * baseline_acc,
            n_task_classes=ds.labels.n_classes)
        toyclf.save_params(params, os.path.join(args.out, "params_mitigated.bin"))

    payload = {k: v for k, v in vars(report).items()}
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8") as f:
        f.write("metric,value\n")
        f.write(f"clean_accuracy,{report.clean_accuracy:.2f}\n")
        f.write(f"invalid_detected,{report.invalid_detected:.2f}\n")
        for kind, val in sorted(report.per_transform_detection.items()):
            f.write(f"detect_{kind},{val:.2f}\n")
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_pbsmt(args) -> int:
    ds = _load(args)
    _write_resolved_config(args, args.out)
    if args.pbsmt_command == "train":
        labels = ([int(args.label)] if args.label is not None
                  else list(range(ds.labels.n_classes)))
        weights = pbsmt.DecoderWeights(
            w_tm=args.w_tm, w_lm=args.w_lm, w_dist=args.w_dist, w_len=args.w_len,
            beam_size=args.beam, distortion_limit=args.distortion_limit)
        for label in labels:
            gen = pbsmt.train_generator(ds, label, iterations=args.iterations,
                                        weights=weights, min_pairs=args.min_pairs)
            out = os.path.join(args.out, f"label_{label}")
            pbsmt.save_generator(gen, out)
            print(f"trained generator for label {label} -> {out}")
    else:
        generators = {}
        for name in sorted(os.listdir(args.models)):
            sub = os.path.join(args.models, name)
            if os.path.isdir(sub):
                gen = pbsmt.load_generator(sub)
                generators[gen.label] = gen
        examples, meta = [], {}
        for ex in ds.examples:
            tx = pbsmt.generate_invalid(ex, generators, ds.task_kind)
            examples.append(tx.example)
            meta[ex.id] = (tx.source_id, tx.transform.tag())
        out_ds = corpus.Dataset(tuple(examples), ds.labels, ds.task_kind)
        path = os.path.join(args.out, "pbsmt.tsv")
        corpus.save_dataset(out_ds, path, "tsv", transform_meta=meta)
        print(f"wrote {path} ({len(examples)} rows)")
    return 0


def cmd_report(args) -> int:
    with open(args.input, encoding="utf-8") as f:
        report = metrics.report_from_json(f.read())
    print(report.to_markdown() if args.render == "md" else report.to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saladbench")
    parser.add_argument("--config", help="JSON file supplying argument defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="write destructively transformed datasets")
    _add_dataset_args(p)
    _add_provider_args(p)
    p.add_argument("--transforms", default="all")
    p.add_argument("--pbsmt-dir", help="directory of trained pbsmt generators")
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("evaluate", help="agreement/confidence report")
    _add_dataset_args(p)
    _add_provider_args(p)
    p.add_argument("--transforms", default="all")
    p.add_argument("--pbsmt-dir")
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("train", help="train the embedded toy classifier")
    _add_dataset_args(p)
    p.add_argument("--loss", default="cross_entropy",
                   choices=["cross_entropy", "label_smoothing", "focal"])
    p.add_argument("--lambda-ls", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=5.0)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="fit temperature, report ECE change")
    _add_dataset_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("mitigate", help="train and evaluate a mitigation strategy")
    _add_dataset_args(p)
    p.add_argument("--strategy", default="invalid-class",
                   choices=["threshold", "entropic-threshold", "invalid-class"])
    p.add_argument("--transforms", default="all")
    p.add_argument("--lambda-ent", type=float, default=0.1)
    p.add_argument("--augment-fraction", type=float, default=0.5)
    p.add_argument("--tolerance", type=float, default=0.03)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=5.0)
    p.add_argument("--finetune-epochs", type=int, default=15,
                   help="epochs for the mitigation fine-tuning phase")
    p.add_argument("--finetune-lr", type=float, default=1.0,
                   help="learning rate for the mitigation fine-tuning phase")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("pbsmt", help="train or run the statistical generators")
    p.add_argument("pbsmt_command", choices=["train", "generate"])
    _add_dataset_args(p)
    p.add_argument("--label", default=None)
    p.add_argument("--models", help="generator directory (generate)")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--min-pairs", type=int, default=50)
    p.add_argument("--w-tm", type=float, default=1.0)
    p.add_argument("--w-lm", type=float, default=0.5)
    p.add_argument("--w-dist", type=float, default=-0.3)
    p.add_argument("--w-len", type=float, default=-0.1)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--distortion-limit", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pbsmt)

    p = sub.add_parser("report", help="re-render a report.json")
    p.add_argument("--input", required=True)
    p.add_argument("--render", default="md", choices=["md", "csv"])
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config_file(args, argv: list[str]) -> None:
    """Overrides parsed values with --config JSON entries, except where the
    flag was given explicitly on the command line (explicit flags win)."""
    with open(args.config, encoding="utf-8") as f:
        cfg = json.load(f)
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        flag = "--" + key.replace("_", "-")
        if flag not in argv and hasattr(args, attr):
            setattr(args, attr, value)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            _apply_config_file(args, argv)
        return args.func(args)
    except (ConfigError, argparse.ArgumentError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except ProviderError as e:
        print(f"provider error: {e}", file=sys.stderr)
        return 3
    except SaladBenchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
