"""Command-line entry points.

One executable with five subcommands: prep-icdar, pretrain, train, eval,
predict.  Long flag names only; any flag may also come from a
``key = value`` config file passed with --config, with the command line
taking precedence.  Logs go to standard error, results to standard output or
named files; every failure exits nonzero after printing a single
``error: ...`` line.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation as eval_mod
from .rbm import PretrainConfig, pretrain_stack
from .training import (
    TrainConfig,
    dataset_fingerprint,
    format_training_log,
    load_model,
    load_pretrained_stack,
    predict_labels,
    save_model,
    save_pretrained_stack,
    train,
)

log = logging.getLogger("deepcrf")


def _parse_layer_sizes(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        sizes = [int(x) for x in text.split(",")]
    except ValueError:
        raise ValueError(f"layer sizes must be comma-separated integers, got {text!r}")
    if any(s < 1 for s in sizes):
        raise ValueError("layer sizes must be positive")
    return sizes


def parse_config_file(path) -> dict[str, str]:
    """``key = value`` lines; '#' starts a comment; keys are long flag names
    (with or without dashes)."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _load_dataset(path):
    """Canonical dataset plus its glyph sidecar when present."""
    sidecar = Path(str(path) + ".alphabet")
    alphabet = data_mod.load_alphabet(sidecar) if sidecar.is_file() else None
    return data_mod.load_dataset(path, alphabet=alphabet)


def _train_config(args) -> TrainConfig:
    pretrain = None
    if not args.no_pretrain and args.layer_sizes:
        pretrain = PretrainConfig(
            learning_rate=args.pretrain_learning_rate,
            epochs=args.pretrain_epochs,
            batch_size=args.pretrain_batch_size,
            seed=args.seed,
        )
    return TrainConfig(
        sweeps=args.sweeps,
        base_step=args.base_step,
        lambda2=args.lambda2,
        lambda3=args.lambda3,
        layer_sizes=args.layer_sizes,
        seed=args.seed,
        heldout_fraction=args.heldout_fraction,
        init_scale=args.init_scale,
        pretrain=pretrain,
    )


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sweeps", type=int, default=100)
    p.add_argument("--base-step", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--lambda3", type=float, default=2e-4)
    p.add_argument("--layer-sizes", type=_parse_layer_sizes, default=[400, 200, 100],
                   help="comma-separated hidden layer widths; empty for none")
    p.add_argument("--heldout-fraction", type=float, default=0.05)
    p.add_argument("--init-scale", type=float, default=1.0)
    p.add_argument("--no-pretrain", action="store_true",
                   help="skip RBM pretraining of the encoder")
    p.add_argument("--pretrain-learning-rate", type=float, default=0.1)
    p.add_argument("--pretrain-epochs", type=int, default=30)
    p.add_argument("--pretrain-batch-size", type=int, default=50)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="deepcrf",
        description="sequence labeling with a chain CRF over a pretrained logistic encoder",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def command(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", default=None,
                       help="key = value file supplying defaults for any flag")
        p.add_argument("--seed", type=int, default=0)
        subparsers[name] = p
        return p

    p = command("prep-icdar", help="convert a word-image manifest to the canonical dataset format")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = command("pretrain", help="greedy CD-1 pretraining of the encoder stack")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layer-sizes", type=_parse_layer_sizes, default=[400, 200, 100])
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=50)

    p = command("train", help="train the full model on a dataset (or one CV split of it)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--test-fold", type=int, default=None,
                   help="hold this fold out entirely and report its word error")
    p.add_argument("--pretrained", default=None,
                   help="container with a pretrained encoder stack")
    p.add_argument("--log", default=None, help="write the per-sweep training log here")
    _add_train_flags(p)

    p = command("eval", help="k-fold cross-validation for one model tag")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--model-tag", choices=eval_mod.MODEL_TAGS, default="deep_crf")
    p.add_argument("--only-fold", type=int, default=None,
                   help="evaluate a single fold index instead of all k")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out-dir", default=".")
    _add_train_flags(p)

    p = command("predict", help="decode a dataset with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    return parser, subparsers


def _parse_args(argv):
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sp = subparsers[args.command]
        valid = {a.dest: a for a in sp._actions}
        overrides = {}
        for key, text in parse_config_file(args.config).items():
            if key not in valid or key == "config":
                raise ValueError(f"unknown config key {key!r} for command {args.command}")
            action = valid[key]
            if isinstance(action, argparse._StoreTrueAction):
                overrides[key] = text.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                overrides[key] = action.type(text)
            else:
                overrides[key] = text
        sp.set_defaults(**overrides)
        args = parser.parse_args(argv)  # command line wins over file values
    return args


def cmd_prep_icdar(args) -> int:
    skipped: list[str] = []
    words = data_mod.load_icdar(args.manifest, skipped=skipped)
    ds = data_mod.words_to_dataset(words)
    data_mod.save_dataset(ds, args.out)
    data_mod.save_alphabet(ds.alphabet, str(args.out) + ".alphabet")
    log.info("wrote %s (+.alphabet sidecar), skipped %d manifest entries",
             args.out, len(skipped))
    print(f"N={len(ds)} frames={ds.n_frames} d={ds.d} K={ds.alphabet.K} "
          f"transcripts={len({''.join(ds.alphabet.glyph(l) for l in s.labels) for s in ds.sequences})}")
    return 0


def cmd_pretrain(args) -> int:
    if not args.layer_sizes:
        raise ValueError("layer sizes must be non-empty")
    ds = _load_dataset(args.data)
    frames = np.vstack([s.frames for s in ds.sequences])
    cfg = PretrainConfig(learning_rate=args.learning_rate, epochs=args.epochs,
                         batch_size=args.batch_size, seed=args.seed)
    log.info("pretraining %s on %d frames of dim %d", args.layer_sizes, len(frames), ds.d)
    layers = pretrain_stack(frames, args.layer_sizes, cfg)
    save_pretrained_stack(layers, args.out,
                          metadata={"dataset_fingerprint": dataset_fingerprint(ds.sequences)})
    print(f"pretrained layers={','.join(str(W.shape[1]) for W, _ in layers)} out={args.out}")
    return 0


def cmd_train(args) -> int:
    ds = _load_dataset(args.data)
    config = _train_config(args)
    pretrained = load_pretrained_stack(args.pretrained) if args.pretrained else None

    indices = None
    test_idx = None
    if args.test_fold is not None:
        if args.folds is None:
            raise ValueError("--test-fold requires --folds")
        folds = data_mod.make_folds(ds, args.folds, args.seed)
        if not 0 <= args.test_fold < args.folds:
            raise ValueError(f"test fold {args.test_fold} out of range [0, {args.folds})")
        indices, test_idx = folds[args.test_fold]

    model, records = train(ds, config, indices=indices, pretrained=pretrained)
    save_model(model, args.out)
    log_text = format_training_log(records)
    if args.log:
        Path(args.log).write_text(log_text, encoding="utf-8")
    else:
        sys.stderr.write(log_text)

    summary = (f"trained sweeps={config.sweeps} "
               f"final_train_mistake_rate={records[-1].train_mistake_rate:.6f}")
    if test_idx is not None:
        pred = [predict_labels(model, ds.sequences[i].frames).labels for i in test_idx]
        gold = [ds.sequences[i].labels for i in test_idx]
        summary += f" test_word_error={eval_mod.word_error_rate(pred, gold):.6f}"
    print(summary)
    return 0


def cmd_eval(args) -> int:
    ds = _load_dataset(args.data)
    config = _train_config(args)
    folds = None if args.only_fold is None else [args.only_fold]
    report = eval_mod.cross_validate(ds, args.folds, config, args.model_tag,
                                     jobs=args.jobs, folds=folds)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = eval_mod.report_basename(report, args.folds)
    (out_dir / f"{base}.report.txt").write_text(eval_mod.report_to_text(report),
                                                encoding="utf-8")
    (out_dir / f"{base}.report.kv").write_text(eval_mod.report_to_kv(report),
                                               encoding="utf-8")
    log.info("wrote %s.report.{txt,kv} in %s", base, out_dir)

    # Comparison table over every report present in the output directory, so
    # successive runs with different tags accumulate into one table.
    reports = []
    for kv_path in sorted(out_dir.glob("*.report.kv")):
        kv = dict(line.split("=", 1) for line in
                  kv_path.read_text(encoding="utf-8").splitlines() if line)
        fold_errors = sorted((k, float(v)) for k, v in kv.items()
                             if k.endswith("_word_error") and k.startswith("fold_"))
        char_errors = sorted((k, float(v)) for k, v in kv.items()
                             if k.endswith("_char_error"))
        reports.append(eval_mod.EvalReport(
            per_fold_word_error=[v for _, v in fold_errors],
            mean_word_error=float(kv["mean_word_error"]),
            per_fold_char_error=[v for _, v in char_errors],
            config_fingerprint=kv["config_fingerprint"],
            model_tag=kv["model_tag"],
        ))
    print(eval_mod.compare_report(reports), end="")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    ds = data_mod.load_dataset(args.data, alphabet=None)
    if ds.d != model.d:
        raise ValueError(f"dimension mismatch: data frames have d={ds.d}, "
                         f"model expects d={model.d}")
    if ds.alphabet.K != model.alphabet.K:
        raise ValueError(f"dimension mismatch: data has K={ds.alphabet.K} labels, "
                         f"model has K={model.alphabet.K}")
    for seq in ds.sequences:
        result = predict_labels(model, seq.frames)
        glyphs = "".join(model.alphabet.glyph(l) for l in result.labels)
        print(f"{seq.word_id}\t{glyphs}\t{result.log_prob:.6f}")
    return 0


_COMMANDS = {
    "prep-icdar": cmd_prep_icdar,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit:
        raise
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
