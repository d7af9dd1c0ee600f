"""Cross-validation driver and the word-error metric.

A word counts as wrong when any of its characters is wrong; the character
error rate is reported alongside as a secondary diagnostic.  Three model
tags are supported: ``deep_crf`` (the full pipeline, pretraining included
when configured), ``linear_crf`` (identity encoder, CRF on raw frames), and
``no_transition_ablation`` (the deep model with transitions frozen at zero).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .data import Dataset, make_folds
from .training import TrainConfig, predict_labels, train

MODEL_TAGS = ("deep_crf", "linear_crf", "no_transition_ablation")


@dataclass
class EvalReport:
    per_fold_word_error: list[float]
    mean_word_error: float
    per_fold_char_error: list[float]
    config_fingerprint: str
    model_tag: str


def word_error_rate(pred: list, gold: list) -> float:
    """Fraction of words whose predicted label sequence differs from gold in
    at least one position."""
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predictions for {len(gold)} gold words")
    if not gold:
        raise ValueError("empty evaluation set")
    wrong = 0
    for i, (p, g) in enumerate(zip(pred, gold)):
        p = np.asarray(p)
        g = np.asarray(g)
        if p.shape != g.shape:
            raise ValueError(f"word {i}: predicted length {p.shape} != gold {g.shape}")
        wrong += not np.array_equal(p, g)
    return wrong / len(gold)


def character_error_rate(pred: list, gold: list) -> float:
    """Fraction of individual characters labeled incorrectly."""
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predictions for {len(gold)} gold words")
    wrong = total = 0
    for i, (p, g) in enumerate(zip(pred, gold)):
        p = np.asarray(p)
        g = np.asarray(g)
        if p.shape != g.shape:
            raise ValueError(f"word {i}: predicted length {p.shape} != gold {g.shape}")
        wrong += int((p != g).sum())
        total += len(g)
    if total == 0:
        raise ValueError("empty evaluation set")
    return wrong / total


def _train_fold(ds: Dataset, train_idx, config: TrainConfig, model_tag: str):
    if model_tag == "linear_crf":
        import dataclasses
        cfg = dataclasses.replace(config, layer_sizes=[], pretrain=None)
        model, _ = train(ds, cfg, indices=train_idx)
    elif model_tag == "no_transition_ablation":
        model, _ = train(ds, config, indices=train_idx, freeze_transitions=True)
    elif model_tag == "deep_crf":
        model, _ = train(ds, config, indices=train_idx)
    else:
        raise ValueError(f"unknown model tag {model_tag!r}, expected one of {MODEL_TAGS}")
    return model


def evaluate_fold(ds: Dataset, train_idx, test_idx, config: TrainConfig,
                  model_tag: str) -> tuple[float, float]:
    """Train on one fold's training split and score the test split;
    returns (word_error, char_error)."""
    model = _train_fold(ds, train_idx, config, model_tag)
    pred, gold = [], []
    for i in test_idx:
        seq = ds.sequences[i]
        pred.append(predict_labels(model, seq.frames).labels)
        gold.append(seq.labels)
    return word_error_rate(pred, gold), character_error_rate(pred, gold)


def config_fingerprint(config: TrainConfig, k: int, model_tag: str) -> str:
    blob = f"{config.fingerprint()}|{k}|{model_tag}".encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def cross_validate(ds: Dataset, k: int, config: TrainConfig, model_tag: str,
                   jobs: int = 1, folds=None) -> EvalReport:
    """k-fold cross-validation: train a fresh model per fold (no warm starts)
    and score the held-out fold.  ``folds`` restricts the run to a subset of
    fold indices (all by default); jobs > 1 trains folds in parallel."""
    partitions = make_folds(ds, k, config.seed)
    if folds is None:
        folds = range(k)
    selected = [partitions[i] for i in folds]
    for train_idx, test_idx in selected:
        if set(ds.sequences[i].word_id for i in train_idx) & \
           set(ds.sequences[i].word_id for i in test_idx):
            raise ValueError("fold leak: a word id appears in both train and test")

    if jobs > 1 and len(selected) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                _fold_worker,
                [(ds, tr, te, config, model_tag) for tr, te in selected],
            ))
    else:
        results = [evaluate_fold(ds, tr, te, config, model_tag) for tr, te in selected]

    word_errors = [w for w, _ in results]
    char_errors = [c for _, c in results]
    return EvalReport(
        per_fold_word_error=word_errors,
        mean_word_error=float(np.mean(word_errors)),
        per_fold_char_error=char_errors,
        config_fingerprint=config_fingerprint(config, k, model_tag),
        model_tag=model_tag,
    )


def _fold_worker(args):
    ds, train_idx, test_idx, config, model_tag = args
    return evaluate_fold(ds, train_idx, test_idx, config, model_tag)


def compare_report(reports: list[EvalReport]) -> str:
    """Aligned text table of model tag vs mean word error (percent, one
    decimal), ordered by error ascending with ties broken by tag name."""
    if not reports:
        raise ValueError("no reports to compare")
    rows = sorted(reports, key=lambda r: (r.mean_word_error, r.model_tag))
    width = max(len("model"), max(len(r.model_tag) for r in rows))
    lines = [f"{'model':<{width}}  word error (%)"]
    for r in rows:
        lines.append(f"{r.model_tag:<{width}}  {100.0 * r.mean_word_error:.1f}")
    return "\n".join(lines) + "\n"


def report_to_text(report: EvalReport) -> str:
    lines = [
        f"model_tag {report.model_tag}",
        f"config_fingerprint {report.config_fingerprint}",
        f"mean_word_error {report.mean_word_error:.6f}",
    ]
    for i, (w, c) in enumerate(zip(report.per_fold_word_error, report.per_fold_char_error)):
        lines.append(f"fold {i} word_error {w:.6f} char_error {c:.6f}")
    return "\n".join(lines) + "\n"


def report_to_kv(report: EvalReport) -> str:
    pairs = [
        ("model_tag", report.model_tag),
        ("config_fingerprint", report.config_fingerprint),
        ("mean_word_error", f"{report.mean_word_error:.6f}"),
    ]
    for i, w in enumerate(report.per_fold_word_error):
        pairs.append((f"fold_{i}_word_error", f"{w:.6f}"))
    for i, c in enumerate(report.per_fold_char_error):
        pairs.append((f"fold_{i}_char_error", f"{c:.6f}"))
    return "".join(f"{k}={v}\n" for k, v in pairs)


def report_basename(report: EvalReport, k: int) -> str:
    return f"{report.model_tag}.k{k}.{report.config_fingerprint}"
