import numpy as np
import pytest
from hypothesis import given, strategies as st

from deepcrf.evaluation import (
    EvalReport,
    character_error_rate,
    compare_report,
    cross_validate,
    report_basename,
    report_to_kv,
    report_to_text,
    word_error_rate,
)
from deepcrf.rbm import PretrainConfig
from deepcrf.training import TrainConfig

from conftest import noisy_dataset, separable_dataset

FAST = dict(sweeps=5, base_step=1.0, layer_sizes=[5, 4], seed=3,
            pretrain=PretrainConfig(epochs=2, batch_size=10, seed=3))


class TestWordErrorRate:
    def test_perfect_prediction(self):
        gold = [[0, 1], [2], [1, 1, 0]]
        assert word_error_rate(gold, gold) == 0.0

    def test_one_of_four_words_wrong(self):
        gold = [[0], [1], [2], [0, 1]]
        pred = [[0], [1], [2], [1, 1]]
        assert word_error_rate(pred, gold) == 0.25

    def test_single_wrong_character_fails_whole_word(self):
        gold = [[0, 1, 2, 1, 0]]
        pred = [[0, 1, 2, 1, 1]]
        assert word_error_rate(pred, gold) == 1.0
        assert character_error_rate(pred, gold) == pytest.approx(0.2)

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            word_error_rate([[0]], [[0], [1]])

    def test_length_mismatch_within_word(self):
        with pytest.raises(ValueError, match="word 0"):
            word_error_rate([[0, 1]], [[0]])
        with pytest.raises(ValueError, match="word 0"):
            character_error_rate([[0, 1]], [[0]])

    @given(st.lists(st.lists(st.integers(0, 3), min_size=1, max_size=4),
                    min_size=1, max_size=8),
           st.randoms())
    def test_permutation_invariance(self, words, rnd):
        pred = [[(c + (i % 2)) % 4 for c in w] for i, w in enumerate(words)]
        base = word_error_rate(pred, words)
        order = list(range(len(words)))
        rnd.shuffle(order)
        shuffled = word_error_rate([pred[i] for i in order], [words[i] for i in order])
        assert shuffled == pytest.approx(base)

    def test_rates_bounded(self):
        gold = [[0, 1], [1, 2, 0]]
        pred = [[1, 0], [1, 2, 0]]
        w = word_error_rate(pred, gold)
        c = character_error_rate(pred, gold)
        assert 0.0 <= c <= 1.0 and 0.0 <= w <= 1.0
        assert w >= 1 / 2  # one word fully wrong out of two


class TestCrossValidate:
    def test_fold_count_and_report_shape(self):
        ds = separable_dataset(40, seed=5)
        report = cross_validate(ds, 4, TrainConfig(**FAST), "deep_crf")
        assert len(report.per_fold_word_error) == 4
        assert len(report.per_fold_char_error) == 4
        assert report.mean_word_error == pytest.approx(
            np.mean(report.per_fold_word_error), abs=1e-12)
        assert report.model_tag == "deep_crf"

    def test_linear_tag_bypasses_encoder(self):
        ds = separable_dataset(30, seed=5)
        report = cross_validate(ds, 3, TrainConfig(**FAST), "linear_crf")
        assert report.model_tag == "linear_crf"
        # separable by unary scores alone, so a linear CRF nails it
        assert report.mean_word_error <= 0.2

    def test_ablation_tag_runs(self):
        ds = separable_dataset(30, seed=5)
        report = cross_validate(ds, 3, TrainConfig(**FAST), "no_transition_ablation")
        assert len(report.per_fold_word_error) == 3

    def test_unknown_tag(self):
        ds = separable_dataset(20, seed=5)
        with pytest.raises(ValueError, match="model tag"):
            cross_validate(ds, 2, TrainConfig(**FAST), "bogus")

    def test_fold_subset(self):
        ds = separable_dataset(30, seed=5)
        report = cross_validate(ds, 3, TrainConfig(**FAST), "linear_crf", folds=[0])
        assert len(report.per_fold_word_error) == 1

    def test_learns_noisy_task_better_than_chance(self):
        ds = noisy_dataset(40, seed=9, flip=0.05)
        report = cross_validate(ds, 4, TrainConfig(**FAST), "deep_crf")
        assert report.mean_word_error < 0.5

    def test_duplicated_word_ids_flagged_as_leak(self):
        from deepcrf.data import Dataset, LabelAlphabet, LabeledSequence
        rng = np.random.default_rng(0)
        seqs = [LabeledSequence(frames=rng.random((2, 4)), labels=[0, 1],
                                word_id="dup", fold=-1) for _ in range(8)]
        ds = Dataset(sequences=seqs, alphabet=LabelAlphabet(["a", "b"]), d=4)
        with pytest.raises(ValueError, match="leak"):
            cross_validate(ds, 2, TrainConfig(**FAST), "linear_crf")


class TestCompareReport:
    def _report(self, tag, err):
        return EvalReport(per_fold_word_error=[err], mean_word_error=err,
                          per_fold_char_error=[err], config_fingerprint="cafe01234567",
                          model_tag=tag)

    def test_single_row(self):
        table = compare_report([self._report("deep_crf", 0.016)])
        lines = table.splitlines()
        assert len(lines) == 2
        assert "deep_crf" in lines[1] and "1.6" in lines[1]

    def test_ordering_by_error(self):
        table = compare_report([
            self._report("linear_crf", 0.532),
            self._report("deep_crf", 0.016),
        ])
        lines = table.splitlines()
        assert lines[1].startswith("deep_crf")
        assert lines[2].startswith("linear_crf")
        assert "53.2" in lines[2]

    def test_tie_broken_by_name(self):
        table = compare_report([
            self._report("zeta", 0.1),
            self._report("alpha", 0.1),
        ])
        lines = table.splitlines()
        assert lines[1].startswith("alpha")

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compare_report([])


class TestReportSerialization:
    def test_kv_and_text_forms(self):
        report = EvalReport(per_fold_word_error=[0.25, 0.5],
                            mean_word_error=0.375,
                            per_fold_char_error=[0.1, 0.2],
                            config_fingerprint="abc123",
                            model_tag="deep_crf")
        kv = dict(line.split("=", 1) for line in report_to_kv(report).splitlines())
        assert kv["model_tag"] == "deep_crf"
        assert float(kv["mean_word_error"]) == pytest.approx(0.375)
        assert float(kv["fold_1_word_error"]) == pytest.approx(0.5)
        text = report_to_text(report)
        assert "fold 1 word_error 0.500000" in text
        assert report_basename(report, 2) == "deep_crf.k2.abc123"
