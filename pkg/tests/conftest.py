import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # for the oracles module

from deepcrf.crf import CrfParams
from deepcrf.data import Dataset, LabelAlphabet, LabeledSequence


def random_instance(rng, K: int, T: int, d_h: int):
    """Random CRF parameters, latent features, and a gold label sequence."""
    params = CrfParams(
        A=rng.standard_normal((K, K)),
        W=rng.standard_normal((d_h, K)),
        b=rng.standard_normal(K),
        pi=rng.standard_normal(K),
        tau=rng.standard_normal(K),
    )
    H = rng.standard_normal((T, d_h))
    y = rng.integers(0, K, size=T)
    return params, H, y


def stripe_patterns(n: int, d: int, rng) -> np.ndarray:
    """Binary vectors made of a few random on-runs; structured enough for an
    RBM to model and a pretraining sanity metric to improve on."""
    data = np.zeros((n, d))
    for i in range(n):
        for _ in range(rng.integers(1, 4)):
            start = rng.integers(0, d)
            length = rng.integers(2, max(3, d // 4))
            data[i, start:min(d, start + length)] = 1.0
    return data


def separable_dataset(n_words: int = 50, seed: int = 7, fold_tag: bool = False) -> Dataset:
    """Toy chain task (K=2, T<=3, d=6) solvable by unary scores alone: each
    class has a fixed distinct frame pattern."""
    rng = np.random.default_rng(seed)
    patterns = np.array([
        [1, 1, 0, 0, 1, 0],
        [0, 0, 1, 1, 0, 1],
    ], dtype=np.float64)
    sequences = []
    for i in range(n_words):
        T = int(rng.integers(1, 4))
        labels = rng.integers(0, 2, size=T)
        frames = patterns[labels]
        sequences.append(LabeledSequence(
            frames=frames, labels=labels, word_id=f"toy{i:03d}",
            fold=(i % 5) if fold_tag else -1,
        ))
    return Dataset(sequences=sequences, alphabet=LabelAlphabet(["a", "b"]), d=6)


def noisy_dataset(n_words: int = 40, seed: int = 11, flip: float = 0.08) -> Dataset:
    """Separable patterns with a little bit noise so decoding stays imperfect
    for a few sweeps; used where training dynamics need visible mistakes."""
    rng = np.random.default_rng(seed)
    base = separable_dataset(n_words, seed=seed)
    for seq in base.sequences:
        noise = rng.random(seq.frames.shape) < flip
        seq.frames[noise] = 1.0 - seq.frames[noise]
    return base


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
