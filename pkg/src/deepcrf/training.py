"""Hybrid online training: structured perceptron for the CRF parameters,
stochastic gradient descent with an L1 penalty for the encoder weights.

Each training sequence is encoded, Viterbi-decoded, and — only when the
decode disagrees with the gold labels — used for one update: the CRF blocks
move along the perceptron direction (the gradient of the energy gap between
gold and decoded sequences), and the same error signal is backpropagated
through the encoder for an SGD step.  A sweep with zero mistakes therefore
leaves every parameter bitwise unchanged.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import crf as crf_mod
from . import encoder as enc_mod
from .container import read_container, write_container
from .crf import CrfParams, perceptron_gradients, viterbi
from .data import Dataset, LabelAlphabet, LabeledSequence
from .encoder import EncoderStack, backprop, encode_sequence, sgd_step
from .rbm import PretrainConfig, pretrain_stack


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Training protocol knobs; defaults follow the word-recognition setup
    (100 sweeps, lambda2 = 0, lambda3 = 2e-4, hidden layers [400, 200, 100]).
    The base step is turned into per-block step sizes by StepSizes.from_base.
    """

    sweeps: int = 100
    base_step: float = 1.0
    lambda2: float = 0.0
    lambda3: float = 2e-4
    layer_sizes: list[int] = field(default_factory=lambda: [400, 200, 100])
    seed: int = 0
    heldout_fraction: float = 0.05
    init_scale: float = 1.0
    pretrain: PretrainConfig | None = field(default_factory=PretrainConfig)

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.base_step <= 0:
            raise ValueError("base_step must be positive")
        if self.lambda2 < 0 or self.lambda3 < 0:
            raise ValueError("regularization constants must be nonnegative")
        if not 0.0 < self.heldout_fraction < 1.0:
            raise ValueError("heldout_fraction must lie in (0, 1)")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")

    def fingerprint(self) -> str:
        blob = repr(asdict(self)).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class StepSizes:
    """Per-block step sizes.  A single base step is divided by each block's
    fan-in (the number of inputs feeding one unit of the block): d_h for the
    emission matrix, K for transitions, 1 for the bias/boundary vectors, and
    the layer input width for each encoder layer."""

    A: float
    W: float
    b: float
    pi: float
    tau: float
    encoder: list[float]

    @classmethod
    def from_base(cls, base_step: float, model: "DeepCrfModel") -> "StepSizes":
        K = model.crf.K
        d_h = model.crf.d_h
        enc = [base_step / W.shape[0] for W, _ in model.encoder.layers]
        return cls(A=base_step / K, W=base_step / d_h, b=base_step,
                   pi=base_step, tau=base_step, encoder=enc)

    @classmethod
    def uniform(cls, eta_theta: float, eta_omega: float, n_layers: int) -> "StepSizes":
        return cls(A=eta_theta, W=eta_theta, b=eta_theta, pi=eta_theta,
                   tau=eta_theta, encoder=[eta_omega] * n_layers)


@dataclass
class DeepCrfModel:
    """Full model: encoder stack feeding the chain CRF, plus provenance."""

    encoder: EncoderStack
    crf: CrfParams
    alphabet: LabelAlphabet
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d_h = self.encoder.layers[-1][0].shape[1] if self.encoder.layers else self.crf.d_h
        if d_h != self.crf.d_h:
            raise ValueError(
                f"encoder output dim {d_h} != CRF emission input dim {self.crf.d_h}"
            )
        if self.alphabet.K != self.crf.K:
            raise ValueError(f"alphabet K={self.alphabet.K} != CRF K={self.crf.K}")

    @property
    def d(self) -> int:
        return self.encoder.input_dim if self.encoder.layers else self.crf.d_h


@dataclass
class SequenceReport:
    labels: list[int]
    mistake: bool


@dataclass
class SweepRecord:
    sweep: int
    train_mistake_rate: float
    heldout_word_error: float
    wallclock_ms: float


def format_training_log(records: list[SweepRecord]) -> str:
    return "".join(
        f"{r.sweep} {r.train_mistake_rate:.6f} {r.heldout_word_error:.6f} "
        f"{r.wallclock_ms:.1f}\n"
        for r in records
    )


def init_model(d: int, layer_sizes: list[int], alphabet: LabelAlphabet | int,
               pretrained=None, seed: int = 0, init_scale: float = 1.0) -> DeepCrfModel:
    """Fresh model: emission weights ~ N(0,1) * init_scale/sqrt(d_h), every
    other CRF block exactly zero; encoder taken from the pretrained stack when
    given, otherwise small random normals (scale 0.01) with zero biases.

    Draw order is fixed (encoder layers bottom-up, then the emission matrix)
    so a seed pins the model bitwise.
    """
    if isinstance(alphabet, int):
        alphabet = LabelAlphabet.generic(alphabet)
    rng = np.random.default_rng(seed)
    if pretrained is not None:
        layers = pretrained.layers if isinstance(pretrained, EncoderStack) else pretrained
        stack = EncoderStack([(np.array(W), np.array(b)) for W, b in layers])
        sizes = [W.shape[1] for W, _ in stack.layers]
        if sizes != list(layer_sizes) or (stack.layers and stack.input_dim != d):
            raise ValueError(
                f"pretrained stack shape {stack.input_dim}->{sizes} does not match "
                f"d={d}, layer_sizes={list(layer_sizes)}"
            )
    else:
        layers = []
        n_in = d
        for n_out in layer_sizes:
            layers.append((rng.standard_normal((n_in, n_out)) * 0.01, np.zeros(n_out)))
            n_in = n_out
        stack = EncoderStack(layers)
    d_h = layer_sizes[-1] if layer_sizes else d
    K = alphabet.K
    crf = CrfParams(
        A=np.zeros((K, K)),
        W=rng.standard_normal((d_h, K)) * (init_scale / np.sqrt(d_h)),
        b=np.zeros(K),
        pi=np.zeros(K),
        tau=np.zeros(K),
    )
    return DeepCrfModel(encoder=stack, crf=crf, alphabet=alphabet)


def predict_labels(model: DeepCrfModel, frames) -> crf_mod.DecodeResult:
    """Encode a frame sequence and Viterbi-decode it."""
    encoded = encode_sequence(model.encoder, frames)
    H = np.vstack([h for h, _ in encoded])
    return viterbi(model.crf, H)


def train_sequence(model: DeepCrfModel, seq: LabeledSequence, steps,
                   lambda3: float, *, lambda2: float = 0.0,
                   freeze_transitions: bool = False) -> SequenceReport:
    """One online step on one sequence; mutates the model in place.

    steps is a StepSizes or a plain (eta_theta, eta_omega) pair.  If the
    Viterbi decode equals the gold labels nothing changes; otherwise the CRF
    blocks take a perceptron step along grad(E(h, y) - E(h, y*)) and the
    encoder weights take an SGD step on the same objective (its ascent signal
    W(y_t - y*_t) per frame, negated for the descent convention of sgd_step)
    with the L1 penalty attached.
    """
    if not isinstance(steps, StepSizes):
        eta_theta, eta_omega = steps
        steps = StepSizes.uniform(eta_theta, eta_omega, model.encoder.L_minus_1)
    encoded = encode_sequence(model.encoder, seq.frames)
    H = np.vstack([h for h, _ in encoded])
    decoded = viterbi(model.crf, H)
    y_star = np.asarray(decoded.labels, dtype=np.int64)
    if np.array_equal(y_star, seq.labels):
        return SequenceReport(labels=decoded.labels, mistake=False)

    g = perceptron_gradients(model.crf, H, seq.labels, y_star)
    p = model.crf
    if not freeze_transitions:
        p.A += steps.A * g.A
    p.W += steps.W * g.W
    p.b += steps.b * g.b
    p.pi += steps.pi * g.pi
    p.tau += steps.tau * g.tau
    if lambda2 > 0.0:
        # l2 path, off by default: weight decay attached to the update.
        if not freeze_transitions:
            p.A -= steps.A * lambda2 * 2.0 * p.A
        p.W -= steps.W * lambda2 * 2.0 * p.W
        p.b -= steps.b * lambda2 * 2.0 * p.b
        p.pi -= steps.pi * lambda2 * 2.0 * p.pi
        p.tau -= steps.tau * lambda2 * 2.0 * p.tau
    if not all(np.isfinite(np.sum(block)) for block in (p.A, p.W, p.b, p.pi, p.tau)):
        raise TrainingDiverged("non-finite CRF parameters after update")

    if model.encoder.layers and any(e != 0.0 for e in steps.encoder):
        acc = [[np.zeros_like(W), np.zeros_like(b)] for W, b in model.encoder.layers]
        for t, (_, trace) in enumerate(encoded):
            for l, (gW, gb) in enumerate(backprop(model.encoder, trace, -g.h[t])):
                acc[l][0] += gW
                acc[l][1] += gb
        sgd_step(model.encoder, acc, steps.encoder, lambda3)
    return SequenceReport(labels=decoded.labels, mistake=True)


def _word_error(model: DeepCrfModel, seqs: list[LabeledSequence]) -> float:
    if not seqs:
        return float("nan")
    wrong = sum(
        not np.array_equal(np.asarray(predict_labels(model, s.frames).labels), s.labels)
        for s in seqs
    )
    return wrong / len(seqs)


def dataset_fingerprint(seqs: list[LabeledSequence]) -> str:
    h = hashlib.sha256()
    for s in seqs:
        h.update(s.word_id.encode("utf-8"))
        h.update(s.labels.tobytes())
        h.update(np.ascontiguousarray(s.frames).tobytes())
    return h.hexdigest()[:12]


def train(ds: Dataset, config: TrainConfig, *, indices=None, pretrained=None,
          freeze_transitions: bool = False) -> tuple[DeepCrfModel, list[SweepRecord]]:
    """Full training run on a dataset partition.

    Shuffles the selected sequences once with the seed and carves the last
    heldout_fraction off as a held-out set (never trained on, scored after
    every sweep).  Optionally pretrains the encoder stack with CD-1 RBMs on
    the training frames, then runs `sweeps` passes in a per-sweep reshuffled
    order.  Returns the model and one record per sweep.
    """
    if indices is None:
        indices = range(len(ds.sequences))
    seqs = [ds.sequences[i] for i in indices]
    if not seqs:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(seqs))
    n_held = int(round(config.heldout_fraction * len(seqs)))
    n_held = min(n_held, len(seqs) - 1)
    pool = [seqs[i] for i in order[:len(seqs) - n_held]]
    heldout = [seqs[i] for i in order[len(seqs) - n_held:]]

    if pretrained is None and config.pretrain is not None and config.layer_sizes:
        frames = np.vstack([s.frames for s in pool])
        pretrained = pretrain_stack(frames, config.layer_sizes, config.pretrain)
    model = init_model(ds.d, config.layer_sizes, ds.alphabet,
                       pretrained=pretrained, seed=config.seed,
                       init_scale=config.init_scale)
    steps = StepSizes.from_base(config.base_step, model)

    records = []
    for sweep in range(config.sweeps):
        t0 = time.perf_counter()
        mistakes = 0
        for i in rng.permutation(len(pool)):
            try:
                report = train_sequence(model, pool[i], steps, config.lambda3,
                                        lambda2=config.lambda2,
                                        freeze_transitions=freeze_transitions)
            except (TrainingDiverged, FloatingPointError) as e:
                raise TrainingDiverged(f"sweep {sweep}, sequence {i}: {e}") from e
            mistakes += report.mistake
        records.append(SweepRecord(
            sweep=sweep,
            train_mistake_rate=mistakes / len(pool),
            heldout_word_error=_word_error(model, heldout),
            wallclock_ms=(time.perf_counter() - t0) * 1e3,
        ))
    model.meta.update({
        "config_fingerprint": config.fingerprint(),
        "dataset_fingerprint": dataset_fingerprint(seqs),
        "sweeps_completed": str(config.sweeps),
    })
    return model, records


def tune_base_step(ds: Dataset, config: TrainConfig, candidates, *,
                   indices=None, budget_sweeps: int = 10) -> float:
    """Pick the base step with the lowest held-out word error after a short
    training budget; ties go to the smaller step and a diverging candidate
    scores 1.0."""
    import dataclasses

    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidates")
    scored = []
    for c in candidates:
        cfg = dataclasses.replace(config, base_step=c,
                                  sweeps=min(config.sweeps, budget_sweeps))
        try:
            _, records = train(ds, cfg, indices=indices)
            err = records[-1].heldout_word_error
            if not np.isfinite(err):
                raise ValueError("tuning requires a non-empty held-out set")
        except TrainingDiverged:
            err = 1.0
        scored.append((err, c))
    return min(scored)[1]


# ---------------------------------------------------------------------------
# Model persistence (container format)

PRETRAINED_STATE = "pretrained, not fine-tuned"


def _alphabet_metadata(alphabet: LabelAlphabet) -> str:
    return "\x1f".join(alphabet.symbols)


def _alphabet_from_metadata(value: str) -> LabelAlphabet:
    return LabelAlphabet(value.split("\x1f"))


def save_model(model: DeepCrfModel, path, state: str = "trained") -> None:
    tensors = {
        "crf.A": model.crf.A, "crf.W": model.crf.W, "crf.b": model.crf.b,
        "crf.pi": model.crf.pi, "crf.tau": model.crf.tau,
    }
    for i, (W, b) in enumerate(model.encoder.layers):
        tensors[f"encoder.{i}.weights"] = W
        tensors[f"encoder.{i}.bias"] = b
    metadata = {
        "state": state,
        "alphabet": _alphabet_metadata(model.alphabet),
        "d": str(model.d),
        "layer_sizes": ",".join(str(W.shape[1]) for W, _ in model.encoder.layers),
        **{k: str(v) for k, v in model.meta.items()},
    }
    write_container(path, tensors, metadata)


def load_model(path) -> DeepCrfModel:
    tensors, metadata = read_container(path)
    if "crf.W" not in tensors:
        raise ValueError(
            f"container at {path} has no CRF parameters "
            f"(state: {metadata.get('state', 'unknown')})"
        )
    stack = _stack_from_tensors(tensors)
    crf = CrfParams(A=tensors["crf.A"], W=tensors["crf.W"], b=tensors["crf.b"],
                    pi=tensors["crf.pi"], tau=tensors["crf.tau"])
    alphabet = _alphabet_from_metadata(metadata["alphabet"])
    meta = {k: v for k, v in metadata.items()
            if k not in ("alphabet", "d", "layer_sizes")}
    return DeepCrfModel(encoder=stack, crf=crf, alphabet=alphabet, meta=meta)


def save_pretrained_stack(layers, path, metadata: dict | None = None) -> None:
    stack = layers if isinstance(layers, EncoderStack) else EncoderStack(list(layers))
    tensors = {}
    for i, (W, b) in enumerate(stack.layers):
        tensors[f"encoder.{i}.weights"] = W
        tensors[f"encoder.{i}.bias"] = b
    md = {"state": PRETRAINED_STATE,
          "d": str(stack.input_dim),
          "layer_sizes": ",".join(str(W.shape[1]) for W, _ in stack.layers)}
    md.update({k: str(v) for k, v in (metadata or {}).items()})
    write_container(path, tensors, md)


def load_pretrained_stack(path) -> EncoderStack:
    tensors, _ = read_container(path)
    return _stack_from_tensors(tensors)


def _stack_from_tensors(tensors: dict) -> EncoderStack:
    indices = sorted({int(name.split(".")[1]) for name in tensors
                      if name.startswith("encoder.")})
    if indices and indices != list(range(len(indices))):
        raise ValueError(f"non-contiguous encoder layer indices {indices}")
    return EncoderStack([
        (tensors[f"encoder.{i}.weights"], tensors[f"encoder.{i}.bias"])
        for i in indices
    ])
