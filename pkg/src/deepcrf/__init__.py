"""Sequence labeling with a linear-chain CRF over a stacked logistic encoder,
pretrained with RBMs and trained online (perceptron for the CRF parameters,
SGD with an L1 penalty for the encoder weights)."""

from .crf import (
    ChainMarginals,
    CrfGradients,
    CrfParams,
    DecodeResult,
    energy,
    log_partition,
    loglik_gradients,
    marginals,
    perceptron_gradients,
    viterbi,
)
from .data import (
    Dataset,
    LabelAlphabet,
    LabeledSequence,
    WordImage,
    load_dataset,
    load_icdar,
    load_ocr,
    make_folds,
    normalize_character,
    save_dataset,
    segment_word_image,
)
from .encoder import EncoderStack, ForwardTrace, backprop, encode, encode_sequence, sgd_step
from .evaluation import (
    EvalReport,
    character_error_rate,
    compare_report,
    cross_validate,
    word_error_rate,
)
from .rbm import PretrainConfig, Rbm, cd1_step, hidden_probs, pretrain_stack, visible_probs
from .training import (
    DeepCrfModel,
    StepSizes,
    SweepRecord,
    TrainConfig,
    TrainingDiverged,
    init_model,
    load_model,
    predict_labels,
    save_model,
    train,
    train_sequence,
    tune_base_step,
)

__version__ = "0.1.0"
