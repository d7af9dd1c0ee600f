"""Linear first-order chain CRF over latent feature sequences.

The model assigns every length-T label sequence ``y`` an energy

    E(h, y) = pi[y_0] + tau[y_{T-1}]
              + sum_t  h_t . W[:, y_t] + b[y_t]
              + sum_{t>=1}  A[y_{t-1}, y_t]

and the conditional probability p(y | h) = exp(E(h, y)) / Z(h).  All dynamic
programs here run in log space: the log-partition and the posterior marginals
come from the forward-backward recursions, the argmax sequence from Viterbi.
Gradients are exact (pairwise posteriors, not an outer-product approximation)
so they survive finite-difference checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass
class CrfParams:
    """Top-layer CRF parameters.

    A   : (K, K) transition scores, A[j, k] = score of label j followed by k
    W   : (d_h, K) emission weights applied to latent features
    b   : (K,) per-label bias
    pi  : (K,) initial-state scores
    tau : (K,) final-state scores
    """

    A: np.ndarray
    W: np.ndarray
    b: np.ndarray
    pi: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.pi = np.asarray(self.pi, dtype=np.float64)
        self.tau = np.asarray(self.tau, dtype=np.float64)
        K = self.A.shape[0]
        if self.A.shape != (K, K):
            raise ValueError(f"transition matrix must be square, got {self.A.shape}")
        if self.W.ndim != 2 or self.W.shape[1] != K:
            raise ValueError(f"emission matrix shape {self.W.shape} inconsistent with K={K}")
        for name in ("b", "pi", "tau"):
            v = getattr(self, name)
            if v.shape != (K,):
                raise ValueError(f"{name} must have shape ({K},), got {v.shape}")
        for name in ("A", "W", "b", "pi", "tau"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def d_h(self) -> int:
        return self.W.shape[0]

    @classmethod
    def zeros(cls, d_h: int, K: int) -> "CrfParams":
        return cls(
            A=np.zeros((K, K)),
            W=np.zeros((d_h, K)),
            b=np.zeros(K),
            pi=np.zeros(K),
            tau=np.zeros(K),
        )

    def copy(self) -> "CrfParams":
        return CrfParams(self.A.copy(), self.W.copy(), self.b.copy(),
                         self.pi.copy(), self.tau.copy())


@dataclass
class ChainMarginals:
    """Exact posteriors from forward-backward.

    gamma : (T, K) unary posteriors, each row sums to 1
    xi    : (T-1, K, K) pairwise posteriors, xi[t, j, k] = p(y_t=j, y_{t+1}=k)
    log_Z : log-partition (computed from the backward recursion, so it can be
            cross-checked against the forward-recursion ``log_partition``)
    """

    gamma: np.ndarray
    xi: np.ndarray
    log_Z: float


@dataclass
class DecodeResult:
    """Viterbi decode: argmax labels, their energy, and log p(labels | h)."""

    labels: list[int]
    score: float
    log_prob: float


@dataclass
class CrfGradients:
    """Gradient blocks matching CrfParams, plus per-frame feature gradients.

    ``h`` has shape (T, d_h); row t is the gradient with respect to the latent
    feature vector of frame t.  Sign convention follows the producing
    operation (ascent directions for the log-likelihood/perceptron forms).
    """

    A: np.ndarray
    W: np.ndarray
    b: np.ndarray
    pi: np.ndarray
    tau: np.ndarray
    h: np.ndarray


def _as_feature_matrix(params: CrfParams, h_seq) -> np.ndarray:
    H = np.asarray(h_seq, dtype=np.float64)
    if H.ndim == 1:
        H = H[None, :]
    if H.ndim != 2 or H.shape[0] < 1:
        raise ValueError(f"latent sequence must be (T, d_h), got shape {H.shape}")
    if H.shape[1] != params.d_h:
        raise ValueError(
            f"latent dimension mismatch: features have {H.shape[1]}, CRF expects {params.d_h}"
        )
    return H


def _check_labels(params: CrfParams, y, T: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (T,):
        raise ValueError(f"label sequence length {y.shape} does not match T={T}")
    if y.min() < 0 or y.max() >= params.K:
        raise ValueError(f"label out of range [0, {params.K})")
    return y


def unary_scores(params: CrfParams, h_seq) -> np.ndarray:
    """(T, K) matrix of per-position label scores, with pi/tau folded into the
    first/last rows.  For T == 1 the single row carries both."""
    H = _as_feature_matrix(params, h_seq)
    U = H @ params.W + params.b
    U[0] += params.pi
    U[-1] += params.tau
    return U


def energy(params: CrfParams, h_seq, y) -> float:
    """Unnormalized log-score of the (features, labels) pair."""
    U = unary_scores(params, h_seq)
    T = U.shape[0]
    y = _check_labels(params, y, T)
    e = U[np.arange(T), y].sum()
    if T > 1:
        e += params.A[y[:-1], y[1:]].sum()
    return float(e)


def log_partition(params: CrfParams, h_seq) -> float:
    """log Z(h) by the forward recursion in log space."""
    U = unary_scores(params, h_seq)
    alpha = U[0]
    for t in range(1, U.shape[0]):
        alpha = U[t] + logsumexp(alpha[:, None] + params.A, axis=0)
    z = float(logsumexp(alpha))
    if not np.isfinite(z):
        raise FloatingPointError("non-finite log-partition")
    return z


def _forward_backward(params: CrfParams, U: np.ndarray):
    T, K = U.shape
    alphas = np.empty((T, K))
    alphas[0] = U[0]
    for t in range(1, T):
        alphas[t] = U[t] + logsumexp(alphas[t - 1][:, None] + params.A, axis=0)
    betas = np.empty((T, K))
    betas[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        betas[t] = logsumexp(params.A + (U[t + 1] + betas[t + 1])[None, :], axis=1)
    return alphas, betas


def marginals(params: CrfParams, h_seq) -> ChainMarginals:
    """Exact unary and pairwise posteriors under p(y | h)."""
    U = unary_scores(params, h_seq)
    T, K = U.shape
    alphas, betas = _forward_backward(params, U)
    # Backward-recursion estimate of log Z; an independent cross-check against
    # the forward-based log_partition().
    log_Z = float(logsumexp(U[0] + betas[0]))
    if not np.isfinite(log_Z):
        raise FloatingPointError("non-finite log-partition in forward-backward")
    gamma = np.exp(alphas + betas - log_Z)
    xi = np.empty((T - 1, K, K))
    for t in range(T - 1):
        xi[t] = np.exp(
            alphas[t][:, None] + params.A + (U[t + 1] + betas[t + 1])[None, :] - log_Z
        )
    return ChainMarginals(gamma=gamma, xi=xi, log_Z=log_Z)


def viterbi(params: CrfParams, h_seq) -> DecodeResult:
    """Highest-energy label sequence.

    Ties are broken toward the smaller label index at every backtrack step
    (np.argmax picks the first maximizer), so the all-zero parameter case
    decodes to all zeros.
    """
    U = unary_scores(params, h_seq)
    T, K = U.shape
    delta = U[0]
    backptr = np.empty((T, K), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + params.A
        backptr[t] = np.argmax(cand, axis=0)
        delta = U[t] + cand[backptr[t], np.arange(K)]
    last = int(np.argmax(delta))
    score = float(delta[last])
    labels = [0] * T
    labels[T - 1] = last
    for t in range(T - 1, 0, -1):
        labels[t - 1] = int(backptr[t][labels[t]])
    return DecodeResult(labels=labels, score=score,
                        log_prob=score - log_partition(params, h_seq))


def _one_hot(indices: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((len(indices), K))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def _pair_counts(y: np.ndarray, K: int) -> np.ndarray:
    counts = np.zeros((K, K))
    np.add.at(counts, (y[:-1], y[1:]), 1.0)
    return counts


def _gradients_from_stats(params: CrfParams, H: np.ndarray, y: np.ndarray,
                          gamma: np.ndarray, xi: np.ndarray) -> CrfGradients:
    """Shared gradient assembly.

    With soft posteriors (gamma, xi) this is the exact ascent gradient of
    log p(y | h); with hard one-hot assignments from a decoded sequence it is
    the structured-perceptron difference.  Both callers route through here so
    the hard-substitution equivalence holds bitwise.
    """
    K = params.K
    Y = _one_hot(y, K)
    diff = Y - gamma
    dA = _pair_counts(y, K) - xi.sum(axis=0)
    dW = H.T @ diff
    db = diff.sum(axis=0)
    dpi = diff[0].copy()
    dtau = diff[-1].copy()
    dh = diff @ params.W.T
    return CrfGradients(A=dA, W=dW, b=db, pi=dpi, tau=dtau, h=dh)


def loglik_gradients(params: CrfParams, h_seq, y, *,
                     stats: ChainMarginals | None = None,
                     pairwise: str = "exact") -> CrfGradients:
    """Ascent gradients of log p(y | h) for all five parameter blocks and for
    the per-frame features.

    stats    : posteriors to use; computed by forward-backward when omitted.
               Passing hard one-hot statistics reproduces the perceptron form.
    pairwise : "exact" uses the pairwise posteriors xi (the form that matches
               finite differences).  "outer" substitutes the outer products
               gamma_{t-1} gamma_t^T for xi; kept as a documented approximation
               only, it is not the exact gradient of the log-likelihood.
    """
    H = _as_feature_matrix(params, h_seq)
    y = _check_labels(params, y, H.shape[0])
    if stats is None:
        stats = marginals(params, h_seq)
    gamma = stats.gamma
    if pairwise == "exact":
        xi = stats.xi
    elif pairwise == "outer":
        xi = gamma[:-1, :, None] * gamma[1:, None, :]
    else:
        raise ValueError(f"unknown pairwise mode {pairwise!r}")
    return _gradients_from_stats(params, H, y, gamma, xi)


def hard_assignment_stats(y_star: np.ndarray, K: int) -> ChainMarginals:
    """One-hot 'posteriors' concentrated on a single decoded sequence."""
    y_star = np.asarray(y_star, dtype=np.int64)
    gamma = _one_hot(y_star, K)
    xi = gamma[:-1, :, None] * gamma[1:, None, :]
    return ChainMarginals(gamma=gamma, xi=xi, log_Z=float("nan"))


def perceptron_gradients(params: CrfParams, h_seq, y, y_star) -> CrfGradients:
    """Structured-perceptron update direction: the gradient of
    E(h, y) - E(h, y*) with respect to every parameter block.

    Identically zero when y == y*.  Implemented by substituting the hard
    assignment y* for the soft posteriors in the log-likelihood gradient, so
    the two coincide bitwise under that substitution.
    """
    H = _as_feature_matrix(params, h_seq)
    y = _check_labels(params, y, H.shape[0])
    y_star = np.asarray(y_star, dtype=np.int64)
    if y_star.shape != y.shape:
        raise ValueError(
            f"decoded sequence length {y_star.shape} does not match gold {y.shape}"
        )
    stats = hard_assignment_stats(y_star, params.K)
    return _gradients_from_stats(params, H, y, stats.gamma, stats.xi)
