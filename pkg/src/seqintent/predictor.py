"""Shared predictor surface: training dispatch, prediction contract, likelihood matrices.

One predictor is trained per assumed intention. Feeding an observed sequence
to all of them yields the likelihood matrix: entry (k, i) is the probability
model i assigned to the action actually observed at position k, conditioned
on the true observed prefix. These probabilities are the surrogate likelihood
consumed by the inference module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import PAD, ActionVocabulary, TrainingPair
from .ngram import NgramPredictor
from .recurrent import RecurrentPredictor, TrainingDiverged, gradient_check

__all__ = [
    "PROB_FLOOR",
    "Hyperparameters",
    "LikelihoodMatrix",
    "PredictorError",
    "TrainingDiverged",
    "build_likelihood_matrix",
    "gradient_check",
    "predict_next",
    "train",
]

# Likelihood entries are clamped to this floor before use: a numerical zero
# from one model must not veto an intention irrecoverably.
PROB_FLOOR = 1e-12

NGRAM_EPSILON = 0.1


class PredictorError(ValueError):
    """Invalid training input or incompatible models."""


@dataclass(frozen=True)
class Hyperparameters:
    """Training configuration. Defaults follow the recurrent model's
    reference setup: 2,000 epochs, batch size 32, learning rate 3e-4."""

    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 3e-4
    embed_dim: int = 32
    hidden_dim: int = 64
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise PredictorError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise PredictorError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise PredictorError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise PredictorError("embed_dim and hidden_dim must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise PredictorError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.seed < 0:
            raise PredictorError("seed must be non-negative")


def _validate_pairs(pairs: Sequence[TrainingPair], vocab_size: int) -> None:
    if len(pairs) == 0:
        raise PredictorError("training set is empty")
    for pair in pairs:
        if len(pair.prefix) == 0:
            raise PredictorError("training pair with empty prefix")
        for a in (*pair.prefix, pair.target):
            if a == PAD:
                raise PredictorError("training pairs must not contain PAD")
            if not 0 <= a < vocab_size:
                raise PredictorError(
                    f"action index {a} outside vocabulary of size {vocab_size}"
                )


def train(
    pairs: Sequence[TrainingPair],
    hp: Hyperparameters,
    kind: str,
    vocabulary: ActionVocabulary,
    intention: int = 0,
):
    """Train one next-action predictor for one assumed intention.

    kind='recurrent' runs the gradient-descent loop; kind='ngram' is
    closed-form counting (epochs and learning rate are ignored)."""
    pairs = list(pairs)
    _validate_pairs(pairs, vocabulary.size)
    vocab_hash = vocabulary.sha256()
    if kind == "recurrent":
        return RecurrentPredictor.fit(
            pairs, hp, vocab_size=vocabulary.size, intention=intention, vocab_hash=vocab_hash
        )
    if kind == "ngram":
        return NgramPredictor.fit(
            pairs,
            vocab_size=vocabulary.size,
            epsilon=NGRAM_EPSILON,
            intention=intention,
            vocab_hash=vocab_hash,
            metadata={"seed": hp.seed},
        )
    raise PredictorError(f"unknown predictor kind {kind!r}")


def predict_next(model, prefix) -> np.ndarray:
    """Probability vector over the vocabulary for the next action: length A,
    non-negative, sums to 1, PAD entry exactly 0."""
    return model.predict_next(prefix)


@dataclass(eq=False)
class LikelihoodMatrix:
    """Per-position, per-assumed-intention probability of the observed action.

    probs[k-1, i] = P(a_k | assumed intention i), floored at PROB_FLOOR.
    distributions keeps the full (K, N, A) per-position outputs for
    diagnostics; these are not floored.
    """

    probs: np.ndarray
    distributions: np.ndarray | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[0] < 1 or self.probs.shape[1] < 1:
            raise PredictorError(f"likelihood matrix must be 2-D, got shape {self.probs.shape}")
        if not np.isfinite(self.probs).all():
            raise PredictorError("likelihood matrix contains non-finite entries")
        if (self.probs <= 0).any() or (self.probs > 1.0 + 1e-12).any():
            raise PredictorError("likelihood entries must lie in (0, 1] after flooring")

    @property
    def n_positions(self) -> int:
        return self.probs.shape[0]

    @property
    def n_intentions(self) -> int:
        return self.probs.shape[1]


def build_likelihood_matrix(models: Sequence, seq) -> LikelihoodMatrix:
    """Score one observed sequence under every per-intention model.

    Each position k = 1..L is predicted from the true observed prefix
    seq[0..k-1] (teacher forcing), so the matrix has len(seq) - 1 rows.
    """
    if len(models) < 1:
        raise PredictorError("need at least one model")
    sizes = {m.vocab_size for m in models}
    if len(sizes) != 1:
        raise PredictorError(f"models disagree on vocabulary size: {sorted(sizes)}")
    seq = tuple(int(a) for a in seq)
    if len(seq) < 2:
        raise PredictorError("sequence must have length >= 2 to score any position")
    dists = np.stack([m.step_distributions(seq) for m in models], axis=1)  # (K, N, A)
    observed = np.asarray(seq[1:], dtype=np.int64)
    probs = dists[np.arange(len(observed)), :, observed]
    return LikelihoodMatrix(probs=np.maximum(probs, PROB_FLOOR), distributions=dists)
