"""Count-based next-action model: bigram with add-epsilon smoothing, unigram backoff.

Transparent enough to hand-check, which makes it the reference predictor for
the likelihood-matrix tests and a fast alternative to the recurrent model.
"""

from __future__ import annotations

import numpy as np

from .corpus import PAD, TrainingPair


class NgramPredictor:
    """P(next | prev) = (c(prev, next) + eps) / (c(prev, .) + eps * (A - 1));
    an unseen prev context backs off to the add-eps unigram. PAD is excluded
    from the support, so distributions cover indices 1..A-1."""

    kind = "ngram"

    def __init__(
        self,
        bigram: np.ndarray,
        unigram: np.ndarray,
        epsilon: float,
        intention: int = 0,
        vocab_hash: bytes = b"\x00" * 32,
        metadata: dict | None = None,
    ):
        bigram = np.asarray(bigram, dtype=np.float64)
        unigram = np.asarray(unigram, dtype=np.float64)
        A = unigram.shape[0]
        if bigram.shape != (A, A):
            raise ValueError(f"bigram shape {bigram.shape} does not match unigram size {A}")
        if epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {epsilon}")
        if not (np.isfinite(bigram).all() and np.isfinite(unigram).all()):
            raise ValueError("count tables must be finite")
        self.bigram = bigram
        self.unigram = unigram
        self.epsilon = float(epsilon)
        self.intention = int(intention)
        self.vocab_size = A
        self.vocab_hash = vocab_hash
        self.metadata = dict(metadata or {})

    @classmethod
    def fit(
        cls,
        pairs: list[TrainingPair],
        vocab_size: int,
        epsilon: float = 0.1,
        intention: int = 0,
        vocab_hash: bytes = b"\x00" * 32,
        metadata: dict | None = None,
    ) -> "NgramPredictor":
        bigram = np.zeros((vocab_size, vocab_size))
        unigram = np.zeros(vocab_size)
        for pair in pairs:
            bigram[pair.prefix[-1], pair.target] += 1.0
            unigram[pair.target] += 1.0
        meta = {"epsilon": epsilon, "n_pairs": len(pairs)}
        meta.update(metadata or {})
        return cls(bigram, unigram, epsilon, intention, vocab_hash, meta)

    def _validate_prefix(self, prefix) -> tuple[int, ...]:
        prefix = tuple(int(a) for a in prefix)
        if len(prefix) == 0:
            raise ValueError("prefix must be non-empty")
        for a in prefix:
            if a == PAD:
                raise ValueError("prefix must not contain PAD")
            if not 0 <= a < self.vocab_size:
                raise ValueError(f"action index {a} outside vocabulary of size {self.vocab_size}")
        return prefix

    def _smooth(self, counts: np.ndarray) -> np.ndarray:
        support = self.vocab_size - 1  # everything but PAD
        denom = counts[1:].sum() + self.epsilon * support
        probs = np.zeros(self.vocab_size)
        if denom == 0.0:
            probs[1:] = 1.0 / support
        else:
            probs[1:] = (counts[1:] + self.epsilon) / denom
        return probs

    def predict_next(self, prefix) -> np.ndarray:
        prefix = self._validate_prefix(prefix)
        row = self.bigram[prefix[-1]]
        counts = row if row.sum() > 0 else self.unigram
        return self._smooth(counts)

    def step_distributions(self, seq) -> np.ndarray:
        """Next-action distributions after each proper prefix of seq: row k-1
        is the distribution for position k given seq[:k], k = 1..len-1."""
        seq = self._validate_prefix(seq)
        if len(seq) < 2:
            raise ValueError("sequence must have length >= 2")
        return np.stack([self.predict_next(seq[:k]) for k in range(1, len(seq))])
