"""Gated recurrent next-action model trained by explicit backpropagation.

Architecture: learned embeddings -> single GRU cell -> two affine head layers
(tanh between) -> softmax over the action vocabulary with PAD masked out.
Everything is float64 numpy; gradients are derived by hand and validated
against central finite differences (see gradient_check).

Batches are right-padded to the longest prefix in the batch; padded steps
carry the hidden state through unchanged, so they contribute nothing to the
loss or the gradients.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

import numpy as np

from .corpus import PAD, TrainingPair

if TYPE_CHECKING:
    from .predictor import Hyperparameters

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
INIT_SCALE = 0.08

# Fixed parameter order: checkpoint layout and gradient-check coordinate
# indexing both depend on it.
PARAM_KEYS = (
    "embed",
    "W_z", "W_r", "W_c",
    "U_z", "U_r", "U_c",
    "b_z", "b_r", "b_c",
    "W_h1", "b_h1",
    "W_h2", "b_h2",
)


class TrainingDiverged(RuntimeError):
    """Non-finite loss encountered during training."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _pad_batch(prefixes) -> tuple[np.ndarray, np.ndarray]:
    B = len(prefixes)
    T = max(len(p) for p in prefixes)
    ids = np.zeros((B, T), dtype=np.int64)  # PAD on the right
    mask = np.zeros((B, T))
    for i, prefix in enumerate(prefixes):
        ids[i, : len(prefix)] = prefix
        mask[i, : len(prefix)] = 1.0
    return ids, mask


class RecurrentPredictor:
    kind = "recurrent"

    def __init__(
        self,
        params: dict[str, np.ndarray],
        intention: int = 0,
        vocab_hash: bytes = b"\x00" * 32,
        metadata: dict | None = None,
    ):
        missing = [k for k in PARAM_KEYS if k not in params]
        if missing:
            raise ValueError(f"missing parameters: {missing}")
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in PARAM_KEYS}
        for key, value in self.params.items():
            if not np.isfinite(value).all():
                raise ValueError(f"parameter {key!r} contains non-finite values")
        self.vocab_size = self.params["embed"].shape[0]
        self.embed_dim = self.params["embed"].shape[1]
        self.hidden_dim = self.params["U_z"].shape[0]
        self.intention = int(intention)
        self.vocab_hash = vocab_hash
        self.metadata = dict(metadata or {})

    @classmethod
    def initialize(
        cls,
        vocab_size: int,
        embed_dim: int,
        hidden_dim: int,
        seed=0,
        intention: int = 0,
        vocab_hash: bytes = b"\x00" * 32,
        metadata: dict | None = None,
    ) -> "RecurrentPredictor":
        """Fresh model: weights uniform(-0.08, 0.08), biases zero."""
        rng = np.random.default_rng(seed)
        A, D, H = vocab_size, embed_dim, hidden_dim

        def u(*shape):
            return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

        params = {
            "embed": u(A, D),
            "W_z": u(D, H), "W_r": u(D, H), "W_c": u(D, H),
            "U_z": u(H, H), "U_r": u(H, H), "U_c": u(H, H),
            "b_z": np.zeros(H), "b_r": np.zeros(H), "b_c": np.zeros(H),
            "W_h1": u(H, H), "b_h1": np.zeros(H),
            "W_h2": u(H, A), "b_h2": np.zeros(A),
        }
        return cls(params, intention, vocab_hash, metadata)

    # -- forward / backward -------------------------------------------------

    def _forward_hidden(self, ids, mask, keep_caches=True):
        p = self.params
        B, T = ids.shape
        h = np.zeros((B, self.hidden_dim))
        caches = []
        states = []
        for t in range(T):
            idx = ids[:, t]
            x = p["embed"][idx]
            z = _sigmoid(x @ p["W_z"] + h @ p["U_z"] + p["b_z"])
            r = _sigmoid(x @ p["W_r"] + h @ p["U_r"] + p["b_r"])
            rh = r * h
            c = np.tanh(x @ p["W_c"] + rh @ p["U_c"] + p["b_c"])
            cand = (1.0 - z) * h + z * c
            m = mask[:, t : t + 1]
            h_new = m * cand + (1.0 - m) * h
            if keep_caches:
                caches.append((idx, x, z, r, rh, c, h, m))
            states.append(h_new)
            h = h_new
        return h, caches, states

    def _head(self, h):
        p = self.params
        t1 = np.tanh(h @ p["W_h1"] + p["b_h1"])
        logits = t1 @ p["W_h2"] + p["b_h2"]
        logits[:, PAD] = -np.inf  # PAD carries zero probability
        return logits, t1

    @staticmethod
    def _softmax(logits):
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def _loss_and_grads(self, prefixes, targets):
        """Mean cross-entropy over the batch and gradients for all parameters."""
        p = self.params
        ids, mask = _pad_batch(prefixes)
        targets = np.asarray(targets, dtype=np.int64)
        B = len(prefixes)
        hf, caches, _ = self._forward_hidden(ids, mask)
        logits, t1 = self._head(hf)
        probs = self._softmax(logits)
        with np.errstate(divide="ignore"):
            loss = float(-np.log(probs[np.arange(B), targets]).mean())

        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dlogits = probs.copy()
        dlogits[np.arange(B), targets] -= 1.0
        dlogits /= B
        grads["W_h2"] = t1.T @ dlogits
        grads["b_h2"] = dlogits.sum(axis=0)
        da1 = (dlogits @ p["W_h2"].T) * (1.0 - t1 * t1)
        grads["W_h1"] = hf.T @ da1
        grads["b_h1"] = da1.sum(axis=0)
        dh = da1 @ p["W_h1"].T

        for t in reversed(range(ids.shape[1])):
            idx, x, z, r, rh, c, h_prev, m = caches[t]
            d_cand = dh * m
            dh_prev = dh * (1.0 - m)
            dz = d_cand * (c - h_prev)
            dc = d_cand * z
            dh_prev += d_cand * (1.0 - z)
            dsc = dc * (1.0 - c * c)
            grads["W_c"] += x.T @ dsc
            grads["U_c"] += rh.T @ dsc
            grads["b_c"] += dsc.sum(axis=0)
            drh = dsc @ p["U_c"].T
            dr = drh * h_prev
            dh_prev += drh * r
            dsz = dz * z * (1.0 - z)
            dsr = dr * r * (1.0 - r)
            grads["W_z"] += x.T @ dsz
            grads["U_z"] += h_prev.T @ dsz
            grads["b_z"] += dsz.sum(axis=0)
            grads["W_r"] += x.T @ dsr
            grads["U_r"] += h_prev.T @ dsr
            grads["b_r"] += dsr.sum(axis=0)
            dh_prev += dsz @ p["U_z"].T + dsr @ p["U_r"].T
            dx = dsz @ p["W_z"].T + dsr @ p["W_r"].T + dsc @ p["W_c"].T
            np.add.at(grads["embed"], idx, dx)
            dh = dh_prev
        return loss, grads

    # -- training -----------------------------------------------------------

    @classmethod
    def fit(
        cls,
        pairs: list[TrainingPair],
        hp: "Hyperparameters",
        vocab_size: int,
        intention: int = 0,
        vocab_hash: bytes = b"\x00" * 32,
    ) -> "RecurrentPredictor":
        model = cls.initialize(
            vocab_size, hp.embed_dim, hp.hidden_dim, seed=[hp.seed, 0],
            intention=intention, vocab_hash=vocab_hash,
        )
        prefixes = [pair.prefix for pair in pairs]
        targets = np.array([pair.target for pair in pairs], dtype=np.int64)
        initial_loss = model.mean_loss(pairs)

        rng = np.random.default_rng([hp.seed, 1])
        adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
        adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}
        step = 0
        for epoch in range(hp.epochs):
            order = rng.permutation(len(pairs))
            for b, start in enumerate(range(0, len(pairs), hp.batch_size)):
                sel = order[start : start + hp.batch_size]
                loss, grads = model._loss_and_grads(
                    [prefixes[i] for i in sel], targets[sel]
                )
                if not np.isfinite(loss):
                    raise TrainingDiverged(epoch, b)
                step += 1
                if hp.optimizer == "adam":
                    c1 = 1.0 - ADAM_BETA1**step
                    c2 = 1.0 - ADAM_BETA2**step
                    for key, g in grads.items():
                        m = adam_m[key]
                        v = adam_v[key]
                        m *= ADAM_BETA1
                        m += (1.0 - ADAM_BETA1) * g
                        v *= ADAM_BETA2
                        v += (1.0 - ADAM_BETA2) * g * g
                        model.params[key] -= hp.learning_rate * (m / c1) / (
                            np.sqrt(v / c2) + ADAM_EPS
                        )
                else:
                    for key, g in grads.items():
                        model.params[key] -= hp.learning_rate * g

        model.metadata.update(
            {
                "epochs": hp.epochs,
                "batch_size": hp.batch_size,
                "learning_rate": hp.learning_rate,
                "optimizer": hp.optimizer,
                "seed": hp.seed,
                "initial_loss": initial_loss,
                "final_loss": model.mean_loss(pairs),
            }
        )
        return model

    def mean_loss(self, pairs: Sequence[TrainingPair], batch_size: int = 512) -> float:
        """Mean cross-entropy over a pair set (no gradients)."""
        total = 0.0
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            ids, mask = _pad_batch([p.prefix for p in chunk])
            targets = np.array([p.target for p in chunk], dtype=np.int64)
            hf, _, _ = self._forward_hidden(ids, mask, keep_caches=False)
            logits, _ = self._head(hf)
            probs = self._softmax(logits)
            with np.errstate(divide="ignore"):
                total += float(-np.log(probs[np.arange(len(chunk)), targets]).sum())
        return total / len(pairs)

    # -- prediction ---------------------------------------------------------

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

    def predict_next(self, prefix) -> np.ndarray:
        prefix = self._validate_prefix(prefix)
        ids = np.array([prefix], dtype=np.int64)
        mask = np.ones_like(ids, dtype=np.float64)
        hf, _, _ = self._forward_hidden(ids, mask, keep_caches=False)
        logits, _ = self._head(hf)
        return self._softmax(logits)[0]

    def step_distributions(self, seq) -> np.ndarray:
        """Next-action distributions after each proper prefix, in one pass."""
        seq = self._validate_prefix(seq)
        if len(seq) < 2:
            raise ValueError("sequence must have length >= 2")
        ids = np.array([seq], dtype=np.int64)
        mask = np.ones_like(ids, dtype=np.float64)
        _, _, states = self._forward_hidden(ids, mask, keep_caches=False)
        hs = np.concatenate(states[:-1], axis=0)  # h after steps 1..L-1
        logits, _ = self._head(hs)
        return self._softmax(logits)


def gradient_check(
    model: RecurrentPredictor,
    pairs: Sequence[TrainingPair],
    n_coords: int = 200,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central finite-difference
    gradients over a random subset of parameter coordinates."""
    if getattr(model, "kind", None) != "recurrent":
        raise ValueError("gradient check applies to recurrent models only")
    if len(pairs) == 0:
        raise ValueError("batch must be non-empty")
    if n_coords < 1:
        raise ValueError("must sample at least one coordinate")
    prefixes = [p.prefix for p in pairs]
    targets = np.array([p.target for p in pairs], dtype=np.int64)
    _, grads = model._loss_and_grads(prefixes, targets)
    for key, g in grads.items():
        if not np.isfinite(g).all():
            raise ArithmeticError(f"non-finite gradient in {key!r}")

    sizes = [model.params[k].size for k in PARAM_KEYS]
    offsets = np.cumsum([0] + sizes)
    total = offsets[-1]
    rng = np.random.default_rng(seed)
    coords = rng.choice(total, size=min(n_coords, total), replace=False)

    def loss_at():
        ids, mask = _pad_batch(prefixes)
        hf, _, _ = model._forward_hidden(ids, mask, keep_caches=False)
        logits, _ = model._head(hf)
        probs = model._softmax(logits)
        return float(-np.log(probs[np.arange(len(pairs)), targets]).mean())

    worst = 0.0
    for coord in coords:
        key_idx = int(np.searchsorted(offsets, coord, side="right") - 1)
        key = PARAM_KEYS[key_idx]
        flat = model.params[key].reshape(-1)
        off = int(coord - offsets[key_idx])
        original = flat[off]
        flat[off] = original + step
        loss_plus = loss_at()
        flat[off] = original - step
        loss_minus = loss_at()
        flat[off] = original
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        analytic = grads[key].reshape(-1)[off]
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
