"""Action/intention data model: vocabulary, labeled sequences, JSONL ingestion.

The interchange format is JSONL with one sequence per line:

    {"intention": "put_fridge", "user": "u012", "actions": ["walk_kitchen", ...]}

Vocabularies reserve index 0 for PAD and index 1 for UNK; real actions occupy
indices 2..A-1 in lexicographic order so that indices are stable across runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property
from hashlib import sha256
from typing import Iterable

PAD = 0
UNK = 1
PAD_NAME = "<pad>"
UNK_NAME = "<unk>"
RESERVED_NAMES = (PAD_NAME, UNK_NAME)


class CorpusError(ValueError):
    """Invalid corpus content or construction."""


class MalformedLine(CorpusError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptySequence(CorpusError):
    def __init__(self, line: int):
        super().__init__(f"line {line}: empty action array")
        self.line = line


@dataclass(frozen=True)
class ActionVocabulary:
    """Ordered action names; index 0 is PAD, index 1 is UNK, the rest are real actions."""

    actions: tuple[str, ...]

    def __post_init__(self):
        if len(self.actions) < 3:
            raise CorpusError("vocabulary needs PAD, UNK and at least one real action")
        if self.actions[PAD] != PAD_NAME or self.actions[UNK] != UNK_NAME:
            raise CorpusError(f"vocabulary indices 0/1 must be {PAD_NAME!r}/{UNK_NAME!r}")
        seen = set()
        for name in self.actions:
            if not name:
                raise CorpusError("action names must be non-empty")
            if name in seen:
                raise CorpusError(f"duplicate action name {name!r}")
            seen.add(name)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "ActionVocabulary":
        """Build a vocabulary from real action names (deduplicated, sorted)."""
        ordered = sorted(set(names))
        for name in ordered:
            if name in RESERVED_NAMES:
                raise CorpusError(f"action name {name!r} is reserved")
        return cls(actions=(PAD_NAME, UNK_NAME, *ordered))

    @cached_property
    def _index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.actions)}

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def size(self) -> int:
        return len(self.actions)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise CorpusError(f"unknown action {name!r}") from None

    def encode(self, names: Iterable[str]) -> tuple[int, ...]:
        """Map action names to indices; names outside the vocabulary map to UNK."""
        return tuple(self._index.get(name, UNK) for name in names)

    def decode(self, indices: Iterable[int]) -> tuple[str, ...]:
        return tuple(self.actions[i] for i in indices)

    def sha256(self) -> bytes:
        """Content hash binding checkpoints and manifests to this vocabulary."""
        return sha256("\n".join(self.actions).encode("utf-8")).digest()


@dataclass(frozen=True)
class LabeledSequence:
    """One intention-labeled action sequence: indices a_0..a_L, never PAD."""

    intention: int
    user: str
    actions: tuple[int, ...]

    def __post_init__(self):
        if len(self.actions) < 1:
            raise CorpusError("sequence must contain at least one action")
        if self.intention < 0:
            raise CorpusError("intention index must be non-negative")
        for a in self.actions:
            if a == PAD:
                raise CorpusError("sequences must not contain PAD")
            if a < 0:
                raise CorpusError(f"negative action index {a}")

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class TrainingPair:
    """A prefix a_0..a_k and the ground-truth next action a_{k+1}."""

    prefix: tuple[int, ...]
    target: int


@dataclass(frozen=True)
class Corpus:
    vocabulary: ActionVocabulary
    intentions: tuple[str, ...]
    sequences: tuple[LabeledSequence, ...]

    def __post_init__(self):
        if len(self.intentions) < 1:
            raise CorpusError("corpus needs at least one intention")
        if len(set(self.intentions)) != len(self.intentions):
            raise CorpusError("intention names must be unique")
        for name in self.intentions:
            if not name:
                raise CorpusError("intention names must be non-empty")
        A = self.vocabulary.size
        for seq in self.sequences:
            if seq.intention >= len(self.intentions):
                raise CorpusError(
                    f"sequence labeled {seq.intention} but corpus has "
                    f"{len(self.intentions)} intentions"
                )
            for a in seq.actions:
                if a >= A:
                    raise CorpusError(f"action index {a} outside vocabulary of size {A}")

    @property
    def n_intentions(self) -> int:
        return len(self.intentions)

    def per_intention_counts(self) -> tuple[int, ...]:
        """Number of sequences labeled with each intention."""
        counts = [0] * len(self.intentions)
        for seq in self.sequences:
            counts[seq.intention] += 1
        return tuple(counts)

    def sequences_for(self, intention: int) -> tuple[LabeledSequence, ...]:
        return tuple(s for s in self.sequences if s.intention == intention)


def parse_corpus(data: bytes | str) -> Corpus:
    """Parse a JSONL corpus. Vocabulary is the union of observed actions plus
    PAD/UNK; intentions are sorted lexicographically; sequence order follows
    the file."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    rows: list[tuple[str, str, list[str]]] = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise MalformedLine(lineno, "expected a JSON object")
        intention = obj.get("intention")
        user = obj.get("user")
        actions = obj.get("actions")
        if not isinstance(intention, str) or not intention:
            raise MalformedLine(lineno, "field 'intention' must be a non-empty string")
        if not isinstance(user, str):
            raise MalformedLine(lineno, "field 'user' must be a string")
        if not isinstance(actions, list):
            raise MalformedLine(lineno, "field 'actions' must be an array of strings")
        if len(actions) == 0:
            raise EmptySequence(lineno)
        for a in actions:
            if not isinstance(a, str) or not a:
                raise MalformedLine(lineno, "actions must be non-empty strings")
            if a in RESERVED_NAMES:
                raise MalformedLine(lineno, f"action name {a!r} is reserved")
        rows.append((intention, user, actions))
    if not rows:
        raise CorpusError("corpus contains no sequences")

    vocabulary = ActionVocabulary.from_names(a for _, _, actions in rows for a in actions)
    intentions = tuple(sorted({intention for intention, _, _ in rows}))
    label = {name: i for i, name in enumerate(intentions)}
    sequences = tuple(
        LabeledSequence(label[intention], user, vocabulary.encode(actions))
        for intention, user, actions in rows
    )
    return Corpus(vocabulary=vocabulary, intentions=intentions, sequences=sequences)


def serialize_corpus(corpus: Corpus) -> bytes:
    """Serialize to JSONL (UTF-8). parse_corpus(serialize_corpus(c)) == c for
    any corpus whose vocabulary contains exactly the observed actions."""
    lines = []
    for seq in corpus.sequences:
        obj = {
            "intention": corpus.intentions[seq.intention],
            "user": seq.user,
            "actions": list(corpus.vocabulary.decode(seq.actions)),
        }
        lines.append(json.dumps(obj, separators=(",", ":")))
    return ("\n".join(lines) + "\n").encode("utf-8")


def expand_training_pairs(seq: LabeledSequence) -> list[TrainingPair]:
    """All (prefix, next-action) pairs of a sequence: exactly L pairs for
    a_0..a_L. A length-1 sequence yields no pairs."""
    return [
        TrainingPair(prefix=seq.actions[:k], target=seq.actions[k])
        for k in range(1, len(seq.actions))
    ]


def truncate_fraction(seq: LabeledSequence, f: float) -> LabeledSequence:
    """Keep the first max(1, floor(f * length)) actions; f = 1 keeps everything.

    The small epsilon keeps floor exact for decimal fractions whose float
    product lands a hair below an integer (e.g. 0.86 * 50).
    """
    if not 0.0 < f <= 1.0:
        raise CorpusError(f"fraction must be in (0, 1], got {f}")
    keep = max(1, math.floor(f * len(seq.actions) + 1e-9))
    return replace(seq, actions=seq.actions[:keep])


def align_corpus(
    corpus: Corpus, vocabulary: ActionVocabulary, intentions: tuple[str, ...]
) -> tuple[Corpus, dict[str, int]]:
    """Re-encode a corpus against another vocabulary/intention order.

    Actions missing from the target vocabulary map to UNK; their per-name
    counts are returned so callers can warn. Intentions missing from the
    target list are an error: sequences could no longer be scored.
    """
    label = {name: i for i, name in enumerate(intentions)}
    unknown: dict[str, int] = {}
    sequences = []
    for seq in corpus.sequences:
        name = corpus.intentions[seq.intention]
        if name not in label:
            raise CorpusError(f"intention {name!r} not covered by the trained models")
        names = corpus.vocabulary.decode(seq.actions)
        for action in names:
            if action not in vocabulary._index:
                unknown[action] = unknown.get(action, 0) + 1
        sequences.append(LabeledSequence(label[name], seq.user, vocabulary.encode(names)))
    aligned = Corpus(vocabulary=vocabulary, intentions=tuple(intentions), sequences=tuple(sequences))
    return aligned, unknown
