"""Synthetic corpus generation from weighted action-template grammars.

A grammar assigns each intention a set of weighted templates. A template is
an ordered list of action blocks; each block may be skipped with some
probability and is otherwise emitted 1..n times in order. After the schedule
is laid out, every position is independently replaced by a different action
from the grammar's pool with probability epsilon_noise, which controls how
confusable the intentions are.

Grammar JSON document:

    {
      "min_length": 15,
      "max_length": 30,
      "epsilon_noise": 0.1,            // optional default for all intentions
      "intentions": {
        "put_fridge": {
          "epsilon_noise": 0.1,        // optional per-intention override
          "templates": [
            {"weight": 1.0,
             "blocks": [
               {"actions": ["walk_kitchen", "open_fridge"]},
               {"actions": ["grab_food", "put_food"],
                "min_repeats": 3, "max_repeats": 8, "skip_prob": 0.0}
             ]}
          ]
        },
        ...
      }
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import RESERVED_NAMES, ActionVocabulary, Corpus, LabeledSequence

MAX_SCHEDULE_ROLLS = 1000


class GrammarError(ValueError):
    """Invalid grammar specification."""


@dataclass(frozen=True)
class ActionBlock:
    actions: tuple[str, ...]
    skip_prob: float = 0.0
    min_repeats: int = 1
    max_repeats: int = 1

    def __post_init__(self):
        if len(self.actions) == 0:
            raise GrammarError("block must contain at least one action")
        for a in self.actions:
            if not isinstance(a, str) or not a:
                raise GrammarError("block actions must be non-empty strings")
            if a in RESERVED_NAMES:
                raise GrammarError(f"action name {a!r} is reserved")
        if not 0.0 <= self.skip_prob <= 1.0:
            raise GrammarError(f"skip_prob must be in [0, 1], got {self.skip_prob}")
        if self.min_repeats < 1 or self.max_repeats < self.min_repeats:
            raise GrammarError("repeats must satisfy 1 <= min_repeats <= max_repeats")


@dataclass(frozen=True)
class ActionTemplate:
    weight: float
    blocks: tuple[ActionBlock, ...]

    def __post_init__(self):
        if self.weight < 0:
            raise GrammarError(f"template weight must be >= 0, got {self.weight}")
        if len(self.blocks) == 0:
            raise GrammarError("template must contain at least one block")
        if all(b.skip_prob >= 1.0 for b in self.blocks):
            raise GrammarError("template must have a block that can be emitted")


@dataclass(frozen=True)
class IntentionGrammar:
    name: str
    templates: tuple[ActionTemplate, ...]
    epsilon_noise: float = 0.0

    def __post_init__(self):
        if not self.name:
            raise GrammarError("intention name must be non-empty")
        if len(self.templates) == 0:
            raise GrammarError(f"intention {self.name!r} has no templates")
        if not any(t.weight > 0 for t in self.templates):
            raise GrammarError(f"intention {self.name!r} needs a template with weight > 0")
        if not 0.0 <= self.epsilon_noise < 1.0:
            raise GrammarError(f"epsilon_noise must be in [0, 1), got {self.epsilon_noise}")


@dataclass(frozen=True)
class GrammarSpec:
    intentions: tuple[IntentionGrammar, ...]
    min_length: int = 1
    max_length: int = 100

    def __post_init__(self):
        if len(self.intentions) == 0:
            raise GrammarError("grammar needs at least one intention")
        names = [g.name for g in self.intentions]
        if len(set(names)) != len(names):
            raise GrammarError("intention names must be unique")
        if not 1 <= self.min_length <= self.max_length:
            raise GrammarError("length bounds must satisfy 1 <= min_length <= max_length")
        if any(g.epsilon_noise > 0 for g in self.intentions) and len(self.action_pool()) < 2:
            raise GrammarError("emission noise needs at least two distinct actions")

    def action_pool(self) -> tuple[str, ...]:
        """Sorted union of all actions across all intentions, the noise pool."""
        pool = {a for g in self.intentions for t in g.templates for b in t.blocks for a in b.actions}
        return tuple(sorted(pool))


def parse_grammar(data: bytes | str) -> GrammarSpec:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise GrammarError(f"invalid grammar JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("intentions"), dict):
        raise GrammarError("grammar document must be an object with an 'intentions' map")
    default_eps = doc.get("epsilon_noise", 0.0)

    def build_block(obj) -> ActionBlock:
        if not isinstance(obj, dict) or "actions" not in obj:
            raise GrammarError("each block must be an object with an 'actions' array")
        return ActionBlock(
            actions=tuple(obj["actions"]),
            skip_prob=float(obj.get("skip_prob", 0.0)),
            min_repeats=int(obj.get("min_repeats", 1)),
            max_repeats=int(obj.get("max_repeats", 1)),
        )

    intentions = []
    for name in sorted(doc["intentions"]):
        spec = doc["intentions"][name]
        if not isinstance(spec, dict) or not isinstance(spec.get("templates"), list):
            raise GrammarError(f"intention {name!r} must define a 'templates' array")
        templates = tuple(
            ActionTemplate(
                weight=float(t.get("weight", 1.0)),
                blocks=tuple(build_block(b) for b in t.get("blocks", [])),
            )
            for t in spec["templates"]
        )
        intentions.append(
            IntentionGrammar(
                name=name,
                templates=templates,
                epsilon_noise=float(spec.get("epsilon_noise", default_eps)),
            )
        )
    return GrammarSpec(
        intentions=tuple(intentions),
        min_length=int(doc.get("min_length", 1)),
        max_length=int(doc.get("max_length", 100)),
    )


def _roll_schedule(grammar: IntentionGrammar, spec: GrammarSpec, rng) -> list[str]:
    """Lay out template actions until min_length is reached, then clip."""
    weights = np.array([t.weight for t in grammar.templates], dtype=float)
    p = weights / weights.sum()
    schedule: list[str] = []
    for _ in range(MAX_SCHEDULE_ROLLS):
        template = grammar.templates[int(rng.choice(len(p), p=p))]
        for block in template.blocks:
            if rng.random() < block.skip_prob:
                continue
            repeats = int(rng.integers(block.min_repeats, block.max_repeats + 1))
            schedule.extend(block.actions * repeats)
        if len(schedule) >= spec.min_length:
            return schedule[: spec.max_length]
    raise GrammarError(
        f"intention {grammar.name!r} cannot reach min_length {spec.min_length} "
        f"within {MAX_SCHEDULE_ROLLS} template rolls"
    )


def _apply_noise(schedule: list[str], epsilon: float, pool: tuple[str, ...], rng) -> list[str]:
    """Replace each position by a different pool action with probability epsilon."""
    emitted = []
    for action in schedule:
        if rng.random() < epsilon:
            others = [a for a in pool if a != action]
            if others:
                action = others[int(rng.integers(len(others)))]
        emitted.append(action)
    return emitted


def generate_synthetic(spec: GrammarSpec, n_per_intention: int, seed: int) -> Corpus:
    """Generate n_per_intention sequences per intention, one per user.

    User j receives one sequence under every intention, mirroring evaluation
    setups where each user performs all tasks. Each (intention, user) cell
    owns an RNG stream derived from (seed, intention, user), so output is
    bit-reproducible and independent of generation order.
    """
    if n_per_intention < 1:
        raise GrammarError(f"n_per_intention must be >= 1, got {n_per_intention}")
    if seed < 0:
        raise GrammarError("seed must be non-negative")
    pool = spec.action_pool()
    vocabulary = ActionVocabulary.from_names(pool)
    by_name = {g.name: g for g in spec.intentions}
    names = tuple(sorted(by_name))
    sequences = []
    for i, name in enumerate(names):
        grammar = by_name[name]
        for j in range(n_per_intention):
            rng = np.random.default_rng([seed, i, j])
            schedule = _roll_schedule(grammar, spec, rng)
            emitted = _apply_noise(schedule, grammar.epsilon_noise, pool, rng)
            sequences.append(
                LabeledSequence(intention=i, user=f"u{j:03d}", actions=vocabulary.encode(emitted))
            )
    return Corpus(vocabulary=vocabulary, intentions=names, sequences=tuple(sequences))
