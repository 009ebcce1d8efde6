"""Per-user intention inference and prefix-fraction sweeps.

The sweep reproduces the partial-observation protocol: each sequence is
truncated to 10%..100% of its actions, inference runs on every truncation,
and posterior summaries are aggregated per (true intention, fraction) by a
plain arithmetic mean over users. Every entry derives its own seed from
(base seed, sequence id, fraction), so a sweep is reproducible as a whole
and each entry is reproducible in isolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from io import StringIO
from typing import Sequence

import numpy as np

from .corpus import Corpus, LabeledSequence, truncate_fraction
from .diagnostics import PosteriorSummary, argmax_intention
from .inference import InferenceConfig, IntentionPosterior, sample_posterior
from .predictor import build_likelihood_matrix

DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


class EvaluationError(ValueError):
    """Invalid evaluation input."""


class SequenceTooShort(EvaluationError):
    def __init__(self, length: int):
        super().__init__(f"need at least 2 actions to score a sequence, got {length}")
        self.length = length


def derive_seed(base_seed: int, sequence_id: int, fraction: float) -> int:
    """Stable per-entry seed; avoids chain-to-chain seed reuse across jobs."""
    key = np.random.SeedSequence([base_seed, sequence_id, int(round(fraction * 1_000_000))])
    return int(key.generate_state(1)[0])


def infer_user(models: Sequence, seq: LabeledSequence, cfg: InferenceConfig) -> IntentionPosterior:
    """Build the likelihood matrix for one observed sequence and sample the
    intention posterior. The true intention stays on the sequence label for
    scoring."""
    if seq.length < 2:
        raise SequenceTooShort(seq.length)
    lm = build_likelihood_matrix(models, seq.actions)
    return sample_posterior(lm, cfg)


@dataclass(frozen=True, eq=False)
class SweepEntry:
    user: str
    true_intention: int
    sequence_id: int
    fraction: float
    summary: PosteriorSummary


@dataclass(eq=False)
class SweepReport:
    intentions: tuple[str, ...]
    fractions: tuple[float, ...]
    entries: tuple[SweepEntry, ...]
    base_seed: int

    def entries_at(self, fraction: float) -> tuple[SweepEntry, ...]:
        if fraction not in self.fractions:
            raise EvaluationError(f"fraction {fraction} not part of this report")
        return tuple(e for e in self.entries if e.fraction == fraction)


@dataclass(eq=False)
class AggregateRow:
    """User-averaged posterior summary for one (true intention, fraction)."""

    true_intention: int
    fraction: float
    mean: np.ndarray  # (N,) averaged over entries
    ci5: np.ndarray
    ci95: np.ndarray
    accuracy: float
    n_entries: int


def _validate_fractions(fractions: Sequence[float]) -> tuple[float, ...]:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) == 0:
        raise EvaluationError("need at least one fraction")
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise EvaluationError(f"fractions must lie in (0, 1], got {f}")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise EvaluationError("fractions must be strictly increasing")
    return fractions


def sweep(
    models: Sequence,
    corpus: Corpus,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    cfg: InferenceConfig = InferenceConfig(),
) -> SweepReport:
    """Truncate-then-infer over every (sequence, fraction) pair.

    Truncations shorter than two actions cannot be scored and are skipped.
    Deterministic given cfg.seed; entry order is (sequence id, fraction).
    """
    fractions = _validate_fractions(fractions)
    if len(corpus.sequences) == 0:
        raise EvaluationError("empty corpus")
    if len(models) != corpus.n_intentions:
        raise EvaluationError(
            f"{len(models)} models for {corpus.n_intentions} intentions"
        )
    entries = []
    for sid, seq in enumerate(corpus.sequences):
        for f in fractions:
            truncated = truncate_fraction(seq, f)
            if truncated.length < 2:
                continue
            entry_cfg = replace(cfg, seed=derive_seed(cfg.seed, sid, f))
            posterior = infer_user(models, truncated, entry_cfg)
            entries.append(
                SweepEntry(
                    user=seq.user,
                    true_intention=seq.intention,
                    sequence_id=sid,
                    fraction=f,
                    summary=posterior.summary,
                )
            )
    return SweepReport(
        intentions=corpus.intentions,
        fractions=fractions,
        entries=tuple(entries),
        base_seed=cfg.seed,
    )


def accuracy(report: SweepReport, fraction: float) -> float:
    """Share of entries at this fraction whose argmax posterior mean matches
    the true intention."""
    entries = report.entries_at(fraction)
    if len(entries) == 0:
        raise EvaluationError(f"no entries at fraction {fraction}")
    hits = sum(
        argmax_intention(e.summary).index == e.true_intention for e in entries
    )
    return hits / len(entries)


def aggregates(report: SweepReport) -> list[AggregateRow]:
    """Average posterior mean and CI bounds over users, plus accuracy, for
    every (true intention, fraction) with at least one entry."""
    rows = []
    for ti in range(len(report.intentions)):
        for f in report.fractions:
            group = [e for e in report.entries if e.true_intention == ti and e.fraction == f]
            if not group:
                continue
            hits = sum(argmax_intention(e.summary).index == ti for e in group)
            rows.append(
                AggregateRow(
                    true_intention=ti,
                    fraction=f,
                    mean=np.mean([e.summary.mean for e in group], axis=0),
                    ci5=np.mean([e.summary.ci5 for e in group], axis=0),
                    ci95=np.mean([e.summary.ci95 for e in group], axis=0),
                    accuracy=hits / len(group),
                    n_entries=len(group),
                )
            )
    return rows


def _g6(x: float) -> float:
    """Round to 6 significant digits, the report output precision."""
    return float(f"{x:.6g}")


def emit_report(report: SweepReport, format: str = "csv") -> bytes:
    """Serialize a sweep report.

    CSV: one row per (entry, assumed intention), stable column order,
    floats at 6 significant digits. JSON mirrors the full structure and
    adds the per-(true intention, fraction) aggregates.
    """
    if format == "csv":
        out = StringIO()
        out.write("user,true_intention,sequence_id,fraction,assumed_intention,"
                  "post_mean,ci5,ci95,rhat\n")
        for e in report.entries:
            s = e.summary
            for i, assumed in enumerate(report.intentions):
                out.write(
                    f"{e.user},{report.intentions[e.true_intention]},{e.sequence_id},"
                    f"{e.fraction:.6g},{assumed},{s.mean[i]:.6g},{s.ci5[i]:.6g},"
                    f"{s.ci95[i]:.6g},{s.rhat[i]:.6g}\n"
                )
        return out.getvalue().encode("utf-8")
    if format == "json":
        doc = {
            "intentions": list(report.intentions),
            "fractions": [_g6(f) for f in report.fractions],
            "base_seed": report.base_seed,
            "entries": [
                {
                    "user": e.user,
                    "true_intention": report.intentions[e.true_intention],
                    "sequence_id": e.sequence_id,
                    "fraction": _g6(e.fraction),
                    "post_mean": [_g6(x) for x in e.summary.mean],
                    "ci5": [_g6(x) for x in e.summary.ci5],
                    "ci95": [_g6(x) for x in e.summary.ci95],
                    "rhat": [_g6(x) for x in e.summary.rhat],
                    "ess": [None if np.isnan(x) else _g6(x) for x in e.summary.ess],
                    "zero_variance": [bool(z) for z in e.summary.zero_variance],
                }
                for e in report.entries
            ],
            "aggregates": [
                {
                    "true_intention": report.intentions[row.true_intention],
                    "fraction": _g6(row.fraction),
                    "avg_post_mean": [_g6(x) for x in row.mean],
                    "avg_ci5": [_g6(x) for x in row.ci5],
                    "avg_ci95": [_g6(x) for x in row.ci95],
                    "accuracy": _g6(row.accuracy),
                    "n_entries": row.n_entries,
                }
                for row in aggregates(report)
            ],
        }
        return (json.dumps(doc, indent=2) + "\n").encode("utf-8")
    raise EvaluationError(f"unknown report format {format!r}")


def load_report(data: bytes | str) -> SweepReport:
    """Rebuild a SweepReport from its JSON serialization (lossy only in that
    floats carry 6 significant digits)."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise EvaluationError(f"invalid report JSON: {exc.msg}") from None
    intentions = tuple(doc["intentions"])
    label = {name: i for i, name in enumerate(intentions)}
    entries = []
    for e in doc["entries"]:
        summary = PosteriorSummary(
            mean=np.array(e["post_mean"], dtype=np.float64),
            ci5=np.array(e["ci5"], dtype=np.float64),
            ci95=np.array(e["ci95"], dtype=np.float64),
            rhat=np.array(e["rhat"], dtype=np.float64),
            ess=np.array([np.nan if x is None else x for x in e["ess"]], dtype=np.float64),
            zero_variance=np.array(e["zero_variance"], dtype=bool),
        )
        entries.append(
            SweepEntry(
                user=e["user"],
                true_intention=label[e["true_intention"]],
                sequence_id=int(e["sequence_id"]),
                fraction=float(e["fraction"]),
                summary=summary,
            )
        )
    return SweepReport(
        intentions=intentions,
        fractions=tuple(float(f) for f in doc["fractions"]),
        entries=tuple(entries),
        base_seed=int(doc["base_seed"]),
    )
