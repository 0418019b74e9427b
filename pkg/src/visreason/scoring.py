"""Per-instance scoring and metric aggregation.

Every score is a dict of named components in [0, 1]. Composite components
are products of their parts (a pairing instance's ``group`` is
``text * image``; a two-part QA chain's ``q_ar`` is ``q_a * qa_r``), so a
composite can never exceed either part. Failed predictions score zero on
every component; they never raise.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Sequence

from .answers import PairingPrediction, Prediction
from .datasets import winogavil_split
from .records import (
    InstanceScore,
    LabeledChoices,
    MetricReport,
    OptionId,
    OptionIdSet,
    PairingMap,
    ReferenceText,
    TaskInstance,
    TaskKind,
)


class ScoringError(ValueError):
    """Gold/prediction shape problems (not parse failures, which score 0)."""


def _zero_components(instance: TaskInstance) -> dict[str, float]:
    kind = instance.kind
    if kind is TaskKind.WINOGAVIL:
        return {"jaccard": 0.0}
    if kind is TaskKind.WINOGROUND:
        return {"text": 0.0, "image": 0.0, "group": 0.0}
    if kind is TaskKind.WHOOPS:
        return {"judge_accept": 0.0}
    if kind is TaskKind.VCR:
        return {"q_a": 0.0, "qa_r": 0.0, "q_ar": 0.0}
    if kind is TaskKind.NYCCC:
        if isinstance(instance.gold, LabeledChoices):
            return {name: 0.0 for name in instance.gold.choices}
        return {"correct": 0.0}
    if kind is TaskKind.MCQ:
        return {"correct": 0.0}
    raise ScoringError(f"no scorer for kind {kind!r}")


def _expect(parsed: object, cls: type, instance: TaskInstance) -> object:
    if not isinstance(parsed, cls):
        raise ScoringError(
            f"instance {instance.id}: prediction shape {type(parsed).__name__} "
            f"does not fit kind {instance.kind.value!r}"
        )
    return parsed


def score_instance(
    instance: TaskInstance,
    prediction: Prediction,
    judge_accept: bool | None = None,
) -> InstanceScore:
    """Score one prediction against the instance's gold label.

    ``judge_accept`` carries the external judge verdict for free-text
    explanation tasks; it is required there (unless the prediction already
    failed) and ignored everywhere else.
    """
    if instance.gold is None:
        raise ScoringError(f"instance {instance.id} has no gold label")
    split = winogavil_split(instance) if instance.kind is TaskKind.WINOGAVIL else None
    if prediction.failed or prediction.parsed is None:
        return InstanceScore(instance.id, instance.kind, _zero_components(instance), split)

    kind = instance.kind
    gold = instance.gold

    if kind is TaskKind.WINOGAVIL:
        parsed = _expect(prediction.parsed, OptionIdSet, instance)
        gold_set = _expect(gold, OptionIdSet, instance).options
        union = parsed.options | gold_set
        jac = len(parsed.options & gold_set) / len(union) if union else 0.0
        return InstanceScore(instance.id, kind, {"jaccard": jac}, split)

    if kind is TaskKind.WINOGROUND:
        parsed = _expect(prediction.parsed, PairingPrediction, instance)
        gold_map = _expect(gold, PairingMap, instance)
        text = 1.0 if dict(parsed.caption_to_image) == dict(gold_map.pairing) else 0.0
        image = 1.0 if dict(parsed.image_to_caption) == gold_map.inverse() else 0.0
        return InstanceScore(
            instance.id, kind, {"text": text, "image": image, "group": text * image}, split
        )

    if kind is TaskKind.WHOOPS:
        _expect(prediction.parsed, ReferenceText, instance)
        if judge_accept is None:
            raise ScoringError(
                f"instance {instance.id}: explanation scoring needs a judge verdict"
            )
        return InstanceScore(instance.id, kind, {"judge_accept": float(judge_accept)}, split)

    if kind is TaskKind.VCR:
        parsed = _expect(prediction.parsed, LabeledChoices, instance)
        gold_ch = _expect(gold, LabeledChoices, instance).choices
        q_a = 1.0 if parsed.choices.get("answer") == gold_ch["answer"] else 0.0
        qa_r = 1.0 if parsed.choices.get("rationale") == gold_ch["rationale"] else 0.0
        return InstanceScore(
            instance.id, kind, {"q_a": q_a, "qa_r": qa_r, "q_ar": q_a * qa_r}, split
        )

    if kind in (TaskKind.NYCCC, TaskKind.MCQ):
        parsed = _expect(prediction.parsed, OptionId, instance)
        if isinstance(gold, LabeledChoices):
            comps = {
                name: (1.0 if parsed.option == cid else 0.0)
                for name, cid in gold.choices.items()
            }
        else:
            gold_id = _expect(gold, OptionId, instance).option
            comps = {"correct": 1.0 if parsed.option == gold_id else 0.0}
        return InstanceScore(instance.id, kind, comps, split)

    raise ScoringError(f"no scorer for kind {kind!r}")


def aggregate_scores(
    scores: Sequence[InstanceScore],
    split: str | None = None,
) -> MetricReport:
    """Mean of each component x 100 over the given scores.

    Mixing task kinds is an error. With ``split`` set, only scores carrying
    that split label contribute. An empty selection yields ``n == 0`` with
    undefined (None) metrics rather than fake zeros.
    """
    kinds = {s.kind for s in scores}
    if len(kinds) > 1:
        raise ScoringError(f"cannot aggregate mixed kinds: {sorted(k.value for k in kinds)}")
    if split is not None:
        scores = [s for s in scores if s.split == split]
    if not scores:
        kind = next(iter(kinds)) if kinds else TaskKind.MCQ
        return MetricReport(kind=kind, n=0, metrics=None, split=split)
    kind = scores[0].kind
    sums: dict[str, float] = defaultdict(float)
    counts: dict[str, int] = defaultdict(int)
    for s in scores:
        for name, value in s.components.items():
            sums[name] += value
            counts[name] += 1
    metrics = {name: 100.0 * sums[name] / counts[name] for name in sums}
    return MetricReport(kind=kind, n=len(scores), metrics=metrics, split=split)


def split_reports(scores: Sequence[InstanceScore]) -> list[MetricReport]:
    """Overall report plus one per split label present (sorted)."""
    reports = [aggregate_scores(scores)]
    labels = sorted({s.split for s in scores if s.split is not None})
    for label in labels:
        reports.append(aggregate_scores(scores, split=label))
    return reports


def iter_components(scores: Iterable[InstanceScore]) -> list[str]:
    seen: dict[str, None] = {}
    for s in scores:
        for name in s.components:
            seen.setdefault(name)
    return list(seen)
