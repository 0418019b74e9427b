"""Core record types for visual reasoning tasks.

A dataset is a list of :class:`TaskInstance`. Each instance carries one or
more images (by reference, never by pixels), the task text shown to the
model, an optional candidate list, and an optional gold label whose shape
depends on the task kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Union


class TaskKind(str, Enum):
    """Benchmark families the harness understands."""

    WINOGAVIL = "winogavil"
    WINOGROUND = "winoground"
    WHOOPS = "whoops"
    VCR = "vcr"
    NYCCC = "nyccc"
    MCQ = "mcq"


@dataclass(frozen=True)
class ImageRef:
    """An image identified by id and carried as a URI or path, never pixels."""

    id: str
    uri: str


@dataclass(frozen=True)
class Candidate:
    """One answer option."""

    id: str
    text: str


# ---------------------------------------------------------------------------
# Gold label variants. The JSON encoding uses one discriminating key per
# variant: "option", "options", "pairing", "reference", or "choices".
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptionId:
    """Single correct candidate id."""

    option: str


@dataclass(frozen=True)
class OptionIdSet:
    """Set of associated candidate ids (set-valued tasks score by overlap)."""

    options: frozenset[str]


@dataclass(frozen=True)
class PairingMap:
    """Caption-index to image-index bijection for pairing tasks."""

    pairing: Mapping[int, int]

    def inverse(self) -> dict[int, int]:
        return {v: k for k, v in self.pairing.items()}


@dataclass(frozen=True)
class ReferenceText:
    """Free-text reference (used by explanation tasks)."""

    reference: str


@dataclass(frozen=True)
class LabeledChoices:
    """Named sub-answers, e.g. answer/rationale ids or per-variant picks."""

    choices: Mapping[str, str]


GoldLabel = Union[OptionId, OptionIdSet, PairingMap, ReferenceText, LabeledChoices]


@dataclass(frozen=True)
class TaskInstance:
    id: str
    kind: TaskKind
    task_text: str
    images: tuple[ImageRef, ...]
    candidates: tuple[Candidate, ...] = ()
    gold: GoldLabel | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    def without_gold(self) -> "TaskInstance":
        """Copy of this instance with the gold label stripped.

        Anything that feeds model prompts (exemplar pool construction in
        particular) must work from gold-free instances so labels cannot
        leak into requests.
        """
        return replace(self, gold=None)

    def candidate_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.candidates)


@dataclass(frozen=True)
class InstanceScore:
    """Per-instance metric components, each in [0, 1].

    ``split`` carries an optional subset label (candidate-count bucket,
    association source, ...) used when aggregating filtered views.
    """

    instance_id: str
    kind: TaskKind
    components: Mapping[str, float]
    split: str | None = None


@dataclass(frozen=True)
class MetricReport:
    """Aggregate over a set of instance scores of one kind.

    ``metrics`` maps component name to mean-of-components x 100. When
    ``n == 0`` there are no defined means and ``metrics`` is None.
    """

    kind: TaskKind
    n: int
    metrics: Mapping[str, float] | None
    split: str | None = None
