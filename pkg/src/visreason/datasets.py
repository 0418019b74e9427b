"""Dataset loading, validation, serialization, and task-text rendering.

Datasets are UTF-8 JSONL, one instance per line:

    {"id": "...", "kind": "...", "task_text": "...",
     "images": [{"id": "i0", "uri": "img/0.png"}, ...],
     "candidates": [{"id": "c0", "text": "..."}, ...],
     "gold": {...}, "meta": {...}}

``gold`` uses one discriminating key per label variant: ``option`` (single
id), ``options`` (id list), ``pairing`` (caption index -> image index),
``reference`` (free text), or ``choices`` (named sub-answers). A bare
object of digit keys is accepted as shorthand for ``pairing``.
"""

from __future__ import annotations

import io
import json
import posixpath
import string
from typing import Any, IO, Iterable

from .records import (
    Candidate,
    GoldLabel,
    ImageRef,
    LabeledChoices,
    OptionId,
    OptionIdSet,
    PairingMap,
    ReferenceText,
    TaskInstance,
    TaskKind,
)

OPTION_LETTERS = string.ascii_uppercase

WINOGAVIL_SPLIT_56 = "5/6"
WINOGAVIL_SPLIT_1012 = "10/12"
WINOGAVIL_SPLIT_SWOW = "swow"


class DatasetError(ValueError):
    """Raised for malformed dataset files, with line context when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _require(cond: bool, message: str, line: int | None) -> None:
    if not cond:
        raise DatasetError(message, line)


def parse_gold(obj: Any, line: int | None = None) -> GoldLabel:
    _require(isinstance(obj, dict) and obj, "gold must be a non-empty object", line)
    if "option" in obj:
        _require(isinstance(obj["option"], str), "gold.option must be a string", line)
        return OptionId(obj["option"])
    if "options" in obj:
        opts = obj["options"]
        _require(
            isinstance(opts, list) and all(isinstance(o, str) for o in opts),
            "gold.options must be a list of strings",
            line,
        )
        return OptionIdSet(frozenset(opts))
    if "pairing" in obj:
        return _parse_pairing(obj["pairing"], line)
    if "reference" in obj:
        _require(isinstance(obj["reference"], str), "gold.reference must be a string", line)
        return ReferenceText(obj["reference"])
    if "choices" in obj:
        ch = obj["choices"]
        _require(
            isinstance(ch, dict)
            and ch
            and all(isinstance(k, str) and isinstance(v, str) for k, v in ch.items()),
            "gold.choices must map names to candidate ids",
            line,
        )
        return LabeledChoices(dict(ch))
    # Shorthand: a bare object whose keys are all digits is a pairing map.
    if all(isinstance(k, str) and k.isdigit() for k in obj):
        return _parse_pairing(obj, line)
    raise DatasetError(f"unrecognized gold shape with keys {sorted(obj)}", line)


def _parse_pairing(obj: Any, line: int | None) -> PairingMap:
    _require(isinstance(obj, dict) and obj, "pairing must be a non-empty object", line)
    pairing: dict[int, int] = {}
    for k, v in obj.items():
        _require(isinstance(k, str) and k.isdigit(), f"pairing key {k!r} is not an index", line)
        _require(isinstance(v, int) and not isinstance(v, bool), f"pairing value {v!r} is not an index", line)
        pairing[int(k)] = v
    _require(
        sorted(pairing) == sorted(pairing.values()),
        "pairing must be a bijection over the same index set",
        line,
    )
    return PairingMap(pairing)


def serialize_gold(gold: GoldLabel) -> dict[str, Any]:
    if isinstance(gold, OptionId):
        return {"option": gold.option}
    if isinstance(gold, OptionIdSet):
        return {"options": sorted(gold.options)}
    if isinstance(gold, PairingMap):
        return {"pairing": {str(k): gold.pairing[k] for k in sorted(gold.pairing)}}
    if isinstance(gold, ReferenceText):
        return {"reference": gold.reference}
    if isinstance(gold, LabeledChoices):
        return {"choices": dict(gold.choices)}
    raise TypeError(f"not a gold label: {gold!r}")


def vcr_rationales(instance: TaskInstance) -> tuple[Candidate, ...]:
    """Rationale options for a VCR-style instance, from ``meta.rationales``."""
    raw = instance.meta.get("rationales", ())
    return tuple(Candidate(id=r["id"], text=r["text"]) for r in raw)


def winogavil_split(instance: TaskInstance) -> str | None:
    """Subset label for association tasks.

    An explicit ``meta.winogavil_split`` wins; otherwise the label is
    derived from the candidate count (5 or 6 options form one game size,
    10 or 12 the other). Other counts have no subset label.
    """
    explicit = instance.meta.get("winogavil_split")
    if explicit is not None:
        return str(explicit)
    n = len(instance.candidates)
    if n in (5, 6):
        return WINOGAVIL_SPLIT_56
    if n in (10, 12):
        return WINOGAVIL_SPLIT_1012
    return None


def _validate_instance(inst: TaskInstance, line: int | None = None) -> None:
    _require(bool(inst.id), "id must be non-empty", line)
    _require(bool(inst.task_text.strip()), "task_text must be non-empty", line)
    _require(len(inst.images) > 0, "instance needs at least one image", line)
    image_ids = [im.id for im in inst.images]
    _require(len(set(image_ids)) == len(image_ids), "duplicate image ids", line)
    cand_ids = [c.id for c in inst.candidates]
    _require(len(set(cand_ids)) == len(cand_ids), "duplicate candidate ids", line)

    kind = inst.kind
    if kind in (TaskKind.WINOGAVIL, TaskKind.VCR, TaskKind.NYCCC, TaskKind.MCQ):
        _require(len(inst.candidates) >= 2, f"{kind.value} needs at least two candidates", line)
    if kind is TaskKind.WINOGROUND:
        _require(len(inst.images) == 2, "pairing tasks need exactly two images", line)
        _require(len(inst.candidates) == 2, "pairing tasks need exactly two captions", line)
    if kind is TaskKind.VCR:
        rats = vcr_rationales(inst)
        _require(len(rats) >= 2, "vcr needs meta.rationales with at least two options", line)
        rat_ids = [r.id for r in rats]
        _require(len(set(rat_ids)) == len(rat_ids), "duplicate rationale ids", line)

    gold = inst.gold
    if gold is None:
        return
    if isinstance(gold, OptionId):
        _require(gold.option in cand_ids, f"gold option {gold.option!r} not a candidate", line)
    elif isinstance(gold, OptionIdSet):
        unknown = gold.options - set(cand_ids)
        _require(not unknown, f"gold options not candidates: {sorted(unknown)}", line)
    elif isinstance(gold, PairingMap):
        _require(kind is TaskKind.WINOGROUND, f"pairing gold unexpected for kind {kind.value}", line)
        _require(
            sorted(gold.pairing) == list(range(len(inst.candidates))),
            "pairing gold must cover each caption index exactly once",
            line,
        )
    elif isinstance(gold, ReferenceText):
        _require(bool(gold.reference.strip()), "gold reference must be non-empty", line)
    elif isinstance(gold, LabeledChoices):
        if kind is TaskKind.VCR:
            _require(
                set(gold.choices) == {"answer", "rationale"},
                "vcr gold.choices must name exactly answer and rationale",
                line,
            )
            _require(gold.choices["answer"] in cand_ids, "vcr gold answer not a candidate", line)
            rat_ids = [r.id for r in vcr_rationales(inst)]
            _require(gold.choices["rationale"] in rat_ids, "vcr gold rationale not an option", line)
        else:
            for name, cid in gold.choices.items():
                _require(cid in cand_ids, f"gold choice {name}={cid!r} not a candidate", line)


def parse_dataset(
    source: IO[str] | str,
    kind: TaskKind | None = None,
    base_dir: str | None = None,
) -> list[TaskInstance]:
    """Parse a JSONL dataset, validating ids, shapes, and gold membership.

    ``kind`` (when given) must match every instance's ``kind`` field.
    ``base_dir`` resolves relative, scheme-less image URIs.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    instances: list[TaskInstance] = []
    seen: set[str] = set()
    for line_no, raw_line in enumerate(source, start=1):
        if not raw_line.strip():
            continue
        try:
            obj = json.loads(raw_line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON ({exc.msg})", line_no) from exc
        _require(isinstance(obj, dict), "each line must be a JSON object", line_no)
        for req in ("id", "kind", "task_text", "images"):
            _require(req in obj, f"missing required field {req!r}", line_no)
        try:
            inst_kind = TaskKind(obj["kind"])
        except ValueError:
            raise DatasetError(f"unknown kind {obj['kind']!r}", line_no) from None
        _require(
            kind is None or inst_kind is kind,
            f"kind {inst_kind.value!r} does not match requested {kind.value!r}" if kind else "",
            line_no,
        )
        images = tuple(
            ImageRef(id=str(im["id"]), uri=_resolve_uri(str(im["uri"]), base_dir))
            for im in obj["images"]
        )
        candidates = tuple(
            Candidate(id=str(c["id"]), text=str(c["text"])) for c in obj.get("candidates", ())
        )
        gold = parse_gold(obj["gold"], line_no) if obj.get("gold") is not None else None
        inst = TaskInstance(
            id=str(obj["id"]),
            kind=inst_kind,
            task_text=str(obj["task_text"]),
            images=images,
            candidates=candidates,
            gold=gold,
            meta=dict(obj.get("meta", {})),
        )
        _require(inst.id not in seen, f"duplicate instance id {inst.id!r}", line_no)
        seen.add(inst.id)
        _validate_instance(inst, line_no)
        instances.append(inst)
    return instances


def _resolve_uri(uri: str, base_dir: str | None) -> str:
    if base_dir is None or "://" in uri or posixpath.isabs(uri):
        return uri
    return posixpath.join(base_dir, uri)


def load_dataset(path: str, kind: TaskKind | None = None, base_dir: str | None = None) -> list[TaskInstance]:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh, kind=kind, base_dir=base_dir)


def instance_to_json(inst: TaskInstance) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "id": inst.id,
        "kind": inst.kind.value,
        "task_text": inst.task_text,
        "images": [{"id": im.id, "uri": im.uri} for im in inst.images],
        "candidates": [{"id": c.id, "text": c.text} for c in inst.candidates],
    }
    if inst.gold is not None:
        obj["gold"] = serialize_gold(inst.gold)
    if inst.meta:
        obj["meta"] = dict(inst.meta)
    return obj


def serialize_dataset(instances: Iterable[TaskInstance]) -> str:
    """Inverse of :func:`parse_dataset` up to JSON formatting."""
    lines = [json.dumps(instance_to_json(inst), ensure_ascii=False) for inst in instances]
    return "".join(line + "\n" for line in lines)


def save_dataset(instances: Iterable[TaskInstance], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_dataset(instances))


def option_letter(index: int) -> str:
    """Stable display letter for the candidate at ``index`` (A, B, ..., Z, AA, ...)."""
    letters = ""
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        letters = OPTION_LETTERS[rem] + letters
    return letters


def render_options(candidates: Iterable[Candidate]) -> str:
    """Lettered option list, one per line, in candidate order."""
    return "\n".join(
        f"{option_letter(i)}. {c.text}" for i, c in enumerate(candidates)
    )


def render_task_text(instance: TaskInstance) -> str:
    """Canonical text form of an instance: the task text plus its options.

    This is the exemplar/query text used for lexical retrieval, so it must
    be deterministic and contain no gold information.
    """
    parts = [instance.task_text.strip()]
    if instance.kind is TaskKind.WINOGROUND:
        parts.append("Captions:\n" + render_options(instance.candidates))
    elif instance.candidates:
        parts.append("Options:\n" + render_options(instance.candidates))
    if instance.kind is TaskKind.VCR:
        rats = vcr_rationales(instance)
        if rats:
            parts.append("Rationales:\n" + render_options(rats))
    return "\n".join(parts)
