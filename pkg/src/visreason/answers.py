"""Answer-format instructions and prediction parsing.

Model replies are free text. Each task kind gets a strict grammar tried
first; when it misses, a recovery scan looks for an unambiguous answer in
looser phrasings ("I think the answer is (b)"). A reply that yields
nothing unambiguous becomes a Failed prediction, which downstream scoring
treats as wrong (never an exception).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .datasets import option_letter, vcr_rationales
from .records import (
    Candidate,
    LabeledChoices,
    OptionId,
    OptionIdSet,
    ReferenceText,
    TaskInstance,
    TaskKind,
)


class ParseStatus(str, Enum):
    CLEAN = "clean"          # strict grammar matched
    RECOVERED = "recovered"  # recovery scan found an unambiguous answer
    FAILED = "failed"        # nothing usable; scores as wrong


@dataclass(frozen=True)
class PairingPrediction:
    """Both directions of a caption/image matching answer (0-based indices)."""

    caption_to_image: Mapping[int, int]
    image_to_caption: Mapping[int, int]


@dataclass(frozen=True)
class Prediction:
    raw_text: str
    parsed: object | None
    status: ParseStatus

    @property
    def failed(self) -> bool:
        return self.status is ParseStatus.FAILED


def letter_to_index(letters: str) -> int | None:
    """Inverse of :func:`visreason.datasets.option_letter`; None if not a label."""
    letters = letters.strip().upper()
    if not letters or not letters.isalpha() or not letters.isascii():
        return None
    index = 0
    for ch in letters:
        index = index * 26 + (ord(ch) - ord("A") + 1)
    return index - 1


def format_instruction(instance: TaskInstance) -> str:
    """The reply-format sentence appended to every answer prompt."""
    kind = instance.kind
    if kind in (TaskKind.MCQ, TaskKind.NYCCC):
        return 'Answer with the letter of your chosen option, in the form "Answer: <letter>".'
    if kind is TaskKind.WINOGAVIL:
        return (
            'List every option you select in the form "Answer: <letters>", '
            "separating letters with commas."
        )
    if kind is TaskKind.VCR:
        return (
            'Reply on two lines: "Answer: <letter>" for the answer options and '
            '"Rationale: <letter>" for the rationale options.'
        )
    if kind is TaskKind.WINOGROUND:
        return (
            'Reply on two lines: "Captions: A=<image number>, B=<image number>" and '
            '"Images: 1=<caption letter>, 2=<caption letter>", using the image '
            "numbering from the descriptions."
        )
    if kind is TaskKind.WHOOPS:
        return "Explain in one or two sentences what makes the image unusual."
    raise ValueError(f"no format instruction for kind {kind!r}")


def format_reminder(instance: TaskInstance) -> str:
    return "Your previous reply could not be parsed. " + format_instruction(instance)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_ANSWER_LINE = re.compile(r"(?im)^\s*answer\s*[:=]\s*(.+)$")
_RATIONALE_LINE = re.compile(r"(?im)^\s*rationale\s*[:=]\s*(.+)$")
_CAPTIONS_LINE = re.compile(r"(?im)^\s*captions?\s*[:=]\s*(.+)$")
_IMAGES_LINE = re.compile(r"(?im)^\s*images?\s*[:=]\s*(.+)$")
_EXPLANATION_LINE = re.compile(r"(?is)^\s*explanation\s*[:=]\s*(.+)$")

_LOOSE_ANSWER = re.compile(r"(?i)\banswer\s*(?:is|was|[:=])?\s*[\"'(]*([A-Za-z]+)[\"')]*")
_LOOSE_RATIONALE = re.compile(r"(?i)\brationale\s*(?:is|was|[:=])?\s*[\"'(]*([A-Za-z]+)[\"')]*")
_PAREN_LETTER = re.compile(r"\(\s*([A-Za-z])\s*\)")
_OPTION_WORD = re.compile(r"(?i)\boption\s+([A-Za-z])\b")
_BARE_UPPER = re.compile(r"\b([A-Z])\b")
_PAIR_LETTER_DIGIT = re.compile(r"([A-Za-z])\s*(?:=|:|->|→|-)\s*(\d+)")
_PAIR_DIGIT_LETTER = re.compile(r"(\d+)\s*(?:=|:|->|→|-)\s*([A-Za-z])")


def _letter_candidate(token: str, candidates: tuple[Candidate, ...]) -> str | None:
    idx = letter_to_index(token)
    if idx is None or idx >= len(candidates):
        return None
    return candidates[idx].id


def _single_choice(raw: str, candidates: tuple[Candidate, ...]) -> tuple[str | None, ParseStatus]:
    m = _ANSWER_LINE.search(raw)
    if m:
        token = re.match(r"[\"'(]*([A-Za-z]+)", m.group(1).strip())
        if token:
            cid = _letter_candidate(token.group(1), candidates)
            if cid is not None:
                return cid, ParseStatus.CLEAN
    return _recover_single(raw, candidates)


def _recover_single(raw: str, candidates: tuple[Candidate, ...]) -> tuple[str | None, ParseStatus]:
    # Each stage must produce exactly one distinct valid candidate to count.
    for pattern in (_LOOSE_ANSWER, _PAREN_LETTER, _OPTION_WORD):
        hits = {
            cid
            for tok in pattern.findall(raw)
            if (cid := _letter_candidate(tok, candidates)) is not None
        }
        if len(hits) == 1:
            return next(iter(hits)), ParseStatus.RECOVERED
    id_hits = {
        c.id for c in candidates if re.search(rf"\b{re.escape(c.id)}\b", raw)
    }
    if len(id_hits) == 1:
        return next(iter(id_hits)), ParseStatus.RECOVERED
    upper_hits = {
        cid
        for tok in _BARE_UPPER.findall(raw)
        if (cid := _letter_candidate(tok, candidates)) is not None
    }
    if len(upper_hits) == 1:
        return next(iter(upper_hits)), ParseStatus.RECOVERED
    return None, ParseStatus.FAILED


def _letters_in(segment: str, candidates: tuple[Candidate, ...]) -> list[str]:
    ids = []
    for tok in re.findall(r"[A-Za-z]+", segment):
        cid = _letter_candidate(tok, candidates)
        if cid is not None and cid not in ids:
            ids.append(cid)
    return ids


def _option_set(raw: str, candidates: tuple[Candidate, ...]) -> tuple[frozenset[str] | None, ParseStatus]:
    m = _ANSWER_LINE.search(raw)
    if m:
        ids = _letters_in(m.group(1), candidates)
        if ids:
            return frozenset(ids), ParseStatus.CLEAN
    loose = _LOOSE_ANSWER.search(raw)
    if loose:
        ids = _letters_in(raw[loose.start():], candidates)
        if ids:
            return frozenset(ids), ParseStatus.RECOVERED
    upper = [
        cid
        for tok in _BARE_UPPER.findall(raw)
        if (cid := _letter_candidate(tok, candidates)) is not None
    ]
    if upper:
        return frozenset(upper), ParseStatus.RECOVERED
    return None, ParseStatus.FAILED


def _pairing(raw: str, n_captions: int, n_images: int) -> tuple[PairingPrediction | None, ParseStatus]:
    cap_map: dict[int, int] = {}
    img_map: dict[int, int] = {}
    m = _CAPTIONS_LINE.search(raw)
    if m:
        for letter, digit in _PAIR_LETTER_DIGIT.findall(m.group(1)):
            ci, ii = letter_to_index(letter), int(digit) - 1
            if ci is not None and 0 <= ci < n_captions and 0 <= ii < n_images:
                cap_map.setdefault(ci, ii)
    m = _IMAGES_LINE.search(raw)
    if m:
        for digit, letter in _PAIR_DIGIT_LETTER.findall(m.group(1)):
            ii, ci = int(digit) - 1, letter_to_index(letter)
            if ci is not None and 0 <= ii < n_images and 0 <= ci < n_captions:
                img_map.setdefault(ii, ci)
    if cap_map and img_map:
        return PairingPrediction(cap_map, img_map), ParseStatus.CLEAN
    if not cap_map and not img_map:
        # Recovery: letter=digit pairs anywhere in the reply.
        for letter, digit in _PAIR_LETTER_DIGIT.findall(raw):
            ci, ii = letter_to_index(letter), int(digit) - 1
            if ci is not None and 0 <= ci < n_captions and 0 <= ii < n_images:
                cap_map.setdefault(ci, ii)
        if not cap_map:
            return None, ParseStatus.FAILED
    # One direction present. If it is a bijection its inverse is implied.
    if cap_map and not img_map:
        if sorted(cap_map.values()) == sorted(set(cap_map.values())):
            img_map = {v: k for k, v in cap_map.items()}
        return PairingPrediction(cap_map, img_map), ParseStatus.RECOVERED
    if img_map and not cap_map:
        if sorted(img_map.values()) == sorted(set(img_map.values())):
            cap_map = {v: k for k, v in img_map.items()}
        return PairingPrediction(cap_map, img_map), ParseStatus.RECOVERED
    raise AssertionError("unreachable")


def parse_prediction(raw: str, instance: TaskInstance) -> Prediction:
    """Parse a model reply into the answer shape for the instance's kind."""
    kind = instance.kind
    if kind in (TaskKind.MCQ, TaskKind.NYCCC):
        cid, status = _single_choice(raw, instance.candidates)
        return Prediction(raw, OptionId(cid) if cid else None, status)

    if kind is TaskKind.WINOGAVIL:
        ids, status = _option_set(raw, instance.candidates)
        return Prediction(raw, OptionIdSet(ids) if ids else None, status)

    if kind is TaskKind.VCR:
        return _parse_vcr(raw, instance)

    if kind is TaskKind.WINOGROUND:
        pairing, status = _pairing(raw, len(instance.candidates), len(instance.images))
        return Prediction(raw, pairing, status)

    if kind is TaskKind.WHOOPS:
        m = _EXPLANATION_LINE.search(raw)
        text = (m.group(1) if m else raw).strip()
        if text:
            return Prediction(raw, ReferenceText(text), ParseStatus.CLEAN)
        return Prediction(raw, None, ParseStatus.FAILED)

    raise ValueError(f"no parser for kind {kind!r}")


def _parse_vcr(raw: str, instance: TaskInstance) -> Prediction:
    rationales = vcr_rationales(instance)
    status = ParseStatus.CLEAN
    choices: dict[str, str] = {}

    m = _ANSWER_LINE.search(raw)
    token = m and re.match(r"[\"'(]*([A-Za-z]+)", m.group(1).strip())
    answer = _letter_candidate(token.group(1), instance.candidates) if token else None
    if answer is None:
        # Constrain the loose scan to text before any rationale marker so a
        # rationale letter cannot masquerade as the answer.
        rat_at = raw.lower().find("rationale")
        head = raw[:rat_at] if rat_at >= 0 else raw
        answer, astat = _recover_single(head, instance.candidates)
        status = astat if answer else ParseStatus.FAILED
    if answer is not None:
        choices["answer"] = answer

    m = _RATIONALE_LINE.search(raw)
    token = m and re.match(r"[\"'(]*([A-Za-z]+)", m.group(1).strip())
    rationale = _letter_candidate(token.group(1), rationales) if token else None
    if rationale is None:
        loose = _LOOSE_RATIONALE.search(raw)
        if loose:
            rationale = _letter_candidate(loose.group(1), rationales)
            if rationale is not None:
                status = ParseStatus.RECOVERED
    if rationale is not None:
        choices["rationale"] = rationale
    elif choices:
        status = ParseStatus.RECOVERED  # partial parse; missing part scores 0

    if not choices:
        return Prediction(raw, None, ParseStatus.FAILED)
    return Prediction(raw, LabeledChoices(choices), status)


def failed_prediction(raw: str = "") -> Prediction:
    return Prediction(raw, None, ParseStatus.FAILED)


def _candidate_letter(cid: str, candidates: tuple[Candidate, ...]) -> str:
    for i, c in enumerate(candidates):
        if c.id == cid:
            return option_letter(i)
    raise ValueError(f"candidate id {cid!r} not in instance")


def answer_display(prediction: Prediction, instance: TaskInstance) -> str:
    """Render a parsed prediction in the same format models are asked to
    reply in. Used when showing solved exemplars; fails loudly on Failed
    predictions (those must be filtered out upstream)."""
    parsed = prediction.parsed
    if parsed is None:
        raise ValueError("cannot display a failed prediction")
    if isinstance(parsed, OptionId):
        return f"Answer: {_candidate_letter(parsed.option, instance.candidates)}"
    if isinstance(parsed, OptionIdSet):
        order = {c.id: i for i, c in enumerate(instance.candidates)}
        letters = [
            option_letter(order[cid]) for cid in sorted(parsed.options, key=order.get)
        ]
        return "Answer: " + ", ".join(letters)
    if isinstance(parsed, LabeledChoices):
        lines = []
        if "answer" in parsed.choices:
            lines.append(
                f"Answer: {_candidate_letter(parsed.choices['answer'], instance.candidates)}"
            )
        if "rationale" in parsed.choices:
            lines.append(
                f"Rationale: {_candidate_letter(parsed.choices['rationale'], vcr_rationales(instance))}"
            )
        return "\n".join(lines)
    if isinstance(parsed, PairingPrediction):
        caps = ", ".join(
            f"{option_letter(ci)}={ii + 1}"
            for ci, ii in sorted(parsed.caption_to_image.items())
        )
        imgs = ", ".join(
            f"{ii + 1}={option_letter(ci)}"
            for ii, ci in sorted(parsed.image_to_caption.items())
        )
        lines = []
        if caps:
            lines.append(f"Captions: {caps}")
        if imgs:
            lines.append(f"Images: {imgs}")
        return "\n".join(lines)
    if isinstance(parsed, ReferenceText):
        return f"Explanation: {parsed.reference}"
    raise ValueError(f"no display form for {type(parsed).__name__}")
