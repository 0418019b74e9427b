"""Shared fixture builders for the test suite."""

from __future__ import annotations

from visreason.backends import BackendProfile, BackendRole, Gateway, MockTransport
from visreason.records import (
    Candidate,
    ImageRef,
    LabeledChoices,
    OptionId,
    OptionIdSet,
    PairingMap,
    ReferenceText,
    TaskInstance,
    TaskKind,
)


def mcq_instance(idx: int = 0, n: int = 4, gold: int = 1, prefix: str = "q", n_images: int = 1):
    return TaskInstance(
        id=f"{prefix}{idx:03d}",
        kind=TaskKind.MCQ,
        task_text=f"Which choice matches picture {idx}?",
        images=tuple(ImageRef(f"i{idx}_{j}", f"img/{idx}_{j}.png") for j in range(n_images)),
        candidates=tuple(Candidate(f"c{j}", f"choice {j} of question {idx}") for j in range(n)),
        gold=OptionId(f"c{gold}"),
    )


def nyccc_instance(idx: int = 0, n: int = 5):
    return TaskInstance(
        id=f"ny{idx:03d}",
        kind=TaskKind.NYCCC,
        task_text=f"Pick the caption that best fits cartoon {idx}.",
        images=(ImageRef(f"i{idx}", f"img/cartoon_{idx}.png"),),
        candidates=tuple(Candidate(f"c{j}", f"caption {j} for {idx}") for j in range(n)),
        gold=LabeledChoices({"match": "c0", "crowd": "c1", "ny": "c0"}),
    )


def winogavil_instance(idx: int = 0, n: int = 6, gold_ids=("c0", "c2"), split_meta=None):
    meta = {} if split_meta is None else {"winogavil_split": split_meta}
    return TaskInstance(
        id=f"wg{idx:03d}",
        kind=TaskKind.WINOGAVIL,
        task_text=f"Select the options associated with cue {idx}.",
        images=(ImageRef(f"i{idx}", f"img/cue_{idx}.png"),),
        candidates=tuple(Candidate(f"c{j}", f"association {j} of {idx}") for j in range(n)),
        gold=OptionIdSet(frozenset(gold_ids)),
        meta=meta,
    )


def winoground_instance(idx: int = 0, pairing=None):
    return TaskInstance(
        id=f"wo{idx:03d}",
        kind=TaskKind.WINOGROUND,
        task_text=f"Match each caption to the image it describes (pair {idx}).",
        images=(
            ImageRef(f"i{idx}a", f"img/pair_{idx}_a.png"),
            ImageRef(f"i{idx}b", f"img/pair_{idx}_b.png"),
        ),
        candidates=(
            Candidate("cap0", f"first caption of pair {idx}"),
            Candidate("cap1", f"second caption of pair {idx}"),
        ),
        gold=PairingMap(dict(pairing) if pairing is not None else {0: 0, 1: 1}),
    )


def vcr_instance(idx: int = 0, gold_answer: str = "c1", gold_rationale: str = "r2"):
    return TaskInstance(
        id=f"vc{idx:03d}",
        kind=TaskKind.VCR,
        task_text=f"Why is person 1 doing that in scene {idx}?",
        images=(ImageRef(f"i{idx}", f"img/scene_{idx}.png"),),
        candidates=tuple(Candidate(f"c{j}", f"answer {j} of {idx}") for j in range(4)),
        gold=LabeledChoices({"answer": gold_answer, "rationale": gold_rationale}),
        meta={"rationales": [{"id": f"r{j}", "text": f"rationale {j} of {idx}"} for j in range(4)]},
    )


def whoops_instance(idx: int = 0, reference: str | None = None):
    return TaskInstance(
        id=f"wh{idx:03d}",
        kind=TaskKind.WHOOPS,
        task_text=f"What is unusual about image {idx}?",
        images=(ImageRef(f"i{idx}", f"img/odd_{idx}.png"),),
        gold=ReferenceText(reference or f"object {idx} is somewhere it cannot work"),
    )


def all_profiles(**overrides) -> dict[BackendRole, BackendProfile]:
    return {
        role: BackendProfile(role=role, model_name=f"mock-{role.value}", retry_backoff=0.0, **overrides)
        for role in BackendRole
    }


def scripted_gateway(scripts=None, cache=None, dim: int = 8, **profile_overrides):
    """Gateway over a fresh MockTransport with the given per-role scripts."""
    mock = MockTransport(embedding_dim=dim)
    for role, replies in (scripts or {}).items():
        mock.script(role, replies)
    gateway = Gateway(all_profiles(**profile_overrides), mock, cache=cache)
    return gateway, mock
