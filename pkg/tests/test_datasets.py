import json
import random

import pytest

from helpers import (
    mcq_instance,
    nyccc_instance,
    vcr_instance,
    whoops_instance,
    winogavil_instance,
    winoground_instance,
)
from visreason.datasets import (
    DatasetError,
    load_dataset,
    option_letter,
    parse_dataset,
    parse_gold,
    render_options,
    render_task_text,
    save_dataset,
    serialize_dataset,
    winogavil_split,
)
from visreason.records import OptionIdSet, PairingMap, TaskKind


def test_parse_minimal_line():
    line = json.dumps(
        {
            "id": "a1",
            "kind": "mcq",
            "task_text": "Which?",
            "images": [{"id": "i0", "uri": "x.png"}],
            "candidates": [{"id": "c0", "text": "one"}, {"id": "c1", "text": "two"}],
            "gold": {"option": "c0"},
        }
    )
    insts = parse_dataset(line + "\n")
    assert len(insts) == 1
    assert insts[0].kind is TaskKind.MCQ
    assert insts[0].gold.option == "c0"


def _random_instance(rng: random.Random, idx: int):
    maker = rng.choice(
        [
            lambda: mcq_instance(idx, n=rng.randint(2, 6), gold=0),
            lambda: nyccc_instance(idx),
            lambda: winogavil_instance(idx, n=rng.choice([5, 6, 10, 12])),
            lambda: winoground_instance(idx, pairing=rng.choice([{0: 0, 1: 1}, {0: 1, 1: 0}])),
            lambda: vcr_instance(idx),
            lambda: whoops_instance(idx),
        ]
    )
    return maker()


def test_serialize_parse_round_trip():
    rng = random.Random(7)
    for trial in range(25):
        instances = [_random_instance(rng, i) for i in range(rng.randint(1, 8))]
        # builders can collide on ids across kinds; dedupe keeps it valid
        seen, unique = set(), []
        for inst in instances:
            if inst.id not in seen:
                seen.add(inst.id)
                unique.append(inst)
        text = serialize_dataset(unique)
        assert parse_dataset(text) == unique


def test_save_and_load(tmp_path):
    instances = [mcq_instance(i) for i in range(3)]
    path = tmp_path / "data.jsonl"
    save_dataset(instances, str(path))
    assert load_dataset(str(path), kind=TaskKind.MCQ) == instances


def test_kind_mismatch_rejected():
    text = serialize_dataset([mcq_instance(0)])
    with pytest.raises(DatasetError, match="does not match"):
        parse_dataset(text, kind=TaskKind.VCR)


def test_duplicate_ids_rejected():
    text = serialize_dataset([mcq_instance(0)]) * 2
    with pytest.raises(DatasetError, match="duplicate instance id"):
        parse_dataset(text)


def test_error_carries_line_number():
    good = serialize_dataset([mcq_instance(0)])
    bad = good + "{not json}\n"
    with pytest.raises(DatasetError, match="line 2"):
        parse_dataset(bad)


def test_gold_option_must_be_candidate():
    obj = json.loads(serialize_dataset([mcq_instance(0)]).strip())
    obj["gold"] = {"option": "zzz"}
    with pytest.raises(DatasetError, match="not a candidate"):
        parse_dataset(json.dumps(obj) + "\n")


def test_winoground_needs_two_images_and_captions():
    obj = json.loads(serialize_dataset([winoground_instance(0)]).strip())
    obj["images"] = obj["images"][:1]
    with pytest.raises(DatasetError, match="exactly two images"):
        parse_dataset(json.dumps(obj) + "\n")


def test_pairing_must_be_bijection():
    with pytest.raises(DatasetError, match="bijection"):
        parse_gold({"pairing": {"0": 1, "1": 1}})


def test_bare_digit_object_is_pairing_shorthand():
    gold = parse_gold({"0": 0, "1": 1})
    assert isinstance(gold, PairingMap)
    assert gold.pairing == {0: 0, 1: 1}
    assert gold.inverse() == {0: 0, 1: 1}


def test_vcr_requires_rationales():
    obj = json.loads(serialize_dataset([vcr_instance(0)]).strip())
    obj["meta"] = {}
    with pytest.raises(DatasetError, match="rationales"):
        parse_dataset(json.dumps(obj) + "\n")


def test_gold_set_membership_checked():
    obj = json.loads(serialize_dataset([winogavil_instance(0)]).strip())
    obj["gold"] = {"options": ["c0", "nope"]}
    with pytest.raises(DatasetError, match="not candidates"):
        parse_dataset(json.dumps(obj) + "\n")


def test_option_letters():
    assert [option_letter(i) for i in (0, 1, 25, 26, 27)] == ["A", "B", "Z", "AA", "AB"]


def test_render_options_is_lettered():
    inst = mcq_instance(0, n=3)
    assert render_options(inst.candidates).splitlines() == [
        "A. choice 0 of question 0",
        "B. choice 1 of question 0",
        "C. choice 2 of question 0",
    ]


def test_render_task_text_contains_question_and_options():
    inst = mcq_instance(4, n=2)
    text = render_task_text(inst)
    assert "Which choice matches picture 4?" in text
    assert "A. choice 0 of question 4" in text
    # gold never leaks into the rendered form
    assert "gold" not in text.lower()


def test_render_task_text_vcr_lists_rationales():
    text = render_task_text(vcr_instance(1))
    assert "Rationales:" in text
    assert "rationale 2 of 1" in text


def test_split_from_candidate_count():
    assert winogavil_split(winogavil_instance(0, n=5)) == "5/6"
    assert winogavil_split(winogavil_instance(1, n=6)) == "5/6"
    assert winogavil_split(winogavil_instance(2, n=10)) == "10/12"
    assert winogavil_split(winogavil_instance(3, n=12)) == "10/12"


def test_explicit_split_label_wins():
    inst = winogavil_instance(0, n=6, split_meta="swow")
    assert winogavil_split(inst) == "swow"


def test_base_dir_resolves_relative_uris():
    text = serialize_dataset([mcq_instance(0)])
    insts = parse_dataset(text, base_dir="/data/imgs")
    assert insts[0].images[0].uri == "/data/imgs/img/0_0.png"


def test_base_dir_leaves_absolute_and_remote_uris():
    obj = json.loads(serialize_dataset([mcq_instance(0)]).strip())
    obj["images"] = [
        {"id": "i0", "uri": "https://host/x.png"},
        {"id": "i1", "uri": "/abs/y.png"},
    ]
    insts = parse_dataset(json.dumps(obj) + "\n", base_dir="/data")
    assert insts[0].images[0].uri == "https://host/x.png"
    assert insts[0].images[1].uri == "/abs/y.png"


def test_without_gold_strips_only_gold():
    inst = winogavil_instance(0)
    stripped = inst.without_gold()
    assert stripped.gold is None
    assert stripped.candidates == inst.candidates
    assert isinstance(inst.gold, OptionIdSet)
