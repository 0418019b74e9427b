"""
Datasets, gold labels, and per-instance scoring
===============================================

Build a few task instances in code, round-trip them through the JSONL
format, score some hand-written predictions, and aggregate the results
into metric reports.
"""

import tempfile

from visreason import (
    Candidate,
    ImageRef,
    LabeledChoices,
    OptionId,
    OptionIdSet,
    PairingMap,
    ParseStatus,
    PairingPrediction,
    Prediction,
    TaskInstance,
    TaskKind,
    aggregate_scores,
    load_dataset,
    save_dataset,
    score_instance,
)

# ---------------------------------------------------------------------------
# 1. A single-choice instance: four candidate answers, one is right.
# ---------------------------------------------------------------------------

mcq = TaskInstance(
    id="demo-mcq-0",
    kind=TaskKind.MCQ,
    task_text="What is the person in the picture holding?",
    images=(ImageRef("i0", "https://example.org/person.png"),),
    candidates=(
        Candidate("c0", "an umbrella"),
        Candidate("c1", "a ladder"),
        Candidate("c2", "a violin"),
        Candidate("c3", "a kite"),
    ),
    gold=OptionId("c2"),
)

right = Prediction("Answer: C", OptionId("c2"), ParseStatus.CLEAN)
wrong = Prediction("Answer: A", OptionId("c0"), ParseStatus.CLEAN)
print("single choice, correct:  ", score_instance(mcq, right).components)
print("single choice, incorrect:", score_instance(mcq, wrong).components)

# ---------------------------------------------------------------------------
# 2. A set-valued instance scored by Jaccard overlap with the gold set.
# ---------------------------------------------------------------------------

assoc = TaskInstance(
    id="demo-assoc-0",
    kind=TaskKind.WINOGAVIL,
    task_text="Select all images associated with the cue 'winter'.",
    images=tuple(ImageRef(f"i{j}", f"https://example.org/{j}.png") for j in range(6)),
    candidates=tuple(Candidate(f"c{j}", f"picture {j}") for j in range(6)),
    gold=OptionIdSet(frozenset({"c0", "c3", "c4"})),
)
partial = Prediction("Answer: A, D", OptionIdSet(frozenset({"c0", "c3"})), ParseStatus.CLEAN)
print("set overlap (2 of 3 found, none wrong):", score_instance(assoc, partial).components)

# ---------------------------------------------------------------------------
# 3. A caption/image pairing instance: both directions must be right for
#    the combined 'group' component to be 1.
# ---------------------------------------------------------------------------

pairing = TaskInstance(
    id="demo-pair-0",
    kind=TaskKind.WINOGROUND,
    task_text="Match each caption to its image.",
    images=(ImageRef("i0", "https://example.org/a.png"), ImageRef("i1", "https://example.org/b.png")),
    candidates=(Candidate("cap0", "the mug is on the book"), Candidate("cap1", "the book is on the mug")),
    gold=PairingMap({0: 0, 1: 1}),
)
half_right = Prediction(
    "Captions: A=1, B=2\nImages: 1=B, 2=A",
    PairingPrediction(caption_to_image={0: 0, 1: 1}, image_to_caption={0: 1, 1: 0}),
    ParseStatus.CLEAN,
)
print("pairing (text right, image wrong):", score_instance(pairing, half_right).components)

# ---------------------------------------------------------------------------
# 4. A two-part answer+rationale instance: the combined component is the
#    conjunction of its parts.
# ---------------------------------------------------------------------------

two_part = TaskInstance(
    id="demo-vcr-0",
    kind=TaskKind.VCR,
    task_text="Why is the man running?",
    images=(ImageRef("i0", "https://example.org/run.png"),),
    candidates=tuple(Candidate(f"c{j}", f"answer {j}") for j in range(4)),
    gold=LabeledChoices({"answer": "c1", "rationale": "r2"}),
    meta={"rationales": [{"id": f"r{j}", "text": f"because of reason {j}"} for j in range(4)]},
)
pred = Prediction(
    "Answer: B\nRationale: C",
    LabeledChoices({"answer": "c1", "rationale": "r2"}),
    ParseStatus.CLEAN,
)
print("answer+rationale, both right:", score_instance(two_part, pred).components)

# ---------------------------------------------------------------------------
# 5. Round-trip through the on-disk JSONL format, then aggregate scores
#    over a small batch into a percentage report.
# ---------------------------------------------------------------------------

with tempfile.NamedTemporaryFile(suffix=".jsonl", mode="w", delete=False) as fh:
    path = fh.name
save_dataset([mcq, assoc], path)
reloaded = load_dataset(path)
print("round-tripped instances:", [inst.id for inst in reloaded])
assert reloaded[0] == mcq and reloaded[1] == assoc

scores = [score_instance(mcq, right), score_instance(mcq, wrong)]
report = aggregate_scores(scores)
print(f"aggregate over {report.n} single-choice instances: {report.metrics}")
