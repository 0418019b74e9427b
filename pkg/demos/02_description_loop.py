"""
The context-aware description loop
==================================

Run the same instance through all four pipeline modes over scripted mock
backends and watch the call traffic. The refining modes make a second
captioning pass guided by a follow-up question that the model asked
itself after seeing its own first attempt.
"""

from visreason import (
    Candidate,
    DescriptionEngine,
    Exemplar,
    ExemplarPool,
    FusionConfig,
    Gateway,
    ImageRef,
    MockTransport,
    OptionId,
    ParseStatus,
    PipelineMode,
    Retriever,
    TaskInstance,
    TaskKind,
    TemplateSet,
)
from visreason.backends import BackendProfile, BackendRole

TEMPLATES = TemplateSet.load()

instance = TaskInstance(
    id="demo-0",
    kind=TaskKind.MCQ,
    task_text="What is unusual about the dinner table?",
    images=(ImageRef("i0", "https://example.org/table.png"),),
    candidates=(
        Candidate("c0", "the plates are empty"),
        Candidate("c1", "a bicycle lies on it"),
        Candidate("c2", "the candles are lit"),
    ),
    gold=OptionId("c1"),
)


def make_gateway(scripts):
    """A gateway over one scripted mock transport (no network anywhere)."""
    mock = MockTransport(embedding_dim=8)
    for role, replies in scripts.items():
        mock.script(role, replies)
    profiles = {
        role: BackendProfile(role=role, model_name=f"mock-{role.value}") for role in BackendRole
    }
    return Gateway(profiles, mock), mock


LLM = BackendRole.TEXT_LLM
CAP = BackendRole.CAPTIONER

# ---------------------------------------------------------------------------
# 1. Plain mode: one generic caption, one prediction. Two calls total.
# ---------------------------------------------------------------------------

gateway, mock = make_gateway(
    {LLM: ["Answer: C"], CAP: ["a table set for dinner with candles"]}
)
engine = DescriptionEngine(gateway, TEMPLATES)
trace = engine.run(instance, PipelineMode.BASE)
print("base mode calls:     ", [role.value for role in mock.role_sequence()])
print("  description:", trace.initial_descriptions[0])
print("  answer:     ", trace.final.parsed)

# ---------------------------------------------------------------------------
# 2. Refining mode: the model first writes its own captioning instruction,
#    captions, predicts, asks itself a follow-up question, captions again
#    with the question folded in, and predicts once more.
# ---------------------------------------------------------------------------

gateway, mock = make_gateway(
    {
        LLM: [
            "Describe every object on the table and anything out of place.",
            "Answer: C",
            "Is there anything on the table that does not belong at a meal?",
            "Answer: B",
        ],
        CAP: [
            "a table set for dinner with candles",
            "a dinner table with a bicycle lying across the plates",
        ],
    }
)
engine = DescriptionEngine(gateway, TEMPLATES)
trace = engine.run(instance, PipelineMode.CAID)
print("\nrefining mode calls: ", [role.value for role in mock.role_sequence()])
print("  captioning instruction:", trace.caption_instruction)
print("  first description:     ", trace.initial_descriptions[0])
print("  intermediate answer:   ", trace.intermediate.parsed)
print("  follow-up question:    ", trace.followup_query)
print("  revised description:   ", trace.revised_descriptions[0])
print("  final answer:          ", trace.final.parsed)

# ---------------------------------------------------------------------------
# 3. Retrieval mode: solved examples are prepended to the prediction
#    prompt. The exemplar pool here is built by hand; demo 03 builds one
#    with pseudo-labels end to end.
# ---------------------------------------------------------------------------

pool = ExemplarPool.build(
    [
        Exemplar(
            id=f"solved-{i}",
            kind=TaskKind.MCQ,
            task_text=f"What is unusual about the {place}?",
            descriptions=(f"a {place} with something odd in it",),
            answer_text="Answer: A",
            pseudo_status=ParseStatus.CLEAN,
            x_m=tuple(0.2 * (i + j) for j in range(8)),
        )
        for i, place in enumerate(["kitchen", "garden", "library"])
    ]
)

gateway, mock = make_gateway({LLM: ["Answer: B"], CAP: ["a dinner table, bicycle on top"]})
engine = DescriptionEngine(gateway, TEMPLATES)
retriever = Retriever(pool, FusionConfig(k=2), gateway, TEMPLATES)
retriever.prepare([instance])

mark = mock.calls_made
trace = engine.run(instance, PipelineMode.ICL, retriever)
print("\nretrieval mode calls:", [role.value for role in mock.role_sequence(mark)])
print("  exemplars used:", list(trace.icl_exemplar_ids))

# the solved examples really are inside the prediction prompt:
prompt = mock.log[-1].payload["messages"][0]["content"]
print("  prompt starts with:", prompt.splitlines()[0])

# ---------------------------------------------------------------------------
# 4. Full mode = refinement + retrieval in one run.
# ---------------------------------------------------------------------------

gateway, mock = make_gateway(
    {
        LLM: ["List objects.", "Answer: A", "What is on the plates?", "Answer: B"],
        CAP: ["a set table", "a table with a bicycle on the plates"],
    }
)
engine = DescriptionEngine(gateway, TEMPLATES)
retriever = Retriever(pool, FusionConfig(k=2), gateway, TEMPLATES)
retriever.prepare([instance])
mark = mock.calls_made
trace = engine.run(instance, PipelineMode.FULL, retriever)
print("\nfull mode calls:     ", [role.value for role in mock.role_sequence(mark)])
print("  final answer:", trace.final.parsed)
