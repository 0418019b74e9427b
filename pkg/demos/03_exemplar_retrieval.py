"""
Pseudo-labeled exemplar pools and fused retrieval
=================================================

Pseudo-label a small dataset into an exemplar pool (gold labels are
stripped before any model traffic), then rank exemplars for a target by
the fused score: alpha * multimodal-cosine + max-normalized lexical
overlap. Sweep alpha to see the balance shift, and render the selected
exemplars into the in-context block used by the prediction prompt.
"""

from visreason import (
    Candidate,
    DescriptionEngine,
    FusionConfig,
    Gateway,
    ImageRef,
    MockTransport,
    OptionId,
    PipelineMode,
    TaskInstance,
    TaskKind,
    TemplateSet,
    build_pool,
    render_icl_block,
    render_task_text,
    select_top_k,
)
from visreason.backends import BackendProfile, BackendRole

TEMPLATES = TemplateSet.load()
LLM = BackendRole.TEXT_LLM
CAP = BackendRole.CAPTIONER

# ---------------------------------------------------------------------------
# 1. Six instances about different scenes. Gold labels are present in the
#    dataset but play no part in pool building.
# ---------------------------------------------------------------------------

SCENES = [
    ("a red bird on a snowy branch", "bird"),
    ("a dog asleep under a kitchen table", "dog"),
    ("a red bicycle leaning on a bird bath", "bicycle"),
    ("an empty house with a broken window", "house"),
    ("a river cutting through a green field", "river"),
    ("a red kite stuck in a tall tree", "kite"),
]

instances = [
    TaskInstance(
        id=f"scene-{i}",
        kind=TaskKind.MCQ,
        task_text=f"What is the main subject: {text}?",
        images=(ImageRef("i0", f"https://example.org/{i}.png"),),
        candidates=(Candidate("c0", subject), Candidate("c1", "something else")),
        gold=OptionId("c0"),
    )
    for i, (text, subject) in enumerate(SCENES)
]

mock = MockTransport(embedding_dim=8)
mock.script(LLM, ["Answer: A"] * len(instances))
mock.script(CAP, [text for text, _ in SCENES])
profiles = {r: BackendProfile(role=r, model_name=f"mock-{r.value}") for r in BackendRole}
gateway = Gateway(profiles, mock)
engine = DescriptionEngine(gateway, TEMPLATES)

result = build_pool(instances, engine, gateway, mode=PipelineMode.BASE)
pool = result.pool
print(f"pool of {len(pool)} exemplars, build failures: {len(result.failures)}")
print("first exemplar answer (a pseudo-label, not the gold):", pool.exemplars[0].answer_text)

# ---------------------------------------------------------------------------
# 2. Rank exemplars for a new target. The target is excluded from its own
#    candidates when it is a pool member (leave-one-out), lexical scores
#    are normalized by the best candidate, and ties break on exemplar id.
# ---------------------------------------------------------------------------

target = instances[0]
target_text = render_task_text(target.without_gold())
target_vec = gateway.embed_multimodal(target_text, list(target.images))

for alpha in (0.1, 1.0, 2.0):
    chosen = select_top_k(
        pool, target.id, target_text, target_vec, FusionConfig(alpha=alpha, k=3)
    )
    row = ", ".join(f"{s.exemplar.id}={s.score:.3f}" for s in chosen)
    print(f"alpha={alpha:>3}: {row}")

# ---------------------------------------------------------------------------
# 3. Render the winning exemplars into the in-context block that gets
#    prepended to prediction prompts.
# ---------------------------------------------------------------------------

chosen = select_top_k(pool, target.id, target_text, target_vec, FusionConfig(k=2))
block = render_icl_block(chosen, TEMPLATES, 2)
print("\nin-context block:")
print(block.text)
