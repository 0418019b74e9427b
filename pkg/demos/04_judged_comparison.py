"""
Judged comparison of two description sets
=========================================

Compare descriptions from two sources pair by pair with an LLM judge.
The stepwise protocol asks four isolated questions per pair (first
impression, what is out of place, surrounding context, and the link back
to the task question); replies are parsed to verdicts by a whole-word
True/False/Equal scan, and the aggregate reports per-step percentages
over the replies that parsed.
"""

from visreason import (
    Gateway,
    Judge,
    MockTransport,
    TemplateSet,
    aggregate_verdicts,
    render_comparison_report,
)
from visreason.backends import BackendProfile, BackendRole

TEMPLATES = TemplateSet.load()
JUDGE = BackendRole.JUDGE

PAIRS = [
    ("the plain caption", "the question-aware description"),
    ("a dog on grass", "a dog guarding a dropped ice-cream cone"),
    ("two people talking", "two people arguing over a chess board"),
    ("a kitchen", "a kitchen with a kettle boiling over"),
    ("a street at night", "a street at night lit by a single open shop"),
    ("a bookshelf", "a bookshelf sorted by color instead of author"),
]

# Scripted verdicts: mostly True (option B better), one False, one Equal,
# and one reply that needs the automatic one-word reprompt.
replies = []
for i in range(len(PAIRS)):
    replies += ["True", "True", "False" if i == 2 else "True", "Equal" if i == 4 else "True"]
replies[4] = "well, it depends on what you mean"  # pair 1, step 1: unparseable
replies.insert(5, "True")                          # ...answered on the reprompt

mock = MockTransport()
mock.script(JUDGE, replies)
gateway = Gateway(
    {JUDGE: BackendProfile(role=JUDGE, model_name="mock-judge")}, mock
)
judge = Judge(gateway, TEMPLATES)

comparisons = [
    judge.coc_compare(f"pair-{i}", "What is unusual in the image?", a, b)
    for i, (a, b) in enumerate(PAIRS)
]

first = comparisons[1].steps[0]
print(f"pair-1 step 1 was reprompted: {first.reprompted} -> verdict {first.verdict.value}")

report = aggregate_verdicts(comparisons)
print()
print(render_comparison_report(report))

# The one-question protocol asks a single direct comparison instead:
mock.script(JUDGE, ["True"])
direct = judge.direct_compare("pair-0", "What is unusual in the image?", *PAIRS[0])
print("direct protocol verdict:", direct.steps[0].verdict.value)
