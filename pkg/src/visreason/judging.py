"""Pairwise judged comparison of two texts for a task.

The direct protocol asks one question; the stepwise protocol asks four,
each isolating one facet (initial perception, recognizing incongruity,
contextual analysis, linking back to the question). Judge replies are
mapped to verdicts by a case-insensitive whole-word scan for True /
False / Equal: exactly one distinct keyword must appear, anything else
gets one reprompt and then counts as unparseable. True means option B is
better, False means option A is better.

Aggregation reports, per step, the percentage of each verdict over the
parsed replies (unparseable replies are counted but excluded from the
denominator, and both denominators are reported), plus the mean of the
four per-step percentages.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from statistics import mean
from typing import Mapping, Sequence

from .backends import BackendError, BackendRole, Gateway
from .templates import TemplateSet


class Verdict(str, Enum):
    A_BETTER = "a_better"   # judged False
    B_BETTER = "b_better"   # judged True
    EQUAL = "equal"
    UNPARSEABLE = "unparseable"


VERDICT_WORDS = {"true": Verdict.B_BETTER, "false": Verdict.A_BETTER, "equal": Verdict.EQUAL}
_WORD_RE = re.compile(r"\b(true|false|equal)\b", re.IGNORECASE)

REPROMPT = "Reply with exactly one word: True, False, or Equal."

COC_STEPS = (
    ("step1", "initial_perception"),
    ("step2", "recognizing_incongruity"),
    ("step3", "contextual_analysis"),
    ("step4", "linking_to_question"),
)
STEP_NAMES = tuple(name for _, name in COC_STEPS)


def parse_verdict(raw: str) -> Verdict:
    """Whole-word scan; exactly one distinct keyword decides the verdict."""
    hits = {m.lower() for m in _WORD_RE.findall(raw)}
    if len(hits) == 1:
        return VERDICT_WORDS[next(iter(hits))]
    return Verdict.UNPARSEABLE


@dataclass(frozen=True)
class StepResult:
    step: str
    verdict: Verdict
    raw: str
    reprompted: bool = False
    error: str | None = None


@dataclass(frozen=True)
class Comparison:
    """One judged pair. Direct protocol produces a single step named
    'direct'; the stepwise protocol produces all four steps."""

    pair_id: str
    steps: tuple[StepResult, ...]


@dataclass
class Judge:
    gateway: Gateway
    templates: TemplateSet

    def _ask(self, template: str, step: str, task: str, option_a: str, option_b: str) -> StepResult:
        prompt = self.templates.render(
            template, task=task, option_a=option_a, option_b=option_b
        )
        try:
            raw = self.gateway.complete(prompt, role=BackendRole.JUDGE)
        except BackendError as exc:
            return StepResult(step, Verdict.UNPARSEABLE, "", error=str(exc))
        verdict = parse_verdict(raw)
        if verdict is not Verdict.UNPARSEABLE:
            return StepResult(step, verdict, raw)
        try:
            retry = self.gateway.complete(
                [
                    {"role": "user", "content": prompt},
                    {"role": "assistant", "content": raw},
                    {"role": "user", "content": REPROMPT},
                ],
                role=BackendRole.JUDGE,
            )
        except BackendError as exc:
            return StepResult(step, Verdict.UNPARSEABLE, raw, reprompted=True, error=str(exc))
        return StepResult(step, parse_verdict(retry), retry, reprompted=True)

    def direct_compare(self, pair_id: str, task: str, option_a: str, option_b: str) -> Comparison:
        return Comparison(pair_id, (self._ask("direct", "direct", task, option_a, option_b),))

    def coc_compare(self, pair_id: str, task: str, option_a: str, option_b: str) -> Comparison:
        """Four isolated judge calls; a failed step never blocks the rest."""
        steps = tuple(
            self._ask(template, name, task, option_a, option_b)
            for template, name in COC_STEPS
        )
        return Comparison(pair_id, steps)

    def rate_explanation(self, task: str, reference: str, explanation: str) -> bool:
        """Accept/reject a free-text explanation against a reference.

        Unparseable replies (after one reprompt) count as rejection.
        """
        prompt = self.templates.render(
            "explanation_rate", task=task, reference=reference, explanation=explanation
        )
        raw = self.gateway.complete(prompt, role=BackendRole.JUDGE)
        verdict = parse_verdict(raw)
        if verdict is Verdict.UNPARSEABLE:
            retry = self.gateway.complete(
                [
                    {"role": "user", "content": prompt},
                    {"role": "assistant", "content": raw},
                    {"role": "user", "content": "Reply with exactly one word: True or False."},
                ],
                role=BackendRole.JUDGE,
            )
            verdict = parse_verdict(retry)
        return verdict is Verdict.B_BETTER  # the keyword "true"


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepBreakdown:
    step: str
    n_total: int
    n_parsed: int
    percentages: Mapping[str, float]  # verdict -> % of parsed; empty when n_parsed == 0

    @property
    def n_unparsed(self) -> int:
        return self.n_total - self.n_parsed


@dataclass(frozen=True)
class ComparisonReport:
    n_pairs: int
    steps: tuple[StepBreakdown, ...]
    averages: Mapping[str, float]  # verdict -> mean of per-step percentages


def aggregate_verdicts(comparisons: Sequence[Comparison]) -> ComparisonReport:
    """Per-step verdict percentages over parsed replies, plus their mean.

    Every comparison must carry the same step set. The mean row averages
    the per-step percentages (not the pooled counts), so each step weighs
    equally regardless of how many of its replies parsed.
    """
    if not comparisons:
        return ComparisonReport(0, (), {})
    step_names = [s.step for s in comparisons[0].steps]
    for comp in comparisons:
        if [s.step for s in comp.steps] != step_names:
            raise ValueError("comparisons carry different step sets; cannot aggregate")

    breakdowns = []
    for idx, name in enumerate(step_names):
        verdicts = [comp.steps[idx].verdict for comp in comparisons]
        parsed = [v for v in verdicts if v is not Verdict.UNPARSEABLE]
        percentages: dict[str, float] = {}
        if parsed:
            for verdict in (Verdict.B_BETTER, Verdict.A_BETTER, Verdict.EQUAL):
                percentages[verdict.value] = (
                    100.0 * sum(1 for v in parsed if v is verdict) / len(parsed)
                )
        breakdowns.append(
            StepBreakdown(name, len(verdicts), len(parsed), percentages)
        )

    averages: dict[str, float] = {}
    contributing = [b for b in breakdowns if b.n_parsed > 0]
    if contributing:
        for verdict in (Verdict.B_BETTER, Verdict.A_BETTER, Verdict.EQUAL):
            averages[verdict.value] = mean(
                b.percentages[verdict.value] for b in contributing
            )
    return ComparisonReport(len(comparisons), tuple(breakdowns), averages)


def render_comparison_report(report: ComparisonReport) -> str:
    """Plain-text table: one row per step plus the average row."""
    if report.n_pairs == 0:
        return "no comparisons\n"
    headers = ["step", "B better %", "A better %", "equal %", "parsed", "unparsed"]
    rows = []
    for b in report.steps:
        if b.n_parsed:
            pct = [
                f"{b.percentages['b_better']:.1f}",
                f"{b.percentages['a_better']:.1f}",
                f"{b.percentages['equal']:.1f}",
            ]
        else:
            pct = ["-", "-", "-"]
        rows.append([b.step, *pct, str(b.n_parsed), str(b.n_unparsed)])
    if report.averages:
        rows.append(
            [
                "average",
                f"{report.averages['b_better']:.1f}",
                f"{report.averages['a_better']:.1f}",
                f"{report.averages['equal']:.1f}",
                "",
                "",
            ]
        )
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    lines.append(f"pairs: {report.n_pairs}")
    return "\n".join(lines) + "\n"
