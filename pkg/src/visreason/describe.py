"""Context-aware image description with one refinement round.

The refining modes first ask the text model what an image description
should focus on for this task (the caption instruction), caption every
image under that instruction, make an intermediate prediction, ask the
text model for one follow-up question probing what the descriptions left
unclear, re-caption every image under a revision prompt built from the
task text and that question, and predict again from the revised
descriptions. Non-refining modes caption generically and predict once.

Call trace per instance with m images (embedding traffic excluded):

  base, icl   m captioner + 1 text-LLM
  caid, full  1 text-LLM + m captioner + 2 text-LLM + m captioner + 1 text-LLM

ICL modes add a retrieved-exemplar block to every prediction prompt; the
retriever caches target embeddings, so warm it with
:meth:`visreason.retrieval.Retriever.prepare` if exact traces matter.
"""

from __future__ import annotations


from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .answers import (
    ParseStatus,
    Prediction,
    format_instruction,
    format_reminder,
    parse_prediction,
)
from .backends import Gateway
from .datasets import render_options, vcr_rationales
from .records import TaskInstance, TaskKind
from .retrieval import IclBlock, Retriever, format_descriptions
from .templates import TemplateSet

def _first_question(text: str) -> str | None:
    """The first question-mark-terminated sentence, if any."""
    qi = text.find("?")
    if qi < 0:
        return None
    start = max(text.rfind(ch, 0, qi) for ch in ".!\n")
    question = text[start + 1 : qi + 1].strip()
    return question or None


class PipelineMode(str, Enum):
    BASE = "base"  # generic captions, single prediction
    CAID = "caid"  # context-aware captions with one refinement round
    ICL = "icl"    # generic captions plus retrieved exemplars
    FULL = "full"  # refinement and retrieved exemplars

    @property
    def refines(self) -> bool:
        return self in (PipelineMode.CAID, PipelineMode.FULL)

    @property
    def retrieves(self) -> bool:
        return self in (PipelineMode.ICL, PipelineMode.FULL)


@dataclass(frozen=True)
class DescriptionTrace:
    """Everything one instance produced on its way to a final prediction."""

    instance_id: str
    mode: PipelineMode
    caption_instruction: str
    initial_descriptions: tuple[str, ...]
    final: Prediction
    intermediate: Prediction | None = None
    followup_query: str | None = None
    revised_prompt: str | None = None
    revised_descriptions: tuple[str, ...] = ()
    icl_exemplar_ids: tuple[str, ...] = ()
    icl_skipped_ids: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def descriptions(self) -> tuple[str, ...]:
        return self.revised_descriptions or self.initial_descriptions


@dataclass
class DescriptionEngine:
    gateway: Gateway
    templates: TemplateSet
    max_refinements: int = 1
    revise_with_llm: bool = False

    # -- prompt builders (pure) ---------------------------------------------

    def options_block(self, instance: TaskInstance) -> str:
        parts = []
        if instance.kind is TaskKind.WINOGROUND:
            parts.append("Captions:\n" + render_options(instance.candidates))
        elif instance.candidates:
            parts.append("Options:\n" + render_options(instance.candidates))
        if instance.kind is TaskKind.VCR:
            rats = vcr_rationales(instance)
            if rats:
                parts.append("Rationales:\n" + render_options(rats))
        if not parts:
            return ""
        return "\n\n".join(parts) + "\n\n"

    def build_feature_prompt(self, instance: TaskInstance) -> str:
        """Prompt asking the text model for a task-aware caption instruction."""
        return self.templates.render(
            "feature_prompt",
            task_text=instance.task_text,
            options=self.options_block(instance),
        )

    def build_predict_prompt(
        self, instance: TaskInstance, descriptions: Sequence[str], icl_block: str = ""
    ) -> str:
        return self.templates.render(
            "predict",
            icl_block=icl_block,
            task_text=instance.task_text,
            options=self.options_block(instance),
            descriptions=format_descriptions(descriptions),
            answer_format=format_instruction(instance),
        )

    def build_followup_prompt(
        self, instance: TaskInstance, descriptions: Sequence[str], prediction: Prediction
    ) -> str:
        return self.templates.render(
            "followup",
            task_text=instance.task_text,
            descriptions=format_descriptions(descriptions),
            prediction=prediction.raw_text,
        )

    def build_revised_prompt(self, instance: TaskInstance, query: str) -> str:
        """Revision caption prompt: the task text plus the follow-up query."""
        return self.templates.render(
            "revised_prompt", task_text=instance.task_text, query=query
        )

    # -- model-backed steps ---------------------------------------------------

    def caption_instruction(self, instance: TaskInstance, notes: list[str]) -> str:
        reply = self.gateway.complete(self.build_feature_prompt(instance)).strip()
        if not reply:
            notes.append("caption instruction came back empty; using the generic one")
            return self.templates.render("generic_caption")
        return reply

    def initial_descriptions(self, instance: TaskInstance, instruction: str) -> tuple[str, ...]:
        """One caption per image, in image order, under one instruction."""
        return tuple(self.gateway.caption(image, instruction) for image in instance.images)

    def predict(
        self,
        instance: TaskInstance,
        descriptions: Sequence[str],
        icl_block: str = "",
        notes: list[str] | None = None,
    ) -> Prediction:
        """One answer attempt; an unparseable reply earns one reprompt."""
        prompt = self.build_predict_prompt(instance, descriptions, icl_block)
        raw = self.gateway.complete(prompt)
        prediction = parse_prediction(raw, instance)
        if prediction.status is not ParseStatus.FAILED:
            return prediction
        retry_raw = self.gateway.complete(
            [
                {"role": "user", "content": prompt},
                {"role": "assistant", "content": raw},
                {"role": "user", "content": format_reminder(instance)},
            ]
        )
        if notes is not None:
            notes.append("prediction reply was unparseable; reprompted once")
        return parse_prediction(retry_raw, instance)

    def generate_followup_query(
        self,
        instance: TaskInstance,
        descriptions: Sequence[str],
        prediction: Prediction,
        notes: list[str],
    ) -> str:
        """Ask for one probing question; retry empties once, then fall back
        to the task text itself so revision always has a target."""
        prompt = self.build_followup_prompt(instance, descriptions, prediction)
        reply = self.gateway.complete(prompt).strip()
        if not reply:
            notes.append("follow-up query came back empty; retried once")
            reply = self.gateway.complete(
                [
                    {"role": "user", "content": prompt},
                    {"role": "assistant", "content": ""},
                    {"role": "user", "content": "Reply with one short question."},
                ]
            ).strip()
        if not reply:
            notes.append("follow-up retry was empty too; using the task text")
            return instance.task_text
        return _first_question(reply) or reply

    # -- the loop -------------------------------------------------------------

    def run(
        self,
        instance: TaskInstance,
        mode: PipelineMode,
        retriever: Retriever | None = None,
    ) -> DescriptionTrace:
        if mode.retrieves and retriever is None:
            raise ValueError(f"mode {mode.value!r} needs a retriever")

        notes: list[str] = []
        if mode.refines:
            instruction = self.caption_instruction(instance, notes)
        else:
            instruction = self.templates.render("generic_caption")
        initial = self.initial_descriptions(instance, instruction)

        block = IclBlock("", ())
        if mode.retrieves:
            block = retriever.block_for(instance)

        intermediate: Prediction | None = None
        followup: str | None = None
        revised_prompt: str | None = None
        revised: tuple[str, ...] = ()
        if mode.refines:
            descriptions: tuple[str, ...] = initial
            for _ in range(self.max_refinements):
                intermediate = self.predict(instance, descriptions, block.text, notes)
                followup = self.generate_followup_query(
                    instance, descriptions, intermediate, notes
                )
                revised_prompt = self._revision_prompt(instance, followup, notes)
                descriptions = self.initial_descriptions(instance, revised_prompt)
            revised = descriptions
            final = self.predict(instance, revised, block.text, notes)
        else:
            final = self.predict(instance, initial, block.text, notes)

        return DescriptionTrace(
            instance_id=instance.id,
            mode=mode,
            caption_instruction=instruction,
            initial_descriptions=initial,
            final=final,
            intermediate=intermediate,
            followup_query=followup,
            revised_prompt=revised_prompt,
            revised_descriptions=revised,
            icl_exemplar_ids=block.exemplar_ids,
            icl_skipped_ids=block.skipped_ids,
            notes=tuple(notes),
        )

    def _revision_prompt(self, instance: TaskInstance, query: str, notes: list[str]) -> str:
        prompt = self.build_revised_prompt(instance, query)
        if not self.revise_with_llm:
            return prompt
        # Optional extra hop: let the text model rewrite the revision prompt
        # into a single polished instruction (costs one more call per round).
        reply = self.gateway.complete(
            prompt + "\n\nRewrite the above as one clear instruction for an "
            "image-description model. Reply with the instruction only."
        ).strip()
        if not reply:
            notes.append("LLM revision of the caption prompt was empty; using the template")
            return prompt
        return reply
