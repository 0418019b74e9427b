"""Fused exemplar retrieval.

Exemplars are pseudo-labeled solved tasks. For a target instance, each
pool exemplar gets a multimodal similarity ``s_m`` (cosine between joint
text+image embeddings), a text similarity ``s_t`` (Okapi BM25 by default,
max-normalized over the eligible pool; optionally cosine over text
embeddings), and a fused score ``s = alpha * s_m + s_t``. The top-k
exemplars by fused score, ties broken by ascending exemplar id, become
the in-context block. The target itself is never eligible.

The implementation is deliberately exhaustive (score everything, sort):
pools here are small and exactness is the contract.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .answers import ParseStatus
from .records import TaskKind
from .templates import TemplateSet

logger = logging.getLogger("visreason.retrieval")

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumerics. No stemming."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75


class Bm25Index:
    """Okapi BM25 over a fixed document set.

    score(q, d) = sum over query tokens of
        idf(q) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avgdl))
    with idf(q) = ln((N - df + 0.5) / (df + 0.5) + 1), floored at zero.
    Repeated query tokens contribute once per occurrence.
    """

    def __init__(self, doc_tokens: Mapping[str, Sequence[str]], params: Bm25Params = Bm25Params()):
        self.params = params
        self.doc_len: dict[str, int] = {}
        self.term_freq: dict[str, dict[str, int]] = {}
        self.df: dict[str, int] = {}
        for doc_id, tokens in doc_tokens.items():
            freqs: dict[str, int] = {}
            for tok in tokens:
                freqs[tok] = freqs.get(tok, 0) + 1
            self.doc_len[doc_id] = len(tokens)
            self.term_freq[doc_id] = freqs
            for term in freqs:
                self.df[term] = self.df.get(term, 0) + 1
        self.n_docs = len(self.doc_len)
        total = sum(self.doc_len.values())
        self.avgdl = total / self.n_docs if self.n_docs else 0.0

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        value = float(np.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0))
        return max(0.0, value)

    def score(self, query_tokens: Sequence[str], doc_id: str) -> float:
        if doc_id not in self.term_freq:
            raise KeyError(f"document {doc_id!r} is not in the index")
        freqs = self.term_freq[doc_id]
        length = self.doc_len[doc_id]
        k1, b = self.params.k1, self.params.b
        denom_len = 1.0 - b + b * (length / self.avgdl) if self.avgdl > 0 else 1.0 - b
        total = 0.0
        for term in query_tokens:
            tf = freqs.get(term, 0)
            if tf == 0:
                continue
            total += self.idf(term) * tf * (k1 + 1.0) / (tf + k1 * denom_len)
        return total

    def stats(self) -> dict:
        return {"n_docs": self.n_docs, "avgdl": self.avgdl, "df": dict(self.df)}


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero vectors map to 0.0 rather than NaN."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"vector shapes differ: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


class TextScorer(str, Enum):
    BM25 = "bm25"
    COSINE = "cosine"


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 1.0
    k: int = 4
    text_scorer: TextScorer = TextScorer.BM25
    bm25: Bm25Params = Bm25Params()


def fused_score(s_m: float, s_t: float, alpha: float) -> float:
    return alpha * s_m + s_t


@dataclass(frozen=True)
class Exemplar:
    """A solved task the model can imitate: gold-free text, descriptions,
    a pseudo label in display form, and embeddings for similarity."""

    id: str
    kind: TaskKind
    task_text: str
    descriptions: tuple[str, ...]
    answer_text: str
    pseudo_status: ParseStatus
    x_m: tuple[float, ...]
    x_t: tuple[float, ...] | None = None


@dataclass
class ExemplarPool:
    exemplars: list[Exemplar]
    index: Bm25Index
    params: Bm25Params = Bm25Params()

    @classmethod
    def build(cls, exemplars: Sequence[Exemplar], params: Bm25Params = Bm25Params()) -> "ExemplarPool":
        ids = [e.id for e in exemplars]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate exemplar ids in pool")
        index = Bm25Index({e.id: tokenize(e.task_text) for e in exemplars}, params)
        return cls(list(exemplars), index, params)

    def __len__(self) -> int:
        return len(self.exemplars)


@dataclass(frozen=True)
class ScoredExemplar:
    exemplar: Exemplar
    s_m: float
    s_t: float
    score: float


def select_top_k(
    pool: ExemplarPool,
    target_id: str,
    target_text: str,
    target_x_m: np.ndarray,
    config: FusionConfig,
    target_x_t: np.ndarray | None = None,
    k: int | None = None,
) -> list[ScoredExemplar]:
    """Rank eligible exemplars by fused score and return the first k.

    Eligibility excludes the target's own id (leave-one-out when the pool
    is the evaluation set itself). BM25 text scores are divided by the
    maximum over the eligible pool so they land in [0, 1]; an all-zero
    pool stays all-zero. Ties in fused score break by ascending id.
    """
    if k is None:
        k = config.k
    eligible = [e for e in pool.exemplars if e.id != target_id]
    if not eligible:
        return []

    query_tokens = tokenize(target_text)
    if config.text_scorer is TextScorer.BM25:
        raw = {e.id: pool.index.score(query_tokens, e.id) for e in eligible}
        top = max(raw.values())
        text_scores = {eid: (val / top if top > 0 else 0.0) for eid, val in raw.items()}
    elif config.text_scorer is TextScorer.COSINE:
        if target_x_t is None:
            raise ValueError("cosine text scorer needs a target text embedding")
        text_scores = {}
        for e in eligible:
            if e.x_t is None:
                raise ValueError(
                    f"exemplar {e.id!r} has no text embedding; rebuild the pool with text embeddings"
                )
            text_scores[e.id] = cosine(target_x_t, np.asarray(e.x_t))
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown text scorer {config.text_scorer!r}")

    scored = []
    for e in eligible:
        s_m = cosine(target_x_m, np.asarray(e.x_m))
        s_t = text_scores[e.id]
        scored.append(ScoredExemplar(e, s_m, s_t, fused_score(s_m, s_t, config.alpha)))
    scored.sort(key=lambda se: (-se.score, se.exemplar.id))
    return scored[:k]


@dataclass(frozen=True)
class IclBlock:
    text: str
    exemplar_ids: tuple[str, ...]
    skipped_ids: tuple[str, ...] = ()


ICL_HEADER = "Here are solved examples of the same kind of task:"


def render_icl_block(
    ranked: Sequence[ScoredExemplar],
    templates: TemplateSet,
    k: int,
) -> IclBlock:
    """Render the first k usable exemplars from a ranking.

    An exemplar whose pseudo label failed to parse contributes nothing a
    model could imitate, so it is skipped and the next-ranked one takes
    its place (the skip is logged and recorded).
    """
    chosen: list[ScoredExemplar] = []
    skipped: list[str] = []
    for se in ranked:
        if len(chosen) == k:
            break
        if se.exemplar.pseudo_status is ParseStatus.FAILED:
            skipped.append(se.exemplar.id)
            logger.warning(
                "skipping exemplar %s: pseudo label failed to parse", se.exemplar.id
            )
            continue
        chosen.append(se)
    if not chosen:
        return IclBlock("", (), tuple(skipped))
    separator = templates.text("icl_separator").strip("\n")
    rendered = [
        templates.render(
            "icl_example",
            task_text=se.exemplar.task_text,
            descriptions=format_descriptions(se.exemplar.descriptions),
            answer=se.exemplar.answer_text,
        )
        for se in chosen
    ]
    body = f"\n\n{separator}\n\n".join(rendered)
    text = f"{ICL_HEADER}\n\n{body}\n\n{separator}\n\n"
    return IclBlock(text, tuple(se.exemplar.id for se in chosen), tuple(skipped))


def format_descriptions(descriptions: Sequence[str]) -> str:
    """Numbered description block; the numbering is what pairing-task
    answers refer to."""
    return "\n".join(f"Image {i + 1}: {d}" for i, d in enumerate(descriptions))


@dataclass
class Retriever:
    """Binds a pool, fusion config, and gateway; caches target embeddings.

    Call :meth:`prepare` up front so in-context blocks can be built inside
    the description loop without any live embedding traffic interleaving
    with its calls.
    """

    pool: ExemplarPool
    config: FusionConfig
    gateway: "object"  # visreason.backends.Gateway; kept loose for tests
    templates: TemplateSet
    _target_xm: dict[str, np.ndarray] = field(default_factory=dict)
    _target_xt: dict[str, np.ndarray] = field(default_factory=dict)

    def prepare(self, instances) -> None:
        from .datasets import render_task_text

        for inst in instances:
            if inst.id not in self._target_xm:
                self._target_xm[inst.id] = self.gateway.embed_multimodal(
                    render_task_text(inst), list(inst.images)
                )
            if self.config.text_scorer is TextScorer.COSINE and inst.id not in self._target_xt:
                self._target_xt[inst.id] = self.gateway.embed_text(render_task_text(inst))

    def rank(self, instance) -> list[ScoredExemplar]:
        from .datasets import render_task_text

        self.prepare([instance])
        return select_top_k(
            self.pool,
            instance.id,
            render_task_text(instance),
            self._target_xm[instance.id],
            self.config,
            target_x_t=self._target_xt.get(instance.id),
            k=len(self.pool.exemplars),
        )

    def block_for(self, instance) -> IclBlock:
        return render_icl_block(self.rank(instance), self.templates, self.config.k)
