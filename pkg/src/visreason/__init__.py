"""visreason: visual-reasoning benchmark harness.

Language models answer image-based reasoning tasks through text alone:
images are turned into task-aware descriptions (with one
predict/question/re-describe refinement round), optionally accompanied by
retrieved solved exemplars, and the final answers are scored per
benchmark family. A separate judging protocol compares two texts for a
task in four reasoning steps. All model traffic runs through a caching,
retrying gateway that works identically against live HTTP backends and a
deterministic scripted mock.
"""

from .answers import PairingPrediction, ParseStatus, Prediction, parse_prediction
from .backends import DiskCache, Gateway, HttpTransport, MemoryCache, MockTransport
from .datasets import (
    load_dataset,
    parse_dataset,
    render_task_text,
    save_dataset,
    serialize_dataset,
)
from .describe import DescriptionEngine, DescriptionTrace, PipelineMode
from .harness import RunConfig, RunManifest, run, run_compare, subsample, sweep
from .judging import (
    Judge,
    Verdict,
    aggregate_verdicts,
    parse_verdict,
    render_comparison_report,
)
from .pool import build_pool, load_pool, save_pool
from .records import (
    Candidate,
    GoldLabel,
    ImageRef,
    InstanceScore,
    LabeledChoices,
    MetricReport,
    OptionId,
    OptionIdSet,
    PairingMap,
    ReferenceText,
    TaskInstance,
    TaskKind,
)
from .retrieval import (
    Bm25Index,
    Bm25Params,
    Exemplar,
    ExemplarPool,
    FusionConfig,
    Retriever,
    TextScorer,
    cosine,
    fused_score,
    render_icl_block,
    select_top_k,
    tokenize,
)
from .scoring import aggregate_scores, score_instance
from .templates import TemplateSet

__version__ = "0.1.0"

__all__ = [
    "Bm25Index",
    "Bm25Params",
    "Candidate",
    "DescriptionEngine",
    "DescriptionTrace",
    "DiskCache",
    "Exemplar",
    "ExemplarPool",
    "FusionConfig",
    "Gateway",
    "GoldLabel",
    "HttpTransport",
    "ImageRef",
    "InstanceScore",
    "Judge",
    "LabeledChoices",
    "MemoryCache",
    "MetricReport",
    "MockTransport",
    "OptionId",
    "OptionIdSet",
    "PairingMap",
    "PairingPrediction",
    "ParseStatus",
    "PipelineMode",
    "Prediction",
    "ReferenceText",
    "Retriever",
    "RunConfig",
    "RunManifest",
    "TaskInstance",
    "TaskKind",
    "TemplateSet",
    "TextScorer",
    "Verdict",
    "aggregate_scores",
    "aggregate_verdicts",
    "build_pool",
    "cosine",
    "fused_score",
    "load_dataset",
    "load_pool",
    "parse_dataset",
    "parse_prediction",
    "parse_verdict",
    "render_comparison_report",
    "render_icl_block",
    "render_task_text",
    "run",
    "run_compare",
    "save_dataset",
    "save_pool",
    "score_instance",
    "select_top_k",
    "serialize_dataset",
    "subsample",
    "sweep",
    "tokenize",
]
