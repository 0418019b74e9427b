"""Build and persist pseudo-labeled exemplar pools.

A pool is built by running the description loop (without retrieval) over
gold-stripped instances: whatever the pipeline answers becomes the
exemplar's pseudo label. Gold labels are stripped before any prompt is
built, so they cannot appear in model traffic; the stored exemplars are
gold-free too.

On disk a pool is a directory:

  exemplars.jsonl   header line (format, version, bm25 params, dims, count)
                    followed by one exemplar per line
  index_stats.json  document count, average length, per-term document
                    frequency of the lexical index

Loading rebuilds the lexical index from the stored texts and verifies it
against the stats file, so a reloaded pool reproduces selections exactly.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Sequence

from .answers import ParseStatus, answer_display
from .backends import BackendError, Gateway
from .datasets import render_task_text
from .describe import DescriptionEngine, PipelineMode
from .records import TaskInstance, TaskKind
from .retrieval import Bm25Params, Exemplar, ExemplarPool

logger = logging.getLogger("visreason.pool")

POOL_FORMAT = "visreason-pool"
POOL_VERSION = 1


class PoolFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PoolBuildFailure:
    instance_id: str
    stage: str
    error: str


@dataclass
class PoolBuildResult:
    pool: ExemplarPool
    failures: list[PoolBuildFailure]


def build_pool(
    instances: Sequence[TaskInstance],
    engine: DescriptionEngine,
    gateway: Gateway,
    bm25_params: Bm25Params = Bm25Params(),
    mode: PipelineMode = PipelineMode.CAID,
    embed_texts: bool = False,
) -> PoolBuildResult:
    """Pseudo-label every instance and assemble the pool.

    Individual instance failures are recorded and skipped, never fatal;
    an instance whose final answer cannot be parsed still joins the pool
    (rendering skips it later) so ranks stay comparable across runs.
    """
    if mode.retrieves:
        raise ValueError("pool building cannot itself use retrieval")
    exemplars: list[Exemplar] = []
    failures: list[PoolBuildFailure] = []
    for inst in instances:
        stripped = inst.without_gold()
        try:
            trace = engine.run(stripped, mode)
        except BackendError as exc:
            failures.append(PoolBuildFailure(inst.id, "describe", str(exc)))
            logger.warning("pool build: instance %s failed in describe: %s", inst.id, exc)
            continue
        rendered = render_task_text(stripped)
        try:
            x_m = gateway.embed_multimodal(rendered, list(stripped.images))
            x_t = gateway.embed_text(rendered) if embed_texts else None
        except BackendError as exc:
            failures.append(PoolBuildFailure(inst.id, "embed", str(exc)))
            logger.warning("pool build: instance %s failed in embed: %s", inst.id, exc)
            continue
        if trace.final.status is ParseStatus.FAILED:
            answer_text = ""
            logger.warning("pool build: instance %s pseudo label failed to parse", inst.id)
        else:
            answer_text = answer_display(trace.final, stripped)
        exemplars.append(
            Exemplar(
                id=stripped.id,
                kind=stripped.kind,
                task_text=rendered,
                descriptions=trace.descriptions,
                answer_text=answer_text,
                pseudo_status=trace.final.status,
                x_m=tuple(float(v) for v in x_m),
                x_t=tuple(float(v) for v in x_t) if x_t is not None else None,
            )
        )
    return PoolBuildResult(ExemplarPool.build(exemplars, bm25_params), failures)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_pool(pool: ExemplarPool, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    header = {
        "format": POOL_FORMAT,
        "version": POOL_VERSION,
        "bm25": {"k1": pool.params.k1, "b": pool.params.b},
        "embedding_dim": len(pool.exemplars[0].x_m) if pool.exemplars else 0,
        "count": len(pool.exemplars),
    }
    with open(os.path.join(directory, "exemplars.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for e in pool.exemplars:
            fh.write(json.dumps(_exemplar_to_json(e), ensure_ascii=False) + "\n")
    stats = {"format": POOL_FORMAT, "version": POOL_VERSION, **pool.index.stats()}
    with open(os.path.join(directory, "index_stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, ensure_ascii=False, indent=1)


def _exemplar_to_json(e: Exemplar) -> dict:
    obj = {
        "id": e.id,
        "kind": e.kind.value,
        "task_text": e.task_text,
        "descriptions": list(e.descriptions),
        "answer_text": e.answer_text,
        "pseudo_status": e.pseudo_status.value,
        "x_m": list(e.x_m),
    }
    if e.x_t is not None:
        obj["x_t"] = list(e.x_t)
    return obj


def load_pool(directory: str) -> ExemplarPool:
    path = os.path.join(directory, "exemplars.jsonl")
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise PoolFormatError(f"no pool at {directory!r} (missing exemplars.jsonl)") from None
    with fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise PoolFormatError("pool file is empty")
    header = json.loads(lines[0])
    if header.get("format") != POOL_FORMAT:
        raise PoolFormatError(f"not a pool file (format {header.get('format')!r})")
    if header.get("version") != POOL_VERSION:
        raise PoolFormatError(
            f"pool version {header.get('version')!r} is not supported (want {POOL_VERSION})"
        )
    exemplars = []
    for line in lines[1:]:
        obj = json.loads(line)
        exemplars.append(
            Exemplar(
                id=obj["id"],
                kind=TaskKind(obj["kind"]),
                task_text=obj["task_text"],
                descriptions=tuple(obj["descriptions"]),
                answer_text=obj["answer_text"],
                pseudo_status=ParseStatus(obj["pseudo_status"]),
                x_m=tuple(obj["x_m"]),
                x_t=tuple(obj["x_t"]) if "x_t" in obj else None,
            )
        )
    if len(exemplars) != header.get("count"):
        raise PoolFormatError(
            f"pool claims {header.get('count')} exemplars but holds {len(exemplars)}"
        )
    bm25 = Bm25Params(**header.get("bm25", {}))
    pool = ExemplarPool.build(exemplars, bm25)
    _verify_stats(pool, directory)
    return pool


def _verify_stats(pool: ExemplarPool, directory: str) -> None:
    path = os.path.join(directory, "index_stats.json")
    try:
        with open(path, encoding="utf-8") as fh:
            stored = json.load(fh)
    except FileNotFoundError:
        raise PoolFormatError(f"pool at {directory!r} is missing index_stats.json") from None
    rebuilt = pool.index.stats()
    if stored.get("n_docs") != rebuilt["n_docs"]:
        raise PoolFormatError(
            f"index mismatch: stored n_docs {stored.get('n_docs')} vs rebuilt {rebuilt['n_docs']}"
        )
    if abs(stored.get("avgdl", -1.0) - rebuilt["avgdl"]) > 1e-9:
        raise PoolFormatError(
            f"index mismatch: stored avgdl {stored.get('avgdl')} vs rebuilt {rebuilt['avgdl']}"
        )
    if stored.get("df") != rebuilt["df"]:
        raise PoolFormatError("index mismatch: per-term document frequencies differ")
