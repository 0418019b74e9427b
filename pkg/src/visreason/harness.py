"""Run orchestration: datasets in, metric reports out.

A run loads a dataset, optionally subsamples it (seeded, file order
kept), builds or loads the exemplar pool when the mode retrieves, fans
instances out over a thread pool, scores what comes back, and writes a
manifest, per-instance traces, and metric reports. Instance failures are
isolated: one bad instance marks itself failed and the run continues.

Reports are written twice: a plain-text table for reading and a JSONL
file of sorted-key records for machines. The JSONL form is byte-stable:
rerunning an identical config over a warm cache reproduces it exactly.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .answers import PairingPrediction, Prediction
from .backends import (
    BackendProfile,
    BackendRole,
    DiskCache,
    Gateway,
    HttpTransport,
    MemoryCache,
    MockTransport,
    ProtocolError,
    RoleProfiles,
    canonical_json,
)
from .datasets import load_dataset
from .describe import DescriptionEngine, DescriptionTrace, PipelineMode
from .judging import Comparison, ComparisonReport, Judge, aggregate_verdicts
from .pool import PoolBuildFailure, build_pool, load_pool, save_pool
from .records import (
    InstanceScore,
    LabeledChoices,
    MetricReport,
    OptionId,
    OptionIdSet,
    ReferenceText,
    TaskInstance,
    TaskKind,
)
from .retrieval import Bm25Params, FusionConfig, Retriever, TextScorer
from .scoring import ScoringError, score_instance, split_reports
from .templates import TemplateSet

logger = logging.getLogger("visreason.harness")


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    kind: TaskKind
    mode: PipelineMode
    backends: str
    templates_dir: str | None = None
    cache_dir: str | None = None
    out_dir: str | None = None
    limit: int | None = None
    seed: int = 0
    concurrency: int = 4
    alpha: float = 1.0
    k: int = 4
    text_scorer: TextScorer = TextScorer.BM25
    pool_dataset: str | None = None
    pool_dir: str | None = None
    max_refinements: int = 1
    revise_with_llm: bool = False
    embed_texts: bool = False

    def fusion(self) -> FusionConfig:
        return FusionConfig(alpha=self.alpha, k=self.k, text_scorer=self.text_scorer)

    def digest(self) -> str:
        import hashlib

        obj = dataclasses.asdict(self)
        for key, value in obj.items():
            if isinstance(value, (TaskKind, PipelineMode, TextScorer)):
                obj[key] = value.value
        return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


@dataclass
class InstanceResult:
    instance_id: str
    status: str                       # "ok" | "failed"
    stage: str | None = None          # failure stage when failed
    error: str | None = None
    trace: DescriptionTrace | None = None
    score: InstanceScore | None = None


@dataclass
class RunManifest:
    config: RunConfig
    config_digest: str
    n_dataset: int
    n_selected: int
    results: list[InstanceResult]
    reports: list[MetricReport]
    live_calls: int
    cached_calls: int
    wall_time: float
    pool_failures: list[PoolBuildFailure] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.results if r.status != "ok")

    @property
    def ok(self) -> bool:
        return self.n_failed == 0


# ---------------------------------------------------------------------------
# Backend configuration files
# ---------------------------------------------------------------------------


def load_backends(path: str) -> tuple[RoleProfiles, dict[BackendRole, Any], MockTransport | None]:
    """Read a backend config JSON file.

    Shape:
      {"embedding_dim": 8,
       "roles": {
         "text_llm": {"transport": "mock", "model_name": "m",
                      "script": "replies.json"},
         "captioner": {"transport": "http", "model_name": "cap",
                       "endpoint": "http://...", "api_key_env": "CAP_KEY",
                       "timeout": 30, "max_retries": 2, "max_in_flight": 4}}}

    Mock scripts are JSON files holding a list of replies, resolved
    relative to the config file. All mock roles share one transport so
    the call log is globally ordered; all http roles share one session.
    """
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    roles_cfg = config.get("roles")
    if not isinstance(roles_cfg, dict) or not roles_cfg:
        raise ProtocolError(f"backend config {path!r} has no roles")

    mock: MockTransport | None = None
    http: HttpTransport | None = None
    profiles: dict[BackendRole, BackendProfile] = {}
    transports: dict[BackendRole, Any] = {}
    for role_name, entry in roles_cfg.items():
        try:
            role = BackendRole(role_name)
        except ValueError:
            raise ProtocolError(f"unknown backend role {role_name!r}") from None
        kind = entry.get("transport", "mock")
        profiles[role] = BackendProfile(
            role=role,
            model_name=entry.get("model_name", f"{role.value}-model"),
            endpoint=entry.get("endpoint", ""),
            api_key_env=entry.get("api_key_env", ""),
            timeout=float(entry.get("timeout", 30.0)),
            max_retries=int(entry.get("max_retries", 2)),
            retry_backoff=float(entry.get("retry_backoff", 0.25)),
            max_in_flight=int(entry.get("max_in_flight", 4)),
        )
        if kind == "mock":
            if mock is None:
                mock = MockTransport(embedding_dim=int(config.get("embedding_dim", 8)))
            if "script" in entry:
                script_path = os.path.join(base, entry["script"])
                with open(script_path, encoding="utf-8") as fh:
                    replies = json.load(fh)
                if not isinstance(replies, list):
                    raise ProtocolError(f"script {script_path!r} must hold a JSON list")
                mock.script(role, replies)
            transports[role] = mock
        elif kind == "http":
            if not entry.get("endpoint"):
                raise ProtocolError(f"http backend for {role_name!r} needs an endpoint")
            if http is None:
                http = HttpTransport()
            transports[role] = http
        else:
            raise ProtocolError(f"unknown transport {kind!r} for role {role_name!r}")
    return RoleProfiles(profiles), transports, mock


def build_gateway(config: RunConfig, cache=None) -> tuple[Gateway, MockTransport | None]:
    profiles, transports, mock = load_backends(config.backends)
    if cache is None:
        cache = DiskCache(config.cache_dir) if config.cache_dir else MemoryCache()
    return Gateway(profiles, transports, cache), mock


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def subsample(instances: Sequence[TaskInstance], limit: int | None, seed: int) -> list[TaskInstance]:
    """Seeded uniform subsample that preserves file order."""
    if limit is None or limit >= len(instances):
        return list(instances)
    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(instances)), limit))
    return [instances[i] for i in picked]


def _prepare_pool(
    config: RunConfig,
    engine: DescriptionEngine,
    gateway: Gateway,
) -> tuple[Retriever | None, list[PoolBuildFailure]]:
    if not config.mode.retrieves:
        return None, []
    if config.pool_dir and os.path.exists(os.path.join(config.pool_dir, "exemplars.jsonl")):
        pool = load_pool(config.pool_dir)
        failures: list[PoolBuildFailure] = []
    else:
        pool_path = config.pool_dataset or config.dataset
        pool_instances = load_dataset(pool_path, kind=config.kind)
        build_mode = PipelineMode.CAID if config.mode.refines else PipelineMode.BASE
        result = build_pool(
            pool_instances,
            engine,
            gateway,
            mode=build_mode,
            embed_texts=config.embed_texts or config.text_scorer is TextScorer.COSINE,
        )
        pool, failures = result.pool, result.failures
        if config.pool_dir:
            save_pool(pool, config.pool_dir)
    retriever = Retriever(pool, config.fusion(), gateway, engine.templates)
    return retriever, failures


def run(config: RunConfig, gateway: Gateway | None = None) -> RunManifest:
    started = time.monotonic()
    templates = TemplateSet.load(config.templates_dir)
    if gateway is None:
        gateway, _ = build_gateway(config)
    live_before, cached_before = gateway.counts()

    instances = load_dataset(config.dataset, kind=config.kind)
    missing_gold = [inst.id for inst in instances if inst.gold is None]
    if missing_gold:
        raise ScoringError(
            f"cannot score: instances without gold labels: {missing_gold[:5]}"
            + ("..." if len(missing_gold) > 5 else "")
        )
    if config.kind is TaskKind.WHOOPS and BackendRole.JUDGE not in gateway.profiles:
        raise ProtocolError("explanation tasks need a judge backend for scoring")
    selected = subsample(instances, config.limit, config.seed)

    engine = DescriptionEngine(
        gateway,
        templates,
        max_refinements=config.max_refinements,
        revise_with_llm=config.revise_with_llm,
    )
    retriever, pool_failures = _prepare_pool(config, engine, gateway)
    if retriever is not None:
        retriever.prepare(selected)
    judge = Judge(gateway, templates) if BackendRole.JUDGE in gateway.profiles else None

    def run_one(inst: TaskInstance) -> InstanceResult:
        stage = "describe"
        try:
            trace = engine.run(inst, config.mode, retriever)
            judge_accept = None
            if inst.kind is TaskKind.WHOOPS and not trace.final.failed:
                stage = "judge"
                assert judge is not None  # checked before the pool of workers
                gold = inst.gold
                assert isinstance(gold, ReferenceText)
                assert isinstance(trace.final.parsed, ReferenceText)
                judge_accept = judge.rate_explanation(
                    inst.task_text, gold.reference, trace.final.parsed.reference
                )
            stage = "score"
            score = score_instance(inst, trace.final, judge_accept)
            return InstanceResult(inst.id, "ok", trace=trace, score=score)
        except Exception as exc:  # isolation: one instance never sinks the run
            logger.exception("instance %s failed during %s", inst.id, stage)
            return InstanceResult(inst.id, "failed", stage=stage, error=str(exc))

    if config.concurrency <= 1:
        results = [run_one(inst) for inst in selected]
    else:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            results = list(pool.map(run_one, selected))
    results.sort(key=lambda r: r.instance_id)

    scores = [r.score for r in results if r.score is not None]
    reports = split_reports(scores) if scores else []
    live_after, cached_after = gateway.counts()
    manifest = RunManifest(
        config=config,
        config_digest=config.digest(),
        n_dataset=len(instances),
        n_selected=len(selected),
        results=results,
        reports=reports,
        live_calls=live_after - live_before,
        cached_calls=cached_after - cached_before,
        wall_time=time.monotonic() - started,
        pool_failures=pool_failures,
    )
    if config.out_dir:
        write_outputs(manifest, config.out_dir)
    return manifest


def sweep(config: RunConfig, param: str, values: Sequence[float]) -> list[tuple[float, RunManifest]]:
    """Re-run one config varying ``k`` or ``alpha``, sharing the cache."""
    if param not in ("k", "alpha"):
        raise ValueError(f"sweep parameter must be k or alpha, not {param!r}")
    cache = DiskCache(config.cache_dir) if config.cache_dir else MemoryCache()
    outcomes: list[tuple[float, RunManifest]] = []
    for value in values:
        typed: Any = int(value) if param == "k" else float(value)
        sub_out = os.path.join(config.out_dir, f"{param}_{typed}") if config.out_dir else None
        derived = dataclasses.replace(config, **{param: typed, "out_dir": sub_out})
        gateway, _ = build_gateway(derived, cache=cache)
        outcomes.append((value, run(derived, gateway=gateway)))
    if config.out_dir:
        _write_sweep_summary(config, param, outcomes)
    return outcomes


# ---------------------------------------------------------------------------
# Judged comparison over text files
# ---------------------------------------------------------------------------


def load_texts(path: str) -> dict[str, str]:
    """JSONL of {"id", "text"} records."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "id" not in obj or "text" not in obj:
                raise ValueError(f"{path}:{line_no}: records need id and text fields")
            out[str(obj["id"])] = str(obj["text"])
    return out


def run_compare(
    instances: Sequence[TaskInstance],
    texts_a: Mapping[str, str],
    texts_b: Mapping[str, str],
    judge: Judge,
    protocol: str = "coc",
) -> tuple[list[Comparison], ComparisonReport]:
    """Judge option B against option A for every instance present in both
    text files, in dataset order."""
    if protocol not in ("direct", "coc"):
        raise ValueError(f"protocol must be direct or coc, not {protocol!r}")
    comparisons = []
    for inst in instances:
        if inst.id not in texts_a or inst.id not in texts_b:
            logger.warning("skipping %s: missing from one of the text files", inst.id)
            continue
        ask = judge.direct_compare if protocol == "direct" else judge.coc_compare
        comparisons.append(ask(inst.id, inst.task_text, texts_a[inst.id], texts_b[inst.id]))
    return comparisons, aggregate_verdicts(comparisons)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def _parsed_json(prediction: Prediction) -> Any:
    parsed = prediction.parsed
    if parsed is None:
        return None
    if isinstance(parsed, OptionId):
        return {"option": parsed.option}
    if isinstance(parsed, OptionIdSet):
        return {"options": sorted(parsed.options)}
    if isinstance(parsed, LabeledChoices):
        return {"choices": dict(parsed.choices)}
    if isinstance(parsed, ReferenceText):
        return {"reference": parsed.reference}
    if isinstance(parsed, PairingPrediction):
        return {
            "caption_to_image": {str(k): v for k, v in sorted(parsed.caption_to_image.items())},
            "image_to_caption": {str(k): v for k, v in sorted(parsed.image_to_caption.items())},
        }
    return {"repr": repr(parsed)}


def _prediction_json(prediction: Prediction | None) -> Any:
    if prediction is None:
        return None
    return {
        "raw": prediction.raw_text,
        "status": prediction.status.value,
        "parsed": _parsed_json(prediction),
    }


def trace_to_json(trace: DescriptionTrace) -> dict[str, Any]:
    return {
        "instance_id": trace.instance_id,
        "mode": trace.mode.value,
        "caption_instruction": trace.caption_instruction,
        "initial_descriptions": list(trace.initial_descriptions),
        "intermediate": _prediction_json(trace.intermediate),
        "followup_query": trace.followup_query,
        "revised_prompt": trace.revised_prompt,
        "revised_descriptions": list(trace.revised_descriptions),
        "final": _prediction_json(trace.final),
        "icl_exemplar_ids": list(trace.icl_exemplar_ids),
        "icl_skipped_ids": list(trace.icl_skipped_ids),
        "notes": list(trace.notes),
    }


def report_to_json(report: MetricReport) -> dict[str, Any]:
    return {
        "kind": report.kind.value,
        "split": report.split,
        "n": report.n,
        "metrics": dict(report.metrics) if report.metrics is not None else None,
    }


def render_report_text(reports: Sequence[MetricReport]) -> str:
    if not reports:
        return "no scored instances\n"
    metric_names: list[str] = []
    for rep in reports:
        for name in rep.metrics or {}:
            if name not in metric_names:
                metric_names.append(name)
    headers = ["split", "n", *metric_names]
    rows = []
    for rep in reports:
        row = [rep.split or "all", str(rep.n)]
        for name in metric_names:
            value = (rep.metrics or {}).get(name)
            row.append(f"{value:.1f}" if value is not None else "-")
        rows.append(row)
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(r[i].ljust(widths[i]) for i in range(len(headers))) for r in rows]
    return "\n".join(lines) + "\n"


def reports_jsonl(reports: Sequence[MetricReport]) -> str:
    """Byte-stable machine-readable report records."""
    return "".join(
        json.dumps(report_to_json(rep), sort_keys=True, ensure_ascii=False) + "\n"
        for rep in reports
    )


def write_outputs(manifest: RunManifest, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    config_obj = dataclasses.asdict(manifest.config)
    for key, value in config_obj.items():
        if isinstance(value, (TaskKind, PipelineMode, TextScorer)):
            config_obj[key] = value.value
    summary = {
        "config": config_obj,
        "config_digest": manifest.config_digest,
        "n_dataset": manifest.n_dataset,
        "n_selected": manifest.n_selected,
        "n_failed": manifest.n_failed,
        "live_calls": manifest.live_calls,
        "cached_calls": manifest.cached_calls,
        "wall_time": manifest.wall_time,
        "pool_failures": [dataclasses.asdict(f) for f in manifest.pool_failures],
        "results": [
            {
                "instance_id": r.instance_id,
                "status": r.status,
                "stage": r.stage,
                "error": r.error,
                "components": dict(r.score.components) if r.score else None,
                "split": r.score.split if r.score else None,
            }
            for r in manifest.results
        ],
        "reports": [report_to_json(rep) for rep in manifest.reports],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, ensure_ascii=False)
    with open(os.path.join(out_dir, "traces.jsonl"), "w", encoding="utf-8") as fh:
        for r in manifest.results:
            if r.trace is not None:
                fh.write(json.dumps(trace_to_json(r.trace), ensure_ascii=False) + "\n")
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(render_report_text(manifest.reports))
    with open(os.path.join(out_dir, "report.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(reports_jsonl(manifest.reports))


def _write_sweep_summary(
    config: RunConfig, param: str, outcomes: Sequence[tuple[float, RunManifest]]
) -> None:
    os.makedirs(config.out_dir, exist_ok=True)
    rows = []
    for value, manifest in outcomes:
        overall = manifest.reports[0] if manifest.reports else None
        rows.append(
            {
                "value": value,
                "n": overall.n if overall else 0,
                "metrics": dict(overall.metrics) if overall and overall.metrics else None,
                "n_failed": manifest.n_failed,
            }
        )
    with open(os.path.join(config.out_dir, "sweep.json"), "w", encoding="utf-8") as fh:
        json.dump({"param": param, "rows": rows}, fh, indent=1, sort_keys=True)
    lines = [f"sweep over {param}"]
    for row in rows:
        metrics = row["metrics"] or {}
        rendered = "  ".join(f"{k}={v:.1f}" for k, v in metrics.items())
        lines.append(f"{param}={row['value']}: n={row['n']} {rendered}")
    with open(os.path.join(config.out_dir, "sweep.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
