"""Command-line interface.

Subcommands:
  run         evaluate a dataset in one pipeline mode and report metrics
  sweep       repeat a run over a list of k or alpha values
  compare     judge two text files against each other per instance
  build-pool  pseudo-label a dataset into a reusable exemplar pool
  report      re-render the report of a finished run directory
"""

from __future__ import annotations

import argparse
import json
import sys

from .backends import BackendError
from .datasets import DatasetError, load_dataset
from .describe import PipelineMode
from .harness import (
    RunConfig,
    build_gateway,
    load_texts,
    render_report_text,
    run,
    run_compare,
    subsample,
    sweep,
)
from .judging import Judge, render_comparison_report
from .pool import PoolFormatError, build_pool, save_pool
from .records import MetricReport, TaskKind
from .retrieval import TextScorer
from .scoring import ScoringError
from .templates import TemplateError, TemplateSet

KIND_CHOICES = [k.value for k in TaskKind]
MODE_CHOICES = [m.value for m in PipelineMode]


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backends", required=True, help="backend config JSON file")
    p.add_argument("--templates", default=None, help="template directory overlaying the defaults")
    p.add_argument("--cache", default=None, help="response cache directory")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="JSONL dataset file")
    p.add_argument("--kind", required=True, choices=KIND_CHOICES)
    p.add_argument("--mode", required=True, choices=MODE_CHOICES)
    _add_backend_flags(p)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--limit", type=int, default=None, help="subsample size (seeded)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--k", type=int, default=4, help="exemplars per in-context block")
    p.add_argument("--alpha", type=float, default=1.0, help="multimodal weight in fused score")
    p.add_argument("--text-scorer", choices=[s.value for s in TextScorer], default="bm25")
    p.add_argument("--pool-dataset", default=None, help="dataset to build the pool from")
    p.add_argument("--pool-dir", default=None, help="pool directory to load, or to save a fresh build")
    p.add_argument("--max-refinements", type=int, default=1)
    p.add_argument("--revise-with-llm", action="store_true")
    p.add_argument("--embed-texts", action="store_true", help="store text embeddings in built pools")


def _config_from(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        dataset=args.dataset,
        kind=TaskKind(args.kind),
        mode=PipelineMode(args.mode),
        backends=args.backends,
        templates_dir=args.templates,
        cache_dir=args.cache,
        out_dir=args.out,
        limit=args.limit,
        seed=args.seed,
        concurrency=args.concurrency,
        alpha=args.alpha,
        k=args.k,
        text_scorer=TextScorer(args.text_scorer),
        pool_dataset=args.pool_dataset,
        pool_dir=args.pool_dir,
        max_refinements=args.max_refinements,
        revise_with_llm=args.revise_with_llm,
        embed_texts=args.embed_texts,
    )


def cmd_run(args: argparse.Namespace) -> int:
    manifest = run(_config_from(args))
    sys.stdout.write(render_report_text(manifest.reports))
    print(
        f"instances: {manifest.n_selected}  failed: {manifest.n_failed}  "
        f"live calls: {manifest.live_calls}  cached: {manifest.cached_calls}"
    )
    if args.out:
        print(f"outputs in {args.out}")
    return 0 if manifest.ok else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("--values must list at least one number")
    outcomes = sweep(_config_from(args), args.param, values)
    exit_code = 0
    for value, manifest in outcomes:
        overall = manifest.reports[0] if manifest.reports else None
        metrics = overall.metrics if overall and overall.metrics else {}
        rendered = "  ".join(f"{k}={v:.1f}" for k, v in metrics.items())
        print(f"{args.param}={value:g}: n={overall.n if overall else 0} {rendered}")
        if not manifest.ok:
            exit_code = 1
    return exit_code


def cmd_compare(args: argparse.Namespace) -> int:
    instances = load_dataset(args.dataset)
    texts_a = load_texts(args.texts_a)
    texts_b = load_texts(args.texts_b)
    config = RunConfig(
        dataset=args.dataset,
        kind=instances[0].kind if instances else TaskKind.MCQ,
        mode=PipelineMode.BASE,
        backends=args.backends,
        templates_dir=args.templates,
        cache_dir=args.cache,
    )
    gateway, _ = build_gateway(config)
    judge = Judge(gateway, TemplateSet.load(args.templates))
    comparisons, report = run_compare(instances, texts_a, texts_b, judge, args.protocol)
    sys.stdout.write(render_comparison_report(report))
    if args.out:
        import os

        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "comparisons.jsonl"), "w", encoding="utf-8") as fh:
            for comp in comparisons:
                fh.write(
                    json.dumps(
                        {
                            "pair_id": comp.pair_id,
                            "steps": [
                                {
                                    "step": s.step,
                                    "verdict": s.verdict.value,
                                    "raw": s.raw,
                                    "reprompted": s.reprompted,
                                    "error": s.error,
                                }
                                for s in comp.steps
                            ],
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(render_comparison_report(report))
        print(f"outputs in {args.out}")
    return 0


def cmd_build_pool(args: argparse.Namespace) -> int:
    from .describe import DescriptionEngine

    config = RunConfig(
        dataset=args.dataset,
        kind=TaskKind(args.kind),
        mode=PipelineMode(args.mode),
        backends=args.backends,
        templates_dir=args.templates,
        cache_dir=args.cache,
        limit=args.limit,
        seed=args.seed,
        embed_texts=args.embed_texts,
    )
    instances = subsample(load_dataset(args.dataset, kind=config.kind), args.limit, args.seed)
    gateway, _ = build_gateway(config)
    engine = DescriptionEngine(gateway, TemplateSet.load(args.templates))
    result = build_pool(
        instances, engine, gateway, mode=config.mode, embed_texts=args.embed_texts
    )
    save_pool(result.pool, args.out)
    print(f"pool of {len(result.pool)} exemplars written to {args.out}")
    for failure in result.failures:
        print(f"failed: {failure.instance_id} ({failure.stage}): {failure.error}", file=sys.stderr)
    return 0 if not result.failures else 1


def cmd_report(args: argparse.Namespace) -> int:
    import os

    path = os.path.join(args.run, "manifest.json")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    reports = [
        MetricReport(
            kind=TaskKind(rep["kind"]),
            n=rep["n"],
            metrics=rep["metrics"],
            split=rep["split"],
        )
        for rep in manifest.get("reports", [])
    ]
    sys.stdout.write(render_report_text(reports))
    print(
        f"instances: {manifest.get('n_selected')}  failed: {manifest.get('n_failed')}  "
        f"live calls: {manifest.get('live_calls')}  cached: {manifest.get('cached_calls')}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="visreason",
        description="Visual reasoning benchmark harness over pluggable model backends.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evaluate a dataset in one pipeline mode")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="repeat a run over several k or alpha values")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=["k", "alpha"])
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="judge two per-instance text files against each other")
    p_cmp.add_argument("--dataset", required=True)
    p_cmp.add_argument("--texts-a", required=True, help="JSONL of {id, text}: option A")
    p_cmp.add_argument("--texts-b", required=True, help="JSONL of {id, text}: option B")
    p_cmp.add_argument("--protocol", choices=["direct", "coc"], default="coc")
    _add_backend_flags(p_cmp)
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_pool = sub.add_parser("build-pool", help="pseudo-label a dataset into an exemplar pool")
    p_pool.add_argument("--dataset", required=True)
    p_pool.add_argument("--kind", required=True, choices=KIND_CHOICES)
    p_pool.add_argument("--mode", choices=["base", "caid"], default="caid")
    _add_backend_flags(p_pool)
    p_pool.add_argument("--out", required=True, help="pool directory to write")
    p_pool.add_argument("--limit", type=int, default=None)
    p_pool.add_argument("--seed", type=int, default=0)
    p_pool.add_argument("--embed-texts", action="store_true")
    p_pool.set_defaults(func=cmd_build_pool)

    p_rep = sub.add_parser("report", help="re-render the report of a run directory")
    p_rep.add_argument("--run", required=True, help="run output directory")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        DatasetError,
        TemplateError,
        PoolFormatError,
        ScoringError,
        BackendError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
