import json
import os

import pytest

from helpers import mcq_instance, scripted_gateway
from visreason.answers import ParseStatus
from visreason.backends import BackendRole
from visreason.backends.mock import ScriptedFailure
from visreason.describe import DescriptionEngine, PipelineMode
from visreason.pool import PoolFormatError, build_pool, load_pool, save_pool
from visreason.retrieval import Bm25Params, FusionConfig, select_top_k
from visreason.templates import TemplateSet

LLM = BackendRole.TEXT_LLM
CAP = BackendRole.CAPTIONER
TEMPLATES = TemplateSet.load()


def base_scripts(n, answer="Answer: A"):
    return {LLM: [answer] * n, CAP: [f"scene {i}" for i in range(n)]}


def build_from(instances, scripts, mode=PipelineMode.BASE, **kwargs):
    gateway, mock = scripted_gateway(scripts)
    engine = DescriptionEngine(gateway, TEMPLATES)
    result = build_pool(instances, engine, gateway, mode=mode, **kwargs)
    return result, mock


def test_build_base_mode_pseudo_labels():
    instances = [mcq_instance(i) for i in range(3)]
    result, mock = build_from(instances, base_scripts(3, "Answer: B"))
    assert result.failures == []
    assert len(result.pool.exemplars) == 3
    ex = result.pool.exemplars[0]
    assert ex.id == "q000"
    assert ex.answer_text == "Answer: B"
    assert ex.pseudo_status is ParseStatus.CLEAN
    assert ex.descriptions == ("scene 0",)
    assert len(ex.x_m) == 8
    assert ex.x_t is None
    assert "Which choice matches picture 0?" in ex.task_text
    # trace: per instance CAP + LLM, then one multimodal embed
    assert mock.calls_made == 9


def test_build_caid_mode_runs_refinement():
    instances = [mcq_instance(0)]
    scripts = {
        LLM: ["look closely", "Answer: A", "What else?", "Answer: C"],
        CAP: ["first", "second"],
    }
    result, mock = build_from(instances, scripts, mode=PipelineMode.CAID)
    ex = result.pool.exemplars[0]
    assert ex.answer_text == "Answer: C"
    assert ex.descriptions == ("second",)
    assert mock.role_sequence()[:-1] == [LLM, CAP, LLM, LLM, CAP, LLM]


def test_build_refuses_retrieval_modes():
    gateway, _ = scripted_gateway({})
    engine = DescriptionEngine(gateway, TEMPLATES)
    for mode in (PipelineMode.ICL, PipelineMode.FULL):
        with pytest.raises(ValueError, match="retriev"):
            build_pool([mcq_instance(0)], engine, gateway, mode=mode)


def test_gold_stripped_before_any_model_traffic():
    sentinel = "ZEBRA-SENTINEL-GOLD"
    inst = mcq_instance(0, gold=1)
    inst.meta["note"] = sentinel
    result, mock = build_from([inst], base_scripts(1))
    assert result.failures == []
    for call in mock.log:
        payload = json.dumps(call.payload)
        assert "gold" not in payload.lower()
    ex = result.pool.exemplars[0]
    assert "gold" not in json.dumps(
        {"task": ex.task_text, "answer": ex.answer_text, "desc": ex.descriptions}
    ).lower()


def test_failed_pseudo_label_still_pooled_with_empty_answer():
    scripts = {LLM: ["gibberish", "more gibberish"], CAP: ["scene"]}
    result, _ = build_from([mcq_instance(0)], scripts)
    assert result.failures == []
    ex = result.pool.exemplars[0]
    assert ex.pseudo_status is ParseStatus.FAILED
    assert ex.answer_text == ""


def test_backend_error_recorded_and_skipped():
    scripts = {
        LLM: ["Answer: A", "Answer: A"],
        CAP: [ScriptedFailure("camera broke", transient=False), "scene 1"],
    }
    instances = [mcq_instance(0), mcq_instance(1)]
    result, _ = build_from(instances, scripts)
    assert len(result.failures) == 1
    assert result.failures[0].instance_id == "q000"
    assert result.failures[0].stage == "describe"
    assert "camera broke" in result.failures[0].error
    assert [e.id for e in result.pool.exemplars] == ["q001"]


def test_embed_texts_flag_adds_text_vectors():
    result, _ = build_from([mcq_instance(0)], base_scripts(1), embed_texts=True)
    ex = result.pool.exemplars[0]
    assert ex.x_t is not None
    assert len(ex.x_t) == 8


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def built_pool(n=5, tmp=None):
    instances = [mcq_instance(i) for i in range(n)]
    result, _ = build_from(instances, base_scripts(n))
    return result.pool


def test_save_load_round_trip(tmp_path):
    pool = built_pool(5)
    save_pool(pool, str(tmp_path))
    assert (tmp_path / "exemplars.jsonl").exists()
    assert (tmp_path / "index_stats.json").exists()
    loaded = load_pool(str(tmp_path))
    assert len(loaded.exemplars) == 5
    for orig, back in zip(pool.exemplars, loaded.exemplars):
        assert back == orig
    assert loaded.index.stats() == pool.index.stats()


def test_reloaded_pool_reproduces_selections(tmp_path):
    pool = built_pool(6)
    save_pool(pool, str(tmp_path))
    loaded = load_pool(str(tmp_path))
    config = FusionConfig(alpha=0.7, k=3)
    target_vec = [0.5] * 8
    for target_id in ("q000", "q003", "none-such"):
        before = select_top_k(pool, target_id, "picture choice 2", target_vec, config)
        after = select_top_k(loaded, target_id, "picture choice 2", target_vec, config)
        assert [s.exemplar.id for s in before] == [s.exemplar.id for s in after]
        for x, y in zip(before, after):
            assert x.score == pytest.approx(y.score, abs=1e-12)


def test_header_validation(tmp_path):
    pool = built_pool(2)
    save_pool(pool, str(tmp_path))
    path = tmp_path / "exemplars.jsonl"
    lines = path.read_text().splitlines()

    header = json.loads(lines[0])
    header["format"] = "something-else"
    path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    with pytest.raises(PoolFormatError, match="format"):
        load_pool(str(tmp_path))

    header = json.loads(lines[0])
    header["version"] = 99
    path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    with pytest.raises(PoolFormatError, match="version"):
        load_pool(str(tmp_path))

    header = json.loads(lines[0])
    header["count"] = 17
    path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    with pytest.raises(PoolFormatError, match="17"):
        load_pool(str(tmp_path))


def test_missing_and_stale_stats(tmp_path):
    pool = built_pool(3)
    save_pool(pool, str(tmp_path))
    stats_path = tmp_path / "index_stats.json"

    stats = json.loads(stats_path.read_text())
    stats["n_docs"] = 42
    stats_path.write_text(json.dumps(stats))
    with pytest.raises(PoolFormatError, match="n_docs"):
        load_pool(str(tmp_path))

    stats = json.loads(stats_path.read_text())
    stats["n_docs"] = 3
    stats["avgdl"] = 999.0
    stats_path.write_text(json.dumps(stats))
    with pytest.raises(PoolFormatError, match="avgdl"):
        load_pool(str(tmp_path))

    os.remove(stats_path)
    with pytest.raises(PoolFormatError, match="index_stats"):
        load_pool(str(tmp_path))


def test_load_missing_directory(tmp_path):
    with pytest.raises(PoolFormatError, match="exemplars.jsonl"):
        load_pool(str(tmp_path / "nowhere"))


def test_bm25_params_survive_round_trip(tmp_path):
    instances = [mcq_instance(i) for i in range(2)]
    result, _ = build_from(instances, base_scripts(2))
    pool = result.pool
    custom = Bm25Params(k1=2.0, b=0.4)
    from visreason.retrieval import ExemplarPool

    pool = ExemplarPool.build(list(pool.exemplars), custom)
    save_pool(pool, str(tmp_path))
    loaded = load_pool(str(tmp_path))
    assert loaded.params == custom
