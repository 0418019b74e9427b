import json
import os

from helpers import mcq_instance
from visreason.cli import main
from visreason.datasets import save_dataset


def write_dataset(tmp_path, n=2, name="data.jsonl"):
    path = str(tmp_path / name)
    save_dataset([mcq_instance(i, gold=1) for i in range(n)], path)
    return path


def write_backends(tmp_path, scripts, name="backends.json"):
    """scripts: role name -> list of replies (also writes the script files)."""
    roles = {"multimodal_embedder": {"transport": "mock"}, "text_embedder": {"transport": "mock"}}
    for role, replies in scripts.items():
        script_name = f"{role}_script.json"
        (tmp_path / script_name).write_text(json.dumps(replies))
        roles[role] = {"transport": "mock", "script": script_name}
    path = tmp_path / name
    path.write_text(json.dumps({"embedding_dim": 8, "roles": roles}))
    return str(path)


def run_args(dataset, backends, out=None, mode="base", **extra):
    args = [
        "run",
        "--dataset", dataset,
        "--kind", "mcq",
        "--mode", mode,
        "--backends", backends,
        "--concurrency", "1",
    ]
    if out:
        args += ["--out", out]
    for flag, value in extra.items():
        args += [f"--{flag}", str(value)]
    return args


def test_run_writes_outputs_and_exits_zero(tmp_path, capsys):
    dataset = write_dataset(tmp_path, 2)
    backends = write_backends(
        tmp_path, {"text_llm": ["Answer: B", "Answer: B"], "captioner": ["s0", "s1"]}
    )
    out = str(tmp_path / "out")
    code = main(run_args(dataset, backends, out=out))
    assert code == 0
    stdout = capsys.readouterr().out
    assert "correct" in stdout
    assert "100.0" in stdout
    assert "instances: 2  failed: 0" in stdout
    assert f"outputs in {out}" in stdout
    for name in ("manifest.json", "traces.jsonl", "report.txt", "report.jsonl"):
        assert os.path.exists(os.path.join(out, name))


def test_run_exit_one_when_an_instance_fails(tmp_path, capsys):
    dataset = write_dataset(tmp_path, 2)
    # only one caption scripted: the second instance exhausts the captioner
    backends = write_backends(
        tmp_path, {"text_llm": ["Answer: B", "Answer: B"], "captioner": ["s0"]}
    )
    code = main(run_args(dataset, backends))
    assert code == 1
    assert "failed: 1" in capsys.readouterr().out


def test_run_missing_dataset_exits_two(tmp_path, capsys):
    backends = write_backends(tmp_path, {"text_llm": [], "captioner": []})
    code = main(run_args(str(tmp_path / "nope.jsonl"), backends))
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_run_malformed_dataset_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "x", "kind": "mcq"\n')
    backends = write_backends(tmp_path, {"text_llm": [], "captioner": []})
    code = main(run_args(str(path), backends))
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_build_pool_then_run_with_pool_dir(tmp_path, capsys):
    dataset = write_dataset(tmp_path, 3)
    backends = write_backends(
        tmp_path,
        {"text_llm": ["Answer: B"] * 3, "captioner": ["s0", "s1", "s2"]},
    )
    pool_dir = str(tmp_path / "pool")
    code = main(
        [
            "build-pool",
            "--dataset", dataset,
            "--kind", "mcq",
            "--mode", "base",
            "--backends", backends,
            "--out", pool_dir,
        ]
    )
    assert code == 0
    assert "pool of 3 exemplars" in capsys.readouterr().out
    assert os.path.exists(os.path.join(pool_dir, "exemplars.jsonl"))
    assert os.path.exists(os.path.join(pool_dir, "index_stats.json"))

    out = str(tmp_path / "out")
    code = main(
        run_args(dataset, backends, out=out, mode="icl", k=2)
        + ["--pool-dir", pool_dir]
    )
    assert code == 0
    with open(os.path.join(out, "traces.jsonl")) as fh:
        traces = [json.loads(line) for line in fh]
    assert all(len(t["icl_exemplar_ids"]) == 2 for t in traces)
    assert all(t["instance_id"] not in t["icl_exemplar_ids"] for t in traces)


def test_build_pool_partial_failure_exits_one(tmp_path, capsys):
    dataset = write_dataset(tmp_path, 2)
    backends = write_backends(
        tmp_path, {"text_llm": ["Answer: B", "Answer: B"], "captioner": ["s0"]}
    )
    pool_dir = str(tmp_path / "pool")
    code = main(
        [
            "build-pool",
            "--dataset", dataset,
            "--kind", "mcq",
            "--mode", "base",
            "--backends", backends,
            "--out", pool_dir,
        ]
    )
    assert code == 1
    captured = capsys.readouterr()
    assert "pool of 1 exemplars" in captured.out
    assert "failed: q001" in captured.err


def test_compare_subcommand(tmp_path, capsys):
    dataset = write_dataset(tmp_path, 2)
    (tmp_path / "a.jsonl").write_text(
        '{"id": "q000", "text": "description alpha"}\n{"id": "q001", "text": "second alpha"}\n'
    )
    (tmp_path / "b.jsonl").write_text(
        '{"id": "q000", "text": "description beta"}\n{"id": "q001", "text": "second beta"}\n'
    )
    backends = write_backends(tmp_path, {"judge": ["True", "False"]})
    out = str(tmp_path / "cmp")
    code = main(
        [
            "compare",
            "--dataset", dataset,
            "--texts-a", str(tmp_path / "a.jsonl"),
            "--texts-b", str(tmp_path / "b.jsonl"),
            "--protocol", "direct",
            "--backends", backends,
            "--out", out,
        ]
    )
    assert code == 0
    stdout = capsys.readouterr().out
    assert "pairs: 2" in stdout
    assert "50.0" in stdout  # one True, one False
    with open(os.path.join(out, "comparisons.jsonl")) as fh:
        records = [json.loads(line) for line in fh]
    assert [r["pair_id"] for r in records] == ["q000", "q001"]
    assert records[0]["steps"][0]["verdict"] == "b_better"
    assert os.path.exists(os.path.join(out, "report.txt"))


def test_report_subcommand_rerenders(tmp_path, capsys):
    dataset = write_dataset(tmp_path, 2)
    backends = write_backends(
        tmp_path, {"text_llm": ["Answer: B", "Answer: A"], "captioner": ["s0", "s1"]}
    )
    out = str(tmp_path / "out")
    assert main(run_args(dataset, backends, out=out)) == 0
    capsys.readouterr()
    code = main(["report", "--run", out])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "50.0" in stdout
    assert "instances: 2" in stdout


def test_report_missing_run_dir_exits_two(tmp_path, capsys):
    code = main(["report", "--run", str(tmp_path / "ghost")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_sweep_subcommand(tmp_path, capsys):
    dataset = write_dataset(tmp_path, 2)
    backends = write_backends(
        tmp_path, {"text_llm": ["Answer: B", "Answer: B"], "captioner": ["s0", "s1"]}
    )
    out = str(tmp_path / "out")
    argv = [
        "sweep",
        "--dataset", dataset,
        "--kind", "mcq",
        "--mode", "base",
        "--backends", backends,
        "--cache", str(tmp_path / "cache"),
        "--out", out,
        "--concurrency", "1",
        "--param", "alpha",
        "--values", "0.5,1.0",
    ]
    code = main(argv)
    assert code == 0
    stdout = capsys.readouterr().out
    assert "alpha=0.5: n=2 correct=100.0" in stdout
    assert "alpha=1: n=2 correct=100.0" in stdout
    assert os.path.exists(os.path.join(out, "sweep.json"))


def test_sweep_empty_values_exits_two(tmp_path, capsys):
    dataset = write_dataset(tmp_path, 1)
    backends = write_backends(tmp_path, {"text_llm": [], "captioner": []})
    argv = [
        "sweep",
        "--dataset", dataset,
        "--kind", "mcq",
        "--mode", "base",
        "--backends", backends,
        "--param", "alpha",
        "--values", ",",
    ]
    assert main(argv) == 2
    assert "at least one number" in capsys.readouterr().err
