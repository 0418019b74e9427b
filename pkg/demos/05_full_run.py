"""
An end-to-end benchmark run
===========================

Write a small dataset and a mock backend configuration to disk, run the
harness through the library API, inspect the files it produces, and
rerun over the warm cache to show the second pass makes zero live model
calls while reproducing the report byte for byte.
"""

import json
import os
import tempfile

from visreason import PipelineMode, RunConfig, TaskKind, run, save_dataset
from visreason import Candidate, ImageRef, OptionId, TaskInstance

workdir = tempfile.mkdtemp(prefix="visreason-demo-")
print("working in", workdir)

# ---------------------------------------------------------------------------
# 1. A five-instance dataset.
# ---------------------------------------------------------------------------

instances = [
    TaskInstance(
        id=f"demo-{i:03d}",
        kind=TaskKind.MCQ,
        task_text=f"Which option describes scene {i}?",
        images=(ImageRef("i0", f"https://example.org/{i}.png"),),
        candidates=(Candidate("c0", f"option one of {i}"), Candidate("c1", f"option two of {i}")),
        gold=OptionId("c1"),
    )
    for i in range(5)
]
dataset = os.path.join(workdir, "demo.jsonl")
save_dataset(instances, dataset)

# ---------------------------------------------------------------------------
# 2. A backend config: every role is a scripted mock, so the run is fully
#    deterministic and never touches a network.
# ---------------------------------------------------------------------------

with open(os.path.join(workdir, "llm.json"), "w") as fh:
    json.dump(["Answer: B", "Answer: B", "Answer: A", "Answer: B", "Answer: B"], fh)
with open(os.path.join(workdir, "cap.json"), "w") as fh:
    json.dump([f"scene {i} in plain light" for i in range(5)], fh)
backends = os.path.join(workdir, "backends.json")
with open(backends, "w") as fh:
    json.dump(
        {
            "embedding_dim": 8,
            "roles": {
                "text_llm": {"transport": "mock", "script": "llm.json"},
                "captioner": {"transport": "mock", "script": "cap.json"},
                "multimodal_embedder": {"transport": "mock"},
            },
        },
        fh,
        indent=1,
    )

# ---------------------------------------------------------------------------
# 3. Run. concurrency=1 keeps scripted replies aligned with instances.
# ---------------------------------------------------------------------------

config = RunConfig(
    dataset=dataset,
    kind=TaskKind.MCQ,
    mode=PipelineMode.BASE,
    backends=backends,
    cache_dir=os.path.join(workdir, "cache"),
    out_dir=os.path.join(workdir, "out"),
    concurrency=1,
)
manifest = run(config)
print(f"\nscored {manifest.n_selected} instances, {manifest.n_failed} failures")
print(f"live calls: {manifest.live_calls}, cached: {manifest.cached_calls}")
for report in manifest.reports:
    print(f"metrics: {report.metrics} over n={report.n}")

print("\nfiles written:")
for name in sorted(os.listdir(config.out_dir)):
    print(" ", name)

with open(os.path.join(config.out_dir, "report.txt")) as fh:
    print("\nreport.txt:")
    print(fh.read())

# ---------------------------------------------------------------------------
# 4. Rerun over the warm cache: zero live calls, identical report bytes.
#    The scripts were consumed by the first run, which proves the second
#    run never reached the mock transport at all.
# ---------------------------------------------------------------------------

second = run(RunConfig(**{**config.__dict__, "out_dir": os.path.join(workdir, "out2")}))
print(f"rerun live calls: {second.live_calls} (cached: {second.cached_calls})")

with open(os.path.join(workdir, "out", "report.jsonl"), "rb") as fh:
    first_bytes = fh.read()
with open(os.path.join(workdir, "out2", "report.jsonl"), "rb") as fh:
    second_bytes = fh.read()
print("report.jsonl byte-identical across reruns:", first_bytes == second_bytes)
