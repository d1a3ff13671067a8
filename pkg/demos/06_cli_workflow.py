"""The command-line workflow, driven from Python.

Each step is also available as ``rifa <command> ...`` in a shell.

Run: python3 demos/06_cli_workflow.py
"""
# %%
import json
import tempfile
from pathlib import Path

from rifa.cli import run

work = Path(tempfile.mkdtemp(prefix="rifa-demo-"))
steps = [
    ["generate", "--out", f"{work}/train.jsonl", "--seed", "3", "--scenes", "60"],
    ["generate", "--out", f"{work}/test.jsonl", "--seed", "1003", "--scenes", "20"],
    ["augment", "--data", f"{work}/train.jsonl", "--out", f"{work}/train_ext.jsonl", "--fraction", "1.0"],
    ["train", "--data", f"{work}/train_ext.jsonl", "--out", f"{work}/ckpt.json", "--seed", "3", "--epochs", "8"],
    ["train", "--data", f"{work}/train_ext.jsonl", "--out", f"{work}/ckpt_norp.json", "--seed", "3", "--epochs", "8", "--no-rp"],
    ["predict", "--data", f"{work}/test.jsonl", "--ckpt", f"{work}/ckpt.json", "--out", f"{work}/pred.jsonl", "--workers", "2"],
    ["eval", "--data", f"{work}/test.jsonl", "--pred", f"{work}/pred.jsonl", "--k", "20,50", "--out", f"{work}/metrics.json"],
    ["eval", "--data", f"{work}/test.jsonl", "--ckpt", f"{work}/ckpt_norp.json", "--k", "20,50", "--out", f"{work}/metrics_norp.json"],
    ["report", "--metrics", f"{work}/metrics.json", "--csv", f"{work}/per_relation.csv"],
]
for argv in steps:
    print("$ rifa", " ".join(argv))
    assert run(argv) == 0

# %% Artifacts carry their provenance
print(json.loads(Path(work, "metrics.json").read_text())["provenance"])
print("artifacts in", work, sorted(p.name for p in work.iterdir()))
