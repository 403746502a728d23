"""
The command-line pipeline
=========================

The same pipeline through the ``proxyhash`` command: generate a dataset,
train with evaluation, then compare the method variants. Every step writes
plain files (packed codes, checkpoints, CSV) into the chosen directory.
"""

# %%
import sys
import tempfile
from pathlib import Path

from proxyhash.cli import main

work = Path(tempfile.mkdtemp(prefix="proxyhash-demo-"))
fast = ["--epochs", "20", "--query", "100"]


def run(*argv):
    print("$ proxyhash", " ".join(argv))
    code = main(list(argv))
    if code:
        sys.exit(code)


run("gen-data", "--out", str(work / "data"), "--n", "600", "--seed", "3")
run("train", "--data", str(work / "data"), "--out", str(work / "model"), "--eval", *fast)
print((work / "model" / "eval_i2t" / "map.csv").read_text())

# %%
run("encode", "--model", str(work / "model"), "--data", str(work / "data"), "--modality", "img",
    "--subset", "query", "--out", str(work / "q.pxh"), "--labels-out", str(work / "q.u8"))
run("encode", "--model", str(work / "model"), "--data", str(work / "data"), "--modality", "txt",
    "--subset", "retrieval", "--out", str(work / "r.pxh"), "--labels-out", str(work / "r.u8"))
run("eval", "--query-codes", str(work / "q.pxh"), "--query-labels", str(work / "q.u8"),
    "--set-codes", str(work / "r.pxh"), "--set-labels", str(work / "r.u8"), "--task", "i2t",
    "--out-dir", str(work / "eval"))

# %%
run("ablate", "--data", str(work / "data"), "--out-dir", str(work / "ablation"), *fast)
print((work / "ablation" / "ablation.csv").read_text())
print("artifacts in", work)
