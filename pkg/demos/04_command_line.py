"""The whole pipeline through the ``scaffdiff`` command, in a temp directory.

Equivalent shell session:

    scaffdiff pretrain-iprior --data data.jsonl --out ip --config tiny.json
    scaffdiff train --data data.jsonl --iprior ip --out model --config tiny.json
    scaffdiff sample --model model --iprior ip --data data.jsonl --out gen.jsonl --config tiny.json
    scaffdiff eval --data data.jsonl --generated gen.jsonl --a3m-dir a3m --out report.json
    scaffdiff export-poses --generated gen.jsonl --out-dir poses

Run with ``python3 demos/04_command_line.py``.
"""

import json
import tempfile
from pathlib import Path

from scaffdiff.cli import main
from scaffdiff.domain import save_dataset
from scaffdiff.synthetic import make_dataset

work = Path(tempfile.mkdtemp(prefix="scaffdiff-demo-"))
tuples, a3ms = make_dataset(3, seed=7, n_pocket=20)
save_dataset(work / "data.jsonl", tuples)
(work / "a3m").mkdir()
for pid, text in a3ms.items():
    (work / "a3m" / f"{pid}.a3m").write_text(text)

# Flags override the file; unknown keys are rejected.
tiny = {"T": 20, "hidden_dim": 16, "message_dim": 16, "n_layers": 2, "ipnet_hidden_dim": 16,
        "ipnet_layers": 1, "ipnet_attention_dim": 8, "pretrain_steps": 20, "steps": 40,
        "batch_size": 3, "n_samples": 4}
(work / "tiny.json").write_text(json.dumps(tiny))


def run(*argv):
    code = main([str(a) for a in argv])
    print(f"$ scaffdiff {' '.join(str(a) for a in argv[:2])} ... -> exit {code}")
    return code


run("schedule", "dump", "--T", 5, "--out", work / "schedule.jsonl")
run("conserve", "--a3m", work / "a3m" / f"{tuples[0].id}.a3m", "--out", work / "cons.txt")
run("pretrain-iprior", "--data", work / "data.jsonl", "--out", work / "ip", "--config", work / "tiny.json")
run("train", "--data", work / "data.jsonl", "--iprior", work / "ip", "--out", work / "model",
    "--config", work / "tiny.json")
run("sample", "--model", work / "model", "--iprior", work / "ip", "--data", work / "data.jsonl",
    "--out", work / "gen.jsonl", "--config", work / "tiny.json")
run("eval", "--data", work / "data.jsonl", "--generated", work / "gen.jsonl", "--a3m-dir", work / "a3m",
    "--out", work / "report.json")
run("export-poses", "--generated", work / "gen.jsonl", "--out-dir", work / "poses")

report = json.loads((work / "report.json").read_text())
print({k: round(v, 3) for k, v in report.items() if k != "per_pocket"})
print("poses:", sorted(p.name for p in (work / "poses").iterdir())[:4], "...")

# A bad config key is a usage error (exit 2) that names the key.
(work / "bad.json").write_text(json.dumps({"learning_rate": 0.1}))
run("schedule", "dump", "--config", work / "bad.json")
print("outputs in", work)
