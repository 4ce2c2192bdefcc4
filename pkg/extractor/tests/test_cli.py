"""Job-file CLI flow."""

import json
import subprocess
import sys

from trajextract.cli import main

from conftest import make_sentence
import numpy as np


def write_job_file(path, model_dir, n_items=5):
    rng = np.random.Generator(np.random.PCG64(3))
    job = {
        "model": model_dir,
        "prompt_template": "cot",
        "truncation": 50,
        "batch_size": 2,
        "items": [
            {
                "task": "demo",
                "instance": f"i{i}",
                "expert": "e0",
                "prompt": make_sentence(rng, 3),
                "trajectory": make_sentence(rng, 8),
                "answer_correct": True,
            }
            for i in range(n_items)
        ],
    }
    path.write_text(json.dumps(job, indent=2), encoding="utf-8")


def test_cli_end_to_end(tiny_model_dir, tmp_path, capsys):
    job_path = tmp_path / "job.json"
    write_job_file(job_path, tiny_model_dir)
    out = tmp_path / "out.jsonl"
    assert main([str(job_path), "--out", str(out)]) == 0
    assert "wrote 5 trajectories" in capsys.readouterr().out
    result = subprocess.run(
        [sys.executable, "-m", "proxyrank.cli", "validate", "trajectories", str(out)],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr


def test_cli_bad_job_exit_2(tmp_path):
    job_path = tmp_path / "job.json"
    job_path.write_text(json.dumps({"model": "x"}), encoding="utf-8")
    assert main([str(job_path), "--out", str(tmp_path / "o.jsonl")]) == 2


def test_cli_unknown_key_exit_2(tmp_path, tiny_model_dir):
    job_path = tmp_path / "job.json"
    write_job_file(job_path, tiny_model_dir, n_items=1)
    obj = json.loads(job_path.read_text(encoding="utf-8"))
    obj["modle"] = "typo"
    job_path.write_text(json.dumps(obj), encoding="utf-8")
    assert main([str(job_path), "--out", str(tmp_path / "o.jsonl")]) == 2
