"""CLI tests on small synthetic datasets: flows, exit codes, determinism."""

import json

import pytest

from proxyrank.cli import main
from proxyrank.synthetic import (
    build_population,
    write_demo_datadecide,
    write_demo_series,
    write_population,
)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    population = build_population(
        n_subjects=6, tasks=("t1", "t2", "t3"), n_instances=2, window=60, generic_tokens=40, seed=3
    )
    manifests = write_population(population, root)
    return root, [str(p) for p in manifests]


@pytest.fixture(scope="module")
def features_file(dataset, tmp_path_factory):
    root, manifests = dataset
    out = tmp_path_factory.mktemp("metrics") / "features.csv"
    assert main(["metrics", *manifests, "--out", str(out)]) == 0
    return out


class TestMetrics:
    def test_row_count(self, dataset, tmp_path):
        root, manifests = dataset
        out = tmp_path / "features.csv"
        assert main(["metrics", manifests[0], manifests[1], "--out", str(out)]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        # 2 subjects x 3 tasks x 80 entries + header
        assert len(lines) == 2 * 3 * 80 + 1

    def test_rerun_byte_identical(self, dataset, tmp_path):
        root, manifests = dataset
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["metrics", *manifests, "--out", str(a)]) == 0
        assert main(["metrics", *manifests, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_empty_manifest_exit_2(self, tmp_path):
        manifest = tmp_path / "empty.json"
        manifest.write_text(json.dumps({"subject": "m", "kind": "model", "files": {}}), encoding="utf-8")
        out = tmp_path / "out.csv"
        assert main(["metrics", str(manifest), "--out", str(out)]) == 2


class TestCv:
    def _config(self, tmp_path, **cv):
        config = {"cv": {"k": 1, "fraction": 0.8, "seeds": [0, 1], "ranker": "univariate", **cv}}
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        return str(path)

    def test_cv_flow_and_determinism(self, dataset, features_file, tmp_path):
        root, _ = dataset
        config = self._config(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        scores = str(root / "scores.csv")
        assert main(["cv", "--features", str(features_file), "--scores", scores,
                     "--config", config, "--out", str(a)]) == 0
        assert main(["cv", "--features", str(features_file), "--scores", scores,
                     "--config", config, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "fold,seed,task,rho"
        # 3 folds x 2 seeds x 1 held-out task data rows
        assert sum(1 for line in lines[1:] if not line.startswith("#")) == 6

    def test_k_too_large_exit_2(self, dataset, features_file, tmp_path):
        root, _ = dataset
        config = self._config(tmp_path, k=3)
        out = tmp_path / "out.csv"
        code = main(["cv", "--features", str(features_file), "--scores", str(root / "scores.csv"),
                     "--config", config, "--out", str(out)])
        assert code == 2

    def test_unknown_config_key_exit_2(self, dataset, features_file, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"cv": {"folds": 2}}), encoding="utf-8")
        code = main(["cv", "--features", str(features_file), "--scores", str(dataset[0] / "scores.csv"),
                     "--config", str(path), "--out", str(tmp_path / "out.csv")])
        assert code == 2


class TestOracle:
    def test_oracle_flow(self, dataset, features_file, tmp_path):
        root, _ = dataset
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"cv": {"ranker": "univariate"}}), encoding="utf-8")
        out = tmp_path / "oracle.csv"
        assert main(["oracle", "--features", str(features_file), "--scores", str(root / "scores.csv"),
                     "--config", str(config), "--out", str(out)]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "task,rho"
        assert len([line for line in lines if not line.startswith("#")]) == 4  # header + 3 tasks
        assert any("in-sample" in line for line in lines)


class TestFit:
    def test_fit_flow(self, tmp_path):
        series = tmp_path / "series.csv"
        write_demo_series(series)
        out = tmp_path / "fit.csv"
        assert main(["fit", "--series", str(series), "--out", str(out)]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 4  # header + proxy/ce_loss/compute rows
        assert lines[1].startswith("proxy,")
        assert "uniform/top_5_accuracy" in lines[1]

    def test_planted_proxy_wins(self, tmp_path):
        series = tmp_path / "series.csv"
        write_demo_series(series)
        out = tmp_path / "fit.csv"
        main(["fit", "--series", str(series), "--out", str(out)])
        rows = {}
        for line in out.read_text(encoding="utf-8").splitlines()[1:]:
            fields = line.split(",")
            rows[fields[0]] = float(fields[6])  # rmse_holdout
        assert rows["proxy"] == min(rows.values())

    def test_too_few_checkpoints_exit_2(self, tmp_path):
        series = tmp_path / "series.csv"
        series.write_text(
            "step,accuracy,ce_loss,uniform/ce_loss\n"
            "1,0.1,3.0,0.5\n2,0.2,2.5,0.6\n3,0.3,2.2,0.7\n4,0.4,2.0,0.8\n",
            encoding="utf-8",
        )
        assert main(["fit", "--series", str(series), "--out", str(tmp_path / "o.csv")]) == 2

    def test_determinism(self, tmp_path):
        series = tmp_path / "series.csv"
        write_demo_series(series)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["fit", "--series", str(series), "--out", str(a)])
        main(["fit", "--series", str(series), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestDataDecide:
    def _inputs(self, tmp_path):
        proxy = tmp_path / "proxy.csv"
        targets = tmp_path / "targets.csv"
        compute = tmp_path / "compute.csv"
        write_demo_datadecide(proxy, targets, compute)
        return proxy, targets, compute

    def test_flow_and_row_count(self, tmp_path):
        proxy, targets, compute = self._inputs(tmp_path)
        out = tmp_path / "curve.csv"
        assert main(["datadecide", "--proxy", str(proxy), "--targets", str(targets),
                     "--compute", str(compute), "--out", str(out)]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "scale,compute_fraction,decision_accuracy"
        assert len(lines) == 6  # header + 5 scales

    def test_proxy_equals_target_gives_ones(self, tmp_path):
        proxy, targets, compute = self._inputs(tmp_path)
        target_scores = dict(
            line.split(",") for line in targets.read_text(encoding="utf-8").splitlines()[1:]
        )
        rows = ["corpus,scale,value"]
        for scale in ("4M", "10M", "30M", "60M", "90M"):
            rows += [f"{c},{scale},{v}" for c, v in target_scores.items()]
        proxy.write_text("\n".join(rows) + "\n", encoding="utf-8")
        out = tmp_path / "curve.csv"
        assert main(["datadecide", "--proxy", str(proxy), "--targets", str(targets),
                     "--compute", str(compute), "--out", str(out)]) == 0
        for line in out.read_text(encoding="utf-8").splitlines()[1:]:
            assert line.endswith(",1")

    def test_missing_pair_exit_2(self, tmp_path):
        proxy, targets, compute = self._inputs(tmp_path)
        lines = proxy.read_text(encoding="utf-8").splitlines()
        proxy.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        code = main(["datadecide", "--proxy", str(proxy), "--targets", str(targets),
                     "--compute", str(compute), "--out", str(tmp_path / "o.csv")])
        assert code == 2

    def test_determinism(self, tmp_path):
        proxy, targets, compute = self._inputs(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["datadecide", "--proxy", str(proxy), "--targets", str(targets),
              "--compute", str(compute), "--out", str(a)])
        main(["datadecide", "--proxy", str(proxy), "--targets", str(targets),
              "--compute", str(compute), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestValidate:
    def test_valid_trajectories(self, dataset, capsys):
        root, manifests = dataset
        manifest = json.loads((root / "model_00.json").read_text(encoding="utf-8"))
        path = root / manifest["files"]["t1"]
        assert main(["validate", "trajectories", str(path)]) == 0
        assert "OK" in capsys.readouterr().out

    def test_invalid_trajectories_exit_2(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"task": "t"}\n', encoding="utf-8")
        assert main(["validate", "trajectories", str(path)]) == 2

    def test_permissive_reports_and_fails(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        good = (
            '{"task":"t","instance":"i","expert":"e","answer_correct":null,'
            '"tokens":[{"id":1,"lp":-1.0,"rank":2,"maxp":0.5,"ent":0.5}]}'
        )
        path.write_text(good + "\nnot json\n", encoding="utf-8")
        assert main(["validate", "trajectories", str(path), "--permissive"]) == 2
        captured = capsys.readouterr()
        assert "line 2" in captured.err

    def test_scores_and_manifest(self, dataset):
        root, manifests = dataset
        assert main(["validate", "scores", str(root / "scores.csv")]) == 0
        assert main(["validate", "manifest", manifests[0]]) == 0

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["validate", "scores", str(tmp_path / "nope.csv")]) == 2
