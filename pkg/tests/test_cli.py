from __future__ import annotations

import json

import numpy as np
import pytest

from embedscope.cli import main


def write_ndjson(path, n, dim, labels=None, offset=0.0):
    rng = np.random.default_rng(71)
    with open(path, "w") as fh:
        for i in range(n):
            obj = {
                "id": f"c{i:04d}",
                "vector": [round(float(v + offset), 4) for v in rng.normal(0, 1, dim)],
                "payload": f"row {i}",
            }
            if labels is not None:
                obj["label"] = labels[i % len(labels)]
            fh.write(json.dumps(obj) + "\n")
    return str(path)


@pytest.fixture
def data_dir(tmp_path):
    return str(tmp_path / "store")


class TestIngestCommand:
    def test_ingest_prints_count(self, tmp_path, data_dir, capsys):
        path = write_ndjson(tmp_path / "in.ndjson", 12, 5, labels=["x", "y"])
        code = main(["ingest", "proj", path, "--data-dir", data_dir])
        out = capsys.readouterr()
        assert code == 0
        assert out.out.strip() == "ingested 12"

    def test_missing_file_usage_error(self, data_dir, capsys):
        code = main(["ingest", "proj", "/nonexistent.ndjson", "--data-dir", data_dir])
        assert code == 1

    def test_unknown_subcommand(self, capsys):
        code = main(["frobnicate"])
        err = capsys.readouterr().err
        assert code == 1
        assert "No such command" in err


class TestFitCommand:
    def test_repeat_fit_identical_checksums(self, tmp_path, data_dir, capsys):
        path = write_ndjson(tmp_path / "in.ndjson", 30, 6)
        assert main(["ingest", "p", path, "--data-dir", data_dir]) == 0
        capsys.readouterr()
        assert (
            main(["fit", "p", "--reducer", "pca", "--dims", "3", "--seed", "7", "--data-dir", data_dir])
            == 0
        )
        first = capsys.readouterr().out.strip()
        assert (
            main(["fit", "p", "--reducer", "pca", "--dims", "3", "--seed", "7", "--data-dir", data_dir])
            == 0
        )
        second = capsys.readouterr().out.strip()
        assert first == second
        layout_id, checksum = first.split()
        assert len(checksum) == 64

    def test_fit_unknown_project(self, data_dir, capsys):
        assert main(["fit", "ghost", "--data-dir", data_dir]) == 2


class TestEvalCommand:
    def test_eval_without_labels_exits_2(self, tmp_path, data_dir, capsys):
        path = write_ndjson(tmp_path / "in.ndjson", 10, 4)
        main(["ingest", "p", path, "--data-dir", data_dir])
        capsys.readouterr()
        code = main(["eval", "p", "--data-dir", data_dir])
        captured = capsys.readouterr()
        assert code == 2
        assert "ground-truth" in captured.err

    def test_eval_prints_csv(self, tmp_path, data_dir, capsys):
        path = write_ndjson(tmp_path / "in.ndjson", 40, 6, labels=["x", "y"])
        main(["ingest", "p", path, "--data-dir", data_dir])
        capsys.readouterr()
        code = main(["eval", "p", "--k", "5", "--reducers", "pca", "--dims", "2", "--data-dir", data_dir])
        out = capsys.readouterr().out
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "method,out_dim,map_adjusted,mrr_adjusted,fit_seconds"
        assert lines[1].startswith("full_dim,6,")
        assert lines[2].startswith("pca,2,")


class TestExportCommand:
    def test_export_csv(self, tmp_path, data_dir, capsys):
        path = write_ndjson(tmp_path / "in.ndjson", 6, 4, labels=["x"])
        main(["ingest", "p", path, "--data-dir", data_dir])
        capsys.readouterr()
        code = main(["export", "p", "--format", "csv", "--data-dir", data_dir])
        out = capsys.readouterr().out
        assert code == 0
        assert out.splitlines()[0] == "record_id,label,revision,source"
        assert len(out.strip().splitlines()) == 7


class TestInjectCommand:
    def test_inject_prints_ids(self, tmp_path, data_dir, capsys):
        path = write_ndjson(tmp_path / "in.ndjson", 20, 4, labels=["x"])
        pool = write_ndjson(tmp_path / "pool.ndjson", 10, 4, offset=50.0)
        main(["ingest", "p", path, "--data-dir", data_dir])
        capsys.readouterr()
        code = main(["inject", "p", pool, "--seed", "3", "--data-dir", data_dir])
        out = capsys.readouterr().out.strip().splitlines()
        assert code == 0
        assert 3 <= len(out) <= 5

    def test_small_pool_runtime_error(self, tmp_path, data_dir, capsys):
        path = write_ndjson(tmp_path / "in.ndjson", 20, 4, labels=["x"])
        pool = write_ndjson(tmp_path / "pool.ndjson", 2, 4, offset=50.0)
        main(["ingest", "p", path, "--data-dir", data_dir])
        capsys.readouterr()
        assert main(["inject", "p", pool, "--seed", "3", "--data-dir", data_dir]) == 2


class TestHelp:
    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "Explore" in capsys.readouterr().out
