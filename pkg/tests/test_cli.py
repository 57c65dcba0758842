import json

import numpy as np
import pandas as pd
import pytest

from halotrain.cli import build_parser, main
from halotrain.data import save_dataset
from halotrain.errors import HalotrainError, UsageError
from tests.graph_fixtures import path4


@pytest.fixture
def path_dataset(tmp_path):
    graph = path4(
        features=[[1.0, 0.0], [0.5, 1.0], [0.0, 1.0], [1.0, 1.0]],
        labels=[0, 0, 1, 1],
        masks=(np.array([True, False, True, False]), np.array([False, True, False, False]),
               np.array([False, False, False, True])),
    )
    save_dataset(graph, tmp_path / "p4")
    (tmp_path / "halves.txt").write_text("0\n0\n1\n1\n")
    return tmp_path


@pytest.fixture
def sbm_dataset(tmp_path):
    assert main(["gen-sbm", "--blocks", "2", "--size", "30", "--dim", "4", "--out", str(tmp_path / "sbm")]) == 0
    assert main(["partition", str(tmp_path / "sbm"), "--parts", "3", "--out", str(tmp_path / "parts.txt")]) == 0
    return tmp_path


class TestCommands:
    def test_gen_sbm_and_partition(self, sbm_dataset):
        for name in ("edges.tsv", "features.csv", "labels.txt", "split.txt"):
            assert (sbm_dataset / "sbm" / name).is_file()
        parts = (sbm_dataset / "parts.txt").read_text().split()
        assert len(parts) == 60
        assert set(parts) == {"0", "1", "2"}

    def test_analyze(self, path_dataset, capsys):
        code = main(["analyze", str(path_dataset / "p4"), "--assignment", str(path_dataset / "halves.txt"),
                     "--dims", "2,4,2", "--p", "1.0,0.5"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["vol_total"] == 2
        assert report["vol_edgewise"] == 2
        assert report["boundary"] == [1, 1]
        assert report["memory"]["1.0"]["max"] == 7 * (2 + 4 + 2)
        assert report["memory"]["1.0"]["bytes_max"] == 4 * 7 * (2 + 4 + 2)

    def test_train_single_partition_sends_nothing(self, path_dataset):
        metrics = path_dataset / "metrics.jsonl"
        code = main(["train", str(path_dataset / "p4"), "--parts", "1", "--epochs", "3", "--hidden", "4",
                     "--metrics", str(metrics)])
        assert code == 0
        records = [json.loads(line) for line in metrics.read_text().splitlines()]
        assert len(records) == 3
        assert all(r["floats_sent"] == 0 for r in records)

    def test_train_oracle(self, sbm_dataset):
        code = main(["train", str(sbm_dataset / "sbm"), "--assignment", str(sbm_dataset / "parts.txt"),
                     "--p", "1.0", "--epochs", "4", "--hidden", "8", "--oracle",
                     "--metrics", str(sbm_dataset / "m.jsonl")])
        assert code == 0

    def test_train_to_stdout(self, path_dataset, capsys):
        code = main(["train", str(path_dataset / "p4"), "--parts", "2", "--method", "random", "--epochs", "2",
                     "--hidden", "3", "--p", "0.5", "--serialize", "--verify"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert [json.loads(line)["epoch"] for line in lines] == [0, 1]

    def test_variance(self, sbm_dataset):
        out = sbm_dataset / "variance.csv"
        code = main(["variance", str(sbm_dataset / "sbm"), "--assignment", str(sbm_dataset / "parts.txt"),
                     "--p-list", "0.5,1.0", "--trials", "50", "--out", str(out)])
        assert code == 0
        table = pd.read_csv(out)
        assert table["p"].tolist() == [0.5, 1.0]
        assert table.loc[1, "empirical"] == 0.0

    def test_compare_samplers(self, sbm_dataset):
        out = sbm_dataset / "samplers.csv"
        code = main(["compare-samplers", str(sbm_dataset / "sbm"), "--assignment", str(sbm_dataset / "parts.txt"),
                     "--p", "0.2", "--epochs", "20", "--out", str(out)])
        assert code == 0
        assert pd.read_csv(out)["sampler"].tolist() == ["bns", "bes", "dropedge"]

    def test_bench(self, sbm_dataset):
        out = sbm_dataset / "bench.csv"
        code = main(["bench", str(sbm_dataset / "sbm"), "--assignment", str(sbm_dataset / "parts.txt"),
                     "--p-list", "1.0", "--epochs", "2", "--hidden", "4", "--out", str(out)])
        assert code == 0
        assert len(pd.read_csv(out)) == 1


class TestExitCodes:
    def test_usage_error(self):
        assert main(["train"]) == 1
        assert main(["no-such-command"]) == 1

    def test_usage_error_in_taxonomy(self):
        with pytest.raises(UsageError) as info:
            build_parser().parse_args(["train"])
        assert isinstance(info.value, HalotrainError)

    def test_bad_number_list(self, path_dataset):
        assert main(["analyze", str(path_dataset / "p4"), "--assignment", "x", "--p", "a,b"]) == 1

    def test_missing_dataset(self, tmp_path):
        assert main(["analyze", str(tmp_path / "missing"), "--assignment", str(tmp_path / "a.txt")]) == 2

    def test_invalid_config(self, path_dataset):
        code = main(["train", str(path_dataset / "p4"), "--parts", "2", "--sampler", "bes", "--epochs", "1"])
        assert code == 2

    def test_oracle_failure(self, path_dataset):
        code = main(["train", str(path_dataset / "p4"), "--assignment", str(path_dataset / "halves.txt"),
                     "--p", "0.5", "--epochs", "5", "--hidden", "4", "--dropout", "0", "--oracle",
                     "--oracle-tol", "0", "--metrics", str(path_dataset / "m.jsonl")])
        assert code == 3

    def test_parser_defaults(self):
        args = build_parser().parse_args(["bench", "data", "--parts", "2"])
        assert args.epochs == 10
        assert args.method == "greedy"
